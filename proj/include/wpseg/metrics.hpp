#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "wpseg/grid.hpp"

namespace wpseg {

/// Dice similarity in percent. Both empty -> 100, exactly one empty -> 0.
double dsc(const BinaryMask& pred, const BinaryMask& gt);

/// Foreground pixels with a 4-neighbour in the background or on the image edge.
BinaryMask boundary(const BinaryMask& m);

/// Exact squared Euclidean distance from every pixel to the nearest site.
/// Sites are nonzero pixels; with no sites every value is +inf.
Grid<double> squared_distance_transform(const BinaryMask& sites);

/// Linear-interpolation percentile of unsorted values, q in [0,100].
double percentile(std::vector<double> values, double q);

/// max of the two directed 95th-percentile boundary distances, in pixels.
/// Both empty -> 0; exactly one empty -> image diagonal.
double hd95(const BinaryMask& pred, const BinaryMask& gt);

struct EvalResult {
    std::string image_id;
    double dsc = 0;   // percent
    double hd95 = 0;  // pixels
};

struct EvalSummary {
    std::size_t count = 0;
    std::size_t skipped = 0;  // images without ground truth
    double dsc_mean = 0, dsc_std = 0;
    double hd95_mean = 0, hd95_std = 0;
};

EvalResult evaluate_one(const std::string& id, const BinaryMask& pred, const BinaryMask& gt);

/// Means and population standard deviations.
EvalSummary summarize(const std::vector<EvalResult>& results, std::size_t skipped = 0);

/// eval.csv: image_id,dsc,hd95 per image followed by a "mean" and "std" row.
void write_eval_csv(const std::vector<EvalResult>& results, const EvalSummary& summary,
                    const std::filesystem::path& path);
void write_summary(const EvalSummary& summary, const std::string& header, const std::filesystem::path& path);

}  // namespace wpseg
