#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace wpseg {

struct SweepRow {
    std::string lambda_mode;  // "constant" or "gaussian_warmup"
    double lambda = 0;
    double dsc_mean = 0, dsc_std = 0;
    double hd95_mean = 0, hd95_std = 0;
};

/// Two stacked panels (DSC on top, HD95 below) with one point per row in
/// input order, mean +- std whiskers, and x labels taken from the rows.
/// Pure function of its input: identical rows give identical bytes.
void plot_sweep(const std::vector<SweepRow>& rows, const std::filesystem::path& path);

}  // namespace wpseg
