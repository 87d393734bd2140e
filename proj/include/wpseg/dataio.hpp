#pragma once

#include <array>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "wpseg/grid.hpp"

namespace wpseg {

struct Point2 {
    double x = 0.0;
    double y = 0.0;

    friend bool operator==(const Point2&, const Point2&) = default;
};

inline Point2 operator+(Point2 a, Point2 b) { return {a.x + b.x, a.y + b.y}; }
inline Point2 operator-(Point2 a, Point2 b) { return {a.x - b.x, a.y - b.y}; }
inline Point2 operator*(double s, Point2 a) { return {s * a.x, s * a.y}; }

/// Two crossing clinical diameters: A = p1p2, B = p3p4.
struct AspectRatioAnnotation {
    std::string image_id;
    Point2 p1, p2, p3, p4;
    /// Set by validation when the diameters do not strictly intersect.
    bool non_crossing = false;

    std::array<Point2, 4> points() const { return {p1, p2, p3, p4}; }
};

/// Strict interior intersection of segments ab and cd, if any.
std::optional<Point2> segment_intersection(Point2 a, Point2 b, Point2 c, Point2 d);

/// Parses the annotation CSV. Coordinates are real-valued; `#` lines are
/// comments and the header line is required.
std::vector<AspectRatioAnnotation> parse_annotations(std::istream& in, const std::string& source = "<stream>");
std::vector<AspectRatioAnnotation> load_annotations(const std::filesystem::path& path);
void save_annotations(const std::vector<AspectRatioAnnotation>& anns, const std::filesystem::path& path);

/// Checks bounds and segment lengths against the image and sets
/// `non_crossing`. Throws ValidationError naming the image id.
void validate_annotation(AspectRatioAnnotation& ann, ImageDims dims);

// 8-bit grayscale PNG I/O.
Grid<std::uint8_t> read_gray_png(const std::filesystem::path& path);
void write_gray_png(const Grid<std::uint8_t>& pixels, const std::filesystem::path& path);

/// Pixel >= 128 maps to 1. Throws FormatError on non-grayscale input or when
/// `expected` is given and the dimensions differ.
BinaryMask load_mask(const std::filesystem::path& path, std::optional<ImageDims> expected = std::nullopt);
void save_mask(const BinaryMask& mask, const std::filesystem::path& path);

/// Intensities divided by 255.
Image load_image(const std::filesystem::path& path, std::string id);
void save_image(const Image& image, const std::filesystem::path& path);

struct DatasetEntry {
    std::string id;
    std::filesystem::path image_path;
    AspectRatioAnnotation annotation;
    std::optional<std::filesystem::path> gt_path;
    ImageDims dims;
};

/// Dataset layout: images/<id>.png, annotations.csv, optional gt_masks/<id>.png
/// and split.csv. Entries are sorted by image id.
struct DatasetIndex {
    std::filesystem::path root;
    std::vector<DatasetEntry> entries;
    std::map<std::string, std::string> split;  // id -> "train" / "test"

    const DatasetEntry& at(const std::string& id) const;
    /// Entries whose split matches; an empty split map puts everything in "train".
    std::vector<const DatasetEntry*> select(const std::string& split_name) const;
};

DatasetIndex load_dataset(const std::filesystem::path& root);

std::map<std::string, std::string> load_split(const std::filesystem::path& path);
void save_split(const std::map<std::string, std::string>& split, const std::filesystem::path& path);

}  // namespace wpseg
