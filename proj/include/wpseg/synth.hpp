#pragma once

#include <cstdint>
#include <filesystem>
#include <random>

#include "wpseg/dataio.hpp"

namespace wpseg {

struct SynthConfig {
    int count = 200;
    int image_size = 128;
    double radius_min = 12.0;    // semi-major axis range, pixels
    double radius_max = 24.0;
    double perturbation = 0.15;  // total relative amplitude of the radial harmonics, [0, 0.3]
    double speckle = 0.35;       // multiplicative noise strength
    double contrast = 0.3;       // nodule darker than background by this much
    std::uint64_t seed = 0;

    void validate() const;
};

struct Scene {
    Image image;
    BinaryMask gt;
    AspectRatioAnnotation annotation;
    // Generating parameters, kept for tests.
    Point2 center;
    double semi_major = 0, semi_minor = 0, orientation = 0;
};

/// Independent RNG stream for scene `index`.
std::mt19937_64 scene_rng(std::uint64_t seed, std::uint64_t index);

/// One star-convex nodule on a speckled background, with the clinical
/// diameters measured from its mask.
Scene generate_scene(const SynthConfig& cfg, std::mt19937_64& rng, std::string id);

/// Longest boundary-pixel pair (diameter A) and the longest chord
/// perpendicular to it that crosses it (diameter B).
AspectRatioAnnotation derive_annotation(const BinaryMask& gt, std::string id);

/// Writes images/, gt_masks/, annotations.csv and split.csv (4:1 train/test
/// by seeded shuffle) under `out`.
void generate_dataset(const SynthConfig& cfg, const std::filesystem::path& out);

}  // namespace wpseg
