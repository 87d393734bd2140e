#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <string>

#include "wpseg/geometry.hpp"

namespace wpseg {

enum class SegmenterKind { oracle, noisy_oracle, recorded };

SegmenterKind parse_segmenter_kind(const std::string& s);
std::string to_string(SegmenterKind k);

struct SegmenterConfig {
    SegmenterKind kind = SegmenterKind::noisy_oracle;
    std::uint64_t seed = 0;
    int noise_radius = 2;
    std::filesystem::path predictions_dir;  // recorded backend only
};

/// Known nodule masks for synthetic scenes, keyed by image id.
using SceneTruth = std::map<std::string, BinaryMask>;

/// Promptable segmentation model behind a box-prompt interface. `slot` is the
/// prompt index 1..3 (b1, b2, b3); only the recorded backend needs it.
class PromptableSegmenter {
public:
    virtual ~PromptableSegmenter() = default;

    /// Foreground of the result always lies inside the rasterized box.
    virtual BinaryMask segment(const Image& image, const BBox& box, int slot) const = 0;

    /// (m1, m2, m3) for (b1, b2, b3).
    std::array<BinaryMask, 3> segment_all(const Image& image, const BoxPromptSet& prompts) const;
};

/// Returns gt ∩ box.
class OracleSegmenter : public PromptableSegmenter {
public:
    explicit OracleSegmenter(SceneTruth truth) : truth_(std::move(truth)) {}
    BinaryMask segment(const Image& image, const BBox& box, int slot) const override;

protected:
    const BinaryMask& truth_for(const Image& image) const;

private:
    SceneTruth truth_;
};

/// gt ∩ box eroded (even hash) or dilated (odd hash) by a disk, re-clipped to
/// the box. The hash covers (image id, rasterized box, seed).
class NoisyOracleSegmenter : public OracleSegmenter {
public:
    NoisyOracleSegmenter(SceneTruth truth, int radius, std::uint64_t seed)
        : OracleSegmenter(std::move(truth)), radius_(radius), seed_(seed) {}
    BinaryMask segment(const Image& image, const BBox& box, int slot) const override;

    /// True when the perturbation for this prompt is a dilation.
    bool dilates(const std::string& image_id, const PixelBox& box) const;

private:
    int radius_;
    std::uint64_t seed_;
};

/// Reads predictions produced offline: <dir>/<image_id>__b<k>.png, clipped to
/// the rasterized box.
class RecordedSegmenter : public PromptableSegmenter {
public:
    explicit RecordedSegmenter(std::filesystem::path dir) : dir_(std::move(dir)) {}
    BinaryMask segment(const Image& image, const BBox& box, int slot) const override;

    std::filesystem::path prediction_path(const std::string& image_id, int slot) const;

private:
    std::filesystem::path dir_;
};

std::unique_ptr<PromptableSegmenter> make_segmenter(const SegmenterConfig& cfg, SceneTruth truth = {});

// Binary morphology with a disk structuring element {dx^2 + dy^2 <= r^2}.
// Pixels outside the grid count as background.
BinaryMask erode_disk(const BinaryMask& m, int radius);
BinaryMask dilate_disk(const BinaryMask& m, int radius);

/// Zeroes everything outside the inclusive pixel box.
BinaryMask clip_to_box(const BinaryMask& m, const PixelBox& box);

}  // namespace wpseg
