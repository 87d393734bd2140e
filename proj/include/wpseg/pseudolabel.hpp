#pragma once

#include <filesystem>
#include <utility>
#include <vector>

#include "wpseg/segmenter.hpp"

namespace wpseg {

struct PseudoLabelBundle {
    std::string image_id;
    BinaryMask m1, m2, m3;  // empty when loaded from disk
    BinaryMask y_int;
    BinaryMask y_uni;
    BinaryMask u;
};

/// Pixel-wise AND / OR of the three candidate masks.
std::pair<BinaryMask, BinaryMask> select_pseudo_labels(const BinaryMask& m1, const BinaryMask& m2,
                                                       const BinaryMask& m3);

/// Pixel-wise XOR. Throws ValidationError unless y_int ⊆ y_uni.
BinaryMask uncertainty_map(const BinaryMask& y_int, const BinaryMask& y_uni);

PseudoLabelBundle build_bundle(const Image& image, const BoxPromptSet& prompts, const PromptableSegmenter& segmenter);

/// Writes <dir>/<id>__yint.png, __yuni.png, __unc.png.
void save_bundle(const PseudoLabelBundle& bundle, const std::filesystem::path& dir);
PseudoLabelBundle load_bundle(const std::filesystem::path& dir, const std::string& image_id,
                              std::optional<ImageDims> expected = std::nullopt);

/// bundles_manifest.csv: image_id,n_int,n_uni,n_unc
void save_bundle_manifest(const std::vector<PseudoLabelBundle>& bundles, const std::filesystem::path& path);
std::vector<std::string> load_bundle_manifest_ids(const std::filesystem::path& path);

}  // namespace wpseg
