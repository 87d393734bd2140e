#include "wpseg/segmenter.hpp"

#include <cstring>
#include <vector>

namespace wpseg {

namespace fs = std::filesystem;

SegmenterKind parse_segmenter_kind(const std::string& s) {
    if (s == "oracle") return SegmenterKind::oracle;
    if (s == "noisy_oracle") return SegmenterKind::noisy_oracle;
    if (s == "recorded") return SegmenterKind::recorded;
    throw ConfigError("unknown segmenter backend '" + s + "' (oracle|noisy_oracle|recorded)");
}

std::string to_string(SegmenterKind k) {
    switch (k) {
        case SegmenterKind::oracle: return "oracle";
        case SegmenterKind::noisy_oracle: return "noisy_oracle";
        case SegmenterKind::recorded: return "recorded";
    }
    return "?";
}

std::array<BinaryMask, 3> PromptableSegmenter::segment_all(const Image& image, const BoxPromptSet& prompts) const {
    return {segment(image, prompts.b1, 1), segment(image, prompts.b2, 2), segment(image, prompts.b3, 3)};
}

BinaryMask clip_to_box(const BinaryMask& m, const PixelBox& box) {
    BinaryMask out(m.height(), m.width());
    for (int y = box.y0; y <= box.y1; ++y) {
        for (int x = box.x0; x <= box.x1; ++x) out(y, x) = m(y, x);
    }
    return out;
}

const BinaryMask& OracleSegmenter::truth_for(const Image& image) const {
    auto it = truth_.find(image.id);
    if (it == truth_.end()) throw MissingArtifactError("no ground-truth mask for image '" + image.id + "'");
    if (dims_of(it->second) != dims_of(image)) {
        throw FormatError("ground-truth mask for '" + image.id + "' does not match image dimensions");
    }
    return it->second;
}

BinaryMask OracleSegmenter::segment(const Image& image, const BBox& box, int) const {
    return clip_to_box(truth_for(image), rasterize(box, dims_of(image)));
}

namespace {

std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

std::uint64_t fnv1a(std::uint64_t h, const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::vector<std::pair<int, int>> disk_offsets(int radius) {
    std::vector<std::pair<int, int>> out;
    for (int dy = -radius; dy <= radius; ++dy) {
        for (int dx = -radius; dx <= radius; ++dx) {
            if (dx * dx + dy * dy <= radius * radius) out.emplace_back(dy, dx);
        }
    }
    return out;
}

BinaryMask morph(const BinaryMask& m, int radius, bool erode) {
    if (radius < 0) throw ValidationError("morphology radius must be >= 0");
    const auto offsets = disk_offsets(radius);
    BinaryMask out(m.height(), m.width());
    const int h = m.height();
    const int w = m.width();
#pragma omp parallel for schedule(static)
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            bool v = erode;
            for (auto [dy, dx] : offsets) {
                const int yy = y + dy;
                const int xx = x + dx;
                const bool on = m.contains(yy, xx) && m(yy, xx);
                if (erode && !on) {
                    v = false;
                    break;
                }
                if (!erode && on) {
                    v = true;
                    break;
                }
            }
            out(y, x) = v ? 1 : 0;
        }
    }
    return out;
}

}  // namespace

BinaryMask erode_disk(const BinaryMask& m, int radius) { return morph(m, radius, true); }
BinaryMask dilate_disk(const BinaryMask& m, int radius) { return morph(m, radius, false); }

bool NoisyOracleSegmenter::dilates(const std::string& image_id, const PixelBox& box) const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    h = fnv1a(h, image_id.data(), image_id.size());
    const std::int32_t coords[4] = {box.x0, box.y0, box.x1, box.y1};
    h = fnv1a(h, coords, sizeof coords);
    h = fnv1a(h, &seed_, sizeof seed_);
    return (mix64(h) & 1u) != 0;
}

BinaryMask NoisyOracleSegmenter::segment(const Image& image, const BBox& box, int) const {
    const PixelBox px = rasterize(box, dims_of(image));
    BinaryMask base = clip_to_box(truth_for(image), px);
    BinaryMask moved = dilates(image.id, px) ? dilate_disk(base, radius_) : erode_disk(base, radius_);
    return clip_to_box(moved, px);
}

fs::path RecordedSegmenter::prediction_path(const std::string& image_id, int slot) const {
    return dir_ / (image_id + "__b" + std::to_string(slot) + ".png");
}

BinaryMask RecordedSegmenter::segment(const Image& image, const BBox& box, int slot) const {
    if (slot < 1 || slot > 3) throw ValidationError("recorded segmenter needs a prompt slot in 1..3");
    const PixelBox px = rasterize(box, dims_of(image));
    const fs::path p = prediction_path(image.id, slot);
    if (!fs::exists(p)) {
        throw MissingArtifactError("missing recorded prediction " + p.filename().string() + " in " + dir_.string());
    }
    return clip_to_box(load_mask(p, dims_of(image)), px);
}

std::unique_ptr<PromptableSegmenter> make_segmenter(const SegmenterConfig& cfg, SceneTruth truth) {
    switch (cfg.kind) {
        case SegmenterKind::oracle: return std::make_unique<OracleSegmenter>(std::move(truth));
        case SegmenterKind::noisy_oracle:
            if (cfg.noise_radius < 0) throw ConfigError("noise radius must be >= 0");
            return std::make_unique<NoisyOracleSegmenter>(std::move(truth), cfg.noise_radius, cfg.seed);
        case SegmenterKind::recorded:
            if (cfg.predictions_dir.empty()) throw ConfigError("recorded backend needs a predictions directory");
            return std::make_unique<RecordedSegmenter>(cfg.predictions_dir);
    }
    throw ConfigError("unknown segmenter backend");
}

}  // namespace wpseg
