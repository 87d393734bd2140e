#include "wpseg/pseudolabel.hpp"

#include <fstream>
#include <sstream>

namespace wpseg {

namespace fs = std::filesystem;

std::pair<BinaryMask, BinaryMask> select_pseudo_labels(const BinaryMask& m1, const BinaryMask& m2,
                                                       const BinaryMask& m3) {
    require_same_shape(m1, m2, "select_pseudo_labels");
    require_same_shape(m1, m3, "select_pseudo_labels");
    BinaryMask y_int(m1.height(), m1.width());
    BinaryMask y_uni(m1.height(), m1.width());
    const auto a = m1.data();
    const auto b = m2.data();
    const auto c = m3.data();
    auto lo = y_int.data();
    auto hi = y_uni.data();
    const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(a.size());
#pragma omp parallel for simd schedule(static)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        lo[i] = a[i] & b[i] & c[i];
        hi[i] = a[i] | b[i] | c[i];
    }
    return {std::move(y_int), std::move(y_uni)};
}

BinaryMask uncertainty_map(const BinaryMask& y_int, const BinaryMask& y_uni) {
    require_same_shape(y_int, y_uni, "uncertainty_map");
    const auto lo = y_int.data();
    const auto hi = y_uni.data();
    BinaryMask u(y_int.height(), y_int.width());
    auto out = u.data();
    for (std::size_t i = 0; i < lo.size(); ++i) {
        if (lo[i] & ~hi[i] & 1) {
            throw ValidationError("uncertainty_map: intersection mask is not contained in union mask");
        }
        out[i] = lo[i] ^ hi[i];
    }
    return u;
}

PseudoLabelBundle build_bundle(const Image& image, const BoxPromptSet& prompts, const PromptableSegmenter& segmenter) {
    if (prompts.image_id != image.id) {
        throw ValidationError("prompts for '" + prompts.image_id + "' applied to image '" + image.id + "'");
    }
    auto [m1, m2, m3] = segmenter.segment_all(image, prompts);
    auto [y_int, y_uni] = select_pseudo_labels(m1, m2, m3);
    BinaryMask u = uncertainty_map(y_int, y_uni);
    return {image.id, std::move(m1), std::move(m2), std::move(m3), std::move(y_int), std::move(y_uni), std::move(u)};
}

void save_bundle(const PseudoLabelBundle& bundle, const fs::path& dir) {
    save_mask(bundle.y_int, dir / (bundle.image_id + "__yint.png"));
    save_mask(bundle.y_uni, dir / (bundle.image_id + "__yuni.png"));
    save_mask(bundle.u, dir / (bundle.image_id + "__unc.png"));
}

PseudoLabelBundle load_bundle(const fs::path& dir, const std::string& image_id, std::optional<ImageDims> expected) {
    PseudoLabelBundle b;
    b.image_id = image_id;
    auto need = [&](const char* suffix) {
        fs::path p = dir / (image_id + suffix);
        if (!fs::exists(p)) throw MissingArtifactError("missing pseudo-label " + p.string() + " (run gen-pseudolabels)");
        return load_mask(p, expected);
    };
    b.y_int = need("__yint.png");
    b.y_uni = need("__yuni.png");
    b.u = need("__unc.png");
    require_same_shape(b.y_int, b.y_uni, "load_bundle");
    require_same_shape(b.y_int, b.u, "load_bundle");
    if (uncertainty_map(b.y_int, b.y_uni) != b.u) {
        throw ValidationError("pseudo-label bundle for '" + image_id + "' violates u = y_uni XOR y_int");
    }
    return b;
}

void save_bundle_manifest(const std::vector<PseudoLabelBundle>& bundles, const fs::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << "image_id,n_int,n_uni,n_unc\n";
    for (const auto& b : bundles) {
        out << b.image_id << ',' << count_foreground(b.y_int) << ',' << count_foreground(b.y_uni) << ','
            << count_foreground(b.u) << '\n';
    }
}

std::vector<std::string> load_bundle_manifest_ids(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw MissingArtifactError("missing " + path.string() + " (run gen-pseudolabels)");
    std::vector<std::string> ids;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line.rfind("image_id", 0) == 0) continue;
        ids.push_back(line.substr(0, line.find(',')));
    }
    return ids;
}

}  // namespace wpseg
