#include "wpseg/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numbers>
#include <vector>

#include "wpseg/metrics.hpp"

namespace wpseg {

namespace fs = std::filesystem;

namespace {

std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Keeps only the largest 4-connected component.
BinaryMask largest_component(const BinaryMask& m) {
    const int h = m.height(), w = m.width();
    Grid<int> label(h, w, 0);
    int best_label = 0;
    std::size_t best_size = 0;
    int next = 0;
    std::vector<std::pair<int, int>> stack;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            if (!m(y, x) || label(y, x)) continue;
            ++next;
            std::size_t size = 0;
            stack.assign(1, {y, x});
            label(y, x) = next;
            while (!stack.empty()) {
                auto [cy, cx] = stack.back();
                stack.pop_back();
                ++size;
                const int ny[4] = {cy - 1, cy + 1, cy, cy};
                const int nx[4] = {cx, cx, cx - 1, cx + 1};
                for (int k = 0; k < 4; ++k) {
                    if (m.contains(ny[k], nx[k]) && m(ny[k], nx[k]) && !label(ny[k], nx[k])) {
                        label(ny[k], nx[k]) = next;
                        stack.push_back({ny[k], nx[k]});
                    }
                }
            }
            if (size > best_size) {
                best_size = size;
                best_label = next;
            }
        }
    }
    BinaryMask out(h, w);
    for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] = label.data()[i] == best_label && best_label ? 1 : 0;
    return out;
}

Grid<float> gaussian_blur(const Grid<float>& src, double sigma) {
    const int r = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
    std::vector<float> k(2 * r + 1);
    double sum = 0;
    for (int i = -r; i <= r; ++i) sum += k[i + r] = static_cast<float>(std::exp(-0.5 * i * i / (sigma * sigma)));
    for (auto& v : k) v = static_cast<float>(v / sum);
    const int h = src.height(), w = src.width();
    Grid<float> tmp(h, w), out(h, w);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            float acc = 0;
            for (int i = -r; i <= r; ++i) acc += k[i + r] * src(y, std::clamp(x + i, 0, w - 1));
            tmp(y, x) = acc;
        }
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            float acc = 0;
            for (int i = -r; i <= r; ++i) acc += k[i + r] * tmp(std::clamp(y + i, 0, h - 1), x);
            out(y, x) = acc;
        }
    return out;
}

bool inside(const BinaryMask& m, Point2 p) {
    const int x = static_cast<int>(std::floor(p.x + 0.5));
    const int y = static_cast<int>(std::floor(p.y + 0.5));
    return m.contains(y, x) && m(y, x);
}

}  // namespace

void SynthConfig::validate() const {
    if (count < 1) throw ConfigError("synth count must be >= 1");
    if (image_size < 32) throw ConfigError("synth image size must be >= 32");
    if (!(radius_min > 2.0 && radius_min <= radius_max)) throw ConfigError("synth radius range invalid");
    if (!(perturbation >= 0.0 && perturbation <= 0.3)) throw ConfigError("synth perturbation must be in [0, 0.3]");
    if (!(radius_max < image_size / 2.0)) throw ConfigError("synth radius_max must be < image_size/2");
    if (radius_max * (1.0 + perturbation) + 4.0 >= image_size / 2.0) {
        throw ConfigError("synth nodules cannot fit inside the frame; lower radius_max or perturbation");
    }
    if (!(speckle >= 0.0) || !(contrast > 0.0 && contrast < 1.0)) throw ConfigError("synth speckle/contrast invalid");
}

std::mt19937_64 scene_rng(std::uint64_t seed, std::uint64_t index) {
    return std::mt19937_64(mix64(seed ^ mix64(index + 0x51ce)));
}

AspectRatioAnnotation derive_annotation(const BinaryMask& gt, std::string id) {
    const BinaryMask edge = boundary(gt);
    std::vector<Point2> pts;
    for (int y = 0; y < edge.height(); ++y)
        for (int x = 0; x < edge.width(); ++x)
            if (edge(y, x)) pts.push_back({static_cast<double>(x), static_cast<double>(y)});
    if (pts.size() < 2) throw ValidationError("mask for '" + id + "' is too small to annotate");

    double best = -1;
    Point2 a, b;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        for (std::size_t j = i + 1; j < pts.size(); ++j) {
            const double dx = pts[i].x - pts[j].x, dy = pts[i].y - pts[j].y;
            const double d = dx * dx + dy * dy;
            if (d > best) {
                best = d;
                a = pts[i];
                b = pts[j];
            }
        }
    }
    const double len = std::sqrt(best);
    const Point2 u = (1.0 / len) * (b - a);
    const Point2 n{-u.y, u.x};

    constexpr double kStep = 0.25;
    double best_chord = -1;
    Point2 c3, c4;
    for (double s = 0.5; s < len; s += 0.5) {
        const Point2 q = a + s * u;
        if (!inside(gt, q)) continue;
        double neg = 0, pos = 0;
        while (inside(gt, q - (neg + kStep) * n)) neg += kStep;
        while (inside(gt, q + (pos + kStep) * n)) pos += kStep;
        if (neg <= 0 || pos <= 0) continue;
        if (neg + pos > best_chord) {
            best_chord = neg + pos;
            c3 = q - neg * n;
            c4 = q + pos * n;
        }
    }
    if (best_chord <= 0) throw ValidationError("mask for '" + id + "' has no perpendicular chord");
    AspectRatioAnnotation ann{std::move(id), a, b, c3, c4, false};
    ann.non_crossing = !segment_intersection(ann.p1, ann.p2, ann.p3, ann.p4).has_value();
    return ann;
}

Scene generate_scene(const SynthConfig& cfg, std::mt19937_64& rng, std::string id) {
    cfg.validate();
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const int size = cfg.image_size;
    Scene sc;
    sc.semi_major = cfg.radius_min + (cfg.radius_max - cfg.radius_min) * unit(rng);
    sc.semi_minor = sc.semi_major * (0.6 + 0.4 * unit(rng));
    sc.orientation = std::numbers::pi * unit(rng);

    // Low-frequency radial perturbation: harmonics 2..4 sharing the amplitude budget.
    double weights[3], wsum = 0;
    for (double& wgt : weights) wsum += wgt = 0.2 + unit(rng);
    double amp[3], phase[3];
    for (int k = 0; k < 3; ++k) {
        amp[k] = cfg.perturbation * weights[k] / wsum;
        phase[k] = 2.0 * std::numbers::pi * unit(rng);
    }
    const double reach = sc.semi_major * (1.0 + cfg.perturbation);
    const double lo = reach + 3.0, hi = size - 1 - reach - 3.0;
    sc.center = {lo + (hi - lo) * unit(rng), lo + (hi - lo) * unit(rng)};

    const double ct = std::cos(sc.orientation), st = std::sin(sc.orientation);
    BinaryMask raw(size, size);
    for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
            const double dx = x - sc.center.x, dy = y - sc.center.y;
            const double lx = dx * ct + dy * st, ly = -dx * st + dy * ct;
            const double r = std::hypot(lx, ly);
            if (r == 0.0) {
                raw(y, x) = 1;
                continue;
            }
            const double phi = std::atan2(ly, lx);
            const double ca = std::cos(phi) / sc.semi_major, sa = std::sin(phi) / sc.semi_minor;
            double radius = 1.0 / std::sqrt(ca * ca + sa * sa);
            double bump = 1.0;
            for (int k = 0; k < 3; ++k) bump += amp[k] * std::cos((k + 2) * phi + phase[k]);
            radius *= bump;
            raw(y, x) = r <= radius ? 1 : 0;
        }
    }
    sc.gt = largest_component(raw);

    // Smooth background with depth attenuation and a gentle ripple.
    const double ripple_angle = std::numbers::pi * unit(rng);
    const double ripple_phase = 2.0 * std::numbers::pi * unit(rng);
    const double base_level = 0.55 + 0.1 * unit(rng);
    Grid<float> soft(size, size);
    for (std::size_t i = 0; i < soft.size(); ++i) soft.data()[i] = sc.gt.data()[i];
    soft = gaussian_blur(soft, 1.2);

    std::normal_distribution<double> gauss(0.0, 1.0);
    Grid<float> noise(size, size);
    for (auto& v : noise.data()) v = static_cast<float>(gauss(rng));
    noise = gaussian_blur(noise, 0.7);

    sc.image.id = id;
    sc.image.pixels = Grid<float>(size, size);
    for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
            const double t = (x * std::cos(ripple_angle) + y * std::sin(ripple_angle)) / size;
            double v = base_level - 0.12 * y / size + 0.05 * std::sin(2.0 * std::numbers::pi * 2.0 * t + ripple_phase);
            v -= cfg.contrast * soft(y, x);
            v *= 1.0 + cfg.speckle * 2.0 * noise(y, x);
            sc.image.pixels(y, x) = static_cast<float>(std::clamp(v, 0.0, 1.0));
        }
    }
    // Quantize exactly as a PNG round trip would.
    for (auto& v : sc.image.pixels.data()) v = static_cast<float>(std::lround(v * 255.0f)) / 255.0f;

    sc.annotation = derive_annotation(sc.gt, std::move(id));
    return sc;
}

void generate_dataset(const SynthConfig& cfg, const fs::path& out) {
    cfg.validate();
    fs::create_directories(out / "images");
    fs::create_directories(out / "gt_masks");
    std::vector<AspectRatioAnnotation> anns(cfg.count);
    std::vector<std::string> ids(cfg.count);
    for (int i = 0; i < cfg.count; ++i) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "case%04d", i);
        ids[i] = buf;
    }
    std::string first_error;
#pragma omp parallel for schedule(dynamic)
    for (int i = 0; i < cfg.count; ++i) {
        try {
            auto rng = scene_rng(cfg.seed, static_cast<std::uint64_t>(i));
            Scene sc = generate_scene(cfg, rng, ids[i]);
            save_image(sc.image, out / "images" / (ids[i] + ".png"));
            save_mask(sc.gt, out / "gt_masks" / (ids[i] + ".png"));
            anns[i] = std::move(sc.annotation);
        } catch (const std::exception& e) {
#pragma omp critical
            if (first_error.empty()) first_error = ids[i] + ": " + e.what();
        }
    }
    if (!first_error.empty()) throw IoError("synth-data failed for " + first_error);
    save_annotations(anns, out / "annotations.csv");

    std::vector<int> order(cfg.count);
    for (int i = 0; i < cfg.count; ++i) order[i] = i;
    std::mt19937_64 split_rng(mix64(cfg.seed ^ 0x5b117ULL));
    std::shuffle(order.begin(), order.end(), split_rng);
    const int n_test = static_cast<int>(std::lround(cfg.count / 5.0));
    std::map<std::string, std::string> split;
    for (int k = 0; k < cfg.count; ++k) split[ids[order[k]]] = k < n_test ? "test" : "train";
    save_split(split, out / "split.csv");
}

}  // namespace wpseg
