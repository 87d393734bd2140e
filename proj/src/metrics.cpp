#include "wpseg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

namespace wpseg {

double dsc(const BinaryMask& pred, const BinaryMask& gt) {
    require_same_shape(pred, gt, "dsc");
    std::size_t inter = 0, np = 0, ng = 0;
    const auto a = pred.data();
    const auto b = gt.data();
    for (std::size_t i = 0; i < a.size(); ++i) {
        inter += a[i] & b[i];
        np += a[i];
        ng += b[i];
    }
    if (np + ng == 0) return 100.0;
    return 100.0 * 2.0 * static_cast<double>(inter) / static_cast<double>(np + ng);
}

BinaryMask boundary(const BinaryMask& m) {
    const int h = m.height(), w = m.width();
    BinaryMask out(h, w);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            if (!m(y, x)) continue;
            const bool edge = y == 0 || x == 0 || y == h - 1 || x == w - 1 || !m(y - 1, x) || !m(y + 1, x) ||
                              !m(y, x - 1) || !m(y, x + 1);
            out(y, x) = edge ? 1 : 0;
        }
    }
    return out;
}

namespace {

// Felzenszwalb-Huttenlocher lower envelope of parabolas, one 1-D pass.
void dt1d(const double* f, int n, std::ptrdiff_t stride, double* d, int* v, double* z) {
    constexpr double inf = std::numeric_limits<double>::infinity();
    int k = -1;
    for (int q = 0; q < n; ++q) {
        const double fq = f[q * stride];
        if (fq == inf) continue;
        if (k < 0) {
            k = 0;
            v[0] = q;
            z[0] = -inf;
            z[1] = inf;
            continue;
        }
        double s;
        while (true) {
            const int p = v[k];
            s = ((fq + static_cast<double>(q) * q) - (f[p * stride] + static_cast<double>(p) * p)) / (2.0 * (q - p));
            if (s <= z[k] && k > 0) {
                --k;
                continue;
            }
            break;
        }
        if (s <= z[k]) {
            // k == 0 and the new parabola dominates everywhere.
            v[0] = q;
            z[0] = -inf;
            z[1] = inf;
            continue;
        }
        ++k;
        v[k] = q;
        z[k] = s;
        z[k + 1] = inf;
    }
    if (k < 0) {
        for (int q = 0; q < n; ++q) d[q * stride] = inf;
        return;
    }
    int j = 0;
    for (int q = 0; q < n; ++q) {
        while (z[j + 1] < q) ++j;
        const double dq = q - v[j];
        d[q * stride] = dq * dq + f[v[j] * stride];
    }
}

}  // namespace

Grid<double> squared_distance_transform(const BinaryMask& sites) {
    constexpr double inf = std::numeric_limits<double>::infinity();
    const int h = sites.height(), w = sites.width();
    Grid<double> f(h, w);
    for (std::size_t i = 0; i < f.size(); ++i) f.data()[i] = sites.data()[i] ? 0.0 : inf;
    Grid<double> cols(h, w);
#pragma omp parallel
    {
        std::vector<int> v(h + 1);
        std::vector<double> z(h + 2);
#pragma omp for schedule(static)
        for (int x = 0; x < w; ++x) dt1d(&f(0, 0) + x, h, w, &cols(0, 0) + x, v.data(), z.data());
    }
    Grid<double> out(h, w);
#pragma omp parallel
    {
        std::vector<int> v(w + 1);
        std::vector<double> z(w + 2);
#pragma omp for schedule(static)
        for (int y = 0; y < h; ++y) dt1d(&cols(y, 0), w, 1, &out(y, 0), v.data(), z.data());
    }
    return out;
}

double percentile(std::vector<double> values, double q) {
    if (values.empty()) throw ValidationError("percentile of an empty set");
    std::sort(values.begin(), values.end());
    const double pos = q / 100.0 * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return values[lo] + frac * (values[hi] - values[lo]);
}

namespace {

std::vector<double> directed_distances(const BinaryMask& from, const Grid<double>& sq_dist_to) {
    std::vector<double> d;
    const auto f = from.data();
    const auto s = sq_dist_to.data();
    for (std::size_t i = 0; i < f.size(); ++i) {
        if (f[i]) d.push_back(std::sqrt(s[i]));
    }
    return d;
}

}  // namespace

double hd95(const BinaryMask& pred, const BinaryMask& gt) {
    require_same_shape(pred, gt, "hd95");
    const bool pe = count_foreground(pred) == 0;
    const bool ge = count_foreground(gt) == 0;
    if (pe && ge) return 0.0;
    if (pe || ge) return std::hypot(static_cast<double>(pred.height()), static_cast<double>(pred.width()));
    const BinaryMask bp = boundary(pred);
    const BinaryMask bg = boundary(gt);
    const double a = percentile(directed_distances(bp, squared_distance_transform(bg)), 95.0);
    const double b = percentile(directed_distances(bg, squared_distance_transform(bp)), 95.0);
    return std::max(a, b);
}

EvalResult evaluate_one(const std::string& id, const BinaryMask& pred, const BinaryMask& gt) {
    return {id, dsc(pred, gt), hd95(pred, gt)};
}

EvalSummary summarize(const std::vector<EvalResult>& results, std::size_t skipped) {
    EvalSummary s;
    s.count = results.size();
    s.skipped = skipped;
    if (results.empty()) return s;
    const double n = static_cast<double>(results.size());
    for (const auto& r : results) {
        s.dsc_mean += r.dsc;
        s.hd95_mean += r.hd95;
    }
    s.dsc_mean /= n;
    s.hd95_mean /= n;
    for (const auto& r : results) {
        s.dsc_std += (r.dsc - s.dsc_mean) * (r.dsc - s.dsc_mean);
        s.hd95_std += (r.hd95 - s.hd95_mean) * (r.hd95 - s.hd95_mean);
    }
    s.dsc_std = std::sqrt(s.dsc_std / n);
    s.hd95_std = std::sqrt(s.hd95_std / n);
    return s;
}

void write_eval_csv(const std::vector<EvalResult>& results, const EvalSummary& summary,
                    const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    char buf[128];
    out << "image_id,dsc,hd95\n";
    for (const auto& r : results) {
        std::snprintf(buf, sizeof buf, "%s,%.6f,%.6f\n", r.image_id.c_str(), r.dsc, r.hd95);
        out << buf;
    }
    std::snprintf(buf, sizeof buf, "mean,%.6f,%.6f\nstd,%.6f,%.6f\n", summary.dsc_mean, summary.hd95_mean,
                  summary.dsc_std, summary.hd95_std);
    out << buf;
}

void write_summary(const EvalSummary& summary, const std::string& header, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    char buf[256];
    out << header << '\n';
    std::snprintf(buf, sizeof buf,
                  "images: %zu\nskipped_without_gt: %zu\nDSC(%%): %.2f +- %.2f\nHD95(pixel): %.2f +- %.2f\n",
                  summary.count, summary.skipped, summary.dsc_mean, summary.dsc_std, summary.hd95_mean,
                  summary.hd95_std);
    out << buf;
}

}  // namespace wpseg
