#include <cmath>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>

#include "doctest.h"
#include "support.hpp"
#include "wpseg/metrics.hpp"

using namespace wpseg;

namespace {

struct Px {
    int y, x;
};

std::vector<Px> edge_pixels(const BinaryMask& m) {
    std::vector<Px> out;
    const int h = m.height(), w = m.width();
    auto bg = [&](int y, int x) { return y < 0 || x < 0 || y >= h || x >= w || !m(y, x); };
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            if (m(y, x) && (bg(y - 1, x) || bg(y + 1, x) || bg(y, x - 1) || bg(y, x + 1))) out.push_back({y, x});
    return out;
}

double pct(std::vector<double> v, double q) {
    std::sort(v.begin(), v.end());
    const double r = q / 100.0 * (v.size() - 1);
    const std::size_t i = static_cast<std::size_t>(r);
    if (i + 1 >= v.size()) return v.back();
    return v[i] * (1 - (r - i)) + v[i + 1] * (r - i);
}

double brute_hd95(const BinaryMask& a, const BinaryMask& b) {
    const auto ea = edge_pixels(a), eb = edge_pixels(b);
    if (ea.empty() && eb.empty()) return 0.0;
    if (ea.empty() || eb.empty()) return std::sqrt(double(a.height()) * a.height() + double(a.width()) * a.width());
    auto directed = [](const std::vector<Px>& from, const std::vector<Px>& to) {
        std::vector<double> d;
        for (auto p : from) {
            double best = 1e300;
            for (auto q : to) best = std::min(best, double(p.y - q.y) * (p.y - q.y) + double(p.x - q.x) * (p.x - q.x));
            d.push_back(std::sqrt(best));
        }
        return pct(d, 95);
    };
    return std::max(directed(ea, eb), directed(eb, ea));
}

double brute_dsc(const BinaryMask& a, const BinaryMask& b) {
    double i = 0, s = 0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        i += a.data()[k] && b.data()[k];
        s += a.data()[k] + b.data()[k];
    }
    return s == 0 ? 100.0 : 200.0 * i / s;
}

BinaryMask shifted(const BinaryMask& m, int dy, int dx) {
    BinaryMask out(m.height(), m.width());
    for (int y = 0; y < m.height(); ++y)
        for (int x = 0; x < m.width(); ++x)
            if (m(y, x) && out.contains(y + dy, x + dx)) out(y + dy, x + dx) = 1;
    return out;
}

BinaryMask rot90(const BinaryMask& m) {
    BinaryMask out(m.width(), m.height());
    for (int y = 0; y < m.height(); ++y)
        for (int x = 0; x < m.width(); ++x) out(m.width() - 1 - x, y) = m(y, x);
    return out;
}

BinaryMask blob(std::mt19937_64& rng, int size) {
    std::uniform_real_distribution<double> c(size * 0.3, size * 0.7), r(3, size * 0.2);
    const double cy = c(rng), cx = c(rng), ry = r(rng), rx = r(rng);
    BinaryMask m(size, size);
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x)
            m(y, x) = (y - cy) * (y - cy) / (ry * ry) + (x - cx) * (x - cx) / (rx * rx) <= 1.0;
    return m;
}

}  // namespace

TEST_CASE("dsc and hd95 agree with brute force on random masks") {
    std::mt19937_64 rng(7);
    for (int k = 0; k < 200; ++k) {
        const double p = 0.05 + 0.5 * (k % 10) / 10.0;
        const BinaryMask a = testing::random_mask(rng, 32, 32, p);
        const BinaryMask b = testing::random_mask(rng, 32, 32, 0.3);
        CHECK(std::abs(dsc(a, b) - brute_dsc(a, b)) < 1e-9);
        CHECK(std::abs(hd95(a, b) - brute_hd95(a, b)) < 1e-9);
    }
    for (int k = 0; k < 40; ++k) {
        const BinaryMask a = blob(rng, 40), b = blob(rng, 40);
        CHECK(std::abs(hd95(a, b) - brute_hd95(a, b)) < 1e-9);
    }
}

TEST_CASE("distance transform is exact") {
    std::mt19937_64 rng(8);
    for (int k = 0; k < 30; ++k) {
        const BinaryMask s = testing::random_mask(rng, 17, 23, 0.02 + 0.01 * k);
        const auto d = squared_distance_transform(s);
        bool any = false;
        for (auto v : s.data()) any = any || v;
        for (int y = 0; y < 17; ++y)
            for (int x = 0; x < 23; ++x) {
                double best = std::numeric_limits<double>::infinity();
                for (int yy = 0; yy < 17; ++yy)
                    for (int xx = 0; xx < 23; ++xx)
                        if (s(yy, xx)) best = std::min(best, double(y - yy) * (y - yy) + double(x - xx) * (x - xx));
                CHECK(d(y, x) == best);
            }
        if (!any) CHECK(std::isinf(d(0, 0)));
    }
    const auto empty = squared_distance_transform(BinaryMask(4, 5));
    for (double v : empty.data()) CHECK(std::isinf(v));
}

TEST_CASE("metric examples and conventions") {
    const BinaryMask sq = testing::rect_mask(32, 32, 10, 10, 19, 19);
    CHECK(dsc(sq, sq) == 100.0);
    CHECK(hd95(sq, sq) == 0.0);
    CHECK(hd95(sq, shifted(sq, 0, 1)) == 1.0);
    BinaryMask dot(32, 32);
    dot(7, 9) = 1;
    CHECK(hd95(dot, shifted(dot, 0, 1)) == 1.0);
    CHECK(hd95(dot, shifted(dot, 1, 0)) == 1.0);

    const BinaryMask none(32, 32);
    CHECK(dsc(none, none) == 100.0);
    CHECK(hd95(none, none) == 0.0);
    CHECK(dsc(sq, none) == 0.0);
    CHECK(dsc(none, sq) == 0.0);
    CHECK(hd95(sq, none) == doctest::Approx(std::sqrt(2.0) * 32));
    CHECK(hd95(none, sq) == hd95(sq, none));

    // half overlap: 100 and 100 pixels sharing 50
    const BinaryMask a = testing::rect_mask(32, 32, 0, 0, 9, 9);
    const BinaryMask b = testing::rect_mask(32, 32, 0, 5, 9, 14);
    CHECK(dsc(a, b) == doctest::Approx(50.0));

    CHECK_THROWS_AS(dsc(sq, BinaryMask(31, 32)), ValidationError);
    CHECK_THROWS_AS(hd95(sq, BinaryMask(32, 31)), ValidationError);
}

TEST_CASE("metric symmetry, translation and rotation") {
    std::mt19937_64 rng(9);
    for (int k = 0; k < 50; ++k) {
        const BinaryMask a = blob(rng, 48), b = blob(rng, 48);
        CHECK(dsc(a, b) == dsc(b, a));
        CHECK(hd95(a, b) == hd95(b, a));
        CHECK(dsc(a, b) >= 0.0);
        CHECK(dsc(a, b) <= 100.0);

        const int dy = static_cast<int>(rng() % 5) - 2, dx = static_cast<int>(rng() % 5) - 2;
        CHECK(hd95(a, shifted(a, dy, dx)) <= std::hypot(dy, dx) + 1e-12);

        CHECK(dsc(rot90(a), rot90(b)) == dsc(a, b));
        CHECK(hd95(rot90(a), rot90(b)) == doctest::Approx(hd95(a, b)).epsilon(1e-12));
    }
}

TEST_CASE("boundary extraction") {
    const BinaryMask sq = testing::rect_mask(8, 8, 2, 2, 5, 5);
    const BinaryMask b = boundary(sq);
    CHECK(count_foreground(b) == 12);
    CHECK(b(3, 3) == 0);
    CHECK(b(2, 3) == 1);
    const BinaryMask full(4, 4, 1);
    CHECK(count_foreground(boundary(full)) == 12);
    std::mt19937_64 rng(10);
    const BinaryMask r = testing::random_mask(rng, 16, 16, 0.5);
    CHECK(count_foreground(boundary(r)) == edge_pixels(r).size());
}

TEST_CASE("percentile uses linear interpolation") {
    CHECK(percentile({4, 1, 3, 2}, 50) == 2.5);
    CHECK(percentile({1, 2, 3, 4}, 95) == doctest::Approx(3.85));
    CHECK(percentile({5, 1, 9}, 0) == 1);
    CHECK(percentile({5, 1, 9}, 100) == 9);
    CHECK(percentile({7}, 95) == 7);
    CHECK_THROWS_AS(percentile({}, 50), ValidationError);
}

TEST_CASE("summary statistics use the population deviation") {
    const std::vector<EvalResult> r{{"a", 80, 2}, {"b", 90, 4}, {"c", 100, 6}};
    const EvalSummary s = summarize(r, 2);
    CHECK(s.count == 3);
    CHECK(s.skipped == 2);
    CHECK(s.dsc_mean == doctest::Approx(90));
    CHECK(s.dsc_std == doctest::Approx(std::sqrt(200.0 / 3)));
    CHECK(s.hd95_mean == doctest::Approx(4));
    CHECK(s.hd95_std == doctest::Approx(std::sqrt(8.0 / 3)));
    const EvalSummary e = summarize({});
    CHECK(e.count == 0);
    CHECK(e.dsc_mean == 0);
}

TEST_CASE("eval csv and summary files") {
    testing::TempDir dir("metrics");
    const std::vector<EvalResult> r{{"img001", 91.25, 1.5}, {"img002", 88.75, 2.5}};
    const EvalSummary s = summarize(r);
    write_eval_csv(r, s, dir / "eval.csv");
    std::ifstream in(dir / "eval.csv");
    std::stringstream ss;
    ss << in.rdbuf();
    CHECK(ss.str() ==
          "image_id,dsc,hd95\n"
          "img001,91.250000,1.500000\n"
          "img002,88.750000,2.500000\n"
          "mean,90.000000,2.000000\n"
          "std,1.250000,0.500000\n");

    write_summary(s, "mode=ensemble", dir / "summary.txt");
    std::ifstream sin(dir / "summary.txt");
    std::string first, line, all;
    std::getline(sin, first);
    CHECK(first == "mode=ensemble");
    while (std::getline(sin, line)) all += line + "\n";
    CHECK(all.find("DSC(%): 90.00 +- 1.25") != std::string::npos);
    CHECK(all.find("HD95(pixel): 2.00 +- 0.50") != std::string::npos);

    const EvalResult one = evaluate_one("x", testing::rect_mask(16, 16, 2, 2, 6, 6), testing::rect_mask(16, 16, 2, 2, 6, 6));
    CHECK(one.image_id == "x");
    CHECK(one.dsc == 100.0);
    CHECK(one.hd95 == 0.0);
}
