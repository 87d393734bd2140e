#include <cmath>
#include <numbers>

#include "doctest.h"
#include "support.hpp"
#include "wpseg/geometry.hpp"

using namespace wpseg;
using doctest::Approx;

namespace {

AspectRatioAnnotation cross(Point2 c, double ru1, double ru2, double rv1, double rv2, double angle) {
    const Point2 u{std::cos(angle), std::sin(angle)};
    const Point2 v{-std::sin(angle), std::cos(angle)};
    return {"x", c - ru1 * u, c + ru2 * u, c - rv1 * v, c + rv2 * v, false};
}

bool inside(const BBox& b, Point2 p, double tol) {
    return p.x >= b.x_min - tol && p.x <= b.x_max + tol && p.y >= b.y_min - tol && p.y <= b.y_max + tol;
}

bool nested(const BBox& in, const BBox& out) {
    const double t = 1e-9;
    return in.x_min >= out.x_min - t && in.y_min >= out.y_min - t && in.x_max <= out.x_max + t &&
           in.y_max <= out.y_max + t;
}

double max_dist(Point2 c, const std::vector<Point2>& pts) {
    double r = 0;
    for (auto p : pts) r = std::max(r, std::hypot(p.x - c.x, p.y - c.y));
    return r;
}

// The max-distance function is convex, so nested ternary search converges
// to the minimum enclosing circle without enumerating candidates.
Circle ternary_oracle(const std::vector<Point2>& pts) {
    double x0 = 1e300, x1 = -1e300, y0 = 1e300, y1 = -1e300;
    for (auto p : pts) {
        x0 = std::min(x0, p.x), x1 = std::max(x1, p.x);
        y0 = std::min(y0, p.y), y1 = std::max(y1, p.y);
    }
    auto best_y = [&](double x) {
        double lo = y0, hi = y1;
        for (int it = 0; it < 100; ++it) {
            const double m1 = lo + (hi - lo) / 3, m2 = hi - (hi - lo) / 3;
            if (max_dist({x, m1}, pts) < max_dist({x, m2}, pts)) hi = m2; else lo = m1;
        }
        return 0.5 * (lo + hi);
    };
    double lo = x0, hi = x1;
    for (int it = 0; it < 100; ++it) {
        const double m1 = lo + (hi - lo) / 3, m2 = hi - (hi - lo) / 3;
        if (max_dist({m1, best_y(m1)}, pts) < max_dist({m2, best_y(m2)}, pts)) hi = m2; else lo = m1;
    }
    const double x = 0.5 * (lo + hi);
    const Point2 c{x, best_y(x)};
    return {c, max_dist(c, pts)};
}

}  // namespace

TEST_CASE("tight box is the coordinate extent") {
    AspectRatioAnnotation a{"a", {10, 20}, {50, 20}, {30, 5}, {30, 40}, false};
    const BBox b = tight_box(a, {100, 100});
    CHECK(b == BBox{10, 5, 50, 40});
    const BBox clipped = tight_box(a, {100, 40});
    CHECK(clipped.x_max == 40);
    CHECK(clipped.x_min == 10);
}

TEST_CASE("tight box of horizontally collinear points is degenerate") {
    AspectRatioAnnotation a{"a", {10, 20}, {50, 20}, {20, 20}, {40, 20}, false};
    CHECK_THROWS_AS(tight_box(a, {100, 100}), ValidationError);
}

TEST_CASE("tight box minimality") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> U(1, 99), R(2, 30), A(0, std::numbers::pi);
    for (int k = 0; k < 200; ++k) {
        auto a = cross({U(rng), U(rng)}, R(rng), R(rng), R(rng), R(rng), A(rng));
        BBox raw{1e9, 1e9, -1e9, -1e9};
        for (auto p : a.points()) {
            raw.x_min = std::min(raw.x_min, p.x), raw.x_max = std::max(raw.x_max, p.x);
            raw.y_min = std::min(raw.y_min, p.y), raw.y_max = std::max(raw.y_max, p.y);
        }
        // wide enough frame that nothing clips
        const BBox b = tight_box(a, {100000, 100000});
        if (raw.x_min < 0 || raw.y_min < 0) continue;
        for (int side = 0; side < 4; ++side) {
            BBox s = b;
            if (side == 0) s.x_min += 1;
            if (side == 1) s.y_min += 1;
            if (side == 2) s.x_max -= 1;
            if (side == 3) s.y_max -= 1;
            bool all = true;
            for (auto p : a.points()) all = all && inside(s, p, 0);
            CHECK_FALSE(all);
        }
    }
}

TEST_CASE("symmetric cross gives the exact ellipse") {
    auto a = cross({100, 100}, 20, 20, 15, 15, 0);
    const ApproxEllipse e = approx_ellipse(a);
    CHECK_FALSE(e.centroid_fallback);
    CHECK(e.center.x == Approx(100));
    CHECK(e.center.y == Approx(100));
    for (const auto& arc : e.arcs) {
        for (int j = 0; j <= 32; ++j) {
            const Point2 p = arc.at(std::numbers::pi / 2 * j / 32);
            const double dx = p.x - 100, dy = p.y - 100;
            CHECK(dx * dx / 400 + dy * dy / 225 == Approx(1.0).epsilon(1e-12));
        }
    }
    const BBox b = ellipse_box(a, {200, 200});
    CHECK(std::abs(b.x_min - 80) <= 0.5);
    CHECK(std::abs(b.y_min - 85) <= 0.5);
    CHECK(std::abs(b.x_max - 120) <= 0.5);
    CHECK(std::abs(b.y_max - 115) <= 0.5);
}

TEST_CASE("arcs interpolate endpoints and join continuously") {
    auto a = cross({50, 40}, 20, 8, 5, 12, 0.3);
    const ApproxEllipse e = approx_ellipse(a);
    const double q = std::numbers::pi / 2;
    // arc order: p1->p3, p3->p2, p2->p4, p4->p1
    const std::array<Point2, 4> start{a.p1, a.p3, a.p2, a.p4};
    for (int k = 0; k < 4; ++k) {
        const Point2 s = e.arcs[k].at(0), t = e.arcs[k].at(q);
        CHECK(s.x == Approx(start[k].x).epsilon(1e-12));
        CHECK(s.y == Approx(start[k].y).epsilon(1e-12));
        const Point2 next = e.arcs[(k + 1) % 4].at(0);
        CHECK(std::hypot(t.x - next.x, t.y - next.y) < 1e-9);
    }
}

TEST_CASE("rotated ellipse extent matches the analytic AABB") {
    const double a = 20, b = 10, th = std::numbers::pi / 4;
    auto ann = cross({100, 100}, a, a, b, b, th);
    const BBox box = ellipse_box(ann, {200, 200});
    const double hx = std::sqrt(a * a * std::cos(th) * std::cos(th) + b * b * std::sin(th) * std::sin(th));
    const double hy = std::sqrt(a * a * std::sin(th) * std::sin(th) + b * b * std::cos(th) * std::cos(th));
    CHECK(hx == Approx(15.811388).epsilon(1e-6));
    CHECK(std::abs((box.x_max - box.x_min) / 2 - hx) <= 0.5);
    CHECK(std::abs((box.y_max - box.y_min) / 2 - hy) <= 0.5);
}

TEST_CASE("non-crossing annotation falls back to the centroid") {
    AspectRatioAnnotation a{"n", {10, 20}, {50, 20}, {60, 5}, {60, 40}, false};
    const ApproxEllipse e = approx_ellipse(a);
    CHECK(e.centroid_fallback);
    CHECK(e.center.x == Approx(45));
    CHECK(e.center.y == Approx(21.25));
    const BBox b = ellipse_box(a, {100, 100});
    for (auto p : a.points()) CHECK(inside(b, p, 1e-9));
}

TEST_CASE("endpoint on the crossing is rejected") {
    AspectRatioAnnotation a{"n", {10, 20}, {50, 20}, {30, 20}, {30, 40}, false};
    // p3 lies on p1p2: no strict crossing, centroid fallback differs from p3
    CHECK_NOTHROW(approx_ellipse(a));
    AspectRatioAnnotation d{"d", {0, 0}, {2, 0}, {1, 0}, {1, 0}, false};
    CHECK_THROWS_AS(approx_ellipse(d), ValidationError);
}

TEST_CASE("b2 sampling is stable under doubling") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> U(30, 70), R(1, 25), A(0, std::numbers::pi);
    for (int k = 0; k < 500; ++k) {
        auto a = cross({U(rng), U(rng)}, R(rng), R(rng), R(rng), R(rng), A(rng));
        const ApproxEllipse e = approx_ellipse(a);
        const BBox b1 = ellipse_extent(e, 256), b2 = ellipse_extent(e, 512);
        CHECK(std::abs(b1.x_min - b2.x_min) < 0.25);
        CHECK(std::abs(b1.y_min - b2.y_min) < 0.25);
        CHECK(std::abs(b1.x_max - b2.x_max) < 0.25);
        CHECK(std::abs(b1.y_max - b2.y_max) < 0.25);
    }
}

TEST_CASE("minimum enclosing circle examples") {
    std::vector<Point2> p{{0, 0}, {10, 0}, {5, 5}, {5, -5}};
    const Circle c = min_enclosing_circle(p);
    CHECK(c.center.x == Approx(5));
    CHECK(c.center.y == Approx(0));
    CHECK(c.radius == Approx(5));

    std::vector<Point2> dup{{1, 1}, {1, 1}, {7, 9}, {7, 9}};
    const Circle d = min_enclosing_circle(dup);
    CHECK(d.center.x == Approx(4));
    CHECK(d.center.y == Approx(5));
    CHECK(d.radius == Approx(5));

    std::vector<Point2> one{{3, 3}, {3, 3}, {3, 3}, {3, 3}};
    CHECK_THROWS_AS(min_enclosing_circle(one), ValidationError);

    // acute triangle: circumcircle
    std::vector<Point2> tri{{0, 0}, {4, 0}, {2, 3}, {2, 1}};
    const Circle t = min_enclosing_circle(tri);
    CHECK(t.center.x == Approx(2));
    CHECK(t.center.y == Approx(5.0 / 6.0));
    CHECK(t.radius == Approx(std::sqrt(4 + 25.0 / 36.0)));
}

TEST_CASE("minimum enclosing circle agrees with a convex search oracle") {
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> U(0, 100);
    for (int k = 0; k < 300; ++k) {
        std::vector<Point2> pts(4);
        for (auto& p : pts) p = {U(rng), U(rng)};
        const Circle c = min_enclosing_circle(pts);
        const Circle o = ternary_oracle(pts);
        CHECK(c.radius == Approx(o.radius).epsilon(1e-6));
        for (auto p : pts) CHECK(std::hypot(p.x - c.center.x, p.y - c.center.y) <= c.radius + 1e-9);
    }
}

TEST_CASE("circle box clipping") {
    const BBox b = circle_box({{5, 0}, 5}, {100, 100});
    CHECK(b == BBox{0, 0, 10, 5});
    CHECK(circle_extent({{5, 0}, 5}).y_min == -5);
    const BBox in = circle_box({{50, 50}, 7}, {100, 100});
    CHECK(in == BBox{43, 43, 57, 57});
    CHECK_THROWS_AS(circle_box({{-10, 50}, 5}, {100, 100}), ValidationError);
}

TEST_CASE("symmetric cross nests b1 in b2 in b3") {
    for (double ang : {0.0, 0.2, 0.7, 1.1}) {
        auto a = cross({100, 100}, 20, 20, 12, 12, ang);
        const BoxPromptSet s = generate_prompts(a, {400, 400});
        CHECK(nested(s.b1, s.b2));
        CHECK(nested(s.b2, s.b3));
    }
}

TEST_CASE("every endpoint lies in all three boxes") {
    std::mt19937_64 rng(23);
    std::uniform_real_distribution<double> U(0, 127.999), R(0.5, 40), A(0, 2 * std::numbers::pi);
    int tested = 0;
    while (tested < 2000) {
        auto a = cross({U(rng), U(rng)}, R(rng), R(rng), R(rng), R(rng), A(rng));
        bool ok = true;
        for (auto p : a.points()) ok = ok && p.x >= 0 && p.y >= 0 && p.x < 128 && p.y < 128;
        if (!ok) continue;
        ++tested;
        const BoxPromptSet s = generate_prompts(a, {128, 128});
        for (int k = 1; k <= 3; ++k)
            for (auto p : a.points()) CHECK(inside(s[k], p, 1e-9));
    }
}

TEST_CASE("generate_prompts is deterministic") {
    auto a = cross({40.3, 51.7}, 13.1, 9.2, 4.4, 7.9, 0.9);
        const auto x = generate_prompts(a, {100, 100}), y = generate_prompts(a, {100, 100});
    CHECK(x.b1 == y.b1);
    CHECK(x.b2 == y.b2);
    CHECK(x.b3 == y.b3);
}

TEST_CASE("rasterization floors mins and ceils maxes") {
    const PixelBox p = rasterize({2.3, 4.7, 10.2, 11.0}, {64, 64});
    CHECK(p == PixelBox{2, 4, 11, 11});
    const PixelBox q = rasterize({0, 0, 64, 64}, {64, 64});
    CHECK(q == PixelBox{0, 0, 63, 63});
    CHECK(rasterize({3.2, 3.2, 3.8, 9}, {64, 64}) == PixelBox{3, 3, 4, 9});
    CHECK_THROWS_AS(rasterize({70, 70, 80, 80}, {64, 64}), ValidationError);
    CHECK_THROWS_AS(rasterize({3, 3, 3, 9}, {64, 64}), ValidationError);
}

TEST_CASE("prompts csv round trip") {
    testing::TempDir dir("prompts");
    std::vector<BoxPromptSet> v;
    v.push_back(generate_prompts(cross({40.3, 51.7}, 13.1, 9.2, 4.4, 7.9, 0.9), {100, 100}));
    v[0].image_id = "case0001";
    save_prompts(v, dir / "prompts.csv");
    const auto back = load_prompts(dir / "prompts.csv");
    REQUIRE(back.size() == 1);
    CHECK(back[0].image_id == "case0001");
    CHECK(back[0].b1 == v[0].b1);
    CHECK(back[0].b2 == v[0].b2);
    CHECK(back[0].b3 == v[0].b3);
}
