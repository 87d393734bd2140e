#include "doctest.h"
#include "support.hpp"
#include "wpseg/dataio.hpp"
#include "wpseg/segmenter.hpp"

using namespace wpseg;

namespace {

BinaryMask disk_mask(int h, int w, double cy, double cx, double r) {
    BinaryMask m(h, w);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) m(y, x) = (y - cy) * (y - cy) + (x - cx) * (x - cx) <= r * r;
    return m;
}

// Brute force: a pixel survives erosion iff every in-disk offset lands on an
// in-grid foreground pixel; dilation iff any does.
BinaryMask naive_morph(const BinaryMask& m, int r, bool erode) {
    BinaryMask out(m.height(), m.width());
    for (int y = 0; y < m.height(); ++y)
        for (int x = 0; x < m.width(); ++x) {
            int hits = 0, total = 0;
            for (int yy = 0; yy < m.height() + 2 * r; ++yy)
                for (int xx = 0; xx < m.width() + 2 * r; ++xx) {
                    const int py = yy - r, px = xx - r;
                    if ((py - y) * (py - y) + (px - x) * (px - x) > r * r) continue;
                    ++total;
                    if (py >= 0 && px >= 0 && py < m.height() && px < m.width() && m(py, px)) ++hits;
                }
            out(y, x) = erode ? hits == total : hits > 0;
        }
    return out;
}

BinaryMask naive_clip(const BinaryMask& m, const PixelBox& b) {
    BinaryMask out(m.height(), m.width());
    for (int y = 0; y < m.height(); ++y)
        for (int x = 0; x < m.width(); ++x) out(y, x) = b.contains(y, x) ? m(y, x) : 0;
    return out;
}

bool confined(const BinaryMask& m, const PixelBox& b) {
    for (int y = 0; y < m.height(); ++y)
        for (int x = 0; x < m.width(); ++x)
            if (m(y, x) && !b.contains(y, x)) return false;
    return true;
}

bool subset(const BinaryMask& a, const BinaryMask& b) {
    for (std::size_t i = 0; i < a.size(); ++i)
        if (a.data()[i] && !b.data()[i]) return false;
    return true;
}

BBox random_box(std::mt19937_64& rng, int size) {
    std::uniform_real_distribution<double> U(-5, size + 5);
    for (;;) {
        double x0 = U(rng), x1 = U(rng), y0 = U(rng), y1 = U(rng);
        if (x0 > x1) std::swap(x0, x1);
        if (y0 > y1) std::swap(y0, y1);
        if (x1 - x0 < 2 || y1 - y0 < 2 || x1 < 1 || y1 < 1 || x0 > size - 2 || y0 > size - 2) continue;
        return clip_box({x0, y0, x1, y1}, {size, size});
    }
}

}  // namespace

TEST_CASE("backend names round trip") {
    for (auto k : {SegmenterKind::oracle, SegmenterKind::noisy_oracle, SegmenterKind::recorded})
        CHECK(parse_segmenter_kind(to_string(k)) == k);
    CHECK_THROWS_AS(parse_segmenter_kind("sam"), ConfigError);
}

TEST_CASE("disk morphology matches brute force") {
    std::mt19937_64 rng(2);
    for (int k = 0; k < 12; ++k) {
        const auto m = testing::random_mask(rng, 14, 17, 0.6);
        for (int r : {0, 1, 2, 3}) {
            CHECK(erode_disk(m, r) == naive_morph(m, r, true));
            CHECK(dilate_disk(m, r) == naive_morph(m, r, false));
        }
    }
}

TEST_CASE("oracle returns gt intersected with the box") {
    const auto gt = disk_mask(40, 40, 20, 20, 10);
    OracleSegmenter seg({{"a", gt}});
    const Image img{"a", Grid<float>(40, 40)};
    std::mt19937_64 rng(5);
    for (int k = 0; k < 200; ++k) {
        const BBox b = random_box(rng, 40);
        const PixelBox pb = rasterize(b, {40, 40});
        CHECK(seg.segment(img, b, 1) == naive_clip(gt, pb));
    }
    const Image other{"b", Grid<float>(40, 40)};
    CHECK_THROWS_AS(seg.segment(other, {0, 0, 10, 10}, 1), MissingArtifactError);
}

TEST_CASE("oracle is monotone in the box") {
    const auto gt = disk_mask(50, 50, 25, 22, 14);
    OracleSegmenter seg({{"a", gt}});
    const Image img{"a", Grid<float>(50, 50)};
    std::mt19937_64 rng(8);
    for (int k = 0; k < 200; ++k) {
        const BBox small = random_box(rng, 50);
        std::uniform_real_distribution<double> grow(0, 6);
        const BBox big = clip_box({small.x_min - grow(rng), small.y_min - grow(rng), small.x_max + grow(rng),
                                   small.y_max + grow(rng)},
                                  {50, 50});
        CHECK(subset(seg.segment(img, small, 1), seg.segment(img, big, 3)));
    }
}

TEST_CASE("noisy oracle erodes or dilates by the hash and stays in the box") {
    const auto gt = disk_mask(48, 48, 24, 24, 12);
    NoisyOracleSegmenter seg({{"a", gt}}, 2, 99);
    const Image img{"a", Grid<float>(48, 48)};
    std::mt19937_64 rng(13);
    int n_dilate = 0, n_erode = 0;
    for (int k = 0; k < 120; ++k) {
        const BBox b = random_box(rng, 48);
        const PixelBox pb = rasterize(b, {48, 48});
        const BinaryMask out = seg.segment(img, b, 1);
        const bool dil = seg.dilates("a", pb);
        (dil ? n_dilate : n_erode)++;
        const BinaryMask expect = naive_clip(naive_morph(naive_clip(gt, pb), 2, !dil), pb);
        CHECK(out == expect);
        CHECK(confined(out, pb));
        CHECK(seg.segment(img, b, 1) == out);
    }
    CHECK(n_dilate > 20);
    CHECK(n_erode > 20);
    NoisyOracleSegmenter other({{"a", gt}}, 2, 100);
    int differ = 0;
    for (int k = 0; k < 64; ++k) {
        const PixelBox pb{k % 8, k / 8, 20 + k % 8, 30};
        differ += seg.dilates("a", pb) != other.dilates("a", pb);
    }
    CHECK(differ > 10);
}

TEST_CASE("segment_all keeps prompt order") {
    const auto gt = disk_mask(40, 40, 20, 20, 10);
    OracleSegmenter seg({{"a", gt}});
    const Image img{"a", Grid<float>(40, 40)};
    BoxPromptSet same{"a", {12, 12, 28, 28}, {12, 12, 28, 28}, {12, 12, 28, 28}};
    auto [m1, m2, m3] = seg.segment_all(img, same);
    CHECK(m1 == m2);
    CHECK(m2 == m3);
    BoxPromptSet nested{"a", {15, 15, 25, 25}, {12, 12, 28, 28}, {5, 5, 35, 35}};
    auto r = seg.segment_all(img, nested);
    CHECK(subset(r[0], r[1]));
    CHECK(subset(r[1], r[2]));
    CHECK(r[2] == gt);
    NoisyOracleSegmenter noisy({{"a", gt}}, 2, 1);
    CHECK(noisy.segment_all(img, nested) == noisy.segment_all(img, nested));
}

TEST_CASE("recorded backend reads per-slot files and clips to the box") {
    testing::TempDir dir("rec");
    const auto full = disk_mask(32, 32, 16, 16, 12);
    save_mask(full, dir / "img__b1.png");
    save_mask(BinaryMask(32, 32), dir / "img__b2.png");
    SegmenterConfig cfg;
    cfg.kind = SegmenterKind::recorded;
    cfg.predictions_dir = dir.path();
    const auto seg = make_segmenter(cfg);
    const Image img{"img", Grid<float>(32, 32)};
    const BBox box{4, 4, 28, 28};
    CHECK(seg->segment(img, box, 1) == naive_clip(full, rasterize(box, {32, 32})));
    CHECK(count_foreground(seg->segment(img, box, 2)) == 0);
    try {
        seg->segment(img, box, 3);
        FAIL("expected MissingArtifactError");
    } catch (const MissingArtifactError& e) {
        CHECK(std::string(e.what()).find("img__b3.png") != std::string::npos);
        CHECK(e.exit_code() == 3);
    }
    save_mask(BinaryMask(16, 16), dir / "img__b3.png");
    CHECK_THROWS_AS(seg->segment(img, box, 3), FormatError);
}

TEST_CASE("make_segmenter builds each backend") {
    const auto gt = disk_mask(20, 20, 10, 10, 5);
    SegmenterConfig c;
    c.kind = SegmenterKind::oracle;
    CHECK(dynamic_cast<OracleSegmenter*>(make_segmenter(c, {{"a", gt}}).get()) != nullptr);
    c.kind = SegmenterKind::noisy_oracle;
    CHECK(dynamic_cast<NoisyOracleSegmenter*>(make_segmenter(c, {{"a", gt}}).get()) != nullptr);
}
