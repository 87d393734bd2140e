#include "wpseg/plot.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <map>

#include "wpseg/dataio.hpp"

namespace wpseg {

namespace {

// 5x7 glyphs, one byte per row, low 5 bits used (bit 4 = leftmost column).
const std::map<char, std::array<std::uint8_t, 7>>& font() {
    static const std::map<char, std::array<std::uint8_t, 7>> glyphs = {
        {'0', {0x0e, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0e}}, {'1', {0x04, 0x0c, 0x04, 0x04, 0x04, 0x04, 0x0e}},
        {'2', {0x0e, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1f}}, {'3', {0x1f, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0e}},
        {'4', {0x02, 0x06, 0x0a, 0x12, 0x1f, 0x02, 0x02}}, {'5', {0x1f, 0x10, 0x1e, 0x01, 0x01, 0x11, 0x0e}},
        {'6', {0x06, 0x08, 0x10, 0x1e, 0x11, 0x11, 0x0e}}, {'7', {0x1f, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08}},
        {'8', {0x0e, 0x11, 0x11, 0x0e, 0x11, 0x11, 0x0e}}, {'9', {0x0e, 0x11, 0x11, 0x0f, 0x01, 0x02, 0x0c}},
        {'.', {0x00, 0x00, 0x00, 0x00, 0x00, 0x0c, 0x0c}}, {'-', {0x00, 0x00, 0x00, 0x1f, 0x00, 0x00, 0x00}},
        {'D', {0x1c, 0x12, 0x11, 0x11, 0x11, 0x12, 0x1c}}, {'S', {0x0f, 0x10, 0x10, 0x0e, 0x01, 0x01, 0x1e}},
        {'C', {0x0e, 0x11, 0x10, 0x10, 0x10, 0x11, 0x0e}}, {'H', {0x11, 0x11, 0x11, 0x1f, 0x11, 0x11, 0x11}},
        {'W', {0x11, 0x11, 0x11, 0x15, 0x15, 0x15, 0x0a}}, {'L', {0x10, 0x10, 0x10, 0x10, 0x10, 0x10, 0x1f}},
        {'A', {0x0e, 0x11, 0x11, 0x1f, 0x11, 0x11, 0x11}}, {'M', {0x11, 0x1b, 0x15, 0x15, 0x11, 0x11, 0x11}},
        {'B', {0x1e, 0x11, 0x11, 0x1e, 0x11, 0x11, 0x1e}}, {' ', {0, 0, 0, 0, 0, 0, 0}},
    };
    return glyphs;
}

struct Canvas {
    Grid<std::uint8_t> px;
    explicit Canvas(int h, int w) : px(h, w, 255) {}

    void dot(int x, int y, std::uint8_t v) {
        if (px.contains(y, x)) px(y, x) = v;
    }
    void line(int x0, int y0, int x1, int y1, std::uint8_t v) {
        const int dx = std::abs(x1 - x0), sx = x0 < x1 ? 1 : -1;
        const int dy = -std::abs(y1 - y0), sy = y0 < y1 ? 1 : -1;
        int err = dx + dy;
        for (;;) {
            dot(x0, y0, v);
            if (x0 == x1 && y0 == y1) break;
            const int e2 = 2 * err;
            if (e2 >= dy) { err += dy; x0 += sx; }
            if (e2 <= dx) { err += dx; y0 += sy; }
        }
    }
    void square(int cx, int cy, int r, std::uint8_t v) {
        for (int y = cy - r; y <= cy + r; ++y)
            for (int x = cx - r; x <= cx + r; ++x) dot(x, y, v);
    }
    void text(int x, int y, const std::string& s, std::uint8_t v) {
        for (char ch : s) {
            auto it = font().find(ch);
            if (it != font().end()) {
                for (int r = 0; r < 7; ++r)
                    for (int c = 0; c < 5; ++c)
                        if (it->second[r] & (0x10 >> c)) dot(x + c, y + r, v);
            }
            x += 6;
        }
    }
    int text_width(const std::string& s) const { return static_cast<int>(s.size()) * 6 - 1; }
};

std::string short_number(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3g", v);
    return buf;
}

std::string x_label(const SweepRow& r) {
    return (r.lambda_mode == "constant" ? "" : "W") + short_number(r.lambda);
}

void panel(Canvas& cv, int top, int height, const std::string& title, const std::vector<SweepRow>& rows,
           bool hd) {
    const int left = 56, right = cv.px.width() - 16;
    const int bottom = top + height;
    double lo = INFINITY, hi = -INFINITY;
    for (const auto& r : rows) {
        const double m = hd ? r.hd95_mean : r.dsc_mean, s = hd ? r.hd95_std : r.dsc_std;
        lo = std::min(lo, m - s);
        hi = std::max(hi, m + s);
    }
    if (!std::isfinite(lo) || !std::isfinite(hi)) lo = 0, hi = 1;
    if (hi - lo < 1e-9) lo -= 0.5, hi += 0.5;
    const double pad = 0.05 * (hi - lo);
    lo -= pad;
    hi += pad;
    auto ypix = [&](double v) { return bottom - static_cast<int>(std::lround((v - lo) / (hi - lo) * height)); };

    cv.line(left, top, left, bottom, 0);
    cv.line(left, bottom, right, bottom, 0);
    cv.text(left, top - 12, title, 0);
    for (int k = 0; k <= 4; ++k) {
        const double v = lo + (hi - lo) * k / 4.0;
        const int y = ypix(v);
        cv.line(left - 4, y, left, y, 0);
        for (int x = left + 2; x < right; x += 4) cv.dot(x, y, 200);
        const std::string lbl = short_number(v);
        cv.text(left - 6 - cv.text_width(lbl), y - 3, lbl, 0);
    }
    const int n = static_cast<int>(rows.size());
    int prev_x = 0, prev_y = 0;
    for (int i = 0; i < n; ++i) {
        const int x = left + (right - left) * (2 * i + 1) / (2 * std::max(n, 1));
        const auto& r = rows[i];
        const double m = hd ? r.hd95_mean : r.dsc_mean, s = hd ? r.hd95_std : r.dsc_std;
        const int y = ypix(m);
        cv.line(x, ypix(m - s), x, ypix(m + s), 110);
        cv.line(x - 3, ypix(m - s), x + 3, ypix(m - s), 110);
        cv.line(x - 3, ypix(m + s), x + 3, ypix(m + s), 110);
        if (i > 0 && rows[i - 1].lambda_mode == r.lambda_mode) cv.line(prev_x, prev_y, x, y, 60);
        cv.square(x, y, 3, 0);
        cv.line(x, bottom, x, bottom + 4, 0);
        const std::string lbl = x_label(r);
        cv.text(x - cv.text_width(lbl) / 2, bottom + 8, lbl, 0);
        prev_x = x;
        prev_y = y;
    }
}

}  // namespace

void plot_sweep(const std::vector<SweepRow>& rows, const std::filesystem::path& path) {
    Canvas cv(420, 480);
    panel(cv, 24, 150, "DSC", rows, false);
    panel(cv, 234, 150, "HD95", rows, true);
    cv.text(cv.px.width() - 16 - cv.text_width("LAMBDA"), 404, "LAMBDA", 0);
    write_gray_png(cv.px, path);
}

}  // namespace wpseg
