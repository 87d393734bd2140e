#include "wpseg/geometry.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numbers>
#include <sstream>

namespace wpseg {

namespace {

double norm(Point2 p) { return std::hypot(p.x, p.y); }

std::string fmt_box(const BBox& b) {
    std::ostringstream s;
    s << "(" << b.x_min << ", " << b.y_min << ", " << b.x_max << ", " << b.y_max << ")";
    return s.str();
}

}  // namespace

BBox clip_box(const BBox& box, ImageDims dims, const std::string& what) {
    BBox out{std::clamp(box.x_min, 0.0, static_cast<double>(dims.width)),
             std::clamp(box.y_min, 0.0, static_cast<double>(dims.height)),
             std::clamp(box.x_max, 0.0, static_cast<double>(dims.width)),
             std::clamp(box.y_max, 0.0, static_cast<double>(dims.height))};
    if (!(out.x_min < out.x_max && out.y_min < out.y_max)) {
        throw ValidationError(what + " " + fmt_box(box) + " is degenerate after clipping to " +
                              std::to_string(dims.width) + "x" + std::to_string(dims.height));
    }
    return out;
}

PixelBox rasterize(const BBox& box, ImageDims dims) {
    PixelBox p{static_cast<int>(std::floor(box.x_min)), static_cast<int>(std::floor(box.y_min)),
               static_cast<int>(std::ceil(box.x_max)), static_cast<int>(std::ceil(box.y_max))};
    p.x0 = std::max(p.x0, 0);
    p.y0 = std::max(p.y0, 0);
    p.x1 = std::min(p.x1, dims.width - 1);
    p.y1 = std::min(p.y1, dims.height - 1);
    if (p.x0 >= p.x1 || p.y0 >= p.y1) {
        throw ValidationError("box " + fmt_box(box) + " rasterizes to a degenerate pixel range");
    }
    return p;
}

Point2 QuarterArc::at(double t) const {
    return center + (radius_a * std::cos(t)) * dir_a + (radius_b * std::sin(t)) * dir_b;
}

BBox tight_box(const AspectRatioAnnotation& ann, ImageDims dims) {
    BBox b{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(),
           -std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
    for (Point2 p : ann.points()) {
        b.x_min = std::min(b.x_min, p.x);
        b.y_min = std::min(b.y_min, p.y);
        b.x_max = std::max(b.x_max, p.x);
        b.y_max = std::max(b.y_max, p.y);
    }
    if (!(b.x_min < b.x_max && b.y_min < b.y_max)) {
        throw ValidationError("annotation for '" + ann.image_id + "' spans a zero-area box " + fmt_box(b));
    }
    return clip_box(b, dims, "tight box for '" + ann.image_id + "'");
}

ApproxEllipse approx_ellipse(const AspectRatioAnnotation& ann) {
    ApproxEllipse shape;
    if (auto c = segment_intersection(ann.p1, ann.p2, ann.p3, ann.p4)) {
        shape.center = *c;
    } else {
        shape.centroid_fallback = true;
        shape.center = 0.25 * (ann.p1 + ann.p2 + ann.p3 + ann.p4);
    }
    const std::array<Point2, 4> ends{ann.p1, ann.p2, ann.p3, ann.p4};
    std::array<Point2, 4> dir;
    std::array<double, 4> radius;
    for (int k = 0; k < 4; ++k) {
        Point2 d = ends[k] - shape.center;
        radius[k] = norm(d);
        if (!(radius[k] > 0.0)) {
            throw ValidationError("annotation for '" + ann.image_id + "': endpoint coincides with the diameter crossing");
        }
        dir[k] = (1.0 / radius[k]) * d;
    }
    // Adjacent endpoint pairs (one from each diameter) walking around the cross.
    constexpr std::array<std::array<int, 2>, 4> order{{{0, 2}, {2, 1}, {1, 3}, {3, 0}}};
    for (int q = 0; q < 4; ++q) {
        auto [a, b] = order[q];
        shape.arcs[q] = QuarterArc{shape.center, dir[a], dir[b], radius[a], radius[b]};
    }
    return shape;
}

BBox ellipse_extent(const ApproxEllipse& shape, int samples_per_arc) {
    if (samples_per_arc < 1) throw ValidationError("samples_per_arc must be >= 1");
    BBox b{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(),
           -std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
    auto add = [&](Point2 p) {
        b.x_min = std::min(b.x_min, p.x);
        b.y_min = std::min(b.y_min, p.y);
        b.x_max = std::max(b.x_max, p.x);
        b.y_max = std::max(b.y_max, p.y);
    };
    constexpr double quarter = std::numbers::pi / 2.0;
    for (const auto& arc : shape.arcs) {
        add(arc.center + arc.radius_a * arc.dir_a);
        add(arc.center + arc.radius_b * arc.dir_b);
        for (int j = 1; j <= samples_per_arc; ++j) {
            add(arc.at(quarter * j / (samples_per_arc + 1)));
        }
    }
    return b;
}

BBox ellipse_box(const AspectRatioAnnotation& ann, ImageDims dims, int samples_per_arc) {
    return clip_box(ellipse_extent(approx_ellipse(ann), samples_per_arc), dims,
                    "ellipse box for '" + ann.image_id + "'");
}

namespace {

bool encloses(const Circle& c, std::span<const Point2> pts) {
    const double tol = 1e-12 * std::max(1.0, c.radius);
    for (Point2 p : pts) {
        if (norm(p - c.center) > c.radius + tol) return false;
    }
    return true;
}

std::optional<Point2> circumcenter(Point2 a, Point2 b, Point2 c) {
    const Point2 ab = b - a;
    const Point2 ac = c - a;
    const double d = 2.0 * (ab.x * ac.y - ab.y * ac.x);
    const double scale = std::max({std::abs(ab.x), std::abs(ab.y), std::abs(ac.x), std::abs(ac.y), 1e-300});
    if (std::abs(d) <= 1e-14 * scale * scale) return std::nullopt;
    const double b2 = ab.x * ab.x + ab.y * ab.y;
    const double c2 = ac.x * ac.x + ac.y * ac.y;
    return a + Point2{(ac.y * b2 - ab.y * c2) / d, (ab.x * c2 - ac.x * b2) / d};
}

}  // namespace

Circle min_enclosing_circle(std::span<const Point2> points) {
    std::vector<Point2> pts;
    for (Point2 p : points) {
        if (std::find(pts.begin(), pts.end(), p) == pts.end()) pts.push_back(p);
    }
    if (pts.size() < 2) throw ValidationError("minimum enclosing circle needs at least 2 distinct points");

    auto radius_about = [&](Point2 c) {
        double r = 0.0;
        for (Point2 p : pts) r = std::max(r, norm(p - c));
        return r;
    };
    Circle best{{0, 0}, std::numeric_limits<double>::infinity()};
    auto consider = [&](Point2 center, double r) {
        Circle cand{center, r};
        if (r < best.radius && encloses(cand, pts)) best = cand;
    };
    const std::size_t n = pts.size();
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            consider(0.5 * (pts[i] + pts[j]), 0.5 * norm(pts[i] - pts[j]));
            for (std::size_t k = j + 1; k < n; ++k) {
                if (auto c = circumcenter(pts[i], pts[j], pts[k])) {
                    consider(*c, std::max({norm(pts[i] - *c), norm(pts[j] - *c), norm(pts[k] - *c)}));
                }
            }
        }
    }
    // Feasible by construction; re-measure so every point is within radius.
    best.radius = radius_about(best.center);
    return best;
}

BBox circle_extent(const Circle& c) {
    return {c.center.x - c.radius, c.center.y - c.radius, c.center.x + c.radius, c.center.y + c.radius};
}

BBox circle_box(const Circle& c, ImageDims dims) {
    if (!(c.radius > 0.0)) throw ValidationError("circle radius must be positive");
    return clip_box(circle_extent(c), dims, "circle box");
}

BoxPromptSet generate_prompts(const AspectRatioAnnotation& ann, ImageDims dims) {
    BoxPromptSet set;
    set.image_id = ann.image_id;
    set.b1 = tight_box(ann, dims);
    set.b2 = ellipse_box(ann, dims);
    const auto pts = ann.points();
    set.b3 = clip_box(circle_extent(min_enclosing_circle(pts)), dims, "circle box for '" + ann.image_id + "'");
    return set;
}

void save_prompts(const std::vector<BoxPromptSet>& prompts, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << "image_id,box,x_min,y_min,x_max,y_max\n";
    char buf[64];
    auto put = [&](double v) {
        auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
        out << ',' << std::string_view(buf, p - buf);
    };
    for (const auto& s : prompts) {
        for (int k = 1; k <= 3; ++k) {
            const BBox& b = s[k];
            out << s.image_id << ",b" << k;
            put(b.x_min);
            put(b.y_min);
            put(b.x_max);
            put(b.y_max);
            out << '\n';
        }
    }
    if (!out) throw IoError("write failed: " + path.string());
}

std::vector<BoxPromptSet> load_prompts(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw MissingArtifactError("cannot open " + path.string() + " (produce it with gen-prompts)");
    std::map<std::string, std::array<std::optional<BBox>, 3>> boxes;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line.front() == '#' || line.rfind("image_id", 0) == 0) continue;
        std::vector<std::string> f;
        std::istringstream ss(line);
        std::string field;
        while (std::getline(ss, field, ',')) f.push_back(field);
        if (f.size() != 6 || f[1].size() != 2 || f[1][0] != 'b' || f[1][1] < '1' || f[1][1] > '3') {
            throw ParseError(path.string(), lineno, "expected 'image_id,b1|b2|b3,x_min,y_min,x_max,y_max'");
        }
        double v[4];
        for (int i = 0; i < 4; ++i) {
            const std::string& s = f[i + 2];
            auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v[i]);
            if (ec != std::errc() || p != s.data() + s.size()) throw ParseError(path.string(), lineno, "invalid number '" + s + "'");
        }
        boxes[f[0]][f[1][1] - '1'] = BBox{v[0], v[1], v[2], v[3]};
    }
    std::vector<BoxPromptSet> out;
    for (auto& [id, b] : boxes) {
        if (!b[0] || !b[1] || !b[2]) throw ValidationError(path.string() + ": image '" + id + "' lacks one of b1,b2,b3");
        out.push_back({id, *b[0], *b[1], *b[2]});
    }
    return out;
}

}  // namespace wpseg
