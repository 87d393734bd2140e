#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

#include "wpseg/dataio.hpp"

namespace wpseg {

/// Axis-aligned box in real pixel coordinates.
struct BBox {
    double x_min = 0, y_min = 0, x_max = 0, y_max = 0;

    double width() const { return x_max - x_min; }
    double height() const { return y_max - y_min; }
    bool contains(Point2 p, double tol = 0.0) const {
        return p.x >= x_min - tol && p.x <= x_max + tol && p.y >= y_min - tol && p.y <= y_max + tol;
    }
    bool contains(const BBox& o) const {
        return o.x_min >= x_min && o.y_min >= y_min && o.x_max <= x_max && o.y_max <= y_max;
    }

    friend bool operator==(const BBox&, const BBox&) = default;
};

/// Clips to [0,W]x[0,H]; throws ValidationError if the result has zero area.
BBox clip_box(const BBox& box, ImageDims dims, const std::string& what = "box");

/// Inclusive integer pixel range covered by a box at the segmenter boundary:
/// floor of the mins, ceil of the maxes, intersected with the pixel grid.
struct PixelBox {
    int x0 = 0, y0 = 0, x1 = 0, y1 = 0;  // inclusive

    bool contains(int y, int x) const { return x >= x0 && x <= x1 && y >= y0 && y <= y1; }
    friend bool operator==(const PixelBox&, const PixelBox&) = default;
};

PixelBox rasterize(const BBox& box, ImageDims dims);

struct Circle {
    Point2 center;
    double radius = 0.0;
};

/// One quarter arc c + ra*cos(t)*ea + rb*sin(t)*eb, t in [0, pi/2], joining
/// endpoint `from` (t=0) to endpoint `to` (t=pi/2).
struct QuarterArc {
    Point2 center;
    Point2 dir_a, dir_b;  // unit vectors towards the endpoints
    double radius_a = 0.0, radius_b = 0.0;

    Point2 at(double t) const;
};

/// Closed piecewise curve of four quarter arcs through the annotation
/// endpoints, in the order p1->p3, p3->p2, p2->p4, p4->p1.
struct ApproxEllipse {
    Point2 center;
    bool centroid_fallback = false;
    std::array<QuarterArc, 4> arcs;
};

BBox tight_box(const AspectRatioAnnotation& ann, ImageDims dims);

ApproxEllipse approx_ellipse(const AspectRatioAnnotation& ann);

/// Bounding box of the sampled arcs (samples_per_arc interior parameters plus
/// both endpoints of every arc), unclipped.
BBox ellipse_extent(const ApproxEllipse& shape, int samples_per_arc = 256);
BBox ellipse_box(const AspectRatioAnnotation& ann, ImageDims dims, int samples_per_arc = 256);

/// Exact smallest enclosing circle by exhaustive search over point-pair
/// diameters and point-triple circumcircles. Needs >= 2 distinct points.
Circle min_enclosing_circle(std::span<const Point2> points);

BBox circle_extent(const Circle& c);
BBox circle_box(const Circle& c, ImageDims dims);

struct BoxPromptSet {
    std::string image_id;
    BBox b1, b2, b3;

    const BBox& operator[](int k) const { return k == 1 ? b1 : (k == 2 ? b2 : b3); }
};

BoxPromptSet generate_prompts(const AspectRatioAnnotation& ann, ImageDims dims);

/// prompts.csv: image_id,box,x_min,y_min,x_max,y_max with box in {b1,b2,b3}.
void save_prompts(const std::vector<BoxPromptSet>& prompts, const std::filesystem::path& path);
std::vector<BoxPromptSet> load_prompts(const std::filesystem::path& path);

}  // namespace wpseg
