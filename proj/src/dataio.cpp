#include "wpseg/dataio.hpp"

#include <png.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace wpseg {

namespace fs = std::filesystem;

namespace {

std::string trim(std::string_view s) {
    auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::istringstream ss(line);
    while (std::getline(ss, field, ',')) out.push_back(trim(field));
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

bool parse_real(const std::string& s, double& out) {
    if (s.empty()) return false;
    const char* first = s.data();
    if (*first == '+') ++first;
    auto [ptr, ec] = std::from_chars(first, s.data() + s.size(), out);
    return ec == std::errc() && ptr == s.data() + s.size() && std::isfinite(out);
}

double cross(Point2 a, Point2 b) { return a.x * b.y - a.y * b.x; }

}  // namespace

std::optional<Point2> segment_intersection(Point2 a, Point2 b, Point2 c, Point2 d) {
    const Point2 r = b - a;
    const Point2 s = d - c;
    const double denom = cross(r, s);
    if (denom == 0.0) return std::nullopt;
    const Point2 ca = c - a;
    const double t = cross(ca, s) / denom;
    const double u = cross(ca, r) / denom;
    if (t <= 0.0 || t >= 1.0 || u <= 0.0 || u >= 1.0) return std::nullopt;
    return a + t * r;
}

std::vector<AspectRatioAnnotation> parse_annotations(std::istream& in, const std::string& source) {
    std::vector<AspectRatioAnnotation> out;
    std::string raw;
    int lineno = 0;
    bool header_seen = false;
    while (std::getline(in, raw)) {
        ++lineno;
        std::string line = trim(raw);
        if (lineno == 1 && line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line = trim(line.substr(3));
        if (line.empty() || line.front() == '#') continue;
        if (!header_seen) {
            header_seen = true;
            if (line.rfind("image_id", 0) == 0) {
                if (split_csv(line).size() != 9) throw ParseError(source, lineno, "header must have 9 columns");
                continue;
            }
            throw ParseError(source, lineno, "missing header 'image_id,x1,y1,x2,y2,x3,y3,x4,y4'");
        }
        auto fields = split_csv(line);
        if (fields.size() != 9) {
            throw ParseError(source, lineno, "expected 9 fields, got " + std::to_string(fields.size()));
        }
        if (fields[0].empty()) throw ParseError(source, lineno, "empty image_id");
        double v[8];
        for (int i = 0; i < 8; ++i) {
            if (!parse_real(fields[i + 1], v[i])) {
                throw ParseError(source, lineno, "invalid coordinate '" + fields[i + 1] + "'");
            }
        }
        AspectRatioAnnotation ann;
        ann.image_id = fields[0];
        ann.p1 = {v[0], v[1]};
        ann.p2 = {v[2], v[3]};
        ann.p3 = {v[4], v[5]};
        ann.p4 = {v[6], v[7]};
        ann.non_crossing = !segment_intersection(ann.p1, ann.p2, ann.p3, ann.p4).has_value();
        out.push_back(std::move(ann));
    }
    return out;
}

std::vector<AspectRatioAnnotation> load_annotations(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw MissingArtifactError("cannot open annotation file " + path.string());
    return parse_annotations(in, path.string());
}

void save_annotations(const std::vector<AspectRatioAnnotation>& anns, const fs::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << "image_id,x1,y1,x2,y2,x3,y3,x4,y4\n";
    char buf[64];
    auto put = [&](double v) {
        auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
        out << ',' << std::string_view(buf, p - buf);
    };
    for (const auto& a : anns) {
        out << a.image_id;
        for (Point2 p : a.points()) {
            put(p.x);
            put(p.y);
        }
        out << '\n';
    }
    if (!out) throw IoError("write failed: " + path.string());
}

void validate_annotation(AspectRatioAnnotation& ann, ImageDims dims) {
    for (Point2 p : ann.points()) {
        if (!(p.x >= 0.0 && p.x < dims.width && p.y >= 0.0 && p.y < dims.height)) {
            std::ostringstream msg;
            msg << "annotation for '" << ann.image_id << "': point (" << p.x << ", " << p.y
                << ") outside image " << dims.width << "x" << dims.height;
            throw ValidationError(msg.str());
        }
    }
    if (ann.p1 == ann.p2 || ann.p3 == ann.p4) {
        throw ValidationError("annotation for '" + ann.image_id + "': zero-length diameter");
    }
    ann.non_crossing = !segment_intersection(ann.p1, ann.p2, ann.p3, ann.p4).has_value();
}

Grid<std::uint8_t> read_gray_png(const fs::path& path) {
    if (!fs::exists(path)) throw MissingArtifactError("missing PNG " + path.string());
    png_image img{};
    img.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&img, path.c_str())) {
        throw FormatError(path.string() + ": " + img.message);
    }
    if (img.format & (PNG_FORMAT_FLAG_COLOR | PNG_FORMAT_FLAG_ALPHA | PNG_FORMAT_FLAG_LINEAR)) {
        png_image_free(&img);
        throw FormatError(path.string() + ": expected 8-bit grayscale PNG");
    }
    img.format = PNG_FORMAT_GRAY;
    Grid<std::uint8_t> out(static_cast<int>(img.height), static_cast<int>(img.width));
    if (!png_image_finish_read(&img, nullptr, out.data().data(), 0, nullptr)) {
        throw FormatError(path.string() + ": " + img.message);
    }
    return out;
}

void write_gray_png(const Grid<std::uint8_t>& pixels, const fs::path& path) {
    png_image img{};
    img.version = PNG_IMAGE_VERSION;
    img.width = static_cast<png_uint_32>(pixels.width());
    img.height = static_cast<png_uint_32>(pixels.height());
    img.format = PNG_FORMAT_GRAY;
    if (!png_image_write_to_file(&img, path.c_str(), 0, pixels.data().data(), 0, nullptr)) {
        throw IoError("cannot write " + path.string() + ": " + img.message);
    }
}

BinaryMask load_mask(const fs::path& path, std::optional<ImageDims> expected) {
    auto raw = read_gray_png(path);
    if (expected && dims_of(raw) != *expected) {
        throw FormatError(path.string() + ": mask is " + std::to_string(raw.width()) + "x" +
                          std::to_string(raw.height()) + ", expected " + std::to_string(expected->width) +
                          "x" + std::to_string(expected->height));
    }
    BinaryMask m(raw.height(), raw.width());
    auto src = raw.data();
    auto dst = m.data();
    for (std::size_t i = 0; i < src.size(); ++i) dst[i] = src[i] >= 128 ? 1 : 0;
    return m;
}

void save_mask(const BinaryMask& mask, const fs::path& path) {
    Grid<std::uint8_t> raw(mask.height(), mask.width());
    auto src = mask.data();
    auto dst = raw.data();
    for (std::size_t i = 0; i < src.size(); ++i) {
        if (src[i] > 1) throw ValidationError("mask value outside {0,1}");
        dst[i] = src[i] ? 255 : 0;
    }
    write_gray_png(raw, path);
}

Image load_image(const fs::path& path, std::string id) {
    auto raw = read_gray_png(path);
    Image img{std::move(id), Grid<float>(raw.height(), raw.width())};
    if (img.height() < 16 || img.width() < 16) {
        throw ValidationError(path.string() + ": image smaller than 16x16");
    }
    auto src = raw.data();
    auto dst = img.pixels.data();
    for (std::size_t i = 0; i < src.size(); ++i) dst[i] = static_cast<float>(src[i]) / 255.0f;
    return img;
}

void save_image(const Image& image, const fs::path& path) {
    Grid<std::uint8_t> raw(image.height(), image.width());
    auto src = image.pixels.data();
    auto dst = raw.data();
    for (std::size_t i = 0; i < src.size(); ++i) {
        float v = std::clamp(src[i], 0.0f, 1.0f);
        dst[i] = static_cast<std::uint8_t>(std::lround(v * 255.0f));
    }
    write_gray_png(raw, path);
}

const DatasetEntry& DatasetIndex::at(const std::string& id) const {
    auto it = std::lower_bound(entries.begin(), entries.end(), id,
                               [](const DatasetEntry& e, const std::string& key) { return e.id < key; });
    if (it == entries.end() || it->id != id) throw ValidationError("unknown image id '" + id + "'");
    return *it;
}

std::vector<const DatasetEntry*> DatasetIndex::select(const std::string& split_name) const {
    std::vector<const DatasetEntry*> out;
    for (const auto& e : entries) {
        auto it = split.find(e.id);
        const std::string& s = it == split.end() ? std::string("train") : it->second;
        if (split_name.empty() || s == split_name) out.push_back(&e);
    }
    return out;
}

namespace {

ImageDims png_dims(const fs::path& path) {
    png_image img{};
    img.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&img, path.c_str())) {
        throw FormatError(path.string() + ": " + img.message);
    }
    ImageDims d{static_cast<int>(img.height), static_cast<int>(img.width)};
    png_image_free(&img);
    return d;
}

}  // namespace

DatasetIndex load_dataset(const fs::path& root) {
    const fs::path ann_path = root / "annotations.csv";
    if (!fs::exists(ann_path)) {
        throw MissingArtifactError("dataset " + root.string() + " has no annotations.csv (produce it with synth-data)");
    }
    DatasetIndex index;
    index.root = root;
    std::set<std::string> seen;
    for (auto& ann : load_annotations(ann_path)) {
        if (!seen.insert(ann.image_id).second) {
            throw ValidationError("duplicate annotation for image id '" + ann.image_id + "'");
        }
        DatasetEntry e;
        e.id = ann.image_id;
        e.image_path = root / "images" / (e.id + ".png");
        if (!fs::exists(e.image_path)) {
            throw ValidationError("annotation references missing image " + e.image_path.string());
        }
        e.dims = png_dims(e.image_path);
        validate_annotation(ann, e.dims);
        e.annotation = std::move(ann);
        fs::path gt = root / "gt_masks" / (e.id + ".png");
        if (fs::exists(gt)) e.gt_path = gt;
        index.entries.push_back(std::move(e));
    }
    std::sort(index.entries.begin(), index.entries.end(),
              [](const DatasetEntry& a, const DatasetEntry& b) { return a.id < b.id; });
    if (fs::exists(root / "split.csv")) index.split = load_split(root / "split.csv");
    return index;
}

std::map<std::string, std::string> load_split(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw MissingArtifactError("cannot open " + path.string());
    std::map<std::string, std::string> out;
    std::string raw;
    int lineno = 0;
    while (std::getline(in, raw)) {
        ++lineno;
        std::string line = trim(raw);
        if (line.empty() || line.front() == '#') continue;
        if (line.rfind("image_id", 0) == 0) continue;
        auto f = split_csv(line);
        if (f.size() != 2 || (f[1] != "train" && f[1] != "test")) {
            throw ParseError(path.string(), lineno, "expected 'image_id,train|test'");
        }
        out[f[0]] = f[1];
    }
    return out;
}

void save_split(const std::map<std::string, std::string>& split, const fs::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << "image_id,split\n";
    for (const auto& [id, s] : split) out << id << ',' << s << '\n';
}

}  // namespace wpseg
