#pragma once

#include <filesystem>
#include <random>
#include <string>

#include "wpseg/grid.hpp"

namespace testing {

// Fresh empty directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() / ("wpseg_" + tag + "_" + std::to_string(rd()));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& s) const { return path_ / s; }

private:
    std::filesystem::path path_;
};

inline wpseg::BinaryMask random_mask(std::mt19937_64& rng, int h, int w, double p = 0.5) {
    std::bernoulli_distribution d(p);
    wpseg::BinaryMask m(h, w);
    for (auto& v : m.data()) v = d(rng) ? 1 : 0;
    return m;
}

inline wpseg::BinaryMask rect_mask(int h, int w, int y0, int x0, int y1, int x1) {
    wpseg::BinaryMask m(h, w);
    for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) m(y, x) = 1;
    return m;
}

}  // namespace testing
