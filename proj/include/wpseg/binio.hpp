#pragma once

// Little helpers for the binary checkpoint and train-state files. Values are
// written in host byte order (little-endian on every supported platform).

#include <cstdint>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "wpseg/error.hpp"

namespace wpseg::binio {

template <typename T>
void put(std::ostream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

inline void put_string(std::ostream& out, const std::string& s) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

template <typename T, typename A>
void put_vector(std::ostream& out, const std::vector<T, A>& v) {
    put<std::uint64_t>(out, v.size());
    out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(T)));
}

template <typename T>
T get(std::istream& in, const std::string& where) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof v);
    if (!in) throw FormatError("truncated file " + where);
    return v;
}

inline std::string get_string(std::istream& in, const std::string& where) {
    const auto n = get<std::uint32_t>(in, where);
    if (n > (1u << 26)) throw FormatError("corrupt string length in " + where);
    std::string s(n, '\0');
    in.read(s.data(), n);
    if (!in) throw FormatError("truncated file " + where);
    return s;
}

template <typename T>
std::vector<T> get_vector(std::istream& in, const std::string& where) {
    const auto n = get<std::uint64_t>(in, where);
    if (n > (1ull << 32)) throw FormatError("corrupt vector length in " + where);
    std::vector<T> v(n);
    in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(T)));
    if (!in) throw FormatError("truncated file " + where);
    return v;
}

}  // namespace wpseg::binio
