#include <omp.h>

#include <cmath>
#include <random>
#include <tuple>

#include "doctest.h"
#include "wpseg/kernels.hpp"

using namespace wpseg;
namespace k = wpseg::kernels;

namespace {

template <typename T>
Tensor<T> rand_tensor(int n, int c, int h, int w, std::mt19937_64& rng) {
    Tensor<T> t(n, c, h, w);
    std::normal_distribution<double> d;
    for (auto& v : t.span()) v = static_cast<T>(d(rng));
    return t;
}

template <typename T>
std::vector<T> rand_vec(std::size_t n, std::mt19937_64& rng, double scale = 0.3) {
    std::normal_distribution<double> d(0, scale);
    std::vector<T> v(n);
    for (auto& x : v) x = static_cast<T>(d(rng));
    return v;
}

template <typename T>
double max_abs_diff(std::span<const T> a, std::span<const T> b) {
    double m = 0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(double(a[i]) - double(b[i])));
    return m;
}

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

// Relative error with a floor so entries near zero are compared absolutely.
double rel_err(double a, double b) { return std::abs(a - b) / std::max(1.0, std::max(std::abs(a), std::abs(b))); }

}  // namespace

TEST_CASE("conv3x3 forward matches the reference") {
    std::mt19937_64 rng(1);
    struct S { int n, c, co, h, w; };
    for (S s : {S{1, 1, 3, 5, 7}, S{3, 4, 5, 8, 8}, S{2, 40, 6, 24, 20}, S{2, 7, 2, 1, 9}}) {
        const auto in = rand_tensor<double>(s.n, s.c, s.h, s.w, rng);
        const auto w = rand_vec<double>(static_cast<std::size_t>(s.co) * s.c * 9, rng);
        Tensor<double> a, b;
        k::conv3x3_forward<double>(in, w, s.co, a);
        k::reference::conv3x3_forward<double>(in, w, s.co, b);
        CHECK(a.same_shape(b));
        CHECK(max_abs_diff<double>(a.span(), b.span()) < 1e-12);

        const auto inf = in.cast<float>();
        std::vector<float> wf(w.begin(), w.end());
        Tensor<float> af, bf;
        k::conv3x3_forward<float>(inf, wf, s.co, af);
        k::reference::conv3x3_forward<float>(inf, wf, s.co, bf);
        CHECK(max_abs_diff<float>(af.span(), bf.span()) < 1e-4);
    }
}

TEST_CASE("conv3x3 backward matches the reference") {
    std::mt19937_64 rng(2);
    struct S { int n, c, co, h, w; };
    for (S s : {S{1, 1, 3, 5, 7}, S{3, 4, 5, 8, 8}, S{2, 40, 6, 24, 20}}) {
        const auto in = rand_tensor<double>(s.n, s.c, s.h, s.w, rng);
        const auto go = rand_tensor<double>(s.n, s.co, s.h, s.w, rng);
        const auto w = rand_vec<double>(static_cast<std::size_t>(s.co) * s.c * 9, rng);
        std::vector<double> gw1(w.size(), 7.0), gw2(w.size());
        Tensor<double> gi1, gi2;
        k::conv3x3_backward<double>(in, w, go, gw1, &gi1);
        k::reference::conv3x3_backward<double>(in, w, go, gw2, &gi2);
        CHECK(max_abs_diff<double>(gw1, gw2) < 1e-10);
        CHECK(max_abs_diff<double>(gi1.span(), gi2.span()) < 1e-12);
        std::vector<double> gw3(w.size());
        k::conv3x3_backward<double>(in, w, go, gw3, nullptr);
        CHECK(gw3 == gw1);
    }
}

TEST_CASE("conv3x3 gradients match finite differences") {
    std::mt19937_64 rng(3);
    auto in = rand_tensor<double>(2, 2, 5, 6, rng);
    auto w = rand_vec<double>(3 * 2 * 9, rng);
    const auto r = rand_tensor<double>(2, 3, 5, 6, rng);  // loss = <r, conv(in)>
    auto loss = [&] {
        Tensor<double> o;
        k::reference::conv3x3_forward<double>(in, w, 3, o);
        return dot(o.span(), r.span());
    };
    std::vector<double> gw(w.size());
    Tensor<double> gi;
    k::conv3x3_backward<double>(in, w, r, gw, &gi);
    const double h = 1e-3;
    for (std::size_t i = 0; i < w.size(); ++i) {
        const double keep = w[i];
        w[i] = keep + h;
        const double up = loss();
        w[i] = keep - h;
        const double dn = loss();
        w[i] = keep;
        CHECK(rel_err(gw[i], (up - dn) / (2 * h)) < 1e-8);
    }
    for (std::size_t i = 0; i < in.size(); i += 3) {
        const double keep = in.data()[i];
        in.data()[i] = keep + h;
        const double up = loss();
        in.data()[i] = keep - h;
        const double dn = loss();
        in.data()[i] = keep;
        CHECK(rel_err(gi.data()[i], (up - dn) / (2 * h)) < 1e-8);
    }
}

TEST_CASE("conv1x1 forward and gradients") {
    std::mt19937_64 rng(4);
    auto in = rand_tensor<double>(2, 5, 4, 3, rng);
    auto w = rand_vec<double>(2 * 5, rng);
    auto b = rand_vec<double>(2, rng);
    Tensor<double> o1, o2;
    k::conv1x1_forward<double>(in, w, b, 2, o1);
    k::reference::conv1x1_forward<double>(in, w, b, 2, o2);
    CHECK(max_abs_diff<double>(o1.span(), o2.span()) < 1e-12);

    const auto r = rand_tensor<double>(2, 2, 4, 3, rng);
    auto loss = [&] {
        Tensor<double> o;
        k::conv1x1_forward<double>(in, w, b, 2, o);
        return dot(o.span(), r.span());
    };
    std::vector<double> gw(w.size()), gb(b.size());
    Tensor<double> gi;
    k::conv1x1_backward<double>(in, w, r, gw, gb, &gi);
    const double h = 1e-3;
    auto fd = [&](double& x) {
        const double keep = x;
        x = keep + h;
        const double up = loss();
        x = keep - h;
        const double dn = loss();
        x = keep;
        return (up - dn) / (2 * h);
    };
    for (std::size_t i = 0; i < w.size(); ++i) CHECK(rel_err(gw[i], fd(w[i])) < 1e-8);
    for (std::size_t i = 0; i < b.size(); ++i) CHECK(rel_err(gb[i], fd(b[i])) < 1e-8);
    for (std::size_t i = 0; i < in.size(); ++i) CHECK(rel_err(gi.data()[i], fd(in.data()[i])) < 1e-8);
}

TEST_CASE("instance norm forward matches the reference") {
    std::mt19937_64 rng(5);
    for (bool relu : {false, true}) {
        const auto in = rand_tensor<double>(3, 4, 6, 5, rng);
        const auto g = rand_vec<double>(4, rng, 1.0), b = rand_vec<double>(4, rng, 1.0);
        Tensor<double> o1, o2;
        std::vector<double> mean, inv;
        k::instance_norm_forward<double>(in, g, b, 1e-5, relu, o1, mean, inv);
        k::reference::instance_norm_forward<double>(in, g, b, 1e-5, relu, o2);
        CHECK(max_abs_diff<double>(o1.span(), o2.span()) < 1e-12);
        CHECK(mean.size() == 12);
    }
}

TEST_CASE("instance norm gradients match finite differences") {
    std::mt19937_64 rng(6);
    for (bool relu : {false, true}) {
        auto in = rand_tensor<double>(2, 3, 4, 5, rng);
        auto g = rand_vec<double>(3, rng, 1.0), b = rand_vec<double>(3, rng, 1.0);
        const auto r = rand_tensor<double>(2, 3, 4, 5, rng);
        auto loss = [&] {
            Tensor<double> o;
            std::vector<double> m, s;
            k::instance_norm_forward<double>(in, g, b, 1e-5, relu, o, m, s);
            return dot(o.span(), r.span());
        };
        Tensor<double> out, gi;
        std::vector<double> mean, inv, gg(3), gb(3);
        k::instance_norm_forward<double>(in, g, b, 1e-5, relu, out, mean, inv);
        k::instance_norm_backward<double>(in, out, g, mean, inv, relu, r, gg, gb, gi);
        const double h = 1e-5;
        auto fd = [&](double& x) {
            const double keep = x;
            x = keep + h;
            const double up = loss();
            x = keep - h;
            const double dn = loss();
            x = keep;
            return (up - dn) / (2 * h);
        };
        for (int i = 0; i < 3; ++i) {
            CHECK(rel_err(gg[i], fd(g[i])) < 1e-6);
            CHECK(rel_err(gb[i], fd(b[i])) < 1e-6);
        }
        for (std::size_t i = 0; i < in.size(); ++i) CHECK(rel_err(gi.data()[i], fd(in.data()[i])) < 1e-5);
    }
}

TEST_CASE("maxpool picks the first maximum and routes gradients there") {
    Tensor<double> in(1, 1, 2, 4);
    const double vals[] = {1, 3, 5, 5, 3, 2, 5, 0};
    std::copy(vals, vals + 8, in.data());
    Tensor<double> out;
    std::vector<std::uint8_t> arg;
    k::maxpool2_forward<double>(in, out, arg);
    CHECK(out(0, 0, 0, 0) == 3);
    CHECK(out(0, 0, 0, 1) == 5);
    CHECK(arg[0] == 1);
    CHECK(arg[1] == 0);  // ties: first in row-major order
    Tensor<double> go(1, 1, 1, 2, 1.0), gi(1, 1, 2, 4);
    k::maxpool2_backward<double>(go, arg, gi);
    CHECK(gi(0, 0, 0, 1) == 1);
    CHECK(gi(0, 0, 0, 2) == 1);
    CHECK(gi(0, 0, 0, 3) == 0);
    CHECK(gi(0, 0, 1, 2) == 0);
}

TEST_CASE("pooling, upsampling and channel copies are adjoint pairs") {
    std::mt19937_64 rng(7);
    const auto x = rand_tensor<double>(2, 3, 6, 8, rng);
    Tensor<double> up(2, 5, 12, 16);
    k::upsample2_forward<double>(x, up, 2);
    const auto y = rand_tensor<double>(2, 5, 12, 16, rng);
    Tensor<double> back(2, 3, 6, 8);
    k::upsample2_backward<double>(y, 2, back);
    CHECK(dot(up.span(), y.span()) == doctest::Approx(dot(x.span(), back.span())).epsilon(1e-12));
    CHECK(up(1, 2, 5, 7) == x(1, 0, 2, 3));
    CHECK(up(1, 0, 5, 7) == 0);

    Tensor<double> cat(2, 5, 6, 8);
    k::copy_channels<double>(x, cat, 1);
    CHECK(cat(1, 1, 3, 3) == x(1, 0, 3, 3));
    Tensor<double> acc(2, 3, 6, 8, 1.0);
    k::add_channels<double>(cat, 1, acc);
    CHECK(acc(0, 2, 1, 1) == doctest::Approx(1 + x(0, 2, 1, 1)));
}

TEST_CASE("results do not depend on the thread count") {
    std::mt19937_64 rng(8);
    const auto in = rand_tensor<float>(5, 6, 16, 16, rng);
    const auto go = rand_tensor<float>(5, 4, 16, 16, rng);
    const auto w = rand_vec<float>(4 * 6 * 9, rng);
    auto run = [&](int threads) {
        omp_set_num_threads(threads);
        Tensor<float> out, gi;
        std::vector<float> gw(w.size());
        k::conv3x3_forward<float>(in, w, 4, out);
        k::conv3x3_backward<float>(in, w, go, gw, &gi);
        return std::make_tuple(out, gi, gw);
    };
    const auto a = run(1);
    const auto b = run(3);
    omp_set_num_threads(omp_get_num_procs());
    CHECK(std::get<0>(a) == std::get<0>(b));
    CHECK(std::get<1>(a) == std::get<1>(b));
    CHECK(std::get<2>(a) == std::get<2>(b));
}

TEST_CASE("shape errors") {
    Tensor<float> in(1, 2, 4, 4), out;
    std::vector<float> w(5);
    CHECK_THROWS_AS(k::conv3x3_forward<float>(in, w, 3, out), ShapeError);
}
