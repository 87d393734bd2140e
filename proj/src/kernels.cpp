#include "wpseg/kernels.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstring>

namespace wpseg::kernels {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

// Rows [y0, y1) of the 3x3 patch matrix:
// cols[(c*9 + ky*3 + kx), (y-y0)*W + x] = in[c, y+ky-1, x+kx-1], zero outside.
template <typename T>
void im2col(const T* img, int channels, int h, int w, int y0, int y1, T* cols) {
    const std::size_t hw = static_cast<std::size_t>(h) * w;
    const std::size_t span = static_cast<std::size_t>(y1 - y0) * w;
    for (int c = 0; c < channels; ++c) {
        const T* src = img + c * hw;
        for (int ky = 0; ky < 3; ++ky) {
            const int dy = ky - 1;
            for (int kx = 0; kx < 3; ++kx) {
                const int dx = kx - 1;
                T* row = cols + (static_cast<std::size_t>(c) * 9 + ky * 3 + kx) * span;
                const int x_lo = std::max(0, -dx);
                const int x_hi = std::min(w, w - dx);
                for (int y = y0; y < y1; ++y) {
                    T* dst = row + static_cast<std::size_t>(y - y0) * w;
                    const int yy = y + dy;
                    if (yy < 0 || yy >= h) {
                        std::memset(dst, 0, sizeof(T) * w);
                        continue;
                    }
                    if (x_lo > 0) dst[0] = T(0);
                    if (x_hi < w) dst[w - 1] = T(0);
                    std::memcpy(dst + x_lo, src + static_cast<std::size_t>(yy) * w + x_lo + dx,
                                sizeof(T) * (x_hi - x_lo));
                }
            }
        }
    }
}

// Adjoint of im2col over rows [y0, y1): img[c, y+ky-1, x+kx-1] += cols[...].
template <typename T>
void col2im(const T* cols, int channels, int h, int w, int y0, int y1, T* img) {
    const std::size_t hw = static_cast<std::size_t>(h) * w;
    const std::size_t span = static_cast<std::size_t>(y1 - y0) * w;
    for (int c = 0; c < channels; ++c) {
        T* dst = img + c * hw;
        for (int ky = 0; ky < 3; ++ky) {
            const int dy = ky - 1;
            for (int kx = 0; kx < 3; ++kx) {
                const int dx = kx - 1;
                const T* row = cols + (static_cast<std::size_t>(c) * 9 + ky * 3 + kx) * span;
                const int x_lo = std::max(0, -dx);
                const int x_hi = std::min(w, w - dx);
                for (int y = y0; y < y1; ++y) {
                    const int yy = y + dy;
                    if (yy < 0 || yy >= h) continue;
                    const T* s = row + static_cast<std::size_t>(y - y0) * w;
                    T* d = dst + static_cast<std::size_t>(yy) * w + dx;
                    for (int x = x_lo; x < x_hi; ++x) d[x] += s[x];
                }
            }
        }
    }
}

// Rows per tile so the patch matrix stays around 256 KiB.
template <typename T>
int tile_rows(int channels, int h, int w) {
    const std::size_t budget = (256u << 10) / sizeof(T);
    const std::size_t per_row = static_cast<std::size_t>(channels) * 9 * w;
    return static_cast<int>(std::clamp<std::size_t>(budget / per_row, 1, h));
}

template <typename T>
using StridedMap = Eigen::Map<RowMat<T>, 0, Eigen::OuterStride<>>;
template <typename T>
using ConstStridedMap = Eigen::Map<const RowMat<T>, 0, Eigen::OuterStride<>>;

template <typename T>
void ensure_shape(Tensor<T>& t, int n, int c, int h, int w) {
    if (t.n() != n || t.c() != c || t.h() != h || t.w() != w) t.resize(n, c, h, w);
}

}  // namespace

template <typename T>
void conv3x3_forward(const Tensor<T>& in, std::span<const T> weight, int out_channels, Tensor<T>& out) {
    const int n = in.n(), c = in.c(), h = in.h(), w = in.w();
    const int k = c * 9;
    const std::size_t hw = in.plane_size();
    if (weight.size() != static_cast<std::size_t>(out_channels) * k) throw ShapeError("conv3x3_forward: weight size");
    ensure_shape(out, n, out_channels, h, w);
    ConstMatMap<T> wm(weight.data(), out_channels, k);
    const int rows = tile_rows<T>(c, h, w);
#pragma omp parallel
    {
        AlignedVector<T> cols(static_cast<std::size_t>(k) * rows * w);
#pragma omp for schedule(static)
        for (int i = 0; i < n; ++i) {
            for (int y0 = 0; y0 < h; y0 += rows) {
                const int y1 = std::min(h, y0 + rows);
                const Eigen::Index span = static_cast<Eigen::Index>(y1 - y0) * w;
                im2col(in.plane(i, 0), c, h, w, y0, y1, cols.data());
                StridedMap<T> o(out.plane(i, 0) + static_cast<std::size_t>(y0) * w, out_channels, span,
                                Eigen::OuterStride<>(static_cast<Eigen::Index>(hw)));
                o.noalias() = wm * ConstMatMap<T>(cols.data(), k, span);
            }
        }
    }
}

template <typename T>
void conv3x3_backward(const Tensor<T>& in, std::span<const T> weight, const Tensor<T>& grad_out,
                      std::span<T> grad_weight, Tensor<T>* grad_in) {
    const int n = in.n(), c = in.c(), h = in.h(), w = in.w();
    const int co = grad_out.c();
    const int k = c * 9;
    const std::size_t hw = in.plane_size();
    if (weight.size() != static_cast<std::size_t>(co) * k || grad_weight.size() != weight.size()) {
        throw ShapeError("conv3x3_backward: weight size");
    }
    if (grad_in) ensure_shape(*grad_in, n, c, h, w);
    ConstMatMap<T> wm(weight.data(), co, k);
    AlignedVector<T> partial(static_cast<std::size_t>(n) * weight.size());
    const int rows = tile_rows<T>(c, h, w);
#pragma omp parallel
    {
        AlignedVector<T> cols(static_cast<std::size_t>(k) * rows * w);
        AlignedVector<T> dcols(grad_in ? cols.size() : 0);
#pragma omp for schedule(static)
        for (int i = 0; i < n; ++i) {
            MatMap<T> dw(partial.data() + static_cast<std::size_t>(i) * weight.size(), co, k);
            dw.setZero();
            T* gi = grad_in ? grad_in->plane(i, 0) : nullptr;
            if (gi) std::fill(gi, gi + c * hw, T(0));
            for (int y0 = 0; y0 < h; y0 += rows) {
                const int y1 = std::min(h, y0 + rows);
                const Eigen::Index span = static_cast<Eigen::Index>(y1 - y0) * w;
                ConstStridedMap<T> go(grad_out.plane(i, 0) + static_cast<std::size_t>(y0) * w, co, span,
                                      Eigen::OuterStride<>(static_cast<Eigen::Index>(hw)));
                im2col(in.plane(i, 0), c, h, w, y0, y1, cols.data());
                dw.noalias() += go * ConstMatMap<T>(cols.data(), k, span).transpose();
                if (gi) {
                    MatMap<T>(dcols.data(), k, span).noalias() = wm.transpose() * go;
                    col2im(dcols.data(), c, h, w, y0, y1, gi);
                }
            }
        }
    }
    std::fill(grad_weight.begin(), grad_weight.end(), T(0));
    for (int i = 0; i < n; ++i) {
        const T* p = partial.data() + static_cast<std::size_t>(i) * weight.size();
        for (std::size_t j = 0; j < weight.size(); ++j) grad_weight[j] += p[j];
    }
}

template <typename T>
void conv1x1_forward(const Tensor<T>& in, std::span<const T> weight, std::span<const T> bias, int out_channels,
                     Tensor<T>& out) {
    const int n = in.n(), c = in.c();
    const std::size_t hw = in.plane_size();
    if (weight.size() != static_cast<std::size_t>(out_channels) * c || bias.size() != static_cast<std::size_t>(out_channels)) {
        throw ShapeError("conv1x1_forward: parameter size");
    }
    ensure_shape(out, n, out_channels, in.h(), in.w());
    ConstMatMap<T> wm(weight.data(), out_channels, c);
#pragma omp parallel for schedule(static)
    for (int i = 0; i < n; ++i) {
        MatMap<T> o(out.plane(i, 0), out_channels, static_cast<Eigen::Index>(hw));
        o.noalias() = wm * ConstMatMap<T>(in.plane(i, 0), c, static_cast<Eigen::Index>(hw));
        for (int j = 0; j < out_channels; ++j) o.row(j).array() += bias[j];
    }
}

template <typename T>
void conv1x1_backward(const Tensor<T>& in, std::span<const T> weight, const Tensor<T>& grad_out,
                      std::span<T> grad_weight, std::span<T> grad_bias, Tensor<T>* grad_in) {
    const int n = in.n(), c = in.c(), co = grad_out.c();
    const std::size_t hw = in.plane_size();
    if (grad_weight.size() != weight.size() || grad_bias.size() != static_cast<std::size_t>(co)) {
        throw ShapeError("conv1x1_backward: parameter size");
    }
    if (grad_in) ensure_shape(*grad_in, n, c, in.h(), in.w());
    ConstMatMap<T> wm(weight.data(), co, c);
    const std::size_t per = weight.size() + co;
    AlignedVector<T> partial(static_cast<std::size_t>(n) * per);
#pragma omp parallel for schedule(static)
    for (int i = 0; i < n; ++i) {
        ConstMatMap<T> go(grad_out.plane(i, 0), co, static_cast<Eigen::Index>(hw));
        T* p = partial.data() + static_cast<std::size_t>(i) * per;
        MatMap<T>(p, co, c).noalias() = go * ConstMatMap<T>(in.plane(i, 0), c, static_cast<Eigen::Index>(hw)).transpose();
        for (int j = 0; j < co; ++j) p[weight.size() + j] = go.row(j).sum();
        if (grad_in) {
            MatMap<T>(grad_in->plane(i, 0), c, static_cast<Eigen::Index>(hw)).noalias() = wm.transpose() * go;
        }
    }
    std::fill(grad_weight.begin(), grad_weight.end(), T(0));
    std::fill(grad_bias.begin(), grad_bias.end(), T(0));
    for (int i = 0; i < n; ++i) {
        const T* p = partial.data() + static_cast<std::size_t>(i) * per;
        for (std::size_t j = 0; j < weight.size(); ++j) grad_weight[j] += p[j];
        for (int j = 0; j < co; ++j) grad_bias[j] += p[weight.size() + j];
    }
}

template <typename T>
void instance_norm_forward(const Tensor<T>& in, std::span<const T> gamma, std::span<const T> beta, T eps, bool relu,
                           Tensor<T>& out, std::vector<T>& mean, std::vector<T>& inv_std) {
    const int n = in.n(), c = in.c();
    const std::size_t hw = in.plane_size();
    if (gamma.size() != static_cast<std::size_t>(c) || beta.size() != gamma.size()) {
        throw ShapeError("instance_norm_forward: parameter size");
    }
    ensure_shape(out, n, c, in.h(), in.w());
    mean.assign(static_cast<std::size_t>(n) * c, T(0));
    inv_std.assign(mean.size(), T(0));
    const int planes = n * c;
#pragma omp parallel for schedule(static)
    for (int pidx = 0; pidx < planes; ++pidx) {
        const int ch = pidx % c;
        const T* x = in.data() + static_cast<std::size_t>(pidx) * hw;
        T* y = out.data() + static_cast<std::size_t>(pidx) * hw;
        double s = 0.0;
        for (std::size_t j = 0; j < hw; ++j) s += x[j];
        const double mu = s / static_cast<double>(hw);
        double v = 0.0;
        for (std::size_t j = 0; j < hw; ++j) {
            const double d = x[j] - mu;
            v += d * d;
        }
        v /= static_cast<double>(hw);
        const T m = static_cast<T>(mu);
        const T is = static_cast<T>(1.0 / std::sqrt(v + static_cast<double>(eps)));
        mean[pidx] = m;
        inv_std[pidx] = is;
        const T g = gamma[ch] * is;
        const T b = beta[ch];
        if (relu) {
            for (std::size_t j = 0; j < hw; ++j) {
                const T t = g * (x[j] - m) + b;
                y[j] = t > T(0) ? t : T(0);
            }
        } else {
            for (std::size_t j = 0; j < hw; ++j) y[j] = g * (x[j] - m) + b;
        }
    }
}

template <typename T>
void instance_norm_backward(const Tensor<T>& in, const Tensor<T>& out, std::span<const T> gamma,
                            std::span<const T> mean, std::span<const T> inv_std, bool relu, const Tensor<T>& grad_out,
                            std::span<T> grad_gamma, std::span<T> grad_beta, Tensor<T>& grad_in) {
    const int n = in.n(), c = in.c();
    const std::size_t hw = in.plane_size();
    ensure_shape(grad_in, n, c, in.h(), in.w());
    const int planes = n * c;
    AlignedVector<T> pg(planes), pb(planes);
#pragma omp parallel for schedule(static)
    for (int pidx = 0; pidx < planes; ++pidx) {
        const int ch = pidx % c;
        const std::size_t off = static_cast<std::size_t>(pidx) * hw;
        const T* x = in.data() + off;
        const T* y = out.data() + off;
        const T* go = grad_out.data() + off;
        T* gi = grad_in.data() + off;
        const T m = mean[pidx];
        const T is = inv_std[pidx];
        // gi temporarily holds the upstream gradient after the ReLU mask.
        double sum_g = 0.0, sum_gx = 0.0;
        for (std::size_t j = 0; j < hw; ++j) {
            const T g = (!relu || y[j] > T(0)) ? go[j] : T(0);
            const T xh = (x[j] - m) * is;
            gi[j] = g;
            sum_g += g;
            sum_gx += static_cast<double>(g) * xh;
        }
        pg[pidx] = static_cast<T>(sum_gx);
        pb[pidx] = static_cast<T>(sum_g);
        const double inv_m = 1.0 / static_cast<double>(hw);
        const T a = static_cast<T>(sum_g * inv_m);
        const T b = static_cast<T>(sum_gx * inv_m);
        const T scale = gamma[ch] * is;
        for (std::size_t j = 0; j < hw; ++j) {
            const T xh = (x[j] - m) * is;
            gi[j] = scale * (gi[j] - a - xh * b);
        }
    }
    std::fill(grad_gamma.begin(), grad_gamma.end(), T(0));
    std::fill(grad_beta.begin(), grad_beta.end(), T(0));
    for (int pidx = 0; pidx < planes; ++pidx) {
        grad_gamma[pidx % c] += pg[pidx];
        grad_beta[pidx % c] += pb[pidx];
    }
}

template <typename T>
void maxpool2_forward(const Tensor<T>& in, Tensor<T>& out, std::vector<std::uint8_t>& argmax) {
    const int n = in.n(), c = in.c(), h = in.h(), w = in.w();
    if (h % 2 || w % 2) throw ShapeError("maxpool2: odd spatial size");
    const int oh = h / 2, ow = w / 2;
    ensure_shape(out, n, c, oh, ow);
    argmax.assign(out.size(), 0);
    const int planes = n * c;
#pragma omp parallel for schedule(static)
    for (int pidx = 0; pidx < planes; ++pidx) {
        const T* x = in.data() + static_cast<std::size_t>(pidx) * h * w;
        T* y = out.data() + static_cast<std::size_t>(pidx) * oh * ow;
        std::uint8_t* am = argmax.data() + static_cast<std::size_t>(pidx) * oh * ow;
        for (int oy = 0; oy < oh; ++oy) {
            const T* r0 = x + static_cast<std::size_t>(2 * oy) * w;
            const T* r1 = r0 + w;
            for (int ox = 0; ox < ow; ++ox) {
                const T v[4] = {r0[2 * ox], r0[2 * ox + 1], r1[2 * ox], r1[2 * ox + 1]};
                std::uint8_t best = 0;
                for (std::uint8_t k = 1; k < 4; ++k) {
                    if (v[k] > v[best]) best = k;
                }
                y[oy * ow + ox] = v[best];
                am[oy * ow + ox] = best;
            }
        }
    }
}

template <typename T>
void maxpool2_backward(const Tensor<T>& grad_out, std::span<const std::uint8_t> argmax, Tensor<T>& grad_in) {
    const int oh = grad_out.h(), ow = grad_out.w();
    const int h = oh * 2, w = ow * 2;
    ensure_shape(grad_in, grad_out.n(), grad_out.c(), h, w);
    const int planes = grad_out.n() * grad_out.c();
#pragma omp parallel for schedule(static)
    for (int pidx = 0; pidx < planes; ++pidx) {
        const T* g = grad_out.data() + static_cast<std::size_t>(pidx) * oh * ow;
        const std::uint8_t* am = argmax.data() + static_cast<std::size_t>(pidx) * oh * ow;
        T* gi = grad_in.data() + static_cast<std::size_t>(pidx) * h * w;
        std::fill(gi, gi + static_cast<std::size_t>(h) * w, T(0));
        for (int oy = 0; oy < oh; ++oy) {
            for (int ox = 0; ox < ow; ++ox) {
                const int k = am[oy * ow + ox];
                gi[static_cast<std::size_t>(2 * oy + (k >> 1)) * w + 2 * ox + (k & 1)] = g[oy * ow + ox];
            }
        }
    }
}

template <typename T>
void upsample2_forward(const Tensor<T>& in, Tensor<T>& out, int c_offset) {
    const int n = in.n(), c = in.c(), h = in.h(), w = in.w();
    if (out.n() != n || out.h() != 2 * h || out.w() != 2 * w || out.c() < c_offset + c) {
        throw ShapeError("upsample2_forward: output shape");
    }
#pragma omp parallel for collapse(2) schedule(static)
    for (int i = 0; i < n; ++i) {
        for (int ch = 0; ch < c; ++ch) {
            const T* x = in.plane(i, ch);
            T* y = out.plane(i, c_offset + ch);
            for (int yy = 0; yy < 2 * h; ++yy) {
                const T* src = x + static_cast<std::size_t>(yy / 2) * w;
                T* dst = y + static_cast<std::size_t>(yy) * 2 * w;
                for (int xx = 0; xx < w; ++xx) dst[2 * xx] = dst[2 * xx + 1] = src[xx];
            }
        }
    }
}

template <typename T>
void upsample2_backward(const Tensor<T>& grad_out, int c_offset, Tensor<T>& grad_in) {
    const int n = grad_in.n(), c = grad_in.c(), h = grad_in.h(), w = grad_in.w();
#pragma omp parallel for collapse(2) schedule(static)
    for (int i = 0; i < n; ++i) {
        for (int ch = 0; ch < c; ++ch) {
            const T* g = grad_out.plane(i, c_offset + ch);
            T* gi = grad_in.plane(i, ch);
            for (int y = 0; y < h; ++y) {
                const T* r0 = g + static_cast<std::size_t>(2 * y) * 2 * w;
                const T* r1 = r0 + 2 * w;
                for (int x = 0; x < w; ++x) {
                    gi[static_cast<std::size_t>(y) * w + x] = (r0[2 * x] + r0[2 * x + 1]) + (r1[2 * x] + r1[2 * x + 1]);
                }
            }
        }
    }
}

template <typename T>
void copy_channels(const Tensor<T>& in, Tensor<T>& out, int c_offset) {
    if (out.n() != in.n() || out.h() != in.h() || out.w() != in.w() || out.c() < c_offset + in.c()) {
        throw ShapeError("copy_channels: output shape");
    }
    const std::size_t block = in.plane_size() * in.c();
    for (int i = 0; i < in.n(); ++i) std::memcpy(out.plane(i, c_offset), in.plane(i, 0), sizeof(T) * block);
}

template <typename T>
void add_channels(const Tensor<T>& grad_out, int c_offset, Tensor<T>& grad_in) {
    const std::size_t block = grad_in.plane_size() * grad_in.c();
#pragma omp parallel for schedule(static)
    for (int i = 0; i < grad_in.n(); ++i) {
        const T* g = grad_out.plane(i, c_offset);
        T* gi = grad_in.plane(i, 0);
        for (std::size_t j = 0; j < block; ++j) gi[j] += g[j];
    }
}

#define WPSEG_INSTANTIATE(T)                                                                                   \
    template void conv3x3_forward<T>(const Tensor<T>&, std::span<const T>, int, Tensor<T>&);                   \
    template void conv3x3_backward<T>(const Tensor<T>&, std::span<const T>, const Tensor<T>&, std::span<T>,    \
                                      Tensor<T>*);                                                             \
    template void conv1x1_forward<T>(const Tensor<T>&, std::span<const T>, std::span<const T>, int, Tensor<T>&); \
    template void conv1x1_backward<T>(const Tensor<T>&, std::span<const T>, const Tensor<T>&, std::span<T>,    \
                                      std::span<T>, Tensor<T>*);                                               \
    template void instance_norm_forward<T>(const Tensor<T>&, std::span<const T>, std::span<const T>, T, bool,  \
                                           Tensor<T>&, std::vector<T>&, std::vector<T>&);                      \
    template void instance_norm_backward<T>(const Tensor<T>&, const Tensor<T>&, std::span<const T>,            \
                                            std::span<const T>, std::span<const T>, bool, const Tensor<T>&,    \
                                            std::span<T>, std::span<T>, Tensor<T>&);                           \
    template void maxpool2_forward<T>(const Tensor<T>&, Tensor<T>&, std::vector<std::uint8_t>&);               \
    template void maxpool2_backward<T>(const Tensor<T>&, std::span<const std::uint8_t>, Tensor<T>&);           \
    template void upsample2_forward<T>(const Tensor<T>&, Tensor<T>&, int);                                     \
    template void upsample2_backward<T>(const Tensor<T>&, int, Tensor<T>&);                                    \
    template void copy_channels<T>(const Tensor<T>&, Tensor<T>&, int);                                         \
    template void add_channels<T>(const Tensor<T>&, int, Tensor<T>&);

WPSEG_INSTANTIATE(float)
WPSEG_INSTANTIATE(double)

#undef WPSEG_INSTANTIATE

}  // namespace wpseg::kernels
