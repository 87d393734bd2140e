// Serial, loop-for-loop versions of the layer kernels. Kept as the oracle for
// the optimized kernels and as the baseline in the benchmark.

#include <cmath>

#include "wpseg/kernels.hpp"

namespace wpseg::kernels::reference {

template <typename T>
void conv3x3_forward(const Tensor<T>& in, std::span<const T> weight, int out_channels, Tensor<T>& out) {
    const int n = in.n(), c = in.c(), h = in.h(), w = in.w();
    out.resize(n, out_channels, h, w);
    for (int i = 0; i < n; ++i) {
        for (int o = 0; o < out_channels; ++o) {
            for (int y = 0; y < h; ++y) {
                for (int x = 0; x < w; ++x) {
                    T acc = 0;
                    for (int ci = 0; ci < c; ++ci) {
                        for (int ky = 0; ky < 3; ++ky) {
                            for (int kx = 0; kx < 3; ++kx) {
                                const int yy = y + ky - 1, xx = x + kx - 1;
                                if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
                                acc += weight[((o * c + ci) * 3 + ky) * 3 + kx] * in(i, ci, yy, xx);
                            }
                        }
                    }
                    out(i, o, y, x) = acc;
                }
            }
        }
    }
}

template <typename T>
void conv3x3_backward(const Tensor<T>& in, std::span<const T> weight, const Tensor<T>& grad_out,
                      std::span<T> grad_weight, Tensor<T>* grad_in) {
    const int n = in.n(), c = in.c(), h = in.h(), w = in.w(), co = grad_out.c();
    std::fill(grad_weight.begin(), grad_weight.end(), T(0));
    if (grad_in) grad_in->resize(n, c, h, w);
    for (int i = 0; i < n; ++i) {
        for (int o = 0; o < co; ++o) {
            for (int y = 0; y < h; ++y) {
                for (int x = 0; x < w; ++x) {
                    const T g = grad_out(i, o, y, x);
                    for (int ci = 0; ci < c; ++ci) {
                        for (int ky = 0; ky < 3; ++ky) {
                            for (int kx = 0; kx < 3; ++kx) {
                                const int yy = y + ky - 1, xx = x + kx - 1;
                                if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
                                const std::size_t wi = ((o * c + ci) * 3 + ky) * 3 + kx;
                                grad_weight[wi] += g * in(i, ci, yy, xx);
                                if (grad_in) (*grad_in)(i, ci, yy, xx) += g * weight[wi];
                            }
                        }
                    }
                }
            }
        }
    }
}

template <typename T>
void conv1x1_forward(const Tensor<T>& in, std::span<const T> weight, std::span<const T> bias, int out_channels,
                     Tensor<T>& out) {
    const int n = in.n(), c = in.c(), h = in.h(), w = in.w();
    out.resize(n, out_channels, h, w);
    for (int i = 0; i < n; ++i)
        for (int o = 0; o < out_channels; ++o)
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x) {
                    T acc = bias[o];
                    for (int ci = 0; ci < c; ++ci) acc += weight[o * c + ci] * in(i, ci, y, x);
                    out(i, o, y, x) = acc;
                }
}

template <typename T>
void instance_norm_forward(const Tensor<T>& in, std::span<const T> gamma, std::span<const T> beta, T eps, bool relu,
                           Tensor<T>& out) {
    const int n = in.n(), c = in.c(), h = in.h(), w = in.w();
    out.resize(n, c, h, w);
    const double count = static_cast<double>(h) * w;
    for (int i = 0; i < n; ++i) {
        for (int ch = 0; ch < c; ++ch) {
            double mean = 0;
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x) mean += in(i, ch, y, x);
            mean /= count;
            double var = 0;
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x) var += (in(i, ch, y, x) - mean) * (in(i, ch, y, x) - mean);
            var /= count;
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x) {
                    double v = gamma[ch] * (in(i, ch, y, x) - mean) / std::sqrt(var + eps) + beta[ch];
                    if (relu && v < 0) v = 0;
                    out(i, ch, y, x) = static_cast<T>(v);
                }
        }
    }
}

#define WPSEG_INSTANTIATE(T)                                                                                   \
    template void conv3x3_forward<T>(const Tensor<T>&, std::span<const T>, int, Tensor<T>&);                   \
    template void conv3x3_backward<T>(const Tensor<T>&, std::span<const T>, const Tensor<T>&, std::span<T>,    \
                                      Tensor<T>*);                                                             \
    template void conv1x1_forward<T>(const Tensor<T>&, std::span<const T>, std::span<const T>, int, Tensor<T>&); \
    template void instance_norm_forward<T>(const Tensor<T>&, std::span<const T>, std::span<const T>, T, bool,  \
                                           Tensor<T>&);

WPSEG_INSTANTIATE(float)
WPSEG_INSTANTIATE(double)

#undef WPSEG_INSTANTIATE

}  // namespace wpseg::kernels::reference
