#pragma once

// Layer kernels for the segmentation network. The default implementations
// are OpenMP-parallel over the batch (or over channel planes) and use
// single-threaded GEMMs inside each work item; per-image partial weight
// gradients are summed in batch order, so results do not depend on the
// thread count. `kernels::reference` holds plain serial loops used as the
// test oracle.

#include <cstdint>
#include <span>
#include <vector>

#include "wpseg/tensor.hpp"

namespace wpseg::kernels {

/// 3x3 convolution, stride 1, zero padding 1, no bias.
/// weight layout: [out][in][3][3].
template <typename T>
void conv3x3_forward(const Tensor<T>& in, std::span<const T> weight, int out_channels, Tensor<T>& out);

/// Overwrites grad_weight; grad_in may be null (first layer).
template <typename T>
void conv3x3_backward(const Tensor<T>& in, std::span<const T> weight, const Tensor<T>& grad_out,
                      std::span<T> grad_weight, Tensor<T>* grad_in);

/// Pointwise convolution with bias. weight layout: [out][in].
template <typename T>
void conv1x1_forward(const Tensor<T>& in, std::span<const T> weight, std::span<const T> bias, int out_channels,
                     Tensor<T>& out);

template <typename T>
void conv1x1_backward(const Tensor<T>& in, std::span<const T> weight, const Tensor<T>& grad_out,
                      std::span<T> grad_weight, std::span<T> grad_bias, Tensor<T>* grad_in);

/// Per-(image, channel) normalization with affine gamma/beta followed by an
/// optional ReLU. Saves mean and 1/std per plane for the backward pass.
template <typename T>
void instance_norm_forward(const Tensor<T>& in, std::span<const T> gamma, std::span<const T> beta, T eps, bool relu,
                           Tensor<T>& out, std::vector<T>& mean, std::vector<T>& inv_std);

/// `out` is the forward output (used for the ReLU mask when relu is set).
template <typename T>
void instance_norm_backward(const Tensor<T>& in, const Tensor<T>& out, std::span<const T> gamma,
                            std::span<const T> mean, std::span<const T> inv_std, bool relu, const Tensor<T>& grad_out,
                            std::span<T> grad_gamma, std::span<T> grad_beta, Tensor<T>& grad_in);

/// 2x2 max pooling, stride 2. `argmax` records the winning position (0..3)
/// of each output; ties go to the first in row-major order.
template <typename T>
void maxpool2_forward(const Tensor<T>& in, Tensor<T>& out, std::vector<std::uint8_t>& argmax);

template <typename T>
void maxpool2_backward(const Tensor<T>& grad_out, std::span<const std::uint8_t> argmax, Tensor<T>& grad_in);

/// Nearest-neighbour 2x upsampling written into channels [c_offset, c_offset+C)
/// of `out`, which must already have the right shape.
template <typename T>
void upsample2_forward(const Tensor<T>& in, Tensor<T>& out, int c_offset);

template <typename T>
void upsample2_backward(const Tensor<T>& grad_out, int c_offset, Tensor<T>& grad_in);

/// Copies `in` into channels [c_offset, c_offset+C) of `out`.
template <typename T>
void copy_channels(const Tensor<T>& in, Tensor<T>& out, int c_offset);

/// grad_in += channels [c_offset, c_offset+C) of grad_out.
template <typename T>
void add_channels(const Tensor<T>& grad_out, int c_offset, Tensor<T>& grad_in);

namespace reference {

template <typename T>
void conv3x3_forward(const Tensor<T>& in, std::span<const T> weight, int out_channels, Tensor<T>& out);

template <typename T>
void conv3x3_backward(const Tensor<T>& in, std::span<const T> weight, const Tensor<T>& grad_out,
                      std::span<T> grad_weight, Tensor<T>* grad_in);

template <typename T>
void conv1x1_forward(const Tensor<T>& in, std::span<const T> weight, std::span<const T> bias, int out_channels,
                     Tensor<T>& out);

template <typename T>
void instance_norm_forward(const Tensor<T>& in, std::span<const T> gamma, std::span<const T> beta, T eps, bool relu,
                           Tensor<T>& out);

}  // namespace reference

}  // namespace wpseg::kernels
