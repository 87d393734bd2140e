#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "wpseg/tensor.hpp"

namespace wpseg {

/// Labels and masks are flattened B x H x W in {0,1}, matching the logits'
/// batch and spatial layout. Logits are B x 2 x H x W.
using LabelSpan = std::span<const std::uint8_t>;

inline constexpr double kDiceSmooth = 1e-5;

/// Mean of -log softmax(logits)[target] over pixels with weight 1 (all pixels
/// when weight is empty). Zero selected pixels gives exactly 0. When `grad`
/// is given, scale * d(loss)/d(logits) is added into it.
double ce_loss(const Tensor<double>& logits, LabelSpan target, LabelSpan weight = {}, Tensor<double>* grad = nullptr,
               double scale = 1.0);

/// 1 - (2*sum(p*g) + eps) / (sum(p) + sum(g) + eps) with p the foreground
/// softmax probability, summed over the whole batch.
double dice_loss(const Tensor<double>& logits, LabelSpan target, Tensor<double>* grad = nullptr, double scale = 1.0);

struct SupervisedTerms {
    double ce1 = 0, dice1 = 0;  // first model vs intersection label
    double ce2 = 0, dice2 = 0;  // second model vs union label

    double total() const { return ce1 + dice1 + ce2 + dice2; }
};

/// CE + Dice of f1 against y_int plus CE + Dice of f2 against y_uni.
SupervisedTerms supervised_loss(const Tensor<double>& f1, const Tensor<double>& f2, LabelSpan y_int, LabelSpan y_uni,
                                Tensor<double>* grad1 = nullptr, Tensor<double>* grad2 = nullptr, double scale = 1.0);

/// Per-pixel argmax over the two channels; ties resolve to background.
std::vector<std::uint8_t> argmax_labels(const Tensor<double>& logits);

/// ce(f1, argmax f2, u) + ce(f2, argmax f1, u). The argmax labels are
/// constants: no gradient flows through them.
double cross_teaching_loss(const Tensor<double>& f1, const Tensor<double>& f2, LabelSpan u,
                           Tensor<double>* grad1 = nullptr, Tensor<double>* grad2 = nullptr, double scale = 1.0);

/// sup + lambda * ct; lambda < 0 is a ConfigError.
double total_loss(double sup, double ct, double lambda);

struct LossReport {
    double l_sup = 0;
    double l_ct_u = 0;
    double l_total = 0;
    double lambda = 0;
};

}  // namespace wpseg
