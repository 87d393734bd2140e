#include "wpseg/losses.hpp"

#include <cmath>
#include <string>

namespace wpseg {

namespace {

void check_inputs(const Tensor<double>& logits, LabelSpan target, const char* what) {
    if (logits.c() != 2) throw ShapeError(std::string(what) + ": logits must have 2 channels");
    const std::size_t pixels = static_cast<std::size_t>(logits.n()) * logits.plane_size();
    if (target.size() != pixels) throw ShapeError(std::string(what) + ": label size does not match logits");
    for (auto v : target) {
        if (v > 1) throw ValidationError(std::string(what) + ": label value outside {0,1}");
    }
}

void check_grad(const Tensor<double>& logits, Tensor<double>* grad) {
    if (grad && !grad->same_shape(logits)) throw ShapeError("gradient buffer shape does not match logits");
}

double log_sum_exp2(double a, double b) {
    const double m = std::max(a, b);
    return m + std::log1p(std::exp(-std::abs(a - b)));
}

double sigmoid(double d) { return 1.0 / (1.0 + std::exp(-d)); }

}  // namespace

double ce_loss(const Tensor<double>& logits, LabelSpan target, LabelSpan weight, Tensor<double>* grad, double scale) {
    check_inputs(logits, target, "ce_loss");
    check_grad(logits, grad);
    if (!weight.empty()) check_inputs(logits, weight, "ce_loss weight");
    const int b = logits.n();
    const std::size_t hw = logits.plane_size();

    std::size_t count = 0;
    double sum = 0.0;
    for (int i = 0; i < b; ++i) {
        const double* l0 = logits.plane(i, 0);
        const double* l1 = logits.plane(i, 1);
        for (std::size_t j = 0; j < hw; ++j) {
            const std::size_t k = i * hw + j;
            if (!weight.empty() && !weight[k]) continue;
            ++count;
            sum += log_sum_exp2(l0[j], l1[j]) - (target[k] ? l1[j] : l0[j]);
        }
    }
    if (count == 0) return 0.0;
    const double inv = 1.0 / static_cast<double>(count);
    if (grad) {
        for (int i = 0; i < b; ++i) {
            const double* l0 = logits.plane(i, 0);
            const double* l1 = logits.plane(i, 1);
            double* g0 = grad->plane(i, 0);
            double* g1 = grad->plane(i, 1);
            for (std::size_t j = 0; j < hw; ++j) {
                const std::size_t k = i * hw + j;
                if (!weight.empty() && !weight[k]) continue;
                const double p1 = sigmoid(l1[j] - l0[j]);
                const double d1 = p1 - (target[k] ? 1.0 : 0.0);
                g1[j] += scale * inv * d1;
                g0[j] -= scale * inv * d1;
            }
        }
    }
    return sum * inv;
}

double dice_loss(const Tensor<double>& logits, LabelSpan target, Tensor<double>* grad, double scale) {
    check_inputs(logits, target, "dice_loss");
    check_grad(logits, grad);
    const int b = logits.n();
    const std::size_t hw = logits.plane_size();
    std::vector<double> p(static_cast<std::size_t>(b) * hw);
    double inter = 0.0, sum_p = 0.0, sum_g = 0.0;
    for (int i = 0; i < b; ++i) {
        const double* l0 = logits.plane(i, 0);
        const double* l1 = logits.plane(i, 1);
        for (std::size_t j = 0; j < hw; ++j) {
            const std::size_t k = i * hw + j;
            p[k] = sigmoid(l1[j] - l0[j]);
            inter += p[k] * target[k];
            sum_p += p[k];
            sum_g += target[k];
        }
    }
    const double num = 2.0 * inter + kDiceSmooth;
    const double den = sum_p + sum_g + kDiceSmooth;
    if (grad) {
        const double den2 = den * den;
        for (int i = 0; i < b; ++i) {
            double* g0 = grad->plane(i, 0);
            double* g1 = grad->plane(i, 1);
            for (std::size_t j = 0; j < hw; ++j) {
                const std::size_t k = i * hw + j;
                const double dl_dp = -(2.0 * target[k] * den - num) / den2;
                const double dp = dl_dp * p[k] * (1.0 - p[k]);
                g1[j] += scale * dp;
                g0[j] -= scale * dp;
            }
        }
    }
    return 1.0 - num / den;
}

SupervisedTerms supervised_loss(const Tensor<double>& f1, const Tensor<double>& f2, LabelSpan y_int, LabelSpan y_uni,
                                Tensor<double>* grad1, Tensor<double>* grad2, double scale) {
    if (!f1.same_shape(f2)) throw ShapeError("supervised_loss: model outputs differ in shape");
    SupervisedTerms t;
    t.ce1 = ce_loss(f1, y_int, {}, grad1, scale);
    t.dice1 = dice_loss(f1, y_int, grad1, scale);
    t.ce2 = ce_loss(f2, y_uni, {}, grad2, scale);
    t.dice2 = dice_loss(f2, y_uni, grad2, scale);
    return t;
}

std::vector<std::uint8_t> argmax_labels(const Tensor<double>& logits) {
    if (logits.c() != 2) throw ShapeError("argmax_labels: logits must have 2 channels");
    const std::size_t hw = logits.plane_size();
    std::vector<std::uint8_t> out(static_cast<std::size_t>(logits.n()) * hw);
    for (int i = 0; i < logits.n(); ++i) {
        const double* l0 = logits.plane(i, 0);
        const double* l1 = logits.plane(i, 1);
        for (std::size_t j = 0; j < hw; ++j) out[i * hw + j] = l1[j] > l0[j] ? 1 : 0;
    }
    return out;
}

double cross_teaching_loss(const Tensor<double>& f1, const Tensor<double>& f2, LabelSpan u, Tensor<double>* grad1,
                           Tensor<double>* grad2, double scale) {
    if (!f1.same_shape(f2)) throw ShapeError("cross_teaching_loss: model outputs differ in shape");
    const auto pl1 = argmax_labels(f1);
    const auto pl2 = argmax_labels(f2);
    return ce_loss(f1, pl2, u, grad1, scale) + ce_loss(f2, pl1, u, grad2, scale);
}

double total_loss(double sup, double ct, double lambda) {
    if (!(lambda >= 0.0)) throw ConfigError("lambda must be >= 0");
    return sup + lambda * ct;
}

}  // namespace wpseg
