#include "cage/core/losses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "cage/error.hpp"

namespace cage {

double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double softplus(double x) {
    return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

CrossEntropyResult cross_entropy_with_logits(std::span<const float> logits, std::size_t true_class) {
    if (logits.size() < 2) throw PreconditionError("cross_entropy_with_logits: need n >= 2 classes");
    if (true_class >= logits.size()) {
        throw IndexError("cross_entropy_with_logits: class " + std::to_string(true_class) +
                         " out of range for " + std::to_string(logits.size()) + " classes");
    }
    const double max_logit = *std::max_element(logits.begin(), logits.end());
    std::vector<double> shifted(logits.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        shifted[i] = std::exp(double(logits[i]) - max_logit);
        sum += shifted[i];
    }
    CrossEntropyResult out;
    out.loss = std::log(sum) - (double(logits[true_class]) - max_logit);
    out.grad_logits.resize(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i) {
        out.grad_logits[i] = static_cast<float>(shifted[i] / sum - (i == true_class ? 1.0 : 0.0));
    }
    return out;
}

BceResult bce_with_logit(float logit, int label) {
    if (label != 0 && label != 1) throw PreconditionError("bce_with_logit: label must be 0 or 1");
    const double x = logit;
    // -log sigmoid(x) = softplus(-x); -log(1 - sigmoid(x)) = softplus(x)
    BceResult out;
    out.loss = label == 1 ? softplus(-x) : softplus(x);
    out.grad_logit = static_cast<float>(sigmoid(x) - double(label));
    return out;
}

Matrix finite_diff_gradient(const std::function<double(const Matrix&)>& f, const Matrix& x,
                            double h) {
    if (!(h > 0.0)) throw PreconditionError("finite_diff_gradient: h must be > 0");
    Matrix grad(x.rows(), x.cols());
    Matrix probe = x;
    auto p = probe.values();
    auto g = grad.values();
    for (std::size_t i = 0; i < p.size(); ++i) {
        const float original = p[i];
        // Use the actually representable step so the quotient is consistent.
        p[i] = static_cast<float>(double(original) + h);
        const double up_x = p[i];
        const double up = f(probe);
        p[i] = static_cast<float>(double(original) - h);
        const double down_x = p[i];
        const double down = f(probe);
        p[i] = original;
        if (!std::isfinite(up) || !std::isfinite(down)) {
            throw std::runtime_error("finite_diff_gradient: non-finite function value at entry " +
                                     std::to_string(i));
        }
        g[i] = static_cast<float>((up - down) / (up_x - down_x));
    }
    return grad;
}

}  // namespace cage
