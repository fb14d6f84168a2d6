#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "cage/core/matrix.hpp"

namespace cage {

struct CrossEntropyResult {
    double loss = 0.0;
    std::vector<float> grad_logits;  // softmax - one_hot
};

// -log softmax(logits)[true_class], max-subtracted.
CrossEntropyResult cross_entropy_with_logits(std::span<const float> logits, std::size_t true_class);

struct BceResult {
    double loss = 0.0;
    float grad_logit = 0.0f;  // sigmoid(logit) - label
};

BceResult bce_with_logit(float logit, int label);

double sigmoid(double x);
// log(1 + exp(x)) without overflow.
double softplus(double x);

// Central differences of a scalar function at x. Throws std::runtime_error if
// f produces a non-finite value.
Matrix finite_diff_gradient(const std::function<double(const Matrix&)>& f, const Matrix& x,
                            double h = 1e-3);

}  // namespace cage
