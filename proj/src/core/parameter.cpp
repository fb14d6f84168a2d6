#include "cage/core/parameter.hpp"

#include <cmath>

#include "cage/error.hpp"

namespace cage {

Parameter::Parameter(std::string name_, Matrix value_)
    : name(std::move(name_)), value(std::move(value_)), grad(value.rows(), value.cols()) {}

AdamState make_adam_state(const Parameter& param, float lr) {
    AdamState s;
    s.m = Matrix(param.value.rows(), param.value.cols());
    s.v = Matrix(param.value.rows(), param.value.cols());
    s.lr = lr;
    return s;
}

void adam_step(Parameter& param, AdamState& state) {
    if (!param.value.same_shape(param.grad) || !param.value.same_shape(state.m) ||
        !param.value.same_shape(state.v)) {
        throw DimensionError("adam_step: inconsistent shapes for parameter '" + param.name + "'");
    }
    if (!(state.beta1 >= 0.0f && state.beta1 < 1.0f && state.beta2 >= 0.0f &&
          state.beta2 < 1.0f && state.eps > 0.0f)) {
        throw PreconditionError("adam_step: invalid hyperparameters for '" + param.name + "'");
    }
    if (!param.grad.all_finite()) {
        throw DivergenceError("non-finite gradient in parameter '" + param.name + "'");
    }

    state.t += 1;
    const double b1 = state.beta1;
    const double b2 = state.beta2;
    const double correction1 = 1.0 - std::pow(b1, double(state.t));
    const double correction2 = 1.0 - std::pow(b2, double(state.t));

    auto value = param.value.values();
    auto grad = param.grad.values();
    auto m = state.m.values();
    auto v = state.v.values();
    for (std::size_t i = 0; i < value.size(); ++i) {
        // Lazy update: entries without gradient keep their value and moments.
        if (grad[i] == 0.0f) continue;
        const double g = grad[i];
        m[i] = static_cast<float>(b1 * m[i] + (1.0 - b1) * g);
        v[i] = static_cast<float>(b2 * v[i] + (1.0 - b2) * g * g);
        const double m_hat = m[i] / correction1;
        const double v_hat = v[i] / correction2;
        value[i] = static_cast<float>(value[i] - state.lr * m_hat / (std::sqrt(v_hat) + state.eps));
    }
    param.zero_grad();
}

Adam::Adam(std::vector<Parameter*> params, float lr) : params_(std::move(params)) {
    states_.reserve(params_.size());
    for (const Parameter* p : params_) states_.push_back(make_adam_state(*p, lr));
}

void Adam::step() {
    for (std::size_t i = 0; i < params_.size(); ++i) adam_step(*params_[i], states_[i]);
}

void Adam::zero_grad() {
    for (Parameter* p : params_) p->zero_grad();
}

}  // namespace cage
