#pragma once

#include <string>
#include <vector>

#include "cage/core/matrix.hpp"

namespace cage {

// A learnable tensor and its accumulated gradient.
struct Parameter {
    Parameter() = default;
    Parameter(std::string name, Matrix value);

    std::string name;
    Matrix value;
    Matrix grad;

    void zero_grad() { grad.fill(0.0f); }
};

struct AdamState {
    Matrix m;
    Matrix v;
    long long t = 0;
    float lr = 0.001f;
    float beta1 = 0.9f;
    float beta2 = 0.999f;
    float eps = 1e-8f;
};

AdamState make_adam_state(const Parameter& param, float lr);

// One bias-corrected Adam update applied lazily: entries whose gradient is
// exactly zero keep their value and moments. Zeroes param.grad afterwards. Throws
// DivergenceError naming the parameter when a gradient entry is non-finite.
void adam_step(Parameter& param, AdamState& state);

// Adam over a fixed set of parameters. The parameter objects must outlive the
// optimizer and keep their addresses.
class Adam {
public:
    Adam(std::vector<Parameter*> params, float lr);

    void step();
    void zero_grad();
    const std::vector<Parameter*>& parameters() const { return params_; }

private:
    std::vector<Parameter*> params_;
    std::vector<AdamState> states_;
};

}  // namespace cage
