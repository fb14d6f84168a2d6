#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "cage/core/matrix.hpp"
#include "cage/core/parameter.hpp"
#include "cage/core/rng.hpp"

namespace cage {

// y = x * weight + bias, weight is (in x out), bias is (1 x out).
struct DenseLayer {
    Parameter weight;
    Parameter bias;

    std::size_t in_features() const { return weight.value.rows(); }
    std::size_t out_features() const { return weight.value.cols(); }
};

// Kaiming-normal weights (std = sqrt(2 / in)) and zero bias.
DenseLayer make_dense(SeededRng& rng, std::size_t in, std::size_t out, const std::string& name);

// Everything the backward pass needs: the input to each layer and the
// pre-activation output of each layer.
struct MlpTape {
    std::vector<Matrix> inputs;
    std::vector<Matrix> preactivations;
    bool relu_output = false;
};

struct MlpForward {
    Matrix output;
    MlpTape tape;
};

// ReLU between layers; ReLU after the last layer only when relu_output is set.
// Rows of `input` are independent samples.
MlpForward mlp_apply(std::span<const DenseLayer> layers, const Matrix& input,
                     bool relu_output = false);

// Accumulates weight/bias gradients into the layers and returns dL/dinput.
Matrix mlp_backward(std::span<DenseLayer> layers, const MlpTape& tape, const Matrix& grad_output);

class Mlp {
public:
    Mlp() = default;
    // widths = {in, hidden..., out}; needs at least two entries.
    Mlp(SeededRng& rng, const std::vector<std::size_t>& widths, const std::string& name,
        bool relu_output = false);

    MlpForward forward(const Matrix& input) const { return mlp_apply(layers, input, relu_output); }
    Matrix backward(const MlpTape& tape, const Matrix& grad_output) {
        return mlp_backward(layers, tape, grad_output);
    }

    std::size_t in_features() const { return layers.front().in_features(); }
    std::size_t out_features() const { return layers.back().out_features(); }
    void collect_parameters(std::vector<Parameter*>& out);

    std::vector<DenseLayer> layers;
    bool relu_output = false;
};

}  // namespace cage
