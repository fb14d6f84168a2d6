#include "cage/core/mlp.hpp"

#include <cmath>

#include "cage/error.hpp"

namespace cage {

DenseLayer make_dense(SeededRng& rng, std::size_t in, std::size_t out, const std::string& name) {
    const float std = static_cast<float>(std::sqrt(2.0 / double(in)));
    return DenseLayer{Parameter(name + "/weight", rng_normal_init(rng, in, out, std)),
                      Parameter(name + "/bias", Matrix(1, out))};
}

MlpForward mlp_apply(std::span<const DenseLayer> layers, const Matrix& input, bool relu_output) {
    if (layers.empty()) throw DimensionError("mlp_apply: no layers");
    MlpForward result;
    result.tape.relu_output = relu_output;
    Matrix x = input;
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const auto& layer = layers[l];
        if (x.cols() != layer.in_features()) {
            throw DimensionError("mlp_apply: layer " + std::to_string(l) + " expects " +
                                 std::to_string(layer.in_features()) + " inputs, got " +
                                 std::to_string(x.cols()));
        }
        if (layer.bias.value.rows() != 1 || layer.bias.value.cols() != layer.out_features()) {
            throw DimensionError("mlp_apply: layer " + std::to_string(l) + " bias shape " +
                                 layer.bias.value.shape_string());
        }
        Matrix pre = matmul(x, layer.weight.value);
        for (std::size_t r = 0; r < pre.rows(); ++r) axpy(1.0f, layer.bias.value.row(0), pre.row(r));

        Matrix out = pre;
        const bool activate = l + 1 < layers.size() || relu_output;
        if (activate) {
            for (float& v : out.values()) v = v > 0.0f ? v : 0.0f;
        }
        result.tape.inputs.push_back(std::move(x));
        result.tape.preactivations.push_back(std::move(pre));
        x = std::move(out);
    }
    result.output = std::move(x);
    return result;
}

Matrix mlp_backward(std::span<DenseLayer> layers, const MlpTape& tape, const Matrix& grad_output) {
    if (tape.inputs.size() != layers.size()) {
        throw DimensionError("mlp_backward: tape has " + std::to_string(tape.inputs.size()) +
                             " layers, network has " + std::to_string(layers.size()));
    }
    Matrix grad = grad_output;
    for (std::size_t l = layers.size(); l-- > 0;) {
        auto& layer = layers[l];
        const Matrix& pre = tape.preactivations[l];
        const Matrix& x = tape.inputs[l];
        if (!grad.same_shape(pre)) {
            throw DimensionError("mlp_backward: gradient shape " + grad.shape_string() +
                                 " at layer " + std::to_string(l) + ", expected " +
                                 pre.shape_string());
        }
        const bool activated = l + 1 < layers.size() || tape.relu_output;
        if (activated) {
            auto g = grad.values();
            auto p = pre.values();
            for (std::size_t i = 0; i < g.size(); ++i) {
                if (!(p[i] > 0.0f)) g[i] = 0.0f;
            }
        }
        // dW += x^T g, db += sum_rows g, dx = g W^T
        for (std::size_t r = 0; r < x.rows(); ++r) {
            const auto g_row = grad.row(r);
            for (std::size_t i = 0; i < x.cols(); ++i) {
                const float xi = x(r, i);
                if (xi == 0.0f) continue;
                axpy(xi, g_row, layer.weight.grad.row(i));
            }
            axpy(1.0f, g_row, layer.bias.grad.row(0));
        }
        grad = matmul_transposed(grad, layer.weight.value);
    }
    return grad;
}

Mlp::Mlp(SeededRng& rng, const std::vector<std::size_t>& widths, const std::string& name,
         bool relu_output_)
    : relu_output(relu_output_) {
    if (widths.size() < 2) throw DimensionError("Mlp needs at least input and output widths");
    for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
        if (widths[i] == 0 || widths[i + 1] == 0) throw DimensionError("Mlp: zero width");
        layers.push_back(make_dense(rng, widths[i], widths[i + 1], name + "/" + std::to_string(i)));
    }
}

void Mlp::collect_parameters(std::vector<Parameter*>& out) {
    for (auto& layer : layers) {
        out.push_back(&layer.weight);
        out.push_back(&layer.bias);
    }
}

}  // namespace cage
