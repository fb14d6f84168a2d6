#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cage/core/matrix.hpp"
#include "cage/core/parameter.hpp"
#include "cage/core/rng.hpp"

namespace cage {

enum class FusionMode { Average, ConcatProject };

std::string_view to_string(FusionMode mode);
FusionMode parse_fusion_mode(std::string_view text);

struct NearestCode {
    std::size_t index = 0;
    double squared_distance = 0.0;
};

// Exhaustive squared-L2 argmin over the rows of `codebook`; ties go to the
// lowest row index.
NearestCode nearest_code(const Matrix& codebook, std::span<const float> query);

struct LevelChoice {
    std::size_t index = 0;
    std::vector<float> code;
    double squared_distance = 0.0;
};

/// One entity embedding pushed through the cascade.
///
/// `levels[i]` holds the choice made by the (i+1)-th codebook, whose query was
/// the code chosen one level below (or the embedding itself for i == 0).
struct QuantizationTrace {
    std::vector<float> input;
    std::vector<LevelChoice> levels;
    // Combined code contribution before the residual weight: the mean code in
    // average mode, the projected concatenation in concat-project mode.
    std::vector<float> pooled;
    std::vector<float> fused;

    // c(0) = input, c(i) = levels[i-1].code
    std::span<const float> code_at(std::size_t i) const;
    std::vector<std::size_t> path() const;
};

struct CageLoss {
    double quant = 0.0;
    double commit = 0.0;
    double total = 0.0;  // quant + beta * commit
};

// Both terms measure the same squared distances; they differ only in which
// side receives the gradient (see CascadedQuantizer::backward).
CageLoss cage_loss(const QuantizationTrace& trace, double beta);

struct QuantizerOptions {
    std::vector<std::size_t> sizes;  // entries per level, fine to coarse
    std::size_t dim = 64;
    float alpha = 1.0f;
    float beta = 1.0f;
    FusionMode fusion = FusionMode::Average;
    float init_std = 0.01f;
};

// Throws ConfigError on empty / non-decreasing sizes, zero dim, or negative
// weights.
void validate(const QuantizerOptions& options);

/// Cascaded vector quantizer that maps an embedding e to
/// z = e + alpha * fuse(c1..cH), where c_i is the nearest entry of codebook i
/// to c_{i-1} and c_0 = e.
class CascadedQuantizer {
public:
    CascadedQuantizer(const SeededRng& rng, QuantizerOptions options, std::string name);

    std::size_t depth() const noexcept { return codebooks_.size(); }
    std::size_t dim() const noexcept { return options_.dim; }
    const std::vector<std::size_t>& sizes() const noexcept { return options_.sizes; }
    const QuantizerOptions& options() const noexcept { return options_; }
    const std::string& name() const noexcept { return name_; }
    float alpha() const noexcept { return options_.alpha; }
    float beta() const noexcept { return options_.beta; }
    FusionMode fusion() const noexcept { return options_.fusion; }

    // level is 0-based: codebook(0) is the finest level.
    Parameter& codebook(std::size_t level) { return codebooks_.at(level); }
    const Parameter& codebook(std::size_t level) const { return codebooks_.at(level); }
    std::optional<Parameter>& projection() { return projection_; }
    const std::optional<Parameter>& projection() const { return projection_; }

    // Cascade search plus fusion.
    QuantizationTrace quantize(std::span<const float> e) const;

    // Computes the pooled and fused vectors for a trace whose levels are set.
    // Throws ConfigError in concat-project mode without a projection.
    void fuse_codes(QuantizationTrace& trace) const;

    /// Straight-through backward pass for one trace.
    ///
    /// `grad_z` is dL/dz from the task. `cage_weight` scales the tree
    /// generation loss (omega_q, times any batch averaging factor). Gradients
    /// accumulate into the selected codebook rows and the projection; the
    /// returned vector is dL/de. Codes never see task gradient; the
    /// quantization term only reaches codes; the commitment term only
    /// reaches the level inputs and flows down to e through the identity
    /// approximation of each quantizer.
    ///
    /// The trace must come from this quantizer's current weights.
    std::vector<float> backward(const QuantizationTrace& trace, std::span<const float> grad_z,
                                float cage_weight);

    void collect_parameters(std::vector<Parameter*>& out);

private:
    QuantizerOptions options_;
    std::string name_;
    std::vector<Parameter> codebooks_;
    std::optional<Parameter> projection_;
};

}  // namespace cage
