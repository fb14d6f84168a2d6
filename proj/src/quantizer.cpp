#include "cage/quantizer.hpp"

#include <cmath>

#include "cage/error.hpp"

namespace cage {

std::string_view to_string(FusionMode mode) {
    return mode == FusionMode::Average ? "average" : "concat-project";
}

FusionMode parse_fusion_mode(std::string_view text) {
    if (text == "average") return FusionMode::Average;
    if (text == "concat-project") return FusionMode::ConcatProject;
    throw ConfigError("unknown fusion mode '" + std::string(text) + "'");
}

NearestCode nearest_code(const Matrix& codebook, std::span<const float> query) {
    if (codebook.rows() == 0) throw DimensionError("nearest_code: empty codebook");
    if (codebook.cols() != query.size()) {
        throw DimensionError("nearest_code: query has " + std::to_string(query.size()) +
                             " dims, codebook has " + std::to_string(codebook.cols()));
    }
    NearestCode best{0, squared_distance(codebook.row(0), query)};
    for (std::size_t k = 1; k < codebook.rows(); ++k) {
        const double dist = squared_distance(codebook.row(k), query);
        if (dist < best.squared_distance) best = {k, dist};
    }
    return best;
}

std::span<const float> QuantizationTrace::code_at(std::size_t i) const {
    if (i == 0) return input;
    return levels.at(i - 1).code;
}

std::vector<std::size_t> QuantizationTrace::path() const {
    std::vector<std::size_t> out;
    out.reserve(levels.size());
    for (const auto& level : levels) out.push_back(level.index);
    return out;
}

CageLoss cage_loss(const QuantizationTrace& trace, double beta) {
    CageLoss loss;
    for (std::size_t i = 1; i <= trace.levels.size(); ++i) {
        const double dist = squared_distance(trace.code_at(i - 1), trace.code_at(i));
        loss.quant += dist;
        loss.commit += dist;
    }
    loss.total = loss.quant + beta * loss.commit;
    return loss;
}

void validate(const QuantizerOptions& options) {
    if (options.sizes.empty()) throw ConfigError("quantizer needs at least one level");
    if (options.dim == 0) throw ConfigError("quantizer dim must be >= 1");
    for (std::size_t i = 0; i < options.sizes.size(); ++i) {
        if (options.sizes[i] == 0) throw ConfigError("codebook sizes must be >= 1");
        if (i > 0 && options.sizes[i] >= options.sizes[i - 1]) {
            throw ConfigError("codebook sizes must be strictly decreasing (level " +
                              std::to_string(i + 1) + " has " + std::to_string(options.sizes[i]) +
                              ", level " + std::to_string(i) + " has " +
                              std::to_string(options.sizes[i - 1]) + ")");
        }
    }
    if (!(options.alpha >= 0.0f) || !(options.beta >= 0.0f)) {
        throw ConfigError("alpha and beta must be >= 0");
    }
}

CascadedQuantizer::CascadedQuantizer(const SeededRng& rng, QuantizerOptions options,
                                     std::string name)
    : options_(std::move(options)), name_(std::move(name)) {
    validate(options_);
    for (std::size_t i = 0; i < options_.sizes.size(); ++i) {
        const std::string label = name_ + "/codebook" + std::to_string(i + 1);
        SeededRng stream = rng.stream("init/" + label);
        codebooks_.emplace_back(label,
                                rng_normal_init(stream, options_.sizes[i], options_.dim,
                                                options_.init_std));
    }
    if (options_.fusion == FusionMode::ConcatProject) {
        const std::string label = name_ + "/projection";
        SeededRng stream = rng.stream("init/" + label);
        const std::size_t fan_in = depth() * options_.dim;
        const auto std = static_cast<float>(std::sqrt(1.0 / double(fan_in)));
        projection_.emplace(label, rng_normal_init(stream, fan_in, options_.dim, std));
    }
}

QuantizationTrace CascadedQuantizer::quantize(std::span<const float> e) const {
    if (e.size() != options_.dim) {
        throw DimensionError("quantize: embedding has " + std::to_string(e.size()) +
                             " dims, quantizer '" + name_ + "' expects " +
                             std::to_string(options_.dim));
    }
    QuantizationTrace trace;
    trace.input.assign(e.begin(), e.end());
    trace.levels.reserve(depth());
    for (std::size_t i = 0; i < depth(); ++i) {
        const Matrix& book = codebooks_[i].value;
        const auto hit = nearest_code(book, trace.code_at(i));
        const auto row = book.row(hit.index);
        trace.levels.push_back({hit.index, std::vector<float>(row.begin(), row.end()),
                                hit.squared_distance});
    }
    fuse_codes(trace);
    return trace;
}

void CascadedQuantizer::fuse_codes(QuantizationTrace& trace) const {
    if (trace.levels.size() != depth()) {
        throw DimensionError("fuse_codes: trace has " + std::to_string(trace.levels.size()) +
                             " levels, quantizer has " + std::to_string(depth()));
    }
    const std::size_t d = options_.dim;
    trace.pooled.assign(d, 0.0f);
    if (options_.fusion == FusionMode::Average) {
        const float inv = 1.0f / static_cast<float>(depth());
        for (const auto& level : trace.levels) axpy(inv, level.code, trace.pooled);
    } else {
        if (!projection_) {
            throw ConfigError("fuse_codes: concat-project mode without a projection in '" + name_ +
                              "'");
        }
        const Matrix& proj = projection_->value;
        for (std::size_t i = 0; i < depth(); ++i) {
            const auto& code = trace.levels[i].code;
            for (std::size_t k = 0; k < d; ++k) {
                const float ck = code[k];
                if (ck == 0.0f) continue;
                axpy(ck, proj.row(i * d + k), trace.pooled);
            }
        }
    }
    trace.fused = trace.input;
    if (options_.alpha != 0.0f) axpy(options_.alpha, trace.pooled, trace.fused);
}

std::vector<float> CascadedQuantizer::backward(const QuantizationTrace& trace,
                                               std::span<const float> grad_z, float cage_weight) {
    const std::size_t d = options_.dim;
    const std::size_t levels = depth();
    if (grad_z.size() != d) throw DimensionError("backward: grad_z has wrong length");
    if (trace.levels.size() != levels || trace.input.size() != d) {
        throw DimensionError("backward: trace does not match quantizer '" + name_ + "'");
    }

    const float alpha = options_.alpha;
    if (alpha == 0.0f && cage_weight == 0.0f) return {grad_z.begin(), grad_z.end()};

    // grads[i] is dL/dc(i) before the straight-through pass.
    std::vector<std::vector<float>> grads(levels + 1, std::vector<float>(d, 0.0f));

    if (alpha != 0.0f) {
        if (options_.fusion == FusionMode::Average) {
            const float share = alpha / static_cast<float>(levels);
            for (std::size_t i = 1; i <= levels; ++i) axpy(share, grad_z, grads[i]);
        } else {
            Parameter& proj = *projection_;
            for (std::size_t i = 0; i < levels; ++i) {
                const auto& code = trace.levels[i].code;
                for (std::size_t k = 0; k < d; ++k) {
                    const std::size_t row = i * d + k;
                    grads[i + 1][k] += alpha * dot(proj.value.row(row), grad_z);
                    if (code[k] != 0.0f) axpy(alpha * code[k], grad_z, proj.grad.row(row));
                }
            }
        }
    }

    if (cage_weight != 0.0f) {
        const float quant_scale = 2.0f * cage_weight;
        const float commit_scale = 2.0f * cage_weight * options_.beta;
        std::vector<float> diff(d);
        for (std::size_t i = 1; i <= levels; ++i) {
            const auto below = trace.code_at(i - 1);
            const auto code = trace.code_at(i);
            for (std::size_t k = 0; k < d; ++k) diff[k] = code[k] - below[k];
            axpy(quant_scale, diff, codebooks_[i - 1].grad.row(trace.levels[i - 1].index));
            if (commit_scale != 0.0f) axpy(-commit_scale, diff, grads[i - 1]);
        }
    }

    for (std::size_t i = levels; i >= 1; --i) axpy(1.0f, grads[i], grads[i - 1]);

    std::vector<float> grad_e(grad_z.begin(), grad_z.end());
    axpy(1.0f, grads[0], grad_e);
    return grad_e;
}

void CascadedQuantizer::collect_parameters(std::vector<Parameter*>& out) {
    for (auto& book : codebooks_) out.push_back(&book);
    if (projection_) out.push_back(&*projection_);
}

}  // namespace cage
