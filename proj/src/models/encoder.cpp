#include <algorithm>
#include <numeric>

#include "cage/error.hpp"
#include "cage/models.hpp"

namespace cage {

void EmbeddingTable::check_index(std::size_t index) const {
    if (index >= count()) {
        throw IndexError(role + " index " + std::to_string(index) + " out of range (" +
                         std::to_string(count()) + " entries)");
    }
}

std::span<const float> EmbeddingTable::row(std::size_t index) const {
    check_index(index);
    return rows.value.row(index);
}

EmbeddingTable make_embedding(const SeededRng& rng, std::size_t count, std::size_t dim,
                              float init_std, const std::string& name, std::string role) {
    if (count == 0) throw PreconditionError("embedding table '" + name + "' needs at least one row");
    auto stream = rng.stream("init/" + name);
    return {Parameter(name, rng_normal_init(stream, count, dim, init_std)), std::move(role)};
}

EntityEncoder::EntityEncoder(const SeededRng& rng, std::size_t count, std::size_t dim,
                             float init_std, const std::string& name,
                             const std::optional<QuantizerOptions>& cage)
    : table(make_embedding(rng, count, dim, init_std, name + "/embedding", name)) {
    if (cage) {
        if (cage->dim != dim) {
            throw ConfigError(name + " quantizer dim " + std::to_string(cage->dim) +
                              " differs from embedding dim " + std::to_string(dim));
        }
        quantizer.emplace(rng, *cage, name + "/cage");
    }
}

EncodedEntity EntityEncoder::encode(std::size_t index) const {
    EncodedEntity out;
    out.index = index;
    const auto e = table.row(index);
    if (quantizer) {
        out.trace = quantizer->quantize(e);
        out.z = out.trace->fused;
    } else {
        out.z.assign(e.begin(), e.end());
    }
    return out;
}

double EntityEncoder::cage_loss(const EncodedEntity& encoded) const {
    if (!encoded.trace) return 0.0;
    return cage::cage_loss(*encoded.trace, quantizer->beta()).total;
}

void EntityEncoder::backward(const EncodedEntity& encoded, std::span<const float> grad_z,
                             float cage_weight) {
    auto dst = table.rows.grad.row(encoded.index);
    if (quantizer) {
        const auto grad_e = quantizer->backward(*encoded.trace, grad_z, cage_weight);
        axpy(1.0f, grad_e, dst);
    } else {
        axpy(1.0f, grad_z, dst);
    }
}

void EntityEncoder::collect_parameters(std::vector<Parameter*>& out) {
    out.push_back(&table.rows);
    if (quantizer) quantizer->collect_parameters(out);
}

void validate(const ModelOptions& options) {
    if (options.dim == 0) throw ConfigError("model dim must be >= 1");
    if (!(options.omega_q >= 0.0f) || !(options.omega_c >= 0.0f)) {
        throw ConfigError("omega_q and omega_c must be >= 0");
    }
    if (!(options.init_std > 0.0f)) throw ConfigError("init_std must be > 0");
    for (std::size_t h : options.hidden) {
        if (h == 0) throw ConfigError("hidden widths must be >= 1");
    }
    for (const auto* q : {&options.user_cage, &options.item_cage}) {
        if (!*q) continue;
        validate(**q);
        if ((*q)->dim != options.dim) {
            throw ConfigError("quantizer dim " + std::to_string((*q)->dim) +
                              " differs from model dim " + std::to_string(options.dim));
        }
    }
}

std::vector<std::size_t> top_k_items(std::span<const std::size_t> items,
                                     std::span<const float> scores, std::size_t k) {
    if (items.size() != scores.size()) throw DimensionError("top_k_items: items/scores length mismatch");
    std::vector<std::size_t> order(items.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    auto better = [&](std::size_t a, std::size_t b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return items[a] < items[b];
    };
    const std::size_t n = std::min(k, order.size());
    std::partial_sort(order.begin(), order.begin() + n, order.end(), better);
    std::vector<std::size_t> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = items[order[i]];
    return out;
}

std::vector<std::size_t> predict_topk(const PairScorer& model, std::size_t user,
                                      std::span<const std::size_t> candidates, std::size_t k) {
    if (candidates.empty()) throw PreconditionError("predict_topk: no candidates");
    if (k == 0) throw PreconditionError("predict_topk: k must be >= 1");
    std::vector<std::size_t> unique(candidates.begin(), candidates.end());
    std::sort(unique.begin(), unique.end());
    unique.erase(std::unique(unique.begin(), unique.end()), unique.end());
    const auto scores = model.score_items(user, unique);
    return top_k_items(unique, scores, k);
}

std::vector<std::size_t> predict_completion(const SeqModel& model,
                                            std::span<const std::size_t> prefix, std::size_t k,
                                            std::span<const std::size_t> exclude) {
    const auto scores = model.item_scores(prefix);
    std::vector<char> blocked(scores.size(), 0);
    for (std::size_t x : exclude) {
        if (x < blocked.size()) blocked[x] = 1;
    }
    std::vector<std::size_t> items;
    std::vector<float> kept;
    items.reserve(scores.size());
    kept.reserve(scores.size());
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (blocked[i]) continue;
        items.push_back(i);
        kept.push_back(scores[i]);
    }
    if (k > items.size()) {
        throw PreconditionError("predict_completion: k = " + std::to_string(k) + " but only " +
                                std::to_string(items.size()) + " items remain");
    }
    return top_k_items(items, kept, k);
}

}  // namespace cage
