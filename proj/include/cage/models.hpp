#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cage/core/matrix.hpp"
#include "cage/core/mlp.hpp"
#include "cage/core/parameter.hpp"
#include "cage/core/rng.hpp"
#include "cage/quantizer.hpp"

namespace cage {

struct EmbeddingTable {
    Parameter rows;  // count x dim
    std::string role;

    std::size_t count() const { return rows.value.rows(); }
    std::size_t dim() const { return rows.value.cols(); }
    // Throws IndexError naming the role.
    std::span<const float> row(std::size_t index) const;
    void check_index(std::size_t index) const;
};

// Rows drawn from N(0, init_std^2) on the sub-stream "init/<name>".
EmbeddingTable make_embedding(const SeededRng& rng, std::size_t count, std::size_t dim,
                              float init_std, const std::string& name, std::string role);

struct EncodedEntity {
    std::size_t index = 0;
    std::optional<QuantizationTrace> trace;
    std::vector<float> z;
};

/// An embedding table with an optional quantizer stack on top. Without a
/// quantizer z is the raw embedding row.
class EntityEncoder {
public:
    EntityEncoder() = default;
    EntityEncoder(const SeededRng& rng, std::size_t count, std::size_t dim, float init_std,
                  const std::string& name, const std::optional<QuantizerOptions>& cage);

    EncodedEntity encode(std::size_t index) const;
    // Sum of the tree generation loss over the trace (0 without a quantizer).
    double cage_loss(const EncodedEntity& encoded) const;
    // Routes dL/dz (and the cage term weighted by cage_weight) into the table
    // row and the quantizer parameters.
    void backward(const EncodedEntity& encoded, std::span<const float> grad_z, float cage_weight);

    std::size_t count() const { return table.count(); }
    std::size_t dim() const { return table.dim(); }
    void collect_parameters(std::vector<Parameter*>& out);

    EmbeddingTable table;
    std::optional<CascadedQuantizer> quantizer;
};

struct ModelOptions {
    std::size_t dim = 64;
    std::vector<std::size_t> hidden{64};  // MLP hidden widths (CTR scorer, list encoder)
    float init_std = 0.01f;
    std::optional<QuantizerOptions> user_cage;
    std::optional<QuantizerOptions> item_cage;
    float omega_q = 1.0f;
    float omega_c = 1.0f;
};

// Throws ConfigError on a zero dim, negative weights, or quantizer dims that
// differ from the embedding dim.
void validate(const ModelOptions& options);

struct StepLoss {
    double rec = 0.0;   // task loss (BPR, BCE, or item CE plus weighted tree CE)
    double item = 0.0;  // list completion only
    double tree = 0.0;  // list completion only
    double cage = 0.0;  // unweighted tree generation loss summed over touched entities
    double total = 0.0;
};

// Scores (user, item) pairs under the current weights.
class PairScorer {
public:
    virtual ~PairScorer() = default;
    virtual std::size_t user_count() const = 0;
    virtual std::size_t item_count() const = 0;
    virtual std::vector<float> score_items(std::size_t user,
                                           std::span<const std::size_t> items) const = 0;
};

class CfModel : public PairScorer {
public:
    CfModel(const SeededRng& rng, std::size_t users, std::size_t items, const ModelOptions& options);

    // Pairwise ranking step: accumulates grad_scale * dL/dtheta.
    StepLoss bpr_step(std::size_t user, std::size_t pos, std::size_t neg, float grad_scale = 1.0f);

    std::size_t user_count() const override { return users.count(); }
    std::size_t item_count() const override { return items.count(); }
    std::vector<float> score_items(std::size_t user,
                                   std::span<const std::size_t> candidates) const override;
    void collect_parameters(std::vector<Parameter*>& out);

    EntityEncoder users;
    EntityEncoder items;
    float omega_q = 1.0f;
};

class CtrModel : public PairScorer {
public:
    CtrModel(const SeededRng& rng, std::size_t users, std::size_t items, const ModelOptions& options);

    StepLoss step(std::size_t user, std::size_t item, int label, float grad_scale = 1.0f);
    float logit(std::size_t user, std::size_t item) const;

    std::size_t user_count() const override { return users.count(); }
    std::size_t item_count() const override { return items.count(); }
    std::vector<float> score_items(std::size_t user,
                                   std::span<const std::size_t> candidates) const override;
    void collect_parameters(std::vector<Parameter*>& out);

    EntityEncoder users;
    EntityEncoder items;
    Mlp scorer;  // 2d -> hidden... -> 1
    float omega_q = 1.0f;
};

/// Mean-pool next-item model. Item logits are the prediction vector dotted
/// with the raw item table; one linear head per quantizer level predicts the
/// target's code index at that level.
class SeqModel {
public:
    SeqModel(const SeededRng& rng, std::size_t items, const ModelOptions& options);

    StepLoss step(std::span<const std::size_t> prefix, std::size_t target, float grad_scale = 1.0f);

    std::vector<float> predict_vector(std::span<const std::size_t> prefix) const;
    std::vector<float> item_scores(std::span<const std::size_t> prefix) const;

    std::size_t item_count() const { return items.count(); }
    std::size_t dim() const { return items.dim(); }
    void collect_parameters(std::vector<Parameter*>& out);

    EntityEncoder items;
    Mlp encoder;                    // d -> hidden... -> d
    std::vector<DenseLayer> heads;  // heads[i]: d -> sizes[i]
    float omega_q = 1.0f;
    float omega_c = 1.0f;
};

// Top-k by descending score, ties to the lower item index.
std::vector<std::size_t> top_k_items(std::span<const std::size_t> items,
                                     std::span<const float> scores, std::size_t k);

// Returns min(k, |candidates|) items. Throws PreconditionError on empty
// candidates or k == 0.
std::vector<std::size_t> predict_topk(const PairScorer& model, std::size_t user,
                                      std::span<const std::size_t> candidates, std::size_t k);

// Ranks the whole vocabulary minus `exclude`. Throws PreconditionError when
// fewer than k items remain.
std::vector<std::size_t> predict_completion(const SeqModel& model,
                                            std::span<const std::size_t> prefix, std::size_t k,
                                            std::span<const std::size_t> exclude);

}  // namespace cage
