#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cage/core/rng.hpp"
#include "cage/data/interactions.hpp"
#include "cage/data/lists.hpp"
#include "cage/models.hpp"

namespace cage {

// Single: 1 when any relevant item is in the top k. Multi: hits divided by
// min(k, |relevant|). RawCount: plain number of hits.
enum class HitMode { Single, Multi, RawCount };

std::string_view to_string(HitMode mode);
HitMode parse_hit_mode(std::string_view text);

// Binary-relevance NDCG with 1-based positions and log base 2. `ranked` is
// the candidate list best first. Throws PreconditionError on an empty
// relevant set or k == 0.
double ndcg_at_k(std::span<const std::size_t> ranked, std::span<const std::size_t> relevant,
                 std::size_t k);
double hr_at_k(std::span<const std::size_t> ranked, std::span<const std::size_t> relevant,
               std::size_t k, HitMode mode);

struct MetricReport {
    std::map<std::string, double> values;  // "ndcg@5", "hr@10", ...
    std::size_t units = 0;

    double at(const std::string& name) const;
};

std::string metric_name(std::string_view metric, std::size_t k);

struct RankingProtocol {
    std::size_t n_negatives = 99;
    std::vector<std::size_t> ks{5, 10};
    HitMode hit_mode = HitMode::Single;
};

/// One unit per held-out positive: rank it against n_negatives items the user
/// never interacted with positively. Unit u draws its negatives from
/// rng.stream("eval/negatives", u), so the result depends only on the model,
/// the split and the seed.
MetricReport evaluate_ranking(const PairScorer& model, std::span<const data::Interaction> split,
                              const std::vector<std::vector<std::size_t>>& positives,
                              const RankingProtocol& protocol, const SeededRng& rng);

/// One unit per list: rank the vocabulary minus the input items and score the
/// target items. Targets that also occur in the input cannot be ranked and are
/// dropped; lists left with no target are skipped.
MetricReport evaluate_completion(const SeqModel& model, std::span<const data::ListPair> split,
                                 const std::vector<std::size_t>& ks,
                                 HitMode hit_mode = HitMode::Multi);

}  // namespace cage
