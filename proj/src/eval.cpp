#include "cage/eval.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "cage/error.hpp"

namespace cage {

std::string_view to_string(HitMode mode) {
    switch (mode) {
        case HitMode::Single: return "single";
        case HitMode::Multi: return "multi";
        case HitMode::RawCount: return "raw-count";
    }
    return "?";
}

HitMode parse_hit_mode(std::string_view text) {
    if (text == "single") return HitMode::Single;
    if (text == "multi") return HitMode::Multi;
    if (text == "raw-count") return HitMode::RawCount;
    throw ConfigError("unknown hit mode '" + std::string(text) + "'");
}

namespace {

void check_args(std::span<const std::size_t> relevant, std::size_t k) {
    if (relevant.empty()) throw PreconditionError("ranking metric: empty relevant set");
    if (k == 0) throw PreconditionError("ranking metric: k must be >= 1");
}

std::unordered_set<std::size_t> as_set(std::span<const std::size_t> items) {
    return {items.begin(), items.end()};
}

}  // namespace

double ndcg_at_k(std::span<const std::size_t> ranked, std::span<const std::size_t> relevant,
                 std::size_t k) {
    check_args(relevant, k);
    const auto rel = as_set(relevant);
    double dcg = 0.0;
    const std::size_t top = std::min(k, ranked.size());
    for (std::size_t p = 0; p < top; ++p) {
        if (rel.count(ranked[p])) dcg += 1.0 / std::log2(double(p) + 2.0);
    }
    double idcg = 0.0;
    for (std::size_t p = 0; p < std::min(k, rel.size()); ++p) idcg += 1.0 / std::log2(double(p) + 2.0);
    return dcg / idcg;
}

double hr_at_k(std::span<const std::size_t> ranked, std::span<const std::size_t> relevant,
               std::size_t k, HitMode mode) {
    check_args(relevant, k);
    const auto rel = as_set(relevant);
    std::size_t hits = 0;
    const std::size_t top = std::min(k, ranked.size());
    for (std::size_t p = 0; p < top; ++p) hits += rel.count(ranked[p]);
    switch (mode) {
        case HitMode::Single: return hits > 0 ? 1.0 : 0.0;
        case HitMode::Multi: return double(hits) / double(std::min(k, rel.size()));
        case HitMode::RawCount: return double(hits);
    }
    return 0.0;
}

double MetricReport::at(const std::string& name) const {
    const auto it = values.find(name);
    if (it == values.end()) throw IndexError("no metric named '" + name + "'");
    return it->second;
}

std::string metric_name(std::string_view metric, std::size_t k) {
    return std::string(metric) + "@" + std::to_string(k);
}

namespace {

struct Accumulator {
    std::vector<std::size_t> ks;
    std::vector<double> ndcg;
    std::vector<double> hr;
    std::size_t units = 0;

    explicit Accumulator(std::vector<std::size_t> ks_)
        : ks(std::move(ks_)), ndcg(ks.size(), 0.0), hr(ks.size(), 0.0) {
        if (ks.empty()) throw PreconditionError("evaluation needs at least one k");
        for (std::size_t k : ks) {
            if (k == 0) throw PreconditionError("evaluation k must be >= 1");
        }
    }

    void add(std::span<const std::size_t> ranked, std::span<const std::size_t> relevant,
             HitMode mode) {
        for (std::size_t i = 0; i < ks.size(); ++i) {
            ndcg[i] += ndcg_at_k(ranked, relevant, ks[i]);
            hr[i] += hr_at_k(ranked, relevant, ks[i], mode);
        }
        ++units;
    }

    MetricReport report() const {
        MetricReport out;
        out.units = units;
        const double n = units == 0 ? 1.0 : double(units);
        for (std::size_t i = 0; i < ks.size(); ++i) {
            out.values[metric_name("ndcg", ks[i])] = ndcg[i] / n;
            out.values[metric_name("hr", ks[i])] = hr[i] / n;
        }
        return out;
    }
};

}  // namespace

MetricReport evaluate_ranking(const PairScorer& model, std::span<const data::Interaction> split,
                              const std::vector<std::vector<std::size_t>>& positives,
                              const RankingProtocol& protocol, const SeededRng& rng) {
    if (split.empty()) throw PreconditionError("evaluate_ranking: empty split");
    Accumulator acc(protocol.ks);
    const std::size_t n_items = model.item_count();
    std::vector<std::size_t> candidates;
    for (std::size_t unit = 0; unit < split.size(); ++unit) {
        const auto& x = split[unit];
        if (x.user >= positives.size()) throw IndexError("evaluate_ranking: user without positive set");
        auto stream = rng.stream("eval/negatives", unit);
        candidates = data::sample_negatives(protocol.n_negatives, n_items, positives[x.user], stream);
        candidates.push_back(x.item);
        const auto ranked = predict_topk(model, x.user, candidates, candidates.size());
        const std::size_t relevant[] = {x.item};
        acc.add(ranked, relevant, protocol.hit_mode);
    }
    return acc.report();
}

MetricReport evaluate_completion(const SeqModel& model, std::span<const data::ListPair> split,
                                 const std::vector<std::size_t>& ks, HitMode hit_mode) {
    Accumulator acc(ks);
    const std::size_t max_k = *std::max_element(ks.begin(), ks.end());
    for (const auto& pair : split) {
        const auto input = as_set(pair.input);
        std::vector<std::size_t> relevant;
        for (std::size_t t : pair.target) {
            if (!input.count(t)) relevant.push_back(t);
        }
        if (relevant.empty()) continue;
        const std::size_t remaining = model.item_count() - input.size();
        const auto ranked =
            predict_completion(model, pair.input, std::min(max_k, remaining), pair.input);
        acc.add(ranked, relevant, hit_mode);
    }
    return acc.report();
}

}  // namespace cage
