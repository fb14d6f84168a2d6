#include "cage/data/interactions.hpp"

#include <algorithm>
#include <unordered_set>

#include "cage/error.hpp"

namespace cage::data {

InteractionData index_interactions(const std::vector<InteractionRecord>& records) {
    InteractionData data;
    data.records.reserve(records.size());
    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto& rec = records[i];
        Interaction x;
        x.user = data.users.add(rec.user);
        x.item = data.items.add(rec.item);
        x.label = rec.label.value_or(1);
        x.has_timestamp = rec.timestamp.has_value();
        x.timestamp = rec.timestamp.value_or(0);
        x.order = i;
        data.records.push_back(x);
    }
    data.users.freeze();
    data.items.freeze();
    return data;
}

Partition<Interaction> leave_one_out(const InteractionData& data) {
    std::vector<std::vector<const Interaction*>> by_user(data.users.size());
    Partition<Interaction> out;
    for (const auto& rec : data.records) {
        if (rec.label == 1) {
            by_user[rec.user].push_back(&rec);
        } else {
            out.train.push_back(rec);
        }
    }
    for (auto& positives : by_user) {
        const bool timed = std::all_of(positives.begin(), positives.end(),
                                       [](const Interaction* x) { return x->has_timestamp; });
        if (timed) {
            std::stable_sort(positives.begin(), positives.end(),
                             [](const Interaction* a, const Interaction* b) {
                                 return a->timestamp < b->timestamp;
                             });
        }
        const std::size_t n = positives.size();
        for (std::size_t i = 0; i < n; ++i) {
            if (n >= 3 && i == n - 1) {
                out.test.push_back(*positives[i]);
            } else if (n >= 3 && i == n - 2) {
                out.validation.push_back(*positives[i]);
            } else {
                out.train.push_back(*positives[i]);
            }
        }
    }
    auto by_order = [](const Interaction& a, const Interaction& b) { return a.order < b.order; };
    std::sort(out.train.begin(), out.train.end(), by_order);
    std::sort(out.validation.begin(), out.validation.end(), by_order);
    std::sort(out.test.begin(), out.test.end(), by_order);
    return out;
}

std::vector<std::vector<std::size_t>> positive_items(const InteractionData& data) {
    std::vector<std::vector<std::size_t>> out(data.users.size());
    for (const auto& rec : data.records) {
        if (rec.label == 1) out[rec.user].push_back(rec.item);
    }
    for (auto& items : out) {
        std::sort(items.begin(), items.end());
        items.erase(std::unique(items.begin(), items.end()), items.end());
    }
    return out;
}

std::vector<std::size_t> sample_negatives(std::size_t n, std::size_t item_count,
                                          std::span<const std::size_t> positives, SeededRng& rng) {
    std::size_t blocked = 0;
    for (std::size_t p : positives) blocked += p < item_count ? 1 : 0;
    const std::size_t eligible = item_count - blocked;
    if (eligible < n) {
        throw PreconditionError("sample_negatives: need " + std::to_string(n) + " items but only " +
                                std::to_string(eligible) + " are eligible");
    }
    auto is_positive = [&](std::size_t item) {
        return std::binary_search(positives.begin(), positives.end(), item);
    };

    std::vector<std::size_t> out;
    out.reserve(n);
    if (eligible >= 2 * n) {
        std::unordered_set<std::size_t> taken;
        while (out.size() < n) {
            const auto item = static_cast<std::size_t>(rng.uniform_index(item_count));
            if (is_positive(item) || !taken.insert(item).second) continue;
            out.push_back(item);
        }
        return out;
    }
    // Dense case: partial Fisher-Yates over the eligible pool.
    std::vector<std::size_t> pool;
    pool.reserve(eligible);
    for (std::size_t item = 0; item < item_count; ++item) {
        if (!is_positive(item)) pool.push_back(item);
    }
    for (std::size_t i = 0; i < n; ++i) {
        const auto j = i + static_cast<std::size_t>(rng.uniform_index(pool.size() - i));
        std::swap(pool[i], pool[j]);
        out.push_back(pool[i]);
    }
    return out;
}

}  // namespace cage::data
