#include "cage/data/lists.hpp"

#include <unordered_map>

#include "cage/error.hpp"

namespace cage::data {

std::vector<ListRecord> preprocess_lists(std::vector<ListRecord> lists, const ListFilter& filter) {
    if (filter.min_freq < 1) throw PreconditionError("preprocess_lists: min_freq must be >= 1");
    if (filter.min_len < 1 || filter.min_len > filter.max_len) {
        throw PreconditionError("preprocess_lists: need 1 <= min_len <= max_len");
    }
    while (true) {
        bool changed = false;

        std::unordered_map<std::string, std::size_t> freq;
        for (const auto& list : lists) {
            for (const auto& item : list.items) ++freq[item];
        }
        for (auto& list : lists) {
            const auto before = list.items.size();
            std::erase_if(list.items, [&](const std::string& item) {
                return freq[item] < filter.min_freq;
            });
            changed |= list.items.size() != before;
        }

        std::vector<ListRecord> kept;
        kept.reserve(lists.size());
        for (auto& list : lists) {
            if (list.items.size() > filter.max_len) {
                list.items.resize(filter.max_len);
                changed = true;
            }
            if (list.items.size() < filter.min_len) {
                changed = true;
                continue;
            }
            kept.push_back(std::move(list));
        }
        lists = std::move(kept);
        if (!changed) return lists;
    }
}

Partition<ListRecord> partition_lists(std::vector<ListRecord> lists, SeededRng& rng,
                                      const SplitRatios& ratios) {
    if (lists.empty()) throw PreconditionError("partition_lists: no lists");
    const std::size_t total = ratios.train + ratios.validation + ratios.test;
    if (total == 0) throw PreconditionError("partition_lists: ratios sum to zero");
    rng.shuffle(std::span<ListRecord>(lists));

    const std::size_t n = lists.size();
    const std::size_t n_val = n * ratios.validation / total;
    const std::size_t n_test = n * ratios.test / total;
    const std::size_t n_train = n - n_val - n_test;

    Partition<ListRecord> out;
    auto it = std::make_move_iterator(lists.begin());
    out.train.assign(it, it + n_train);
    out.validation.assign(it + n_train, it + n_train + n_val);
    out.test.assign(it + n_train + n_val, std::make_move_iterator(lists.end()));
    return out;
}

CompletionData build_completion_data(const std::vector<ListRecord>& lists, SeededRng& rng,
                                     const SplitRatios& ratios) {
    CompletionData data;
    for (const auto& list : lists) {
        for (const auto& item : list.items) data.items.add(item);
    }
    data.items.freeze();

    auto parts = partition_lists(lists, rng, ratios);
    auto convert = [&](const std::vector<ListRecord>& src, std::vector<ListPair>& dst) {
        for (const auto& list : src) {
            std::vector<std::size_t> ids;
            ids.reserve(list.items.size());
            for (const auto& item : list.items) ids.push_back(data.items.index(item));
            auto [input, target] = split_list(ids);
            dst.push_back({std::move(input), std::move(target)});
        }
    };
    convert(parts.train, data.pairs.train);
    convert(parts.validation, data.pairs.validation);
    convert(parts.test, data.pairs.test);
    return data;
}

}  // namespace cage::data
