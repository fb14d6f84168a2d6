#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "cage/core/rng.hpp"
#include "cage/data/io.hpp"
#include "cage/data/vocabulary.hpp"
#include "cage/error.hpp"

namespace cage::data {

struct ListFilter {
    std::size_t min_freq = 10;
    std::size_t min_len = 10;
    std::size_t max_len = 200;
};

/// Repeats until nothing changes: drop items seen fewer than min_freq times
/// across all lists, then keep the first max_len items of each list and drop
/// lists shorter than min_len. Every pass either shrinks the item multiset or
/// exits, so this terminates; the result is a fixed point.
std::vector<ListRecord> preprocess_lists(std::vector<ListRecord> lists, const ListFilter& filter);

// input = first ceil(L/2) items, target = the rest. Needs L >= 2.
template <typename T>
std::pair<std::vector<T>, std::vector<T>> split_list(const std::vector<T>& list) {
    if (list.size() < 2) {
        throw PreconditionError("split_list: need at least 2 items, got " +
                                std::to_string(list.size()));
    }
    const std::size_t head = (list.size() + 1) / 2;
    return {std::vector<T>(list.begin(), list.begin() + head),
            std::vector<T>(list.begin() + head, list.end())};
}

struct SplitRatios {
    std::size_t train = 8;
    std::size_t validation = 1;
    std::size_t test = 1;
};

template <typename T>
struct Partition {
    std::vector<T> train;
    std::vector<T> validation;
    std::vector<T> test;
};

// Seeded shuffle, then contiguous cut: validation and test sizes are floored,
// train takes the remainder.
Partition<ListRecord> partition_lists(std::vector<ListRecord> lists, SeededRng& rng,
                                      const SplitRatios& ratios = {});

struct ListPair {
    std::vector<std::size_t> input;
    std::vector<std::size_t> target;
};

struct CompletionData {
    Vocabulary items;
    Partition<ListPair> pairs;
};

// Partitions filtered lists, splits each into (input, target) halves and maps
// item ids through a vocabulary built over every list in first-seen order.
// Lists shorter than 2 are rejected.
CompletionData build_completion_data(const std::vector<ListRecord>& lists, SeededRng& rng,
                                     const SplitRatios& ratios = {});

}  // namespace cage::data
