#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "cage/core/rng.hpp"
#include "cage/data/io.hpp"
#include "cage/data/lists.hpp"
#include "cage/data/vocabulary.hpp"

namespace cage::data {

struct Interaction {
    std::size_t user = 0;
    std::size_t item = 0;
    int label = 1;  // records without a label count as positives
    std::int64_t timestamp = 0;
    bool has_timestamp = false;
    std::size_t order = 0;  // position in the source file; the record identity

    friend bool operator==(const Interaction&, const Interaction&) = default;
};

struct InteractionData {
    Vocabulary users;
    Vocabulary items;
    std::vector<Interaction> records;
};

InteractionData index_interactions(const std::vector<InteractionRecord>& records);

/// Per user, positives ordered by timestamp (file order when any of the user's
/// positives lacks one, and for ties): the last goes to test, the second-last
/// to validation, the rest to train. Users with fewer than 3 positives and all
/// label-0 records stay in train.
Partition<Interaction> leave_one_out(const InteractionData& data);

// Sorted, de-duplicated positive items per user over every record.
std::vector<std::vector<std::size_t>> positive_items(const InteractionData& data);

// n distinct items drawn uniformly without replacement from [0, item_count)
// minus `positives` (sorted). Throws PreconditionError when fewer than n
// items are eligible.
std::vector<std::size_t> sample_negatives(std::size_t n, std::size_t item_count,
                                          std::span<const std::size_t> positives, SeededRng& rng);

}  // namespace cage::data
