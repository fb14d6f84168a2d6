#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "cage/core/matrix.hpp"
#include "cage/quantizer.hpp"

namespace cage {

class TreeError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Frozen category tree read off a trained quantizer.
///
/// Levels are 1-based in the exported formats; in memory `paths[e][i]` is the
/// code chosen for entity e at level i+1 and `parents[i][k]` is the level-(i+2)
/// code that level-(i+1) code k links to.
struct CategoryTree {
    std::vector<std::size_t> level_sizes;
    std::vector<std::vector<std::size_t>> paths;
    std::vector<std::vector<std::size_t>> parents;
    std::vector<Matrix> codebooks;  // optional snapshot, empty when absent

    std::size_t depth() const noexcept { return level_sizes.size(); }
    std::size_t entity_count() const noexcept { return paths.size(); }

    // Throws TreeError on any broken invariant: sizes not strictly decreasing,
    // path/parent index out of range, path not following the parent links, or
    // (when codebooks are present) parents that are not nearest-code links.
    void validate() const;

    friend bool operator==(const CategoryTree&, const CategoryTree&) = default;
};

CategoryTree extract_tree(const CascadedQuantizer& quantizer, const Matrix& embeddings,
                          bool include_codebooks = true);

// Per level, the fraction of codes selected by at least one trace.
std::vector<double> codebook_utilization(std::span<const QuantizationTrace> traces,
                                         const CascadedQuantizer& quantizer);

struct PurityReport {
    // category -> number of distinct level-1 codes its entities use
    std::map<std::string, std::size_t> codes_per_category;
    std::size_t categories = 0;
    std::size_t exclusive = 0;  // exactly one code
    std::size_t under_10 = 0;
    std::size_t under_20 = 0;
    std::size_t under_100 = 0;
    // Fraction of entities whose label matches the majority label of their code.
    double majority_purity = 0.0;
};

PurityReport code_purity(std::span<const std::size_t> codes, std::span<const std::string> labels);

}  // namespace cage
