#include "cage/tree.hpp"

#include <algorithm>
#include <set>
#include <unordered_map>

#include "cage/error.hpp"

namespace cage {

void CategoryTree::validate() const {
    const std::size_t levels = depth();
    if (levels == 0) throw TreeError("tree has no levels");
    for (std::size_t i = 0; i < levels; ++i) {
        if (level_sizes[i] == 0) throw TreeError("level " + std::to_string(i + 1) + " is empty");
        if (i > 0 && level_sizes[i] >= level_sizes[i - 1]) {
            throw TreeError("level sizes are not strictly decreasing at level " +
                            std::to_string(i + 1));
        }
    }
    if (parents.size() != levels - 1) {
        throw TreeError("expected " + std::to_string(levels - 1) + " parent maps, found " +
                        std::to_string(parents.size()));
    }
    for (std::size_t i = 0; i + 1 < levels; ++i) {
        if (parents[i].size() != level_sizes[i]) {
            throw TreeError("level " + std::to_string(i + 1) + " parent map has " +
                            std::to_string(parents[i].size()) + " entries, expected " +
                            std::to_string(level_sizes[i]));
        }
        for (std::size_t k = 0; k < parents[i].size(); ++k) {
            if (parents[i][k] >= level_sizes[i + 1]) {
                throw TreeError("code L" + std::to_string(i + 1) + "_" + std::to_string(k) +
                                " links to a missing parent");
            }
        }
    }
    for (std::size_t e = 0; e < paths.size(); ++e) {
        const auto& path = paths[e];
        if (path.size() != levels) {
            throw TreeError("entity " + std::to_string(e) + " path has wrong length");
        }
        for (std::size_t i = 0; i < levels; ++i) {
            if (path[i] >= level_sizes[i]) {
                throw TreeError("entity " + std::to_string(e) + " path index out of range");
            }
            if (i > 0 && parents[i - 1][path[i - 1]] != path[i]) {
                throw TreeError("entity " + std::to_string(e) + " path leaves the tree at level " +
                                std::to_string(i + 1));
            }
        }
    }
    if (!codebooks.empty()) {
        if (codebooks.size() != levels) throw TreeError("codebook snapshot has wrong depth");
        for (std::size_t i = 0; i < levels; ++i) {
            if (codebooks[i].rows() != level_sizes[i]) {
                throw TreeError("codebook snapshot for level " + std::to_string(i + 1) +
                                " has wrong size");
            }
        }
        for (std::size_t i = 0; i + 1 < levels; ++i) {
            for (std::size_t k = 0; k < level_sizes[i]; ++k) {
                if (nearest_code(codebooks[i + 1], codebooks[i].row(k)).index != parents[i][k]) {
                    throw TreeError("code L" + std::to_string(i + 1) + "_" + std::to_string(k) +
                                    " is not linked to its nearest parent");
                }
            }
        }
    }
}

CategoryTree extract_tree(const CascadedQuantizer& quantizer, const Matrix& embeddings,
                          bool include_codebooks) {
    if (embeddings.rows() == 0) throw PreconditionError("extract_tree: no embeddings");
    CategoryTree tree;
    tree.level_sizes = quantizer.sizes();
    tree.paths.reserve(embeddings.rows());
    for (std::size_t e = 0; e < embeddings.rows(); ++e) {
        tree.paths.push_back(quantizer.quantize(embeddings.row(e)).path());
    }
    for (std::size_t i = 0; i + 1 < quantizer.depth(); ++i) {
        const Matrix& child = quantizer.codebook(i).value;
        const Matrix& parent = quantizer.codebook(i + 1).value;
        std::vector<std::size_t> links(child.rows());
        for (std::size_t k = 0; k < child.rows(); ++k) {
            links[k] = nearest_code(parent, child.row(k)).index;
        }
        tree.parents.push_back(std::move(links));
    }
    if (include_codebooks) {
        for (std::size_t i = 0; i < quantizer.depth(); ++i) {
            tree.codebooks.push_back(quantizer.codebook(i).value);
        }
    }
    return tree;
}

std::vector<double> codebook_utilization(std::span<const QuantizationTrace> traces,
                                         const CascadedQuantizer& quantizer) {
    if (traces.empty()) throw PreconditionError("codebook_utilization: empty batch");
    std::vector<double> out;
    for (std::size_t i = 0; i < quantizer.depth(); ++i) {
        std::vector<bool> used(quantizer.sizes()[i], false);
        for (const auto& trace : traces) used.at(trace.levels.at(i).index) = true;
        const auto count = std::count(used.begin(), used.end(), true);
        out.push_back(double(count) / double(used.size()));
    }
    return out;
}

PurityReport code_purity(std::span<const std::size_t> codes, std::span<const std::string> labels) {
    if (codes.size() != labels.size()) {
        throw DimensionError("code_purity: " + std::to_string(codes.size()) + " codes vs " +
                             std::to_string(labels.size()) + " labels");
    }
    PurityReport report;
    std::map<std::string, std::set<std::size_t>> spans;
    std::map<std::size_t, std::unordered_map<std::string, std::size_t>> by_code;
    for (std::size_t e = 0; e < codes.size(); ++e) {
        spans[labels[e]].insert(codes[e]);
        ++by_code[codes[e]][labels[e]];
    }
    for (const auto& [label, set] : spans) {
        const std::size_t n = set.size();
        report.codes_per_category[label] = n;
        ++report.categories;
        if (n == 1) ++report.exclusive;
        if (n < 10) ++report.under_10;
        if (n < 20) ++report.under_20;
        if (n < 100) ++report.under_100;
    }
    std::size_t agreeing = 0;
    for (const auto& [code, counts] : by_code) {
        std::size_t best = 0;
        for (const auto& [label, count] : counts) best = std::max(best, count);
        agreeing += best;
    }
    report.majority_purity = codes.empty() ? 0.0 : double(agreeing) / double(codes.size());
    return report;
}

}  // namespace cage
