#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "cage/tree.hpp"

namespace cage::app {

struct TreeDocument {
    std::string side;  // "user" or "item"
    CategoryTree tree;
    std::vector<std::string> entities;  // raw ids, index-aligned with tree.paths

    friend bool operator==(const TreeDocument&, const TreeDocument&) = default;
};

/// JSON layout: {"side", "level_sizes": [v1..vH], "parents": [[...] per level
/// 1..H-1], "entities": [{"id", "path": [...]}], "codebooks": [[[...]]]}
/// with "codebooks" present only when the tree carries a snapshot.
nlohmann::json tree_to_json(const TreeDocument& doc);
// Throws TreeError on a malformed document or a tree that fails validation.
TreeDocument tree_from_json(const nlohmann::json& doc);

// Nodes L<level>_<index> for every code (levels 1-based) and E_<entity> for
// every entity; edges run child to parent.
std::string tree_to_dot(const TreeDocument& doc);

// Picks the side when not given: item if it has a quantizer, else user.
// Throws PreconditionError when the checkpoint has no quantizer on that side.
TreeDocument extract_from_checkpoint(const std::filesystem::path& checkpoint,
                                     const std::optional<std::string>& side = std::nullopt,
                                     bool include_codebooks = true);

TreeDocument export_tree(const std::filesystem::path& checkpoint, const std::filesystem::path& json_out,
                         const std::filesystem::path& dot_out,
                         const std::optional<std::string>& side = std::nullopt);

struct InspectReport {
    std::string side;
    std::size_t entities = 0;
    std::vector<std::size_t> level_sizes;
    std::vector<double> utilization;
    std::optional<PurityReport> purity;
    std::size_t labeled = 0;
    std::size_t skipped_labels = 0;  // labels naming an unknown entity
};

// Labels file: tab-separated raw entity id and category label per line.
InspectReport inspect_codes(const std::filesystem::path& checkpoint,
                            const std::optional<std::filesystem::path>& labels = std::nullopt,
                            const std::optional<std::string>& side = std::nullopt);

std::string format_report(const InspectReport& report);

}  // namespace cage::app
