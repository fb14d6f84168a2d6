#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace cage::data {

enum class InteractionFormat { GenericTsv, MovieLens100k };

InteractionFormat parse_interaction_format(std::string_view text);
std::string_view to_string(InteractionFormat format);

struct InteractionRecord {
    std::string user;
    std::string item;
    std::optional<int> label;
    std::optional<std::int64_t> timestamp;
};

struct ListRecord {
    std::vector<std::string> items;

    friend bool operator==(const ListRecord&, const ListRecord&) = default;
};

struct LoadOptions {
    InteractionFormat format = InteractionFormat::GenericTsv;
    // MovieLens ratings at or above this become label 1, the rest label 0.
    int rating_threshold = 4;
};

/// Reads one interaction per line.
///
/// generic-tsv: `user \t item [\t label [\t timestamp]]`, label in {0, 1}.
/// movielens-100k: `user \t item \t rating \t timestamp` (the u.data layout).
/// CRLF line endings and blank lines are tolerated. Malformed lines raise
/// ParseError carrying the 1-based line number; a file without records is an
/// error too.
std::vector<InteractionRecord> load_interactions(const std::filesystem::path& path,
                                                 const LoadOptions& options = {});
std::vector<InteractionRecord> parse_interactions(std::string_view text, const LoadOptions& options,
                                                  const std::string& source = "<memory>");

struct ListFile {
    std::vector<ListRecord> lists;
    std::size_t skipped_empty = 0;
};

// One list per line, items separated by whitespace. Empty lines are skipped
// and counted.
ListFile load_lists(const std::filesystem::path& path);
ListFile parse_lists(std::string_view text);
void write_lists(const std::filesystem::path& path, const std::vector<ListRecord>& lists);

// Whole-file read; throws std::runtime_error naming the path on failure.
std::string read_file(const std::filesystem::path& path);

}  // namespace cage::data
