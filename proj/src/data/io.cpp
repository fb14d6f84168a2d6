#include "cage/data/io.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "cage/error.hpp"

namespace cage::data {

namespace {

std::vector<std::string_view> split_tabs(std::string_view line) {
    std::vector<std::string_view> fields;
    std::size_t start = 0;
    while (true) {
        const std::size_t tab = line.find('\t', start);
        if (tab == std::string_view::npos) {
            fields.push_back(line.substr(start));
            break;
        }
        fields.push_back(line.substr(start, tab - start));
        start = tab + 1;
    }
    return fields;
}

template <typename T>
bool parse_number(std::string_view text, T& out) {
    const char* first = text.data();
    const char* last = text.data() + text.size();
    const auto [ptr, ec] = std::from_chars(first, last, out);
    return ec == std::errc() && ptr == last;
}

// Iterates lines, stripping a trailing '\r'.
template <typename Fn>
void for_each_line(std::string_view text, Fn&& fn) {
    std::size_t line_no = 0;
    std::size_t start = 0;
    while (start < text.size()) {
        std::size_t end = text.find('\n', start);
        if (end == std::string_view::npos) end = text.size();
        std::string_view line = text.substr(start, end - start);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        fn(++line_no, line);
        start = end + 1;
    }
}

bool is_blank(std::string_view line) {
    return line.find_first_not_of(" \t") == std::string_view::npos;
}

}  // namespace

InteractionFormat parse_interaction_format(std::string_view text) {
    if (text == "generic-tsv") return InteractionFormat::GenericTsv;
    if (text == "movielens-100k") return InteractionFormat::MovieLens100k;
    throw ConfigError("unknown interaction format '" + std::string(text) + "'");
}

std::string_view to_string(InteractionFormat format) {
    return format == InteractionFormat::GenericTsv ? "generic-tsv" : "movielens-100k";
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open '" + path.string() + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

std::vector<InteractionRecord> parse_interactions(std::string_view text, const LoadOptions& options,
                                                  const std::string& source) {
    std::vector<InteractionRecord> records;
    for_each_line(text, [&](std::size_t line_no, std::string_view line) {
        if (is_blank(line)) return;
        const auto fields = split_tabs(line);
        InteractionRecord rec;
        if (options.format == InteractionFormat::MovieLens100k) {
            if (fields.size() != 4) {
                throw ParseError(source, line_no,
                                 "expected 4 tab-separated fields, found " +
                                     std::to_string(fields.size()));
            }
            int rating = 0;
            std::int64_t ts = 0;
            if (!parse_number(fields[2], rating)) throw ParseError(source, line_no, "bad rating");
            if (!parse_number(fields[3], ts)) throw ParseError(source, line_no, "bad timestamp");
            rec.label = rating >= options.rating_threshold ? 1 : 0;
            rec.timestamp = ts;
        } else {
            if (fields.size() < 2 || fields.size() > 4) {
                throw ParseError(source, line_no,
                                 "expected 2 to 4 tab-separated fields, found " +
                                     std::to_string(fields.size()));
            }
            if (fields.size() >= 3) {
                int label = 0;
                if (!parse_number(fields[2], label) || (label != 0 && label != 1)) {
                    throw ParseError(source, line_no, "label must be 0 or 1");
                }
                rec.label = label;
            }
            if (fields.size() == 4) {
                std::int64_t ts = 0;
                if (!parse_number(fields[3], ts)) throw ParseError(source, line_no, "bad timestamp");
                rec.timestamp = ts;
            }
        }
        if (fields[0].empty() || fields[1].empty()) throw ParseError(source, line_no, "empty id");
        rec.user = std::string(fields[0]);
        rec.item = std::string(fields[1]);
        records.push_back(std::move(rec));
    });
    if (records.empty()) throw ParseError(source, 0, "no interactions found");
    return records;
}

std::vector<InteractionRecord> load_interactions(const std::filesystem::path& path,
                                                 const LoadOptions& options) {
    return parse_interactions(read_file(path), options, path.string());
}

ListFile parse_lists(std::string_view text) {
    ListFile out;
    for_each_line(text, [&](std::size_t, std::string_view line) {
        ListRecord rec;
        std::size_t pos = 0;
        while (pos < line.size()) {
            const std::size_t begin = line.find_first_not_of(" \t", pos);
            if (begin == std::string_view::npos) break;
            std::size_t end = line.find_first_of(" \t", begin);
            if (end == std::string_view::npos) end = line.size();
            rec.items.emplace_back(line.substr(begin, end - begin));
            pos = end;
        }
        if (rec.items.empty()) {
            ++out.skipped_empty;
            return;
        }
        out.lists.push_back(std::move(rec));
    });
    return out;
}

ListFile load_lists(const std::filesystem::path& path) { return parse_lists(read_file(path)); }

void write_lists(const std::filesystem::path& path, const std::vector<ListRecord>& lists) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
    for (const auto& list : lists) {
        for (std::size_t i = 0; i < list.items.size(); ++i) {
            if (i) out << ' ';
            out << list.items[i];
        }
        out << '\n';
    }
}

}  // namespace cage::data
