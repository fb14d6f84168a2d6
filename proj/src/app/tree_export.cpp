#include "cage/app/tree_export.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "cage/app/log.hpp"
#include "cage/app/run.hpp"
#include "cage/data/io.hpp"
#include "cage/error.hpp"

namespace cage::app {

using nlohmann::json;

json tree_to_json(const TreeDocument& doc) {
    const auto& t = doc.tree;
    json out;
    out["side"] = doc.side;
    out["level_sizes"] = t.level_sizes;
    out["parents"] = t.parents;
    json entities = json::array();
    for (std::size_t e = 0; e < t.paths.size(); ++e) {
        entities.push_back({{"id", e < doc.entities.size() ? doc.entities[e] : std::to_string(e)},
                            {"path", t.paths[e]}});
    }
    out["entities"] = std::move(entities);
    if (!t.codebooks.empty()) {
        json books = json::array();
        for (const auto& book : t.codebooks) {
            json rows = json::array();
            for (std::size_t r = 0; r < book.rows(); ++r) {
                const auto row = book.row(r);
                rows.push_back(std::vector<float>(row.begin(), row.end()));
            }
            books.push_back(std::move(rows));
        }
        out["codebooks"] = std::move(books);
    }
    return out;
}

TreeDocument tree_from_json(const json& doc) {
    TreeDocument out;
    try {
        out.side = doc.at("side").get<std::string>();
        out.tree.level_sizes = doc.at("level_sizes").get<std::vector<std::size_t>>();
        out.tree.parents = doc.at("parents").get<std::vector<std::vector<std::size_t>>>();
        for (const auto& e : doc.at("entities")) {
            out.entities.push_back(e.at("id").get<std::string>());
            out.tree.paths.push_back(e.at("path").get<std::vector<std::size_t>>());
        }
        if (doc.contains("codebooks")) {
            for (const auto& book : doc.at("codebooks")) {
                const auto rows = book.get<std::vector<std::vector<float>>>();
                if (rows.empty()) throw TreeError("empty codebook in tree document");
                Matrix m(rows.size(), rows[0].size());
                for (std::size_t r = 0; r < rows.size(); ++r) {
                    if (rows[r].size() != m.cols()) throw TreeError("ragged codebook in tree document");
                    std::copy(rows[r].begin(), rows[r].end(), m.row(r).begin());
                }
                out.tree.codebooks.push_back(std::move(m));
            }
        }
    } catch (const json::exception& e) {
        throw TreeError(std::string("malformed tree document: ") + e.what());
    }
    out.tree.validate();
    return out;
}

std::string tree_to_dot(const TreeDocument& doc) {
    const auto& t = doc.tree;
    std::ostringstream out;
    out << "digraph category_tree {\n  rankdir=BT;\n";
    for (std::size_t level = 0; level < t.depth(); ++level) {
        for (std::size_t k = 0; k < t.level_sizes[level]; ++k) {
            out << "  L" << level + 1 << '_' << k << ";\n";
        }
    }
    for (std::size_t e = 0; e < t.entity_count(); ++e) {
        out << "  E_" << e;
        if (e < doc.entities.size()) out << " [label=" << json(doc.entities[e]).dump() << "]";
        out << ";\n";
    }
    for (std::size_t e = 0; e < t.entity_count(); ++e) {
        out << "  E_" << e << " -> L1_" << t.paths[e][0] << ";\n";
    }
    for (std::size_t level = 0; level < t.parents.size(); ++level) {
        for (std::size_t k = 0; k < t.parents[level].size(); ++k) {
            out << "  L" << level + 1 << '_' << k << " -> L" << level + 2 << '_' << t.parents[level][k]
                << ";\n";
        }
    }
    out << "}\n";
    return out.str();
}

namespace {

std::pair<LoadedModel, std::string> load_with_side(const std::filesystem::path& checkpoint,
                                                   const std::optional<std::string>& side) {
    auto loaded = load_model(load_checkpoint(checkpoint));
    std::string chosen;
    if (side) {
        chosen = *side;
    } else {
        auto* item = loaded.model.side("item");
        chosen = item && item->quantizer ? "item" : "user";
    }
    auto* enc = loaded.model.side(chosen);
    if (!enc || !enc->quantizer) {
        throw PreconditionError("checkpoint " + checkpoint.string() + " has no " + chosen + " quantizer");
    }
    return {std::move(loaded), chosen};
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
}

}  // namespace

TreeDocument extract_from_checkpoint(const std::filesystem::path& checkpoint,
                                     const std::optional<std::string>& side, bool include_codebooks) {
    auto [loaded, chosen] = load_with_side(checkpoint, side);
    auto* enc = loaded.model.side(chosen);
    TreeDocument doc;
    doc.side = chosen;
    doc.tree = extract_tree(*enc->quantizer, enc->table.rows.value, include_codebooks);
    doc.entities = (chosen == "item" ? loaded.items : loaded.users).tokens();
    return doc;
}

TreeDocument export_tree(const std::filesystem::path& checkpoint, const std::filesystem::path& json_out,
                         const std::filesystem::path& dot_out, const std::optional<std::string>& side) {
    auto doc = extract_from_checkpoint(checkpoint, side);
    doc.tree.validate();
    write_text(json_out, tree_to_json(doc).dump() + "\n");
    write_text(dot_out, tree_to_dot(doc));
    return doc;
}

InspectReport inspect_codes(const std::filesystem::path& checkpoint,
                            const std::optional<std::filesystem::path>& labels,
                            const std::optional<std::string>& side) {
    auto [loaded, chosen] = load_with_side(checkpoint, side);
    const auto* enc = loaded.model.side(chosen);
    const auto& vocab = chosen == "item" ? loaded.items : loaded.users;

    InspectReport report;
    report.side = chosen;
    report.entities = enc->count();
    report.level_sizes = enc->quantizer->sizes();
    std::vector<QuantizationTrace> traces;
    traces.reserve(enc->count());
    for (std::size_t e = 0; e < enc->count(); ++e) traces.push_back(enc->quantizer->quantize(enc->table.row(e)));
    report.utilization = codebook_utilization(traces, *enc->quantizer);

    if (labels) {
        const std::string text = data::read_file(*labels);
        std::istringstream in(text);
        std::string line;
        std::vector<std::size_t> codes;
        std::vector<std::string> names;
        std::size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (line.empty()) continue;
            const auto tab = line.find('\t');
            if (tab == std::string::npos) throw ParseError(labels->string(), line_no, "expected <id>\\t<label>");
            const auto id = line.substr(0, tab);
            const auto index = vocab.find(id);
            if (!index) {
                log_warn("label for unknown " + chosen + " '" + id + "' skipped");
                ++report.skipped_labels;
                continue;
            }
            codes.push_back(traces[*index].levels[0].index);
            names.push_back(line.substr(tab + 1));
        }
        report.labeled = codes.size();
        if (!codes.empty()) report.purity = code_purity(codes, names);
    }
    return report;
}

std::string format_report(const InspectReport& r) {
    std::ostringstream out;
    char buf[128];
    out << "side " << r.side << ": " << r.entities << " entities\n";
    for (std::size_t i = 0; i < r.utilization.size(); ++i) {
        const auto used = static_cast<std::size_t>(std::lround(r.utilization[i] * double(r.level_sizes[i])));
        std::snprintf(buf, sizeof buf, "level %zu: %zu/%zu codes used (%.1f%%)\n", i + 1, used,
                      r.level_sizes[i], 100.0 * r.utilization[i]);
        out << buf;
    }
    if (r.purity) {
        const auto& p = *r.purity;
        const double n = p.categories == 0 ? 1.0 : double(p.categories);
        out << "labels: " << r.labeled << " entities, " << r.skipped_labels << " skipped\n";
        out << "categories: " << p.categories << "\n";
        std::snprintf(buf, sizeof buf, "exclusive (1 code): %zu (%.1f%%)\n", p.exclusive, 100.0 * p.exclusive / n);
        out << buf;
        std::snprintf(buf, sizeof buf, "under 10 codes: %zu (%.1f%%)\n", p.under_10, 100.0 * p.under_10 / n);
        out << buf;
        std::snprintf(buf, sizeof buf, "under 20 codes: %zu (%.1f%%)\n", p.under_20, 100.0 * p.under_20 / n);
        out << buf;
        std::snprintf(buf, sizeof buf, "under 100 codes: %zu (%.1f%%)\n", p.under_100, 100.0 * p.under_100 / n);
        out << buf;
        std::snprintf(buf, sizeof buf, "majority purity: %.4f\n", p.majority_purity);
        out << buf;
    }
    return out.str();
}

}  // namespace cage::app
