// Command-line front end: train, evaluate, export-tree, inspect-codes.

#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>

#include "cage/app/config.hpp"
#include "cage/app/run.hpp"
#include "cage/app/tree_export.hpp"

namespace {

using namespace cage::app;
using nlohmann::json;

void print_report(const cage::MetricReport& report, const std::string& split) {
    for (const auto& [metric, value] : report.values) {
        std::cout << json{{"split", split}, {"metric", metric}, {"value", value}, {"units", report.units}}.dump()
                  << '\n';
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Category tree learning for ID-based recommenders"};
    app.require_subcommand(1);

    std::string config_path;
    auto* train = app.add_subcommand("train", "train a model from a JSON config");
    train->add_option("--config", config_path, "config file")->required()->check(CLI::ExistingFile);

    std::string checkpoint;
    std::string split = "test";
    std::optional<std::uint64_t> eval_seed;
    std::optional<std::string> data_path;
    auto* evaluate = app.add_subcommand("evaluate", "evaluate a checkpoint on the validation or test split");
    evaluate->add_option("--checkpoint", checkpoint, "checkpoint file")->required()->check(CLI::ExistingFile);
    evaluate->add_option("--split", split, "val or test")->check(CLI::IsMember({"val", "test"}));
    evaluate->add_option("--eval-seed", eval_seed, "override the seed for sampled negatives");
    evaluate->add_option("--data", data_path, "override the data path");

    std::string json_out, dot_out;
    std::optional<std::string> side;
    auto* export_cmd = app.add_subcommand("export-tree", "write the learned category tree as JSON and DOT");
    export_cmd->add_option("--checkpoint", checkpoint, "checkpoint file")->required()->check(CLI::ExistingFile);
    export_cmd->add_option("--json", json_out, "JSON output path")->required();
    export_cmd->add_option("--dot", dot_out, "DOT output path")->required();
    export_cmd->add_option("--side", side, "user or item")->check(CLI::IsMember({"user", "item"}));

    std::optional<std::string> labels;
    auto* inspect = app.add_subcommand("inspect-codes", "codebook utilization and label purity");
    inspect->add_option("--checkpoint", checkpoint, "checkpoint file")->required()->check(CLI::ExistingFile);
    inspect->add_option("--labels", labels, "TSV of <entity id>\\t<category>")->check(CLI::ExistingFile);
    inspect->add_option("--side", side, "user or item")->check(CLI::IsMember({"user", "item"}));

    CLI11_PARSE(app, argc, argv);

    try {
        if (*train) {
            const auto config = load_config(config_path);
            const auto result = run_train(config);
            if (result.last_validation) print_report(*result.last_validation, "val");
            std::cerr << "checkpoint: " << config.checkpoint_path().string() << "\nlog: "
                      << config.log_path().string() << '\n';
        } else if (*evaluate) {
            json overrides = json::object();
            if (eval_seed) overrides["eval"]["seed"] = *eval_seed;
            if (data_path) overrides["data"]["path"] = *data_path;
            print_report(run_evaluate(checkpoint, parse_split(split), overrides), split);
        } else if (*export_cmd) {
            const auto doc = export_tree(checkpoint, json_out, dot_out, side);
            std::cerr << doc.side << " tree: " << doc.tree.entity_count() << " entities, "
                      << doc.tree.depth() << " levels\n";
        } else if (*inspect) {
            std::cout << format_report(inspect_codes(checkpoint, labels, side));
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
