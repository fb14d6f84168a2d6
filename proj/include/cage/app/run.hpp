#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <json.hpp>

#include "cage/app/checkpoint.hpp"
#include "cage/app/config.hpp"
#include "cage/data/interactions.hpp"
#include "cage/data/lists.hpp"
#include "cage/eval.hpp"
#include "cage/models.hpp"

namespace cage::app {

struct PreparedData {
    Task task = Task::Cf;
    data::Vocabulary users;
    data::Vocabulary items;
    // cf / ctr
    data::Partition<data::Interaction> interactions;
    std::vector<std::vector<std::size_t>> positives;        // every positive, for evaluation
    std::vector<std::vector<std::size_t>> train_positives;  // train split only
    // list-completion
    data::Partition<data::ListPair> lists;
};

PreparedData prepare_interactions(const TrainConfig& config,
                                  const std::vector<data::InteractionRecord>& records);
PreparedData prepare_lists(const TrainConfig& config, const std::vector<data::ListRecord>& lists);
// Loads config.data.path and dispatches on the task.
PreparedData prepare_data(const TrainConfig& config);

class ModelBundle {
public:
    ModelBundle(const TrainConfig& config, std::size_t users, std::size_t items);

    Task task() const { return task_; }
    std::vector<Parameter*> parameters();
    // cf / ctr only.
    const PairScorer& scorer() const;
    CfModel* cf();
    CtrModel* ctr();
    SeqModel* seq();
    const SeqModel* seq() const;
    // "user" or "item"; nullptr when the model has no such side.
    EntityEncoder* side(std::string_view name);

private:
    Task task_;
    std::variant<std::unique_ptr<CfModel>, std::unique_ptr<CtrModel>, std::unique_ptr<SeqModel>> model_;
};

struct LogEntry {
    std::size_t epoch = 0;
    std::string split;
    std::string metric;
    double value = 0.0;
    double wall_ms = 0.0;
};

nlohmann::json to_json(const LogEntry& entry);

enum class Split { Validation, Test };
Split parse_split(std::string_view text);

MetricReport evaluate_model(ModelBundle& model, const PreparedData& data, const TrainConfig& config,
                            Split split);

struct RunOptions {
    // Called after every optimizer step with the batch's mean total loss.
    std::function<void(std::size_t epoch, std::size_t batch, double loss)> on_batch;
    bool write_files = true;
};

struct RunResult {
    ModelBundle model;
    PreparedData data;
    std::vector<LogEntry> log;
    std::optional<MetricReport> last_validation;
};

/// Shuffled mini-batch training for config.model.epochs epochs with Adam,
/// validation after each epoch, then a checkpoint. Every random choice comes
/// from a named sub-stream of the model seed, so a config fully determines
/// the outputs. Throws DivergenceError naming the epoch and batch when a loss
/// or gradient turns non-finite.
RunResult run_train(const TrainConfig& config, const RunOptions& options = {});
RunResult train_prepared(const TrainConfig& config, PreparedData data, const RunOptions& options = {});

nlohmann::json checkpoint_metadata(const TrainConfig& config, std::size_t epoch,
                                   const PreparedData& data);

struct LoadedModel {
    TrainConfig config;
    ModelBundle model;
    data::Vocabulary users;
    data::Vocabulary items;
};

// Rebuilds the model described by a checkpoint's metadata and restores its
// tensors.
LoadedModel load_model(const Checkpoint& checkpoint);

/// Restores a checkpoint, re-prepares its data (optionally with config
/// overrides merged into the snapshot) and evaluates one split. Fails when the
/// data no longer matches the checkpoint's vocabularies.
MetricReport run_evaluate(const std::filesystem::path& checkpoint, Split split,
                          const nlohmann::json& overrides = nlohmann::json::object());

}  // namespace cage::app
