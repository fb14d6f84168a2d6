#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "cage/data/lists.hpp"
#include "cage/eval.hpp"
#include "cage/models.hpp"
#include "cage/quantizer.hpp"

namespace cage::app {

enum class Task { Cf, Ctr, ListCompletion };

std::string_view to_string(Task task);
Task parse_task(std::string_view text);

struct DataConfig {
    std::string path;
    std::string format = "generic-tsv";  // generic-tsv | movielens-100k | lists
    int rating_threshold = 4;
    data::ListFilter filter;
    // CTR only: unobserved items drawn per training positive each epoch, label 0.
    std::size_t train_negatives = 1;
};

struct CageConfig {
    bool user = false;
    bool item = false;
    std::vector<std::size_t> sizes;  // v1 > v2 > ... > vH
    float alpha = 1.0f;
    float beta = 1.0f;
    float omega_q = 1.0f;
    float omega_c = 1.0f;
    FusionMode fusion = FusionMode::Average;
    float init_std = 0.01f;
};

struct ModelConfig {
    std::size_t dim = 64;
    std::vector<std::size_t> hidden{64};
    float lr = 1e-3f;
    std::size_t batch_size = 0;  // 0: per-task default
    std::size_t epochs = 10;
    std::uint64_t seed = 0;
    float init_std = 0.01f;
};

struct EvalConfig {
    std::vector<std::size_t> ks{5, 10};
    std::size_t n_negatives = 99;
    std::optional<HitMode> hit_mode;     // default: single for cf/ctr, multi for lists
    std::optional<std::uint64_t> seed;   // default: model seed
};

struct OutputConfig {
    std::string dir = ".";
    std::string log = "train.jsonl";
    std::string checkpoint = "model.ckpt";
    // Off by default so that two runs of one config write identical logs.
    bool record_wall_time = false;
};

struct TrainConfig {
    Task task = Task::Cf;
    DataConfig data;
    CageConfig cage;
    ModelConfig model;
    EvalConfig eval;
    OutputConfig output;

    std::size_t batch_size() const;
    HitMode hit_mode() const;
    std::uint64_t eval_seed() const;
    ModelOptions model_options() const;
    std::filesystem::path log_path() const;
    std::filesystem::path checkpoint_path() const;
};

/// Reads a config document. Unknown keys anywhere are errors, as are
/// non-decreasing codebook sizes, negative weights, a missing seed and any
/// value of the wrong type. Relative paths are kept as written.
TrainConfig parse_config(const nlohmann::json& doc);

// Parses the file and resolves relative data/output paths against the
// config file's directory.
TrainConfig load_config(const std::filesystem::path& path);

nlohmann::json to_json(const TrainConfig& config);

void validate(const TrainConfig& config);

}  // namespace cage::app
