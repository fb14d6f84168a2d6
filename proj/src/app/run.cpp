#include "cage/app/run.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>

#include "cage/app/log.hpp"
#include "cage/data/io.hpp"
#include "cage/error.hpp"

namespace cage::app {

using nlohmann::json;

PreparedData prepare_interactions(const TrainConfig& config,
                                  const std::vector<data::InteractionRecord>& records) {
    auto indexed = data::index_interactions(records);
    PreparedData out;
    out.task = config.task;
    out.positives = data::positive_items(indexed);
    out.interactions = data::leave_one_out(indexed);
    out.train_positives.assign(indexed.users.size(), {});
    for (const auto& x : out.interactions.train) {
        if (x.label == 1) out.train_positives[x.user].push_back(x.item);
    }
    for (auto& items : out.train_positives) {
        std::sort(items.begin(), items.end());
        items.erase(std::unique(items.begin(), items.end()), items.end());
    }
    out.users = std::move(indexed.users);
    out.items = std::move(indexed.items);
    return out;
}

PreparedData prepare_lists(const TrainConfig& config, const std::vector<data::ListRecord>& lists) {
    const auto filtered = data::preprocess_lists(lists, config.data.filter);
    if (filtered.empty()) throw ConfigError("no list survives preprocessing");
    auto rng = SeededRng(config.model.seed).stream("split");
    auto completion = data::build_completion_data(filtered, rng);
    PreparedData out;
    out.task = config.task;
    out.items = std::move(completion.items);
    out.users.freeze();
    out.lists = std::move(completion.pairs);
    return out;
}

PreparedData prepare_data(const TrainConfig& config) {
    if (config.task == Task::ListCompletion) {
        const auto file = data::load_lists(config.data.path);
        if (file.skipped_empty > 0) {
            log_warn(std::to_string(file.skipped_empty) + " empty lines skipped in " + config.data.path);
        }
        return prepare_lists(config, file.lists);
    }
    data::LoadOptions opts{data::parse_interaction_format(config.data.format),
                           config.data.rating_threshold};
    return prepare_interactions(config, data::load_interactions(config.data.path, opts));
}

ModelBundle::ModelBundle(const TrainConfig& config, std::size_t users, std::size_t items)
    : task_(config.task) {
    const SeededRng rng(config.model.seed);
    const auto options = config.model_options();
    switch (task_) {
        case Task::Cf: model_ = std::make_unique<CfModel>(rng, users, items, options); break;
        case Task::Ctr: model_ = std::make_unique<CtrModel>(rng, users, items, options); break;
        case Task::ListCompletion: model_ = std::make_unique<SeqModel>(rng, items, options); break;
    }
}

std::vector<Parameter*> ModelBundle::parameters() {
    std::vector<Parameter*> out;
    std::visit([&](auto& m) { m->collect_parameters(out); }, model_);
    return out;
}

const PairScorer& ModelBundle::scorer() const {
    if (const auto* cf = std::get_if<std::unique_ptr<CfModel>>(&model_)) return **cf;
    if (const auto* ctr = std::get_if<std::unique_ptr<CtrModel>>(&model_)) return **ctr;
    throw PreconditionError("list-completion models have no pair scorer");
}

CfModel* ModelBundle::cf() {
    auto* p = std::get_if<std::unique_ptr<CfModel>>(&model_);
    return p ? p->get() : nullptr;
}

CtrModel* ModelBundle::ctr() {
    auto* p = std::get_if<std::unique_ptr<CtrModel>>(&model_);
    return p ? p->get() : nullptr;
}

SeqModel* ModelBundle::seq() {
    auto* p = std::get_if<std::unique_ptr<SeqModel>>(&model_);
    return p ? p->get() : nullptr;
}

const SeqModel* ModelBundle::seq() const {
    auto* p = std::get_if<std::unique_ptr<SeqModel>>(&model_);
    return p ? p->get() : nullptr;
}

EntityEncoder* ModelBundle::side(std::string_view name) {
    if (name == "item") {
        if (auto* m = cf()) return &m->items;
        if (auto* m = ctr()) return &m->items;
        return &seq()->items;
    }
    if (name == "user") {
        if (auto* m = cf()) return &m->users;
        if (auto* m = ctr()) return &m->users;
        return nullptr;
    }
    throw PreconditionError("unknown side '" + std::string(name) + "' (expected user or item)");
}

json to_json(const LogEntry& e) {
    return {{"epoch", e.epoch}, {"split", e.split}, {"metric", e.metric}, {"value", e.value},
            {"wall_ms", e.wall_ms}};
}

Split parse_split(std::string_view text) {
    if (text == "val" || text == "validation") return Split::Validation;
    if (text == "test") return Split::Test;
    throw ConfigError("unknown split '" + std::string(text) + "' (expected val or test)");
}

MetricReport evaluate_model(ModelBundle& model, const PreparedData& data, const TrainConfig& config,
                            Split split) {
    if (config.task == Task::ListCompletion) {
        const auto& pairs = split == Split::Validation ? data.lists.validation : data.lists.test;
        return evaluate_completion(*model.seq(), pairs, config.eval.ks, config.hit_mode());
    }
    const auto& units = split == Split::Validation ? data.interactions.validation : data.interactions.test;
    RankingProtocol protocol{config.eval.n_negatives, config.eval.ks, config.hit_mode()};
    return evaluate_ranking(model.scorer(), units, data.positives, protocol,
                            SeededRng(config.eval_seed()));
}

namespace {

struct Unit {
    std::size_t a = 0;  // user, or list index
    std::size_t b = 0;  // item, or target item
    int label = 1;
};

std::vector<Unit> epoch_units(const TrainConfig& config, const PreparedData& data, const SeededRng& root,
                              std::size_t epoch) {
    std::vector<Unit> units;
    switch (config.task) {
        case Task::Cf:
            for (const auto& x : data.interactions.train) {
                if (x.label == 1) units.push_back({x.user, x.item, 1});
            }
            break;
        case Task::Ctr: {
            auto neg_rng = root.stream("negatives", epoch);
            for (const auto& x : data.interactions.train) {
                units.push_back({x.user, x.item, x.label});
                if (x.label != 1) continue;
                const auto negs = data::sample_negatives(config.data.train_negatives, data.items.size(),
                                                         data.train_positives[x.user], neg_rng);
                for (std::size_t n : negs) units.push_back({x.user, n, 0});
            }
            break;
        }
        case Task::ListCompletion:
            for (std::size_t l = 0; l < data.lists.train.size(); ++l) {
                for (std::size_t t : data.lists.train[l].target) units.push_back({l, t, 1});
            }
            break;
    }
    auto shuffle_rng = root.stream("shuffle", epoch);
    shuffle_rng.shuffle(std::span<Unit>(units));
    return units;
}

class LogWriter {
public:
    LogWriter(const TrainConfig& config, bool enabled) : enabled_(enabled) {
        if (!enabled_) return;
        const auto path = config.log_path();
        if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
        out_.open(path, std::ios::trunc);
        if (!out_) throw std::runtime_error("cannot write log " + path.string());
        out_ << json{{"config", to_json(config)}}.dump() << '\n';
        out_.flush();
    }

    void write(const LogEntry& e) {
        if (!enabled_) return;
        out_ << to_json(e).dump() << '\n';
        out_.flush();
    }

private:
    bool enabled_;
    std::ofstream out_;
};

}  // namespace

json checkpoint_metadata(const TrainConfig& config, std::size_t epoch, const PreparedData& data) {
    return {{"config", to_json(config)},
            {"task", to_string(config.task)},
            {"epoch", epoch},
            {"seed_state", {{"seed", config.model.seed}, {"eval_seed", config.eval_seed()}, {"next_epoch", epoch + 1}}},
            {"vocabularies", {{"users", data.users.tokens()}, {"items", data.items.tokens()}}}};
}

RunResult run_train(const TrainConfig& config, const RunOptions& options) {
    validate(config);
    return train_prepared(config, prepare_data(config), options);
}

RunResult train_prepared(const TrainConfig& config, PreparedData data, const RunOptions& options) {
    validate(config);
    const auto start = std::chrono::steady_clock::now();
    auto wall_ms = [&] {
        if (!config.output.record_wall_time) return 0.0;
        return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    };

    RunResult result{ModelBundle(config, data.users.size(), data.items.size()), std::move(data), {}, {}};
    ModelBundle& model = result.model;
    const PreparedData& d = result.data;
    auto params = model.parameters();
    Adam optimizer(params, config.model.lr);
    LogWriter log(config, options.write_files);
    const SeededRng root(config.model.seed);
    const std::size_t batch_size = config.batch_size();

    for (std::size_t epoch = 1; epoch <= config.model.epochs; ++epoch) {
        const auto units = epoch_units(config, d, root, epoch);
        auto neg_rng = root.stream("bpr-negatives", epoch);
        double sum_total = 0.0, sum_rec = 0.0, sum_cage = 0.0;
        std::size_t batch_index = 0;
        for (std::size_t begin = 0; begin < units.size(); begin += batch_size, ++batch_index) {
            const std::size_t end = std::min(units.size(), begin + batch_size);
            const float scale = 1.0f / static_cast<float>(end - begin);
            optimizer.zero_grad();
            double batch_total = 0.0;
            for (std::size_t i = begin; i < end; ++i) {
                const Unit& u = units[i];
                StepLoss loss;
                switch (config.task) {
                    case Task::Cf: {
                        const auto neg = data::sample_negatives(1, d.items.size(), d.train_positives[u.a],
                                                                neg_rng)[0];
                        loss = model.cf()->bpr_step(u.a, u.b, neg, scale);
                        break;
                    }
                    case Task::Ctr: loss = model.ctr()->step(u.a, u.b, u.label, scale); break;
                    case Task::ListCompletion:
                        loss = model.seq()->step(d.lists.train[u.a].input, u.b, scale);
                        break;
                }
                batch_total += loss.total;
                sum_rec += loss.rec;
                sum_cage += loss.cage;
            }
            const std::string where =
                "epoch " + std::to_string(epoch) + ", batch " + std::to_string(batch_index);
            if (!std::isfinite(batch_total)) throw DivergenceError("non-finite loss at " + where);
            try {
                optimizer.step();
            } catch (const DivergenceError& e) {
                throw DivergenceError(std::string(e.what()) + " at " + where);
            }
            sum_total += batch_total;
            if (options.on_batch) options.on_batch(epoch, batch_index, batch_total / double(end - begin));
        }

        const double n = units.empty() ? 1.0 : double(units.size());
        for (const auto& [metric, value] :
             {std::pair{"loss", sum_total / n}, {"rec_loss", sum_rec / n}, {"cage_loss", sum_cage / n}}) {
            LogEntry e{epoch, "train", metric, value, wall_ms()};
            log.write(e);
            result.log.push_back(e);
        }
        const bool has_validation = config.task == Task::ListCompletion
                                        ? !d.lists.validation.empty()
                                        : !d.interactions.validation.empty();
        if (has_validation) {
            auto report = evaluate_model(model, d, config, Split::Validation);
            for (const auto& [metric, value] : report.values) {
                LogEntry e{epoch, "val", metric, value, wall_ms()};
                log.write(e);
                result.log.push_back(e);
            }
            log_info("epoch " + std::to_string(epoch) + ": loss " + std::to_string(sum_total / n));
            result.last_validation = std::move(report);
        }
    }

    if (options.write_files) {
        const auto meta = checkpoint_metadata(config, config.model.epochs, d);
        const std::vector<const Parameter*> tensors(params.begin(), params.end());
        save_checkpoint(config.checkpoint_path(), meta, tensors);
    }
    return result;
}

LoadedModel load_model(const Checkpoint& checkpoint) {
    TrainConfig config;
    data::Vocabulary users, items;
    try {
        config = parse_config(checkpoint.metadata.at("config"));
        users = data::Vocabulary(checkpoint.metadata.at("vocabularies").at("users").get<std::vector<std::string>>());
        items = data::Vocabulary(checkpoint.metadata.at("vocabularies").at("items").get<std::vector<std::string>>());
    } catch (const json::exception& e) {
        throw CorruptCheckpointError(std::string("checkpoint metadata: ") + e.what());
    }
    LoadedModel out{config, ModelBundle(config, users.size(), items.size()), std::move(users),
                    std::move(items)};
    restore_parameters(checkpoint, out.model.parameters());
    return out;
}

MetricReport run_evaluate(const std::filesystem::path& checkpoint_path, Split split, const json& overrides) {
    const auto checkpoint = load_checkpoint(checkpoint_path);
    auto loaded = load_model(checkpoint);
    if (!overrides.empty()) {
        json snapshot = to_json(loaded.config);
        snapshot.merge_patch(overrides);
        auto patched = parse_config(snapshot);
        // Shapes must not change under an override.
        if (to_json(patched)["model"] != to_json(loaded.config)["model"] ||
            to_json(patched)["cage"] != to_json(loaded.config)["cage"] || patched.task != loaded.config.task) {
            throw ConfigError("evaluate overrides may not change the task, model or cage sections");
        }
        loaded.config = patched;
    }
    const auto data = prepare_data(loaded.config);
    if (data.users.tokens() != loaded.users.tokens() || data.items.tokens() != loaded.items.tokens()) {
        throw ConfigError("data at " + loaded.config.data.path +
                          " does not match the vocabularies stored in the checkpoint");
    }
    return evaluate_model(loaded.model, data, loaded.config, split);
}

}  // namespace cage::app
