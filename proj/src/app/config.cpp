#include "cage/app/config.hpp"

#include <cstdint>
#include <set>

#include "cage/data/io.hpp"
#include "cage/error.hpp"

namespace cage::app {

using nlohmann::json;

std::string_view to_string(Task task) {
    switch (task) {
        case Task::Cf: return "cf";
        case Task::Ctr: return "ctr";
        case Task::ListCompletion: return "list-completion";
    }
    return "?";
}

Task parse_task(std::string_view text) {
    if (text == "cf") return Task::Cf;
    if (text == "ctr") return Task::Ctr;
    if (text == "list-completion") return Task::ListCompletion;
    throw ConfigError("unknown task '" + std::string(text) + "'");
}

namespace {

// Reads fields off one JSON object and remembers which keys were consumed so
// leftovers can be reported.
class Section {
public:
    Section(const json& doc, std::string path) : doc_(doc), path_(std::move(path)) {
        if (!doc_.is_object()) throw ConfigError(path_ + " must be an object");
    }

    template <typename T>
    void read(const std::string& key, T& out) {
        seen_.insert(key);
        if (!doc_.contains(key)) return;
        out = get<T>(key);
    }

    template <typename T>
    T require(const std::string& key) {
        seen_.insert(key);
        if (!doc_.contains(key)) throw ConfigError(where(key) + " is required");
        return get<T>(key);
    }

    template <typename T>
    std::optional<T> optional(const std::string& key) {
        seen_.insert(key);
        if (!doc_.contains(key)) return std::nullopt;
        return get<T>(key);
    }

    Section child(const std::string& key) {
        seen_.insert(key);
        static const json empty = json::object();
        return Section(doc_.contains(key) ? doc_.at(key) : empty, where(key));
    }

    void finish() const {
        for (const auto& [key, value] : doc_.items()) {
            if (!seen_.count(key)) throw ConfigError("unknown config key " + where(key));
        }
    }

    std::string where(const std::string& key) const {
        return path_.empty() ? key : path_ + "." + key;
    }

private:
    template <typename T>
    T get(const std::string& key) const {
        const json& v = doc_.at(key);
        try {
            if constexpr (std::is_same_v<T, bool>) {
                if (!v.is_boolean()) throw ConfigError(where(key) + " must be a boolean");
            } else if constexpr (std::is_integral_v<T>) {
                if (!v.is_number_integer()) throw ConfigError(where(key) + " must be an integer");
                if (std::is_unsigned_v<T> && v.get<std::int64_t>() < 0 && !v.is_number_unsigned()) {
                    throw ConfigError(where(key) + " must be non-negative");
                }
            } else if constexpr (std::is_floating_point_v<T>) {
                if (!v.is_number()) throw ConfigError(where(key) + " must be a number");
            } else if constexpr (std::is_same_v<T, std::string>) {
                if (!v.is_string()) throw ConfigError(where(key) + " must be a string");
            } else if constexpr (std::is_same_v<T, std::vector<std::size_t>>) {
                if (!v.is_array()) throw ConfigError(where(key) + " must be an array");
                for (const auto& x : v) {
                    if (!x.is_number_integer() || (!x.is_number_unsigned() && x.get<std::int64_t>() < 0)) {
                        throw ConfigError(where(key) + " entries must be non-negative integers");
                    }
                }
            }
            return v.get<T>();
        } catch (const json::exception& e) {
            throw ConfigError(where(key) + ": " + e.what());
        }
    }

    const json& doc_;
    std::string path_;
    std::set<std::string> seen_;
};

std::vector<std::size_t> read_sizes(Section& s, const std::string& key,
                                    std::vector<std::size_t> fallback) {
    s.read(key, fallback);
    return fallback;
}

}  // namespace

std::size_t TrainConfig::batch_size() const {
    if (model.batch_size != 0) return model.batch_size;
    switch (task) {
        case Task::Ctr: return 5000;
        case Task::ListCompletion: return 256;
        case Task::Cf: return 256;
    }
    return 256;
}

HitMode TrainConfig::hit_mode() const {
    if (eval.hit_mode) return *eval.hit_mode;
    return task == Task::ListCompletion ? HitMode::Multi : HitMode::Single;
}

std::uint64_t TrainConfig::eval_seed() const { return eval.seed.value_or(model.seed); }

ModelOptions TrainConfig::model_options() const {
    ModelOptions o;
    o.dim = model.dim;
    o.hidden = model.hidden;
    o.init_std = model.init_std;
    o.omega_q = cage.omega_q;
    o.omega_c = cage.omega_c;
    QuantizerOptions q;
    q.sizes = cage.sizes;
    q.dim = model.dim;
    q.alpha = cage.alpha;
    q.beta = cage.beta;
    q.fusion = cage.fusion;
    q.init_std = cage.init_std;
    if (cage.user && task != Task::ListCompletion) o.user_cage = q;
    if (cage.item) o.item_cage = q;
    return o;
}

std::filesystem::path TrainConfig::log_path() const {
    return std::filesystem::path(output.dir) / output.log;
}

std::filesystem::path TrainConfig::checkpoint_path() const {
    return std::filesystem::path(output.dir) / output.checkpoint;
}

TrainConfig parse_config(const json& doc) {
    TrainConfig c;
    Section root(doc, "");
    c.task = parse_task(root.require<std::string>("task"));

    Section data = root.child("data");
    c.data.path = data.require<std::string>("path");
    data.read("format", c.data.format);
    data.read("rating_threshold", c.data.rating_threshold);
    data.read("min_freq", c.data.filter.min_freq);
    data.read("min_len", c.data.filter.min_len);
    data.read("max_len", c.data.filter.max_len);
    data.read("train_negatives", c.data.train_negatives);
    data.finish();

    Section cage = root.child("cage");
    cage.read("user", c.cage.user);
    cage.read("item", c.cage.item);
    c.cage.sizes = read_sizes(cage, "sizes", {});
    std::size_t depth = c.cage.sizes.size();
    cage.read("depth", depth);
    if (depth != c.cage.sizes.size()) {
        throw ConfigError("cage.depth is " + std::to_string(depth) + " but cage.sizes has " +
                          std::to_string(c.cage.sizes.size()) + " entries");
    }
    cage.read("alpha", c.cage.alpha);
    cage.read("beta", c.cage.beta);
    cage.read("omega_q", c.cage.omega_q);
    cage.read("omega_c", c.cage.omega_c);
    std::string fusion = std::string(to_string(c.cage.fusion));
    cage.read("fusion", fusion);
    try {
        c.cage.fusion = parse_fusion_mode(fusion);
    } catch (const std::exception& e) {
        throw ConfigError(std::string("cage.fusion: ") + e.what());
    }
    cage.read("init_std", c.cage.init_std);
    cage.finish();

    Section model = root.child("model");
    model.read("dim", c.model.dim);
    c.model.hidden = read_sizes(model, "hidden", c.model.hidden);
    model.read("lr", c.model.lr);
    model.read("batch_size", c.model.batch_size);
    model.read("epochs", c.model.epochs);
    c.model.seed = model.require<std::uint64_t>("seed");
    model.read("init_std", c.model.init_std);
    model.finish();

    Section eval = root.child("eval");
    c.eval.ks = read_sizes(eval, "ks", c.eval.ks);
    eval.read("n_negatives", c.eval.n_negatives);
    if (const auto mode = eval.optional<std::string>("hit_mode")) {
        c.eval.hit_mode = parse_hit_mode(*mode);
    }
    c.eval.seed = eval.optional<std::uint64_t>("seed");
    eval.finish();

    Section output = root.child("output");
    output.read("dir", c.output.dir);
    output.read("log", c.output.log);
    output.read("checkpoint", c.output.checkpoint);
    output.read("record_wall_time", c.output.record_wall_time);
    output.finish();

    root.finish();
    validate(c);
    return c;
}

void validate(const TrainConfig& c) {
    if (c.data.path.empty()) throw ConfigError("data.path is empty");
    if (c.task == Task::ListCompletion) {
        if (c.data.format != "lists") {
            throw ConfigError("list-completion needs data.format \"lists\", got \"" + c.data.format + "\"");
        }
        const auto& f = c.data.filter;
        if (f.min_freq < 1) throw ConfigError("data.min_freq must be >= 1");
        if (f.min_len < 2 || f.min_len > f.max_len) {
            throw ConfigError("data.min_len must be >= 2 and <= data.max_len");
        }
    } else {
        data::parse_interaction_format(c.data.format);
    }
    const bool any_cage = c.cage.item || (c.cage.user && c.task != Task::ListCompletion);
    if (c.cage.user && c.task == Task::ListCompletion) {
        throw ConfigError("cage.user has no effect for list-completion (items only)");
    }
    if (any_cage && c.cage.sizes.empty()) throw ConfigError("cage.sizes is empty");
    for (std::size_t i = 1; i < c.cage.sizes.size(); ++i) {
        if (c.cage.sizes[i] >= c.cage.sizes[i - 1]) {
            throw ConfigError("cage.sizes must be strictly decreasing");
        }
    }
    for (std::size_t s : c.cage.sizes) {
        if (s == 0) throw ConfigError("cage.sizes entries must be >= 1");
    }
    for (float w : {c.cage.alpha, c.cage.beta, c.cage.omega_q, c.cage.omega_c}) {
        if (!(w >= 0.0f)) throw ConfigError("cage weights must be >= 0");
    }
    if (!(c.cage.init_std > 0.0f)) throw ConfigError("cage.init_std must be > 0");
    if (c.model.dim == 0) throw ConfigError("model.dim must be >= 1");
    if (!(c.model.lr > 0.0f)) throw ConfigError("model.lr must be > 0");
    if (!(c.model.init_std > 0.0f)) throw ConfigError("model.init_std must be > 0");
    for (std::size_t h : c.model.hidden) {
        if (h == 0) throw ConfigError("model.hidden entries must be >= 1");
    }
    if (c.eval.ks.empty()) throw ConfigError("eval.ks is empty");
    for (std::size_t k : c.eval.ks) {
        if (k == 0) throw ConfigError("eval.ks entries must be >= 1");
    }
    validate(c.model_options());
}

json to_json(const TrainConfig& c) {
    json doc;
    doc["task"] = to_string(c.task);
    doc["data"] = {{"path", c.data.path},
                   {"format", c.data.format},
                   {"rating_threshold", c.data.rating_threshold},
                   {"min_freq", c.data.filter.min_freq},
                   {"min_len", c.data.filter.min_len},
                   {"max_len", c.data.filter.max_len},
                   {"train_negatives", c.data.train_negatives}};
    doc["cage"] = {{"user", c.cage.user},       {"item", c.cage.item},
                   {"sizes", c.cage.sizes},     {"alpha", c.cage.alpha},
                   {"beta", c.cage.beta},       {"omega_q", c.cage.omega_q},
                   {"omega_c", c.cage.omega_c}, {"fusion", to_string(c.cage.fusion)},
                   {"init_std", c.cage.init_std}};
    doc["model"] = {{"dim", c.model.dim},
                    {"hidden", c.model.hidden},
                    {"lr", c.model.lr},
                    {"batch_size", c.model.batch_size},
                    {"epochs", c.model.epochs},
                    {"seed", c.model.seed},
                    {"init_std", c.model.init_std}};
    doc["eval"] = {{"ks", c.eval.ks}, {"n_negatives", c.eval.n_negatives}};
    if (c.eval.hit_mode) doc["eval"]["hit_mode"] = to_string(*c.eval.hit_mode);
    if (c.eval.seed) doc["eval"]["seed"] = *c.eval.seed;
    doc["output"] = {{"dir", c.output.dir},
                     {"log", c.output.log},
                     {"checkpoint", c.output.checkpoint},
                     {"record_wall_time", c.output.record_wall_time}};
    return doc;
}

TrainConfig load_config(const std::filesystem::path& path) {
    json doc;
    try {
        doc = json::parse(data::read_file(path));
    } catch (const json::parse_error& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
    TrainConfig c = parse_config(doc);
    const auto base = path.parent_path();
    auto resolve = [&](std::string& p) {
        if (!p.empty() && std::filesystem::path(p).is_relative()) p = (base / p).lexically_normal().string();
    };
    resolve(c.data.path);
    resolve(c.output.dir);
    return c;
}

}  // namespace cage::app
