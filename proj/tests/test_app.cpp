#include <doctest.h>

#include <fstream>
#include <regex>
#include <sstream>

#include "cage/app/checkpoint.hpp"
#include "cage/app/config.hpp"
#include "cage/app/run.hpp"
#include "cage/app/tree_export.hpp"
#include "cage/data/io.hpp"
#include "cage/error.hpp"
#include "support/gradcheck.hpp"
#include "support/synthetic.hpp"
#include "support/temp_dir.hpp"

using namespace cage;
using namespace cage::app;
using nlohmann::json;

namespace {

json base_config(const std::string& data_path, const std::string& out_dir) {
    return {{"task", "cf"},
            {"data", {{"path", data_path}}},
            {"cage", {{"item", true}, {"sizes", {8, 3}}}},
            {"model", {{"dim", 8}, {"hidden", {8}}, {"lr", 0.01}, {"batch_size", 64}, {"epochs", 2}, {"seed", 7}}},
            {"eval", {{"ks", {5, 10}}, {"n_negatives", 20}}},
            {"output", {{"dir", out_dir}}}};
}

std::string write_synthetic(const std::filesystem::path& dir, std::uint64_t seed,
                            const testing::SyntheticShape& shape) {
    const auto synth = testing::make_synthetic(seed, shape);
    std::filesystem::create_directories(dir);
    const auto path = dir / "interactions.tsv";
    std::ofstream out(path);
    for (const auto& r : synth.records) out << r.user << '\t' << r.item << '\t' << 1 << '\t' << *r.timestamp << '\n';
    return path.string();
}

testing::SyntheticShape small_shape() {
    testing::SyntheticShape s;
    s.items = 60;
    s.users = 30;
    s.positives_per_user = 8;
    return s;
}

std::string slurp(const std::filesystem::path& p) { return data::read_file(p); }

}  // namespace

TEST_CASE("config parsing") {
    const auto good = base_config("x.tsv", "out");
    const auto c = parse_config(good);
    CHECK(c.task == Task::Cf);
    CHECK(c.cage.sizes == std::vector<std::size_t>{8, 3});
    CHECK(c.cage.alpha == 1.0f);
    CHECK(c.model.seed == 7);
    CHECK(c.hit_mode() == HitMode::Single);
    CHECK(c.eval_seed() == 7);
    CHECK(parse_config(to_json(c)).model.seed == 7);
    CHECK(to_json(parse_config(to_json(c))) == to_json(c));

    auto bad = [&](auto&& mutate) {
        json doc = good;
        mutate(doc);
        return doc;
    };
    CHECK_THROWS_AS(parse_config(bad([](json& d) { d["model"]["lr_rate"] = 0.1; })), ConfigError);
    CHECK_THROWS_AS(parse_config(bad([](json& d) { d["extra"] = 1; })), ConfigError);
    CHECK_THROWS_AS(parse_config(bad([](json& d) { d["cage"]["sizes"] = {3, 8}; })), ConfigError);
    CHECK_THROWS_AS(parse_config(bad([](json& d) { d["cage"]["sizes"] = {4, 4}; })), ConfigError);
    CHECK_THROWS_AS(parse_config(bad([](json& d) { d["cage"]["depth"] = 3; })), ConfigError);
    CHECK_THROWS_AS(parse_config(bad([](json& d) { d["cage"]["alpha"] = -0.5; })), ConfigError);
    CHECK_THROWS_AS(parse_config(bad([](json& d) { d["model"].erase("seed"); })), ConfigError);
    CHECK_THROWS_AS(parse_config(bad([](json& d) { d["model"]["dim"] = 0; })), ConfigError);
    CHECK_THROWS_AS(parse_config(bad([](json& d) { d["model"]["dim"] = "64"; })), ConfigError);
    CHECK_THROWS_AS(parse_config(bad([](json& d) { d["model"]["epochs"] = -1; })), ConfigError);
    CHECK_THROWS_AS(parse_config(bad([](json& d) { d["task"] = "ranking"; })), ConfigError);
    CHECK_THROWS_AS(parse_config(bad([](json& d) { d["cage"]["fusion"] = "sum"; })), ConfigError);
    CHECK_THROWS_AS(parse_config(bad([](json& d) { d["data"]["format"] = "csv"; })), std::exception);
    CHECK_THROWS_AS(parse_config(bad([](json& d) { d["task"] = "list-completion"; })), ConfigError);
    CHECK(parse_config(bad([](json& d) {
              d["task"] = "list-completion";
              d["data"]["format"] = "lists";
          })).hit_mode() == HitMode::Multi);
}

TEST_CASE("load_config resolves paths against the config directory") {
    testing::TempDir dir;
    std::ofstream(dir.path() / "c.json") << base_config("data/x.tsv", "runs").dump();
    const auto c = load_config(dir.path() / "c.json");
    CHECK(c.data.path == (dir.path() / "data/x.tsv").string());
    CHECK(c.output.dir == (dir.path() / "runs").string());
    std::ofstream(dir.path() / "broken.json") << "{ \"task\": ";
    CHECK_THROWS_AS(load_config(dir.path() / "broken.json"), ConfigError);
}

TEST_CASE("checkpoint container") {
    SeededRng rng(1);
    Parameter a("a", testing::random_matrix(rng, 3, 4));
    Parameter b("b/w", testing::random_matrix(rng, 1, 5));
    Parameter c("c", Matrix(2, 2, std::vector<float>{0.0f, -0.0f, 1e-38f, -3.0e38f}));
    const std::vector<const Parameter*> tensors{&a, &b, &c};
    const json meta{{"note", "hello"}};
    const std::string bytes = encode_checkpoint(meta, tensors);
    CHECK(bytes.substr(0, 8) == "CAGECKPT");

    SUBCASE("round trip is bit-exact") {
        const auto ck = decode_checkpoint(bytes);
        CHECK(ck.metadata.at("note") == "hello");
        for (const Parameter* p : tensors) {
            const Matrix& m = ck.tensors.at(p->name);
            REQUIRE(m.rows() == p->value.rows());
            for (std::size_t i = 0; i < m.size(); ++i) {
                CHECK(std::bit_cast<std::uint32_t>(m.values()[i]) ==
                      std::bit_cast<std::uint32_t>(p->value.values()[i]));
            }
        }
    }
    SUBCASE("bad magic") {
        std::string x = bytes;
        x[0] = 'X';
        CHECK_THROWS_AS(decode_checkpoint(x), BadMagicError);
        CHECK_THROWS_AS(decode_checkpoint("CAGE"), BadMagicError);
    }
    SUBCASE("unsupported version") {
        std::string x = bytes;
        x[8] = 99;
        CHECK_THROWS_AS(decode_checkpoint(x), UnsupportedVersionError);
    }
    SUBCASE("truncation") {
        CHECK_THROWS_AS(decode_checkpoint(bytes.substr(0, bytes.size() - 3)), CorruptCheckpointError);
        CHECK_THROWS_AS(decode_checkpoint(bytes.substr(0, 14)), CorruptCheckpointError);
        CHECK_THROWS_AS(decode_checkpoint(bytes.substr(0, 40)), CorruptCheckpointError);
        CHECK_THROWS_AS(decode_checkpoint(bytes + "abcd"), CorruptCheckpointError);
    }

    // Rewrites the metadata block, keeping the payload.
    auto with_metadata = [&](const json& m) {
        const auto ck = decode_checkpoint(bytes);
        const std::string old_meta_len_bytes = bytes.substr(12, 8);
        std::uint64_t old_len = 0;
        for (int i = 0; i < 8; ++i) old_len |= std::uint64_t(static_cast<unsigned char>(bytes[12 + i])) << (8 * i);
        const std::string payload = bytes.substr(20 + old_len);
        const std::string text = m.dump();
        std::string out = bytes.substr(0, 12);
        for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((text.size() >> (8 * i)) & 0xFF));
        return out + text + payload;
    };
    SUBCASE("permuted directory still loads") {
        json m = decode_checkpoint(bytes).metadata;
        std::reverse(m["tensors"].begin(), m["tensors"].end());
        const auto ck = decode_checkpoint(with_metadata(m));
        CHECK(ck.tensors.at("a") == a.value);
        CHECK(ck.tensors.at("b/w") == b.value);
        CHECK(ck.tensors.at("c").values()[3] == c.value.values()[3]);
    }
    SUBCASE("inconsistent offsets") {
        json m = decode_checkpoint(bytes).metadata;
        m["tensors"][1]["offset"] = 4;
        CHECK_THROWS_AS(decode_checkpoint(with_metadata(m)), CorruptCheckpointError);
        m = decode_checkpoint(bytes).metadata;
        m["tensors"][2]["offset"] = std::uint64_t(1) << 62;
        CHECK_THROWS_AS(decode_checkpoint(with_metadata(m)), CorruptCheckpointError);
        m = decode_checkpoint(bytes).metadata;
        m["tensors"][0]["shape"] = {std::uint64_t(1) << 40, std::uint64_t(1) << 40};
        CHECK_THROWS_AS(decode_checkpoint(with_metadata(m)), CorruptCheckpointError);
    }
    SUBCASE("restore checks names and shapes") {
        const auto ck = decode_checkpoint(bytes);
        Parameter a2("a", Matrix(3, 4)), b2("b/w", Matrix(1, 5)), c2("c", Matrix(2, 2));
        restore_parameters(ck, std::vector<Parameter*>{&a2, &b2, &c2});
        CHECK(a2.value == a.value);
        Parameter wrong("b/w", Matrix(5, 1));
        Parameter a3("a", Matrix(3, 4, 9.0f));
        try {
            restore_parameters(ck, std::vector<Parameter*>{&a3, &wrong, &c2});
            FAIL("expected mismatch");
        } catch (const TensorMismatchError& e) {
            CHECK(std::string(e.what()).find("b/w") != std::string::npos);
        }
        CHECK(a3.value == Matrix(3, 4, 9.0f));
        CHECK_THROWS_AS(restore_parameters(ck, std::vector<Parameter*>{&a2, &b2}), TensorMismatchError);
    }
}

TEST_CASE("training writes a deterministic log and checkpoint") {
    testing::TempDir dir;
    const auto data_path = write_synthetic(dir.path(), 3, small_shape());
    const auto config = parse_config(base_config(data_path, (dir.path() / "run").string()));

    const auto first = run_train(config);
    const std::string log1 = slurp(config.log_path());
    const std::string ckpt1 = slurp(config.checkpoint_path());
    run_train(config);
    CHECK(slurp(config.log_path()) == log1);
    CHECK(slurp(config.checkpoint_path()) == ckpt1);

    std::istringstream lines(log1);
    std::string line;
    std::getline(lines, line);
    CHECK(json::parse(line).at("config") == to_json(config));
    std::size_t entries = 0;
    while (std::getline(lines, line)) {
        const auto e = json::parse(line);
        for (const char* key : {"epoch", "split", "metric", "value", "wall_ms"}) CHECK(e.contains(key));
        ++entries;
    }
    CHECK(entries == first.log.size());
    CHECK(entries == 2 * (3 + 4));

    const auto ck = load_checkpoint(config.checkpoint_path());
    CHECK(ck.metadata.at("config") == to_json(config));
    CHECK(ck.metadata.at("epoch") == 2);
    auto loaded = load_model(ck);
    auto trained = const_cast<ModelBundle&>(first.model).parameters();
    auto restored = loaded.model.parameters();
    REQUIRE(trained.size() == restored.size());
    for (std::size_t i = 0; i < trained.size(); ++i) CHECK(trained[i]->value == restored[i]->value);

    SUBCASE("evaluate reproduces the final validation numbers") {
        const auto report = run_evaluate(config.checkpoint_path(), Split::Validation);
        CHECK(report.values == first.last_validation->values);
        const auto same = run_evaluate(config.checkpoint_path(), Split::Validation);
        CHECK(same.values == report.values);
        const auto reseeded = run_evaluate(config.checkpoint_path(), Split::Validation, {{"eval", {{"seed", 12345}}}});
        CHECK(reseeded.values != report.values);
        CHECK_THROWS_AS(run_evaluate(config.checkpoint_path(), Split::Test, {{"model", {{"dim", 16}}}}), ConfigError);
    }
    SUBCASE("changed data is refused") {
        const auto other = write_synthetic(dir.path() / "other", 4, small_shape());
        CHECK_THROWS_AS(run_evaluate(config.checkpoint_path(), Split::Test, {{"data", {{"path", other}}}}),
                        ConfigError);
    }
    SUBCASE("truncated checkpoint does not load") {
        const auto bad = dir.path() / "truncated.ckpt";
        std::ofstream(bad, std::ios::binary) << ckpt1.substr(0, ckpt1.size() - 10);
        CHECK_THROWS_AS(load_checkpoint(bad), CorruptCheckpointError);
        CHECK_THROWS_AS(run_evaluate(bad, Split::Test), CorruptCheckpointError);
    }
    SUBCASE("shape mismatch names the tensor") {
        json meta = ck.metadata;
        meta["config"]["model"]["dim"] = 9;
        auto tampered = ck;
        tampered.metadata = meta;
        try {
            load_model(tampered);
            FAIL("expected mismatch");
        } catch (const TensorMismatchError& e) {
            CHECK(std::string(e.what()).find("embedding") != std::string::npos);
        }
    }
}

TEST_CASE("zero epochs checkpoint the initialized model") {
    testing::TempDir dir;
    const auto data_path = write_synthetic(dir.path(), 5, small_shape());
    json doc = base_config(data_path, (dir.path() / "run").string());
    doc["model"]["epochs"] = 0;
    const auto config = parse_config(doc);
    const auto result = run_train(config);
    CHECK(result.log.empty());
    std::istringstream lines(slurp(config.log_path()));
    std::string line;
    std::size_t count = 0;
    while (std::getline(lines, line)) ++count;
    CHECK(count == 1);

    ModelBundle fresh(config, result.data.users.size(), result.data.items.size());
    auto loaded = load_model(load_checkpoint(config.checkpoint_path()));
    auto a = fresh.parameters();
    auto b = loaded.model.parameters();
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i]->value == b[i]->value);
}

TEST_CASE("divergence names epoch and batch") {
    testing::TempDir dir;
    const auto data_path = write_synthetic(dir.path(), 6, small_shape());
    json doc = base_config(data_path, (dir.path() / "run").string());
    doc["model"]["lr"] = 1e30;
    doc["model"]["epochs"] = 5;
    doc["model"]["init_std"] = 1.0;
    try {
        run_train(parse_config(doc));
        FAIL("expected divergence");
    } catch (const DivergenceError& e) {
        CHECK(std::regex_search(e.what(), std::regex("epoch [0-9]+, batch [0-9]+")));
    }
}

TEST_CASE("the other tasks train end to end") {
    testing::TempDir dir;
    const auto data_path = write_synthetic(dir.path(), 8, small_shape());
    json ctr = base_config(data_path, (dir.path() / "ctr").string());
    ctr["task"] = "ctr";
    ctr["cage"]["user"] = true;
    const auto r = run_train(parse_config(ctr));
    CHECK(r.last_validation->units > 0);

    std::vector<data::ListRecord> lists;
    SeededRng rng(9);
    for (int l = 0; l < 60; ++l) {
        data::ListRecord rec;
        const std::size_t base = rng.uniform_index(3) * 10;
        for (int k = 0; k < 12; ++k) rec.items.push_back("t" + std::to_string(base + rng.uniform_index(10)));
        lists.push_back(rec);
    }
    data::write_lists(dir.path() / "lists.txt", lists);
    json seq = base_config((dir.path() / "lists.txt").string(), (dir.path() / "seq").string());
    seq["task"] = "list-completion";
    seq["data"] = {{"path", (dir.path() / "lists.txt").string()}, {"format", "lists"}, {"min_freq", 2}, {"min_len", 4}};
    const auto s = run_train(parse_config(seq));
    CHECK(s.last_validation->units > 0);
    CHECK(run_evaluate(parse_config(seq).checkpoint_path(), Split::Validation).values == s.last_validation->values);
}

TEST_CASE("tree export") {
    testing::TempDir dir;
    std::ofstream(dir.path() / "tiny.tsv") << "u1\ta\nu1\tb\nu2\tc\n";
    json doc = base_config((dir.path() / "tiny.tsv").string(), (dir.path() / "run").string());
    doc["cage"]["sizes"] = {1};
    doc["model"]["epochs"] = 0;
    const auto config = parse_config(doc);
    run_train(config);

    const auto exported =
        export_tree(config.checkpoint_path(), dir.path() / "t.json", dir.path() / "t.dot");
    const std::string dot = slurp(dir.path() / "t.dot");
    const std::regex node(R"(^\s+(L\d+_\d+|E_\d+)( \[.*\])?;$)");
    const std::regex edge(R"(->)");
    std::size_t nodes = 0, edges = 0;
    std::istringstream in(dot);
    std::string line;
    while (std::getline(in, line)) {
        if (std::regex_search(line, edge)) {
            ++edges;
        } else if (std::regex_match(line, node)) {
            ++nodes;
        }
    }
    CHECK(nodes == 4);
    CHECK(edges == 3);

    const auto reloaded = tree_from_json(json::parse(slurp(dir.path() / "t.json")));
    CHECK(reloaded == exported);
    CHECK(reloaded.entities == std::vector<std::string>{"a", "b", "c"});

    // Entity paths equal a fresh cascade over the checkpoint's embeddings.
    auto loaded = load_model(load_checkpoint(config.checkpoint_path()));
    const auto* items = loaded.model.side("item");
    for (std::size_t e = 0; e < items->count(); ++e) {
        CHECK(reloaded.tree.paths[e] == items->quantizer->quantize(items->table.row(e)).path());
    }

    json broken = tree_to_json(exported);
    broken["entities"][0]["path"] = {5};
    CHECK_THROWS_AS(tree_from_json(broken), TreeError);
    CHECK_THROWS_AS(tree_from_json(json{{"side", "item"}}), TreeError);

    doc["cage"]["item"] = false;
    doc["output"]["dir"] = (dir.path() / "plain").string();
    const auto plain = parse_config(doc);
    run_train(plain);
    CHECK_THROWS_AS(export_tree(plain.checkpoint_path(), dir.path() / "p.json", dir.path() / "p.dot"),
                    PreconditionError);
}

TEST_CASE("inspect codes") {
    testing::TempDir dir;
    const auto data_path = write_synthetic(dir.path(), 10, small_shape());
    const auto config = parse_config(base_config(data_path, (dir.path() / "run").string()));
    run_train(config);
    const auto tree = extract_from_checkpoint(config.checkpoint_path());

    const auto plain = inspect_codes(config.checkpoint_path());
    CHECK_FALSE(plain.purity.has_value());
    REQUIRE(plain.utilization.size() == 2);
    CHECK(plain.utilization[0] > 0.0);
    CHECK(format_report(plain).find("level 1:") != std::string::npos);

    // Label every entity with its own level-1 code: every category is exclusive.
    {
        std::ofstream out(dir.path() / "codes.tsv");
        for (std::size_t e = 0; e < tree.entities.size(); ++e) {
            out << tree.entities[e] << "\tcode" << tree.tree.paths[e][0] << '\n';
        }
        out << "nobody\tx\n";
    }
    const auto aligned = inspect_codes(config.checkpoint_path(), dir.path() / "codes.tsv");
    REQUIRE(aligned.purity.has_value());
    CHECK(aligned.purity->exclusive == aligned.purity->categories);
    CHECK(aligned.purity->majority_purity == 1.0);
    CHECK(aligned.skipped_labels == 1);
    CHECK(format_report(aligned).find("(100.0%)") != std::string::npos);

    // Two entities on two distinct codes, one category each: spans (1, 1).
    std::size_t first = 0, second = 0;
    for (std::size_t e = 1; e < tree.entities.size(); ++e) {
        if (tree.tree.paths[e][0] != tree.tree.paths[0][0]) {
            second = e;
            break;
        }
    }
    REQUIRE(second != first);
    {
        std::ofstream out(dir.path() / "two.tsv");
        out << tree.entities[first] << "\tA\n" << tree.entities[second] << "\tB\n";
    }
    const auto two = inspect_codes(config.checkpoint_path(), dir.path() / "two.tsv");
    CHECK(two.purity->codes_per_category == std::map<std::string, std::size_t>{{"A", 1}, {"B", 1}});
}

TEST_CASE("synthetic categories are learnable within five epochs") {
    testing::TempDir dir;
    testing::SyntheticShape shape;
    shape.items = 400;
    shape.users = 200;
    shape.positives_per_user = 20;
    const auto data_path = write_synthetic(dir.path(), 12, shape);
    json doc = base_config(data_path, (dir.path() / "run").string());
    doc["model"]["epochs"] = 5;
    doc["model"]["dim"] = 32;
    doc["eval"]["n_negatives"] = 99;
    RunOptions options;
    options.write_files = false;
    const auto result = run_train(parse_config(doc), options);
    CHECK(result.last_validation->at("hr@10") > 0.1);
}
