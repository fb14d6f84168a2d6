#include <doctest.h>

#include <cmath>
#include <numeric>
#include <set>

#include "cage/core/losses.hpp"
#include "cage/error.hpp"
#include "cage/models.hpp"
#include "support/gradcheck.hpp"

using namespace cage;
using cage::testing::random_vector;
using cage::testing::relative_error;

namespace {

using Vec = std::vector<double>;

QuantizerOptions quantizer_options(std::size_t dim, std::vector<std::size_t> sizes, float alpha,
                                   float init_std = 1.0f) {
    QuantizerOptions q;
    q.sizes = std::move(sizes);
    q.dim = dim;
    q.alpha = alpha;
    q.init_std = init_std;
    return q;
}

ModelOptions small_options(std::size_t dim, float omega_q, float omega_c) {
    ModelOptions o;
    o.dim = dim;
    o.hidden = {7};
    o.init_std = 1.0f;
    o.omega_q = omega_q;
    o.omega_c = omega_c;
    return o;
}

// z under the straight-through surrogate: with selections frozen, every code
// moves one-for-one with e, so z = e + alpha * mean_i(c_i + (e - e0)).
Vec surrogate_fused(std::span<const float> e, const EncodedEntity& base, float alpha) {
    Vec z(e.begin(), e.end());
    if (!base.trace) return z;
    const auto& t = *base.trace;
    const double h = static_cast<double>(t.levels.size());
    for (std::size_t k = 0; k < z.size(); ++k) {
        double pooled = 0.0;
        for (const auto& level : t.levels) pooled += level.code[k] + (double(e[k]) - t.input[k]);
        z[k] += alpha * pooled / h;
    }
    return z;
}

struct OracleMlp {
    Vec output;
    double min_abs_hidden = INFINITY;  // distance to the nearest ReLU kink
};

OracleMlp oracle_mlp(std::span<const DenseLayer> layers, const Vec& input) {
    OracleMlp out;
    Vec x = input;
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const auto& w = layers[l].weight.value;
        Vec y(w.cols());
        for (std::size_t j = 0; j < w.cols(); ++j) {
            double s = layers[l].bias.value(0, j);
            for (std::size_t i = 0; i < w.rows(); ++i) s += x[i] * double(w(i, j));
            y[j] = s;
        }
        if (l + 1 < layers.size()) {
            for (double& v : y) {
                out.min_abs_hidden = std::min(out.min_abs_hidden, std::abs(v));
                v = std::max(v, 0.0);
            }
        }
        x = std::move(y);
    }
    out.output = std::move(x);
    return out;
}

double oracle_ce(const Vec& logits, std::size_t target) {
    const double m = *std::max_element(logits.begin(), logits.end());
    double s = 0.0;
    for (double v : logits) s += std::exp(v - m);
    return m + std::log(s) - logits[target];
}

double oracle_bce(double logit, int label) {
    const double sp = std::max(logit, 0.0) + std::log1p(std::exp(-std::abs(logit)));
    return label == 1 ? sp - logit : sp;
}

void zero_all(std::vector<Parameter*> params) {
    for (auto* p : params) p->zero_grad();
}

}  // namespace

TEST_CASE("bpr step closed forms") {
    SeededRng rng(1);
    CfModel m(rng, 2, 3, small_options(2, 0.0f, 0.0f));
    auto& u = m.users.table.rows.value;
    auto& it = m.items.table.rows.value;
    u(0, 0) = 1.0f;
    u(0, 1) = 0.0f;
    it(0, 0) = 0.5f;
    it(0, 1) = 3.0f;
    it(1, 0) = 0.5f;
    it(1, 1) = -2.0f;
    CHECK(m.bpr_step(0, 0, 1).total == doctest::Approx(std::log(2.0)).epsilon(1e-7));

    it(0, 0) = 2.5f;  // margin 2
    const auto loss = m.bpr_step(0, 0, 1);
    CHECK(loss.total == doctest::Approx(0.1269280110).epsilon(1e-6));
    CHECK(loss.rec == loss.total);
    CHECK(loss.cage == 0.0);

    CHECK_THROWS_AS(m.bpr_step(0, 1, 1), PreconditionError);
    CHECK_THROWS_AS(m.bpr_step(2, 0, 1), IndexError);
    CHECK_THROWS_AS(m.bpr_step(0, 0, 3), IndexError);
}

TEST_CASE("model construction rejects mismatched quantizer dims") {
    SeededRng rng(2);
    auto o = small_options(4, 1.0f, 1.0f);
    o.item_cage = quantizer_options(5, {3}, 1.0f);
    CHECK_THROWS_AS(CfModel(rng, 2, 2, o), ConfigError);
    o.item_cage = quantizer_options(4, {3, 3}, 1.0f);
    CHECK_THROWS_AS(SeqModel(rng, 4, o), ConfigError);
    o.item_cage.reset();
    o.omega_q = -1.0f;
    CHECK_THROWS_AS(CtrModel(rng, 2, 2, o), ConfigError);
}

TEST_CASE("bpr gradients match finite differences with selections frozen") {
    SeededRng rng(3);
    int checked = 0;
    for (int trial = 0; trial < 60; ++trial) {
        const std::size_t d = 2 + rng.uniform_index(6);
        const float alpha = static_cast<float>(rng.uniform() * 2.0);
        auto o = small_options(d, 0.0f, 0.0f);
        if (trial % 3 != 0) o.user_cage = quantizer_options(d, {5, 2}, alpha);
        if (trial % 3 != 1) o.item_cage = quantizer_options(d, {6}, alpha);
        CfModel m(rng.stream("model", trial), 3, 6, o);
        std::vector<Parameter*> params;
        m.collect_parameters(params);
        zero_all(params);

        const std::size_t user = rng.uniform_index(3);
        const std::size_t pos = rng.uniform_index(6);
        const std::size_t neg = (pos + 1 + rng.uniform_index(5)) % 6;
        const auto bu = m.users.encode(user);
        const auto bp = m.items.encode(pos);
        const auto bn = m.items.encode(neg);
        m.bpr_step(user, pos, neg);

        const float ua = o.user_cage ? alpha : 0.0f;
        const float ia = o.item_cage ? alpha : 0.0f;
        auto loss_of = [&](const Matrix& users, const Matrix& items) {
            const Vec zu = surrogate_fused(users.row(user), bu, ua);
            const Vec zp = surrogate_fused(items.row(pos), bp, ia);
            const Vec zn = surrogate_fused(items.row(neg), bn, ia);
            double margin = 0.0;
            for (std::size_t k = 0; k < d; ++k) margin += zu[k] * (zp[k] - zn[k]);
            return oracle_bce(margin, 1);
        };
        const Matrix& uv = m.users.table.rows.value;
        const Matrix& iv = m.items.table.rows.value;
        const Matrix fd_u = finite_diff_gradient([&](const Matrix& x) { return loss_of(x, iv); }, uv);
        const Matrix fd_i = finite_diff_gradient([&](const Matrix& x) { return loss_of(uv, x); }, iv);
        CHECK(relative_error(m.users.table.rows.grad, fd_u) < 1e-4);
        CHECK(relative_error(m.items.table.rows.grad, fd_i) < 1e-4);
        ++checked;
    }
    CHECK(checked == 60);
}

TEST_CASE("ctr step closed forms") {
    SeededRng rng(4);
    CtrModel m(rng, 3, 4, small_options(3, 1.0f, 0.0f));
    m.scorer.layers.back().weight.value.fill(0.0f);
    m.scorer.layers.back().bias.value.fill(0.0f);
    CHECK(m.logit(1, 2) == 0.0f);
    CHECK(m.step(1, 2, 0).rec == doctest::Approx(std::log(2.0)).epsilon(1e-7));
    CHECK(m.step(1, 2, 1).rec == doctest::Approx(std::log(2.0)).epsilon(1e-7));
    CHECK(m.scorer.in_features() == 6);
    CHECK_THROWS_AS(m.step(3, 0, 1), IndexError);
    CHECK_THROWS_AS(m.step(0, 0, 2), PreconditionError);
}

TEST_CASE("ctr gradients match finite differences with selections frozen") {
    SeededRng rng(5);
    int checked = 0;
    for (int trial = 0; trial < 120 && checked < 40; ++trial) {
        const std::size_t d = 2 + rng.uniform_index(5);
        const float alpha = trial % 4 == 0 ? 0.0f : static_cast<float>(rng.uniform() * 2.0);
        auto o = small_options(d, 0.0f, 0.0f);
        o.user_cage = quantizer_options(d, {4, 2}, alpha);
        o.item_cage = quantizer_options(d, {5}, alpha);
        CtrModel m(rng.stream("model", trial), 2, 3, o);
        std::vector<Parameter*> params;
        m.collect_parameters(params);
        zero_all(params);

        const std::size_t user = rng.uniform_index(2);
        const std::size_t item = rng.uniform_index(3);
        const int label = static_cast<int>(rng.uniform_index(2));
        const auto bu = m.users.encode(user);
        const auto bi = m.items.encode(item);

        auto loss_of = [&](const Matrix& users, const Matrix& items, std::span<const DenseLayer> layers,
                           double* kink = nullptr) {
            Vec x = surrogate_fused(users.row(user), bu, alpha);
            const Vec zi = surrogate_fused(items.row(item), bi, alpha);
            x.insert(x.end(), zi.begin(), zi.end());
            const auto out = oracle_mlp(layers, x);
            if (kink) *kink = out.min_abs_hidden;
            return oracle_bce(out.output[0], label);
        };
        double kink = 0.0;
        const double base = loss_of(m.users.table.rows.value, m.items.table.rows.value,
                                    m.scorer.layers, &kink);
        if (kink < 5e-2) continue;
        const auto loss = m.step(user, item, label);
        CHECK(loss.rec == doctest::Approx(base).epsilon(1e-5));

        const Matrix& uv = m.users.table.rows.value;
        const Matrix& iv = m.items.table.rows.value;
        const Matrix fd_u =
            finite_diff_gradient([&](const Matrix& x) { return loss_of(x, iv, m.scorer.layers); }, uv);
        const Matrix fd_i =
            finite_diff_gradient([&](const Matrix& x) { return loss_of(uv, x, m.scorer.layers); }, iv);
        CHECK(relative_error(m.users.table.rows.grad, fd_u) < 1e-4);
        CHECK(relative_error(m.items.table.rows.grad, fd_i) < 1e-4);

        auto layers = m.scorer.layers;
        const Matrix fd_w = finite_diff_gradient(
            [&](const Matrix& w) {
                layers[0].weight.value = w;
                return loss_of(uv, iv, layers);
            },
            m.scorer.layers[0].weight.value);
        CHECK(relative_error(m.scorer.layers[0].weight.grad, fd_w) < 1e-4);
        ++checked;
    }
    CHECK(checked >= 20);
}

TEST_CASE("list model closed forms") {
    SUBCASE("two symmetric items give ln 2") {
        SeededRng rng(6);
        SeqModel m(rng, 2, small_options(3, 0.0f, 0.0f));
        auto& table = m.items.table.rows.value;
        for (std::size_t k = 0; k < 3; ++k) table(1, k) = table(0, k);
        const std::size_t prefix[] = {0};
        const auto loss = m.step(prefix, 1);
        CHECK(loss.item == doctest::Approx(std::log(2.0)).epsilon(1e-6));
        CHECK(loss.tree == 0.0);
    }
    SUBCASE("uniform head gives ln 4") {
        SeededRng rng(7);
        auto o = small_options(3, 0.0f, 1.0f);
        o.item_cage = quantizer_options(3, {4}, 1.0f);
        SeqModel m(rng, 5, o);
        REQUIRE(m.heads.size() == 1);
        CHECK(m.heads[0].out_features() == 4);
        m.heads[0].weight.value.fill(0.0f);
        const std::size_t prefix[] = {0, 2};
        const auto loss = m.step(prefix, 3);
        CHECK(loss.tree == doctest::Approx(std::log(4.0)).epsilon(1e-6));
        CHECK(loss.rec == doctest::Approx(loss.item + loss.tree).epsilon(1e-12));
        CHECK(loss.cage >= 0.0);
        CHECK(loss.item >= 0.0);
    }
    SUBCASE("head widths follow level sizes") {
        SeededRng rng(8);
        auto o = small_options(4, 1.0f, 1.0f);
        o.item_cage = quantizer_options(4, {9, 5, 2}, 1.0f);
        SeqModel m(rng, 12, o);
        REQUIRE(m.heads.size() == 3);
        CHECK(m.heads[0].out_features() == 9);
        CHECK(m.heads[1].out_features() == 5);
        CHECK(m.heads[2].out_features() == 2);
    }
    SUBCASE("errors") {
        SeededRng rng(9);
        SeqModel m(rng, 4, small_options(3, 1.0f, 1.0f));
        CHECK_THROWS_AS(m.step(std::span<const std::size_t>{}, 1), PreconditionError);
        const std::size_t bad[] = {4};
        CHECK_THROWS_AS(m.step(bad, 1), IndexError);
    }
}

TEST_CASE("list model gradients match finite differences with selections frozen") {
    SeededRng rng(10);
    int checked = 0;
    for (int trial = 0; trial < 120 && checked < 40; ++trial) {
        const std::size_t d = 2 + rng.uniform_index(4);
        const std::size_t n = 4 + rng.uniform_index(5);
        const float alpha = static_cast<float>(rng.uniform() * 2.0);
        const float omega_c = static_cast<float>(rng.uniform() * 2.0);
        auto o = small_options(d, 0.0f, omega_c);
        o.item_cage = quantizer_options(d, {5, 3}, alpha);
        SeqModel m(rng.stream("model", trial), n, o);
        std::vector<Parameter*> params;
        m.collect_parameters(params);
        zero_all(params);

        std::vector<std::size_t> prefix(1 + rng.uniform_index(4));
        for (auto& x : prefix) x = rng.uniform_index(n);
        const std::size_t target = rng.uniform_index(n);
        std::vector<EncodedEntity> base;
        for (auto x : prefix) base.push_back(m.items.encode(x));
        const auto labels = m.items.encode(target).trace->path();

        auto loss_of = [&](const Matrix& table, std::span<const DenseLayer> enc,
                           std::span<const DenseLayer> heads, double* kink = nullptr) {
            Vec pooled(d, 0.0);
            for (std::size_t p = 0; p < prefix.size(); ++p) {
                const Vec z = surrogate_fused(table.row(prefix[p]), base[p], alpha);
                for (std::size_t k = 0; k < d; ++k) pooled[k] += z[k] / double(prefix.size());
            }
            const auto out = oracle_mlp(enc, pooled);
            if (kink) *kink = out.min_abs_hidden;
            const Vec& zbar = out.output;
            Vec logits(n, 0.0);
            for (std::size_t j = 0; j < n; ++j) {
                for (std::size_t k = 0; k < d; ++k) logits[j] += zbar[k] * table(j, k);
            }
            double tree = 0.0;
            for (std::size_t i = 0; i < heads.size(); ++i) {
                tree += oracle_ce(oracle_mlp(heads.subspan(i, 1), zbar).output, labels[i]);
            }
            return oracle_ce(logits, target) + omega_c * tree / double(heads.size());
        };

        const Matrix& table = m.items.table.rows.value;
        double kink = 0.0;
        const double base_loss = loss_of(table, m.encoder.layers, m.heads, &kink);
        if (kink < 5e-2) continue;
        const auto loss = m.step(prefix, target);
        CHECK(loss.rec == doctest::Approx(base_loss).epsilon(1e-5));

        const Matrix fd_table = finite_diff_gradient(
            [&](const Matrix& x) { return loss_of(x, m.encoder.layers, m.heads); }, table);
        CHECK(relative_error(m.items.table.rows.grad, fd_table) < 1e-4);

        auto enc = m.encoder.layers;
        const Matrix fd_enc = finite_diff_gradient(
            [&](const Matrix& w) {
                enc[0].weight.value = w;
                return loss_of(table, enc, m.heads);
            },
            m.encoder.layers[0].weight.value);
        CHECK(relative_error(m.encoder.layers[0].weight.grad, fd_enc) < 1e-4);

        auto heads = m.heads;
        const Matrix fd_head = finite_diff_gradient(
            [&](const Matrix& w) {
                heads[1].weight.value = w;
                return loss_of(table, m.encoder.layers, heads);
            },
            m.heads[1].weight.value);
        CHECK(relative_error(m.heads[1].weight.grad, fd_head) < 1e-4);
        ++checked;
    }
    CHECK(checked >= 20);
}

TEST_CASE("cage weight adds exactly the quantizer's own backward") {
    SeededRng rng(11);
    auto o = small_options(4, 0.0f, 0.0f);
    o.item_cage = quantizer_options(4, {6, 3}, 0.5f);
    CfModel a(rng, 2, 6, o);
    o.omega_q = 0.7f;
    CfModel b(rng, 2, 6, o);
    std::vector<Parameter*> pa, pb;
    a.collect_parameters(pa);
    b.collect_parameters(pb);
    zero_all(pa);
    zero_all(pb);
    const auto la = a.bpr_step(1, 2, 4);
    const auto lb = b.bpr_step(1, 2, 4);
    CHECK(la.cage == lb.cage);
    CHECK(lb.total == lb.rec + double(0.7f) * lb.cage);

    // The cage-only difference equals two direct quantizer backward calls.
    CascadedQuantizer q = *a.items.quantizer;
    for (std::size_t l = 0; l < q.depth(); ++l) q.codebook(l).zero_grad();
    const std::vector<float> zero(4, 0.0f);
    std::vector<float> expect_pos = q.backward(*a.items.encode(2).trace, zero, 0.7f);
    std::vector<float> expect_neg = q.backward(*a.items.encode(4).trace, zero, 0.7f);
    const auto& ga = a.items.table.rows.grad;
    const auto& gb = b.items.table.rows.grad;
    std::vector<float> diff_pos(4), diff_neg(4);
    for (std::size_t k = 0; k < 4; ++k) {
        diff_pos[k] = gb(2, k) - ga(2, k);
        diff_neg[k] = gb(4, k) - ga(4, k);
    }
    CHECK(relative_error(diff_pos, expect_pos) < 1e-4);
    CHECK(relative_error(diff_neg, expect_neg) < 1e-4);
    for (std::size_t l = 0; l < q.depth(); ++l) {
        CHECK(relative_error(b.items.quantizer->codebook(l).grad, q.codebook(l).grad) < 1e-6);
    }
}

TEST_CASE("ablation: zero weights reproduce quantizer-free losses bit for bit") {
    const std::size_t users = 6, items = 15, d = 5;
    auto train = [&](auto& model, auto&& one_step) {
        std::vector<Parameter*> params;
        model.collect_parameters(params);
        Adam opt(params, 0.01f);
        SeededRng data_rng(99);
        std::vector<double> losses;
        for (int step = 0; step < 60; ++step) {
            opt.zero_grad();
            double total = 0.0;
            for (int b = 0; b < 4; ++b) total += one_step(model, data_rng).total;
            opt.step();
            losses.push_back(total);
        }
        return losses;
    };
    auto with_cage = [&](ModelOptions o) {
        o.user_cage = quantizer_options(d, {4, 2}, 0.0f);
        o.item_cage = quantizer_options(d, {6, 3}, 0.0f);
        return o;
    };
    const auto plain = small_options(d, 0.0f, 0.0f);
    const SeededRng seed(2024);

    auto cf_step = [&](CfModel& m, SeededRng& r) {
        const auto u = r.uniform_index(users);
        const auto p = r.uniform_index(items);
        return m.bpr_step(u, p, (p + 1 + r.uniform_index(items - 1)) % items, 0.25f);
    };
    CfModel cf_a(seed, users, items, plain), cf_b(seed, users, items, with_cage(plain));
    CHECK(train(cf_a, cf_step) == train(cf_b, cf_step));
    CHECK(cf_a.items.table.rows.value == cf_b.items.table.rows.value);

    auto ctr_step = [&](CtrModel& m, SeededRng& r) {
        const auto u = r.uniform_index(users);
        const auto i = r.uniform_index(items);
        return m.step(u, i, static_cast<int>(r.uniform_index(2)), 0.25f);
    };
    CtrModel ctr_a(seed, users, items, plain), ctr_b(seed, users, items, with_cage(plain));
    CHECK(train(ctr_a, ctr_step) == train(ctr_b, ctr_step));

    auto seq_step = [&](SeqModel& m, SeededRng& r) {
        std::vector<std::size_t> prefix(1 + r.uniform_index(4));
        for (auto& x : prefix) x = r.uniform_index(items);
        return m.step(prefix, r.uniform_index(items), 0.25f);
    };
    SeqModel seq_a(seed, items, plain), seq_b(seed, items, with_cage(plain));
    CHECK(train(seq_a, seq_step) == train(seq_b, seq_step));
    CHECK(seq_a.encoder.layers[0].weight.value == seq_b.encoder.layers[0].weight.value);
}

TEST_CASE("top-k ranking") {
    const std::size_t items[] = {7, 8, 9};
    const float scores[] = {0.9f, 0.1f, 0.5f};
    CHECK(top_k_items(items, scores, 2) == std::vector<std::size_t>{7, 9});
    const float equal[] = {0.3f, 0.3f, 0.3f};
    const std::size_t shuffled[] = {9, 7, 8};
    CHECK(top_k_items(shuffled, equal, 3) == std::vector<std::size_t>{7, 8, 9});

    SeededRng rng(12);
    CfModel m(rng, 3, 20, small_options(4, 0.0f, 0.0f));
    const std::size_t one[] = {5};
    CHECK(predict_topk(m, 0, one, 3) == std::vector<std::size_t>{5});
    CHECK_THROWS_AS(predict_topk(m, 0, std::span<const std::size_t>{}, 3), PreconditionError);
    CHECK_THROWS_AS(predict_topk(m, 0, one, 0), PreconditionError);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<std::size_t> cands(1 + rng.uniform_index(20));
        for (auto& c : cands) c = rng.uniform_index(20);
        const std::size_t k = 1 + rng.uniform_index(25);
        const auto top = predict_topk(m, trial % 3, cands, k);
        const std::set<std::size_t> distinct(cands.begin(), cands.end());
        CHECK(top.size() == std::min(k, distinct.size()));
        CHECK(std::set<std::size_t>(top.begin(), top.end()).size() == top.size());
        const auto scores_top = m.score_items(trial % 3, top);
        for (std::size_t i = 1; i < top.size(); ++i) CHECK(scores_top[i - 1] >= scores_top[i]);
        CHECK(top == predict_topk(m, trial % 3, cands, k));
    }
}

TEST_CASE("list completion prediction") {
    SeededRng rng(13);
    SeqModel m(rng, 3, small_options(2, 0.0f, 0.0f));
    const std::size_t prefix[] = {0, 2};
    CHECK(predict_completion(m, prefix, 1, prefix) == std::vector<std::size_t>{1});
    CHECK_THROWS_AS(predict_completion(m, prefix, 2, prefix), PreconditionError);

    SeqModel big(rng, 10, small_options(3, 0.0f, 0.0f));
    const std::size_t p[] = {4};
    const auto scores = big.item_scores(p);
    std::vector<std::size_t> order(10);
    std::iota(order.begin(), order.end(), std::size_t{0});
    const auto full = top_k_items(order, scores, 10);
    const std::size_t exclude[] = {full[0]};
    CHECK(predict_completion(big, p, 1, exclude) == std::vector<std::size_t>{full[1]});
    CHECK(predict_completion(big, p, 4, exclude) == predict_completion(big, p, 4, exclude));
}
