#include "cage/core/losses.hpp"
#include "cage/error.hpp"
#include "cage/models.hpp"

namespace cage {

SeqModel::SeqModel(const SeededRng& rng, std::size_t n_items, const ModelOptions& options)
    : omega_q(options.omega_q), omega_c(options.omega_c) {
    validate(options);
    items = EntityEncoder(rng, n_items, options.dim, options.init_std, "item", options.item_cage);

    std::vector<std::size_t> widths{options.dim};
    widths.insert(widths.end(), options.hidden.begin(), options.hidden.end());
    widths.push_back(options.dim);
    auto enc_stream = rng.stream("init/seq/encoder");
    encoder = Mlp(enc_stream, widths, "seq/encoder");

    if (items.quantizer) {
        const auto& sizes = items.quantizer->sizes();
        for (std::size_t i = 0; i < sizes.size(); ++i) {
            const std::string name = "seq/head" + std::to_string(i + 1);
            auto stream = rng.stream("init/" + name);
            heads.push_back(make_dense(stream, options.dim, sizes[i], name));
            if (heads.back().out_features() != sizes[i]) {
                throw DimensionError(name + " width does not match level size");
            }
        }
    }
}

namespace {

void check_prefix(const EntityEncoder& items, std::span<const std::size_t> prefix) {
    if (prefix.empty()) throw PreconditionError("list model: empty prefix");
    for (std::size_t x : prefix) items.table.check_index(x);
}

}  // namespace

StepLoss SeqModel::step(std::span<const std::size_t> prefix, std::size_t target, float grad_scale) {
    check_prefix(items, prefix);
    items.table.check_index(target);
    const std::size_t d = dim();
    const std::size_t n = item_count();

    std::vector<EncodedEntity> encoded;
    encoded.reserve(prefix.size());
    Matrix pooled(1, d);
    const float inv = 1.0f / static_cast<float>(prefix.size());
    for (std::size_t x : prefix) {
        encoded.push_back(items.encode(x));
        axpy(inv, encoded.back().z, pooled.row(0));
    }
    const auto fwd = encoder.forward(pooled);
    const auto zbar = fwd.output.row(0);

    const Matrix& table = items.table.rows.value;
    std::vector<float> logits(n);
    for (std::size_t j = 0; j < n; ++j) logits[j] = dot(zbar, table.row(j));
    const auto item_ce = cross_entropy_with_logits(logits, target);

    StepLoss loss;
    loss.item = item_ce.loss;

    // Already scaled by grad_scale.
    std::vector<float> grad_zbar(d, 0.0f);
    Matrix& table_grad = items.table.rows.grad;
    for (std::size_t j = 0; j < n; ++j) {
        const float g = item_ce.grad_logits[j];
        if (g == 0.0f) continue;
        axpy(g * grad_scale, table.row(j), grad_zbar);
        axpy(g * grad_scale, zbar, table_grad.row(j));
    }

    const auto target_enc = items.encode(target);
    if (omega_c != 0.0f && items.quantizer) {
        // Pseudo-labels: the target's current code path, treated as constants.
        const auto labels = target_enc.trace->path();
        const float share = omega_c / static_cast<float>(heads.size());
        Matrix zmat(1, d, std::vector<float>(zbar.begin(), zbar.end()));
        for (std::size_t i = 0; i < heads.size(); ++i) {
            const std::span<const DenseLayer> one(&heads[i], 1);
            const auto head_fwd = mlp_apply(one, zmat);
            const auto ce = cross_entropy_with_logits(head_fwd.output.row(0), labels[i]);
            loss.tree += ce.loss / static_cast<double>(heads.size());
            Matrix g(1, ce.grad_logits.size());
            for (std::size_t k = 0; k < ce.grad_logits.size(); ++k) {
                g(0, k) = share * grad_scale * ce.grad_logits[k];
            }
            const auto gz = mlp_backward(std::span<DenseLayer>(&heads[i], 1), head_fwd.tape, g);
            axpy(1.0f, gz.row(0), grad_zbar);
        }
    }
    loss.rec = loss.item + omega_c * loss.tree;

    for (const auto& e : encoded) loss.cage += items.cage_loss(e);
    loss.cage += items.cage_loss(target_enc);
    loss.total = loss.rec + omega_q * loss.cage;

    const Matrix grad_out(1, d, std::move(grad_zbar));
    const Matrix grad_pooled = encoder.backward(fwd.tape, grad_out);

    const float w = omega_q * grad_scale;
    std::vector<float> grad_z(d);
    for (std::size_t k = 0; k < d; ++k) grad_z[k] = grad_pooled(0, k) * inv;
    for (const auto& e : encoded) items.backward(e, grad_z, w);
    if (items.quantizer && w != 0.0f) {
        const std::vector<float> zero(d, 0.0f);
        items.backward(target_enc, zero, w);
    }
    return loss;
}

std::vector<float> SeqModel::predict_vector(std::span<const std::size_t> prefix) const {
    check_prefix(items, prefix);
    Matrix pooled(1, dim());
    const float inv = 1.0f / static_cast<float>(prefix.size());
    for (std::size_t x : prefix) axpy(inv, items.encode(x).z, pooled.row(0));
    const auto fwd = encoder.forward(pooled);
    const auto out = fwd.output.row(0);
    return {out.begin(), out.end()};
}

std::vector<float> SeqModel::item_scores(std::span<const std::size_t> prefix) const {
    const auto zbar = predict_vector(prefix);
    const Matrix& table = items.table.rows.value;
    std::vector<float> out(item_count());
    for (std::size_t j = 0; j < out.size(); ++j) out[j] = dot(zbar, table.row(j));
    return out;
}

void SeqModel::collect_parameters(std::vector<Parameter*>& out) {
    items.collect_parameters(out);
    encoder.collect_parameters(out);
    for (auto& head : heads) {
        out.push_back(&head.weight);
        out.push_back(&head.bias);
    }
}

}  // namespace cage
