#include <algorithm>

#include "cage/core/losses.hpp"
#include "cage/error.hpp"
#include "cage/models.hpp"

namespace cage {

namespace {

std::vector<std::size_t> scorer_widths(const ModelOptions& options) {
    std::vector<std::size_t> widths{2 * options.dim};
    widths.insert(widths.end(), options.hidden.begin(), options.hidden.end());
    widths.push_back(1);
    return widths;
}

}  // namespace

CtrModel::CtrModel(const SeededRng& rng, std::size_t n_users, std::size_t n_items,
                   const ModelOptions& options)
    : omega_q(options.omega_q) {
    validate(options);
    users = EntityEncoder(rng, n_users, options.dim, options.init_std, "user", options.user_cage);
    items = EntityEncoder(rng, n_items, options.dim, options.init_std, "item", options.item_cage);
    auto stream = rng.stream("init/ctr/scorer");
    scorer = Mlp(stream, scorer_widths(options), "ctr/scorer");
}

StepLoss CtrModel::step(std::size_t user, std::size_t item, int label, float grad_scale) {
    users.table.check_index(user);
    items.table.check_index(item);
    if (label != 0 && label != 1) throw PreconditionError("ctr step: label must be 0 or 1");

    const auto u = users.encode(user);
    const auto i = items.encode(item);
    const std::size_t d = u.z.size();
    Matrix x(1, 2 * d);
    std::copy(u.z.begin(), u.z.end(), x.row(0).begin());
    std::copy(i.z.begin(), i.z.end(), x.row(0).begin() + d);
    const auto fwd = scorer.forward(x);
    const auto bce = bce_with_logit(fwd.output(0, 0), label);

    StepLoss loss;
    loss.rec = bce.loss;
    loss.cage = users.cage_loss(u) + items.cage_loss(i);
    loss.total = loss.rec + omega_q * loss.cage;

    Matrix grad_out(1, 1, bce.grad_logit * grad_scale);
    const Matrix grad_x = scorer.backward(fwd.tape, grad_out);
    const auto gx = grad_x.row(0);
    const float w = omega_q * grad_scale;
    users.backward(u, gx.subspan(0, d), w);
    items.backward(i, gx.subspan(d, d), w);
    return loss;
}

float CtrModel::logit(std::size_t user, std::size_t item) const {
    const std::size_t one[] = {item};
    return score_items(user, one)[0];
}

std::vector<float> CtrModel::score_items(std::size_t user,
                                         std::span<const std::size_t> candidates) const {
    const auto u = users.encode(user);
    const std::size_t d = u.z.size();
    Matrix x(candidates.size(), 2 * d);
    for (std::size_t r = 0; r < candidates.size(); ++r) {
        const auto i = items.encode(candidates[r]);
        auto row = x.row(r);
        std::copy(u.z.begin(), u.z.end(), row.begin());
        std::copy(i.z.begin(), i.z.end(), row.begin() + d);
    }
    const auto fwd = scorer.forward(x);
    std::vector<float> out(candidates.size());
    for (std::size_t r = 0; r < candidates.size(); ++r) out[r] = fwd.output(r, 0);
    return out;
}

void CtrModel::collect_parameters(std::vector<Parameter*>& out) {
    users.collect_parameters(out);
    items.collect_parameters(out);
    scorer.collect_parameters(out);
}

}  // namespace cage
