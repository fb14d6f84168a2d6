#include "cage/core/losses.hpp"
#include "cage/error.hpp"
#include "cage/models.hpp"

namespace cage {

CfModel::CfModel(const SeededRng& rng, std::size_t n_users, std::size_t n_items,
                 const ModelOptions& options)
    : omega_q(options.omega_q) {
    validate(options);
    users = EntityEncoder(rng, n_users, options.dim, options.init_std, "user", options.user_cage);
    items = EntityEncoder(rng, n_items, options.dim, options.init_std, "item", options.item_cage);
}

StepLoss CfModel::bpr_step(std::size_t user, std::size_t pos, std::size_t neg, float grad_scale) {
    users.table.check_index(user);
    items.table.check_index(pos);
    items.table.check_index(neg);
    if (pos == neg) throw PreconditionError("bpr_step: positive and negative item coincide");

    const auto u = users.encode(user);
    const auto p = items.encode(pos);
    const auto n = items.encode(neg);
    const float margin = dot(u.z, p.z) - dot(u.z, n.z);
    const auto bce = bce_with_logit(margin, 1);

    StepLoss loss;
    loss.rec = bce.loss;
    loss.cage = users.cage_loss(u) + items.cage_loss(p) + items.cage_loss(n);
    loss.total = loss.rec + omega_q * loss.cage;

    const float g = bce.grad_logit * grad_scale;
    const std::size_t d = u.z.size();
    std::vector<float> grad_u(d), grad_p(d), grad_n(d);
    for (std::size_t k = 0; k < d; ++k) {
        grad_u[k] = g * (p.z[k] - n.z[k]);
        grad_p[k] = g * u.z[k];
        grad_n[k] = -g * u.z[k];
    }
    const float w = omega_q * grad_scale;
    users.backward(u, grad_u, w);
    items.backward(p, grad_p, w);
    items.backward(n, grad_n, w);
    return loss;
}

std::vector<float> CfModel::score_items(std::size_t user,
                                        std::span<const std::size_t> candidates) const {
    const auto u = users.encode(user);
    std::vector<float> out;
    out.reserve(candidates.size());
    for (std::size_t item : candidates) out.push_back(dot(u.z, items.encode(item).z));
    return out;
}

void CfModel::collect_parameters(std::vector<Parameter*>& out) {
    users.collect_parameters(out);
    items.collect_parameters(out);
}

}  // namespace cage
