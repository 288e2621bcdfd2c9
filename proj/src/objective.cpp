#include "gmcnn/objective.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "gmcnn/ops.hpp"

namespace gmcnn {

void LossWeights::validate() const {
    if (!(mrf >= 0) || !(adv >= 0) || !(gp >= 0)) {
        throw std::invalid_argument("loss weights must be nonnegative");
    }
}

Tensor reconstruction_loss(const Tensor& target, const Tensor& generated, const Tensor& weight,
                           L1Reduction reduction) {
    if (target.shape() != generated.shape()) {
        throw ShapeError("reconstruction_loss", target.shape(), generated.shape());
    }
    const Shape& s = target.shape();
    if (weight.shape() != Shape{s.n, s.h, s.w, 1}) {
        throw ShapeError("reconstruction_loss weight", weight.shape(), Shape{s.n, s.h, s.w, 1});
    }
    Tensor residual = mul(sub(target, generated), weight);
    return reduction == L1Reduction::sum ? l1_norm(residual) : mean(abs(residual));
}

Tensor generator_adv_loss(const Tensor& fake_scores) {
    if (fake_scores.numel() == 0) throw std::invalid_argument("empty critic score batch");
    return neg(mean(fake_scores));
}

Tensor gradient_penalty_at(const Critic& critic, const Tensor& interpolates, const Tensor& weight) {
    const Shape& s = interpolates.shape();
    if (weight.shape() != Shape{s.n, s.h, s.w, 1}) {
        throw ShapeError("gradient_penalty weight", weight.shape(), Shape{s.n, s.h, s.w, 1});
    }
    Tensor x = interpolates.requires_grad() ? interpolates : interpolates.copy(true);
    Tensor scores = critic(x);
    if (scores.shape() != Shape{s.n, 1, 1, 1}) {
        throw ShapeError("critic scores", scores.shape(), Shape{s.n, 1, 1, 1});
    }
    Tensor dx = grad(sum(scores), {x}, /*create_graph=*/true)[0];
    Tensor masked = mul(dx, weight);
    Tensor norms = sqrt(sum_to(square(masked), Shape{s.n, 1, 1, 1}));
    return mean(square(add_scalar(norms, -1.0)));
}

Tensor gradient_penalty(const Critic& critic, const Tensor& target, const Tensor& generated,
                        const Tensor& weight, std::mt19937_64& rng) {
    if (target.shape() != generated.shape()) {
        throw ShapeError("gradient_penalty", target.shape(), generated.shape());
    }
    const Shape& s = target.shape();
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    std::vector<double> t(s.n);
    for (double& v : t) v = uni(rng);
    auto y = target.data();
    auto g = generated.data();
    const std::size_t per = static_cast<std::size_t>(s.h) * s.w * s.c;
    std::vector<double> mix(s.numel());
    for (int b = 0; b < s.n; ++b)
        for (std::size_t i = b * per; i < (b + 1) * per; ++i) mix[i] = t[b] * g[i] + (1.0 - t[b]) * y[i];
    return gradient_penalty_at(critic, Tensor::from_data(s, std::move(mix), true), weight);
}

Tensor critic_loss(const Tensor& real_scores, const Tensor& fake_scores, const Tensor& penalty) {
    if (real_scores.numel() != fake_scores.numel()) {
        throw ShapeError("critic_loss", real_scores.shape(), fake_scores.shape());
    }
    return add(sub(mean(fake_scores), mean(real_scores)), penalty);
}

Tensor total_objective(const Tensor& reconstruction, const Tensor& mrf, const Tensor& adversarial,
                       const LossWeights& weights) {
    weights.validate();
    Tensor total = reconstruction;
    if (weights.mrf != 0.0) total = add(total, scale(mrf, weights.mrf));
    if (weights.adv != 0.0) total = add(total, scale(adversarial, weights.adv));
    return total;
}

void adam_step(std::vector<Tensor>& params, const std::vector<Tensor>& grads, AdamState& state) {
    if (params.size() != grads.size()) {
        throw std::invalid_argument("adam_step: " + std::to_string(params.size()) + " parameters but " +
                                    std::to_string(grads.size()) + " gradients");
    }
    if (state.m.empty()) {
        for (const Tensor& p : params) {
            state.m.emplace_back(p.numel(), 0.0);
            state.v.emplace_back(p.numel(), 0.0);
        }
    }
    if (state.m.size() != params.size()) throw std::invalid_argument("adam_step: state/parameter count mismatch");
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (grads[i].defined() && grads[i].shape() != params[i].shape()) {
            throw ShapeError("adam_step gradient", grads[i].shape(), params[i].shape());
        }
        if (state.m[i].size() != params[i].numel()) {
            throw std::invalid_argument("adam_step: moment buffer does not match parameter " + std::to_string(i));
        }
    }

    const AdamConfig& c = state.config;
    ++state.step;
    const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto p = params[i].mutable_data();
        auto& m = state.m[i];
        auto& v = state.v[i];
        for (std::size_t j = 0; j < p.size(); ++j) {
            const double g = grads[i].defined() ? grads[i].data()[j] : 0.0;
            m[j] = round_to_precision(c.beta1 * m[j] + (1.0 - c.beta1) * g);
            v[j] = round_to_precision(c.beta2 * v[j] + (1.0 - c.beta2) * g * g);
            const double m_hat = m[j] / bc1;
            const double v_hat = v[j] / bc2;
            p[j] = round_to_precision(p[j] - c.lr * m_hat / (std::sqrt(v_hat) + c.eps));
        }
    }
}

}  // namespace gmcnn
