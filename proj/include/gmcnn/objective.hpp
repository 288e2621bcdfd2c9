#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "gmcnn/tensor.hpp"

namespace gmcnn {

enum class L1Reduction { sum, mean };

struct LossWeights {
    double mrf = 0.05;
    double adv = 0.001;
    double gp = 10.0;

    // Reconstruction-only pretraining.
    static LossWeights reconstruction_only() { return {0.0, 0.0, 10.0}; }
    void validate() const;
};

// || (y - g) * weight ||_1 with weight of shape (n, h, w, 1) applied to every channel.
Tensor reconstruction_loss(const Tensor& target, const Tensor& generated, const Tensor& weight,
                           L1Reduction reduction = L1Reduction::sum);

// -mean(scores).
Tensor generator_adv_loss(const Tensor& fake_scores);

// Maps an image batch to an (n, 1, 1, 1) score tensor.
using Critic = std::function<Tensor(const Tensor&)>;

// mean_b (|| grad_x critic(x)[b] * weight[b] ||_2 - 1)^2 evaluated at the
// given interpolates. Differentiable w.r.t. everything the critic closes over.
Tensor gradient_penalty_at(const Critic& critic, const Tensor& interpolates, const Tensor& weight);

// Samples t ~ U[0, 1] per batch element and penalises at t*generated + (1-t)*target.
// `generated` is treated as a constant. The penalty is not multiplied by lambda_gp.
Tensor gradient_penalty(const Critic& critic, const Tensor& target, const Tensor& generated,
                        const Tensor& weight, std::mt19937_64& rng);

// mean(fake) - mean(real) + penalty.
Tensor critic_loss(const Tensor& real_scores, const Tensor& fake_scores, const Tensor& penalty);

// L_c + lambda_mrf * L_mrf + lambda_adv * L_adv.
Tensor total_objective(const Tensor& reconstruction, const Tensor& mrf, const Tensor& adversarial,
                       const LossWeights& weights);

struct AdamConfig {
    double lr = 1e-4;
    double beta1 = 0.5;
    double beta2 = 0.9;
    double eps = 1e-8;
};

struct AdamState {
    AdamConfig config;
    std::int64_t step = 0;
    std::vector<std::vector<double>> m;
    std::vector<std::vector<double>> v;
};

// Bias-corrected Adam update applied in place to leaf parameters.
void adam_step(std::vector<Tensor>& params, const std::vector<Tensor>& grads, AdamState& state);

}  // namespace gmcnn
