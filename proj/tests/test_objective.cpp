#include <doctest.h>

#include <cmath>

#include "gmcnn/model.hpp"
#include "gmcnn/objective.hpp"
#include "gmcnn/ops.hpp"
#include "support.hpp"

using namespace gmcnn;
using namespace gmcnn::testing;

namespace {

Tensor weight_like(const Shape& s, std::mt19937_64& rng) {
    return random_const({s.n, s.h, s.w, 1}, rng, 0.0, 1.0);
}

Critic linear_critic(const Tensor& u) {
    return [u](const Tensor& x) { return sum_to(mul(x, u), {x.shape().n, 1, 1, 1}); };
}

}  // namespace

TEST_CASE("reconstruction loss hand example") {
    const Tensor y = Tensor::from_data({1, 2, 2, 1}, {1, 0, 0, 0});
    const Tensor g = Tensor::zeros({1, 2, 2, 1});
    const Tensor w = Tensor::from_data({1, 2, 2, 1}, {0.5, 0, 0, 0});
    CHECK(reconstruction_loss(y, g, w).item() == 0.5);
    CHECK(reconstruction_loss(y, g, w, L1Reduction::mean).item() == 0.125);
    CHECK(reconstruction_loss(y, g, Tensor::zeros({1, 2, 2, 1})).item() == 0.0);
    CHECK_THROWS_AS(reconstruction_loss(y, Tensor::zeros({1, 2, 2, 2}), w), ShapeError);
    CHECK_THROWS_AS(reconstruction_loss(y, g, Tensor::zeros({1, 2, 2, 2})), ShapeError);
}

TEST_CASE("reconstruction loss matches the weighted L1 oracle and its gradient") {
    PrecisionScope p(Precision::f64);
    for (std::uint64_t seed : kSeeds) {
        std::mt19937_64 rng(seed);
        const Tensor y = random_const({2, 5, 4, 3}, rng);
        Tensor g = random_leaf({2, 5, 4, 3}, rng);
        const Tensor w = weight_like(y.shape(), rng);
        long double acc = 0;
        for (int n = 0; n < 2; ++n)
            for (int i = 0; i < 5; ++i)
                for (int j = 0; j < 4; ++j)
                    for (int c = 0; c < 3; ++c)
                        acc += std::abs(static_cast<long double>(y.at(n, i, j, c)) - g.at(n, i, j, c)) * w.at(n, i, j, 0);
        CHECK(reconstruction_loss(y, g, w).item() == doctest::Approx(static_cast<double>(acc)).epsilon(1e-13));
        CHECK(fd_max_rel_error([&](const std::vector<Tensor>& in) { return reconstruction_loss(y, in[0], w); }, {g}) <=
              1e-3);
    }
}

TEST_CASE("gradient penalty of a linear critic") {
    PrecisionScope p(Precision::f64);
    std::mt19937_64 rng(3);
    const Shape s{2, 3, 3, 2};
    const Tensor w = weight_like(s, rng);
    // u scaled so that ||u * w||_2 = 1 for each element: zero penalty for any t.
    std::vector<double> u = uniform_values(s.numel(), rng);
    for (int n = 0; n < 2; ++n) {
        double norm = 0;
        for (int i = 0; i < 18; ++i) norm += std::pow(u[n * 18 + i] * w.data()[(n * 18 + i) / 2], 2);
        for (int i = 0; i < 18; ++i) u[n * 18 + i] /= std::sqrt(norm);
    }
    const Tensor unit = Tensor::from_data(s, u);
    const Tensor y = random_const(s, rng), g = random_const(s, rng);
    std::mt19937_64 t_rng(1);
    CHECK(std::abs(gradient_penalty(linear_critic(unit), y, g, w, t_rng).item()) <= 1e-12);

    // Scaled critic: penalty is (k - 1)^2 regardless of the interpolation point.
    const Tensor tripled = scale(unit, 3.0);
    CHECK(gradient_penalty(linear_critic(tripled), y, g, w, t_rng).item() == doctest::Approx(4.0).epsilon(1e-12));
    // Zero weight: norm 0, penalty 1, finite gradients.
    const Tensor zero_w = Tensor::zeros({2, 3, 3, 1});
    Tensor uu = unit.copy(true);
    Critic c = [&uu](const Tensor& x) { return sum_to(mul(x, uu), {x.shape().n, 1, 1, 1}); };
    const Tensor gp0 = gradient_penalty_at(c, y, zero_w);
    CHECK(gp0.item() == 1.0);
    for (double v : grad(gp0, {uu})[0].data()) CHECK(std::isfinite(v));
}

TEST_CASE("interpolates use a per-element t in [0, 1]") {
    PrecisionScope p(Precision::f64);
    const Shape s{3, 2, 2, 1};
    const Tensor y = Tensor::zeros(s);
    const Tensor g = Tensor::full(s, 1.0);
    std::vector<double> seen;
    Critic probe = [&seen](const Tensor& x) {
        seen.assign(x.data().begin(), x.data().end());
        return sum_to(x, {x.shape().n, 1, 1, 1});
    };
    std::mt19937_64 rng(77), replay(77);
    gradient_penalty(probe, y, g, Tensor::full({3, 2, 2, 1}, 1.0), rng);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    for (int n = 0; n < 3; ++n) {
        const double t = uni(replay);
        for (int i = 0; i < 4; ++i) CHECK(seen[n * 4 + i] == doctest::Approx(t).epsilon(1e-15));
    }
}

TEST_CASE("critic and generator adversarial terms") {
    const Tensor real = Tensor::from_data({2, 1, 1, 1}, {1.0, 3.0});
    const Tensor fake = Tensor::from_data({2, 1, 1, 1}, {-1.0, 0.0});
    CHECK(critic_loss(real, fake, Tensor::scalar(0.25)).item() == doctest::Approx(-0.5 - 2.0 + 0.25));
    CHECK(generator_adv_loss(fake).item() == doctest::Approx(0.5));
    CHECK_THROWS(critic_loss(real, Tensor::zeros({3, 1, 1, 1}), Tensor::scalar(0)));
}

TEST_CASE("penalty and adversarial gradients with a convolutional critic") {
    PrecisionScope p(Precision::f64);
    for (std::uint64_t seed : kSeeds) {
        const CriticNet critic(CriticConfig{2, 8, 2}, seed);
        std::mt19937_64 rng(seed);
        const Tensor x = random_const({2, 8, 8, 2}, rng);
        const Tensor w = weight_like(x.shape(), rng);
        Critic fn = [&](const Tensor& t) { return critic.forward(t); };
        CHECK(fd_max_rel_error([&](const std::vector<Tensor>&) { return gradient_penalty_at(fn, x, w); },
                               critic.parameters()) <= 1e-3);
        Tensor img = random_leaf({2, 8, 8, 2}, rng);
        CHECK(fd_max_rel_error([&](const std::vector<Tensor>& in) { return generator_adv_loss(critic.forward(in[0])); },
                               {img}) <= 1e-3);
        // Penalty gradient w.r.t. the interpolates themselves (third order through the critic).
        Tensor xi = x.copy(true);
        CHECK(fd_max_rel_error([&](const std::vector<Tensor>& in) { return gradient_penalty_at(fn, in[0], w); },
                               {xi}) <= 1e-3);
    }
}

TEST_CASE("total objective weights each term") {
    const Tensor lc = Tensor::scalar(2.0), lm = Tensor::scalar(3.0), la = Tensor::scalar(-5.0);
    CHECK(total_objective(lc, lm, la, LossWeights{}).item() == doctest::Approx(2.0 + 0.05 * 3.0 - 0.001 * 5.0));
    CHECK(total_objective(lc, lm, la, LossWeights::reconstruction_only()).item() == 2.0);
    CHECK_THROWS(total_objective(lc, lm, la, LossWeights{-1.0, 0.0, 0.0}));
}

TEST_CASE("adam matches the bias-corrected update computed by hand") {
    PrecisionScope p(Precision::f64);
    Tensor w = Tensor::from_data({1, 1, 1, 2}, {0.5, -1.0}, true);
    std::vector<Tensor> params{w};
    AdamState st;
    st.config = AdamConfig{0.1, 0.5, 0.9, 1e-8};
    const double g_seq[3][2] = {{1.0, -2.0}, {0.5, 0.0}, {-1.0, 4.0}};
    double m[2] = {0, 0}, v[2] = {0, 0}, x[2] = {0.5, -1.0};
    for (int t = 1; t <= 3; ++t) {
        const Tensor g = Tensor::from_data({1, 1, 1, 2}, {g_seq[t - 1][0], g_seq[t - 1][1]});
        adam_step(params, {g}, st);
        for (int i = 0; i < 2; ++i) {
            m[i] = 0.5 * m[i] + 0.5 * g_seq[t - 1][i];
            v[i] = 0.9 * v[i] + 0.1 * g_seq[t - 1][i] * g_seq[t - 1][i];
            const double mh = m[i] / (1 - std::pow(0.5, t)), vh = v[i] / (1 - std::pow(0.9, t));
            x[i] -= 0.1 * mh / (std::sqrt(vh) + 1e-8);
            CHECK(w.data()[i] == doctest::Approx(x[i]).epsilon(1e-14));
        }
    }
    CHECK(st.step == 3);
    // First step moves every coordinate by lr * sign(g).
    Tensor z = Tensor::from_data({1, 1, 1, 3}, {0, 0, 0}, true);
    std::vector<Tensor> zp{z};
    AdamState fresh;
    adam_step(zp, {Tensor::from_data({1, 1, 1, 3}, {3.0, -0.01, 0.0})}, fresh);
    CHECK(z.data()[0] == doctest::Approx(-1e-4));
    CHECK(z.data()[1] == doctest::Approx(1e-4));
    CHECK(z.data()[2] == 0.0);
    CHECK_THROWS(adam_step(zp, {}, fresh));
    CHECK_THROWS(adam_step(zp, {Tensor::zeros({1, 1, 1, 2})}, fresh));
}
