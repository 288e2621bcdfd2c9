#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "gmcnn/tensor.hpp"

namespace gmcnn::testing {

inline constexpr std::uint64_t kSeeds[] = {11, 23, 37, 101, 4099};

inline std::vector<double> uniform_values(std::size_t n, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> uni(lo, hi);
    std::vector<double> v(n);
    for (double& x : v) x = uni(rng);
    return v;
}

inline Tensor random_leaf(const Shape& s, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
    return Tensor::from_data(s, uniform_values(s.numel(), rng, lo, hi), true);
}

inline Tensor random_const(const Shape& s, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
    return Tensor::from_data(s, uniform_values(s.numel(), rng, lo, hi), false);
}

// Central-difference check of grad() for a scalar function of leaf inputs.
// Relative error per entry: |a - f| / max(|a|, |f|, floor * max|f|).
inline double fd_max_rel_error(const std::function<Tensor(const std::vector<Tensor>&)>& f,
                               std::vector<Tensor> inputs, double step = 1e-4, double floor = 1e-3,
                               std::size_t max_entries = 0, std::uint64_t seed = 0) {
    const auto analytic = grad(f(inputs), inputs);
    std::mt19937_64 rng(seed);
    std::vector<std::pair<double, double>> pairs;
    double fmax = 0;
    for (std::size_t k = 0; k < inputs.size(); ++k) {
        const std::size_t n = inputs[k].numel();
        std::vector<std::size_t> idx;
        if (max_entries == 0 || n <= max_entries) {
            for (std::size_t i = 0; i < n; ++i) idx.push_back(i);
        } else {
            std::uniform_int_distribution<std::size_t> pick(0, n - 1);
            for (std::size_t j = 0; j < max_entries; ++j) idx.push_back(pick(rng));
        }
        for (std::size_t i : idx) {
            auto data = inputs[k].mutable_data();
            const double orig = data[i];
            data[i] = orig + step;
            const double up = f(inputs).item();
            data[i] = orig - step;
            const double down = f(inputs).item();
            data[i] = orig;
            const double fd = (up - down) / (2 * step);
            fmax = std::max(fmax, std::abs(fd));
            pairs.emplace_back(analytic[k].data()[i], fd);
        }
    }
    double worst = 0;
    for (auto [a, fd] : pairs) {
        if (!std::isfinite(a)) return INFINITY;
        const double denom = std::max({std::abs(a), std::abs(fd), floor * fmax});
        if (denom > 0) worst = std::max(worst, std::abs(a - fd) / denom);
    }
    return worst;
}

inline std::vector<double> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

}  // namespace gmcnn::testing
