#pragma once

// Independent reference implementations shared by the unit tests and the
// acceptance run. Nothing here calls into the library except to build inputs.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "gmcnn/idmrf.hpp"
#include "gmcnn/image_io.hpp"
#include "gmcnn/mask.hpp"
#include "gmcnn/ops.hpp"

namespace gmcnn::testing {

using LD = long double;
using Matrix = std::vector<std::vector<LD>>;

inline Matrix cosine_oracle(const std::vector<std::vector<double>>& gen, const std::vector<std::vector<double>>& ref) {
    auto norm = [](const std::vector<double>& v) {
        LD s = 0;
        for (double x : v) s += static_cast<LD>(x) * x;
        return std::max(std::sqrt(s), static_cast<LD>(1e-12));
    };
    Matrix mu(gen.size(), std::vector<LD>(ref.size()));
    for (std::size_t v = 0; v < gen.size(); ++v)
        for (std::size_t s = 0; s < ref.size(); ++s) {
            LD dot = 0;
            for (std::size_t i = 0; i < gen[v].size(); ++i) dot += static_cast<LD>(gen[v][i]) * ref[s][i];
            mu[v][s] = dot / (norm(gen[v]) * norm(ref[s]));
        }
    return mu;
}

inline Matrix rs_bar_oracle(const Matrix& mu, LD h, LD eps) {
    Matrix z = mu, out = mu;
    for (std::size_t v = 0; v < mu.size(); ++v) {
        for (std::size_t s = 0; s < mu[v].size(); ++s) {
            LD comp = -INFINITY;
            for (std::size_t r = 0; r < mu[v].size(); ++r)
                if (r != s) comp = std::max(comp, mu[v][r]);
            z[v][s] = mu[v][s] / (std::max(comp, static_cast<LD>(0)) + eps) / h;
        }
        const LD top = *std::max_element(z[v].begin(), z[v].end());
        LD total = 0;
        for (std::size_t s = 0; s < z[v].size(); ++s) total += out[v][s] = std::exp(z[v][s] - top);
        for (LD& x : out[v]) x /= total;
    }
    return out;
}

inline LD layer_loss_oracle(const Matrix& rs) {
    LD acc = 0;
    for (std::size_t s = 0; s < rs[0].size(); ++s) {
        LD best = 0;
        for (const auto& row : rs) best = std::max(best, row[s]);
        acc += best;
    }
    return -std::log(acc / rs[0].size());
}

inline Tensor to_matrix(const Matrix& m) {
    std::vector<double> v;
    for (const auto& row : m)
        for (LD x : row) v.push_back(static_cast<double>(x));
    return Tensor::from_data(matrix_shape(static_cast<int>(m.size()), static_cast<int>(m[0].size())), v);
}

inline PatchSet patch_set_from(const std::vector<std::vector<double>>& rows) {
    std::vector<double> flat;
    for (const auto& r : rows) flat.insert(flat.end(), r.begin(), r.end());
    PatchSet p;
    p.count = static_cast<int>(rows.size());
    p.dim = static_cast<int>(rows[0].size());
    p.vectors = Tensor::from_data(matrix_shape(p.count, p.dim), flat, true);
    return p;
}

// Similarity matrices chosen to stress the normalisation.
inline std::vector<Tensor> stress_matrices() {
    std::vector<Tensor> out;
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> uni(-1, 1);
    for (int k = 0; k < 100; ++k) {
        const int p = 1 + k % 7, q = 2 + (k / 7) % 9;
        std::vector<double> v(static_cast<std::size_t>(p) * q);
        switch (k % 10) {
            case 0: std::fill(v.begin(), v.end(), 0.5); break;                 // all ties
            case 1: std::fill(v.begin(), v.end(), -1.0); break;                // all negative
            case 2: std::fill(v.begin(), v.end(), 0.0); break;                 // all zero
            case 3:                                                           // one perfect match per row, rest zero
                std::fill(v.begin(), v.end(), 0.0);
                for (int i = 0; i < p; ++i) v[static_cast<std::size_t>(i) * q + i % q] = 1.0;
                break;
            case 4:                                                           // near-ties at 1
                for (double& x : v) x = 1.0 - 1e-15 * std::abs(uni(rng));
                break;
            case 5:                                                           // tiny competitors
                for (double& x : v) x = 1e-300 * uni(rng);
                v[0] = 1.0;
                break;
            case 6:                                                           // negative with one positive
                for (double& x : v) x = -std::abs(uni(rng));
                v[v.size() - 1] = 0.9;
                break;
            default:
                for (double& x : v) x = uni(rng);
        }
        out.push_back(Tensor::from_data(matrix_shape(p, q), v));
    }
    return out;
}

// Direct 2-D zero-padded correlation, anchor at size/2.
inline std::vector<long double> blur_oracle(const std::vector<long double>& src, int h, int w, const GaussKernel& k) {
    std::vector<long double> out(src.size(), 0.0L);
    const int a = k.size / 2;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int i = 0; i < k.size; ++i)
                for (int j = 0; j < k.size; ++j) {
                    const int yy = y + i - a, xx = x + j - a;
                    if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
                    out[static_cast<std::size_t>(y) * w + x] +=
                        static_cast<long double>(k.at(i, j)) * src[static_cast<std::size_t>(yy) * w + xx];
                }
    return out;
}

// Direct SSIM: every valid window weighted by the 2-D Gaussian.
inline double ssim_oracle(const std::vector<double>& a, const std::vector<double>& b, int h, int w) {
    const int win = 11, r = 5;
    const long double c1 = std::pow(0.01L * 255, 2), c2 = std::pow(0.03L * 255, 2);
    std::vector<long double> g(win);
    long double gs = 0;
    for (int i = 0; i < win; ++i) gs += g[i] = std::exp(-(i - r) * (i - r) / (2 * 1.5L * 1.5L));
    for (auto& v : g) v /= gs;
    long double total = 0;
    int count = 0;
    for (int y = r; y < h - r; ++y)
        for (int x = r; x < w - r; ++x) {
            long double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
            for (int i = 0; i < win; ++i)
                for (int j = 0; j < win; ++j) {
                    const long double wt = g[i] * g[j];
                    const long double va = a[(y - r + i) * w + x - r + j], vb = b[(y - r + i) * w + x - r + j];
                    ma += wt * va;
                    mb += wt * vb;
                    saa += wt * va * va;
                    sbb += wt * vb * vb;
                    sab += wt * va * vb;
                }
            const long double va = saa - ma * ma, vb = sbb - mb * mb, cov = sab - ma * mb;
            total += (2 * ma * mb + c1) * (2 * cov + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            ++count;
        }
    return static_cast<double>(total / count);
}

// 10 log10(255^2 / MSE) from the exact integer squared error.
inline double psnr_oracle(const Image& a, const Image& b) {
    std::int64_t sse = 0;
    for (std::size_t i = 0; i < a.pixels.size(); ++i) {
        const int d = a.pixels[i] - b.pixels[i];
        sse += d * d;
    }
    const long double mse = static_cast<long double>(sse) / a.pixels.size();
    return static_cast<double>(10 * std::log10(65025.0L / mse));
}

inline Image random_image(int h, int w, int c, std::mt19937_64& rng) {
    std::uniform_int_distribution<int> px(0, 255);
    Image im{h, w, c, {}};
    im.pixels.resize(static_cast<std::size_t>(h) * w * c);
    for (auto& p : im.pixels) p = static_cast<std::uint8_t>(px(rng));
    return im;
}

}  // namespace gmcnn::testing
