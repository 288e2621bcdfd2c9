#include "gmcnn/metrics.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace gmcnn {

namespace {

void check_same(const Image& a, const Image& b, const char* what) {
    if (a.h != b.h || a.w != b.w || a.channels != b.channels) {
        throw std::invalid_argument(std::string(what) + ": image dimensions differ (" + std::to_string(a.h) + "x" +
                                    std::to_string(a.w) + "x" + std::to_string(a.channels) + " vs " +
                                    std::to_string(b.h) + "x" + std::to_string(b.w) + "x" +
                                    std::to_string(b.channels) + ")");
    }
}

}  // namespace

double psnr(std::span<const double> a, std::span<const double> b, double peak) {
    if (a.size() != b.size()) throw std::invalid_argument("psnr: size mismatch");
    if (a.empty()) throw std::invalid_argument("psnr: empty input");
    long double sse = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const long double d = static_cast<long double>(a[i]) - b[i];
        sse += d * d;
    }
    if (sse == 0) return std::numeric_limits<double>::infinity();
    const long double mse = sse / a.size();
    return static_cast<double>(10.0L * std::log10(static_cast<long double>(peak) * peak / mse));
}

double psnr(const Image& a, const Image& b) {
    check_same(a, b, "psnr");
    std::vector<double> x(a.pixels.begin(), a.pixels.end());
    std::vector<double> y(b.pixels.begin(), b.pixels.end());
    return psnr(x, y);
}

double ssim(std::span<const double> a, std::span<const double> b, int h, int w, const SsimParams& p) {
    if (a.size() != b.size() || a.size() != static_cast<std::size_t>(h) * w) {
        throw std::invalid_argument("ssim: size mismatch");
    }
    if (p.window < 1 || p.window % 2 == 0) throw std::invalid_argument("ssim: window must be odd");
    if (h < p.window || w < p.window) throw std::invalid_argument("ssim: image smaller than the window");

    const int r = p.window / 2;
    std::vector<double> g(p.window);
    double norm = 0;
    for (int i = 0; i < p.window; ++i) norm += g[i] = std::exp(-0.5 * (i - r) * (i - r) / (p.sigma * p.sigma));
    for (double& v : g) v /= norm;

    const double c1 = (p.k1 * p.data_range) * (p.k1 * p.data_range);
    const double c2 = (p.k2 * p.data_range) * (p.k2 * p.data_range);
    const int oh = h - p.window + 1;
    const int ow = w - p.window + 1;

    // Horizontal pass for the five moment images, then vertical per window.
    enum { A, B, AA, BB, AB, K };
    std::vector<double> rows(static_cast<std::size_t>(K) * h * ow);
    auto row_at = [&](int k, int y, int x) -> double& { return rows[(static_cast<std::size_t>(k) * h + y) * ow + x]; };
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < ow; ++x) {
            double s[K] = {};
            for (int i = 0; i < p.window; ++i) {
                const std::size_t idx = static_cast<std::size_t>(y) * w + x + i;
                const double u = a[idx], v = b[idx];
                s[A] += g[i] * u;
                s[B] += g[i] * v;
                s[AA] += g[i] * u * u;
                s[BB] += g[i] * v * v;
                s[AB] += g[i] * u * v;
            }
            for (int k = 0; k < K; ++k) row_at(k, y, x) = s[k];
        }
    }
    double total = 0;
    for (int y = 0; y < oh; ++y) {
        for (int x = 0; x < ow; ++x) {
            double s[K] = {};
            for (int i = 0; i < p.window; ++i)
                for (int k = 0; k < K; ++k) s[k] += g[i] * row_at(k, y + i, x);
            const double va = s[AA] - s[A] * s[A];
            const double vb = s[BB] - s[B] * s[B];
            const double cov = s[AB] - s[A] * s[B];
            total += ((2 * s[A] * s[B] + c1) * (2 * cov + c2)) /
                     ((s[A] * s[A] + s[B] * s[B] + c1) * (va + vb + c2));
        }
    }
    return total / (static_cast<double>(oh) * ow);
}

double ssim(const Image& a, const Image& b, const SsimParams& params) {
    check_same(a, b, "ssim");
    return ssim(to_luma(a), to_luma(b), a.h, a.w, params);
}

}  // namespace gmcnn
