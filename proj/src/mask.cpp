#include "gmcnn/mask.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "gmcnn/parallel.hpp"

namespace gmcnn {

namespace {

BoundingBox tight_box(int h, int w, const std::vector<std::uint8_t>& v) {
    int top = h, left = w, bottom = -1, right = -1;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            if (!v[static_cast<std::size_t>(y) * w + x]) continue;
            top = std::min(top, y);
            bottom = std::max(bottom, y);
            left = std::min(left, x);
            right = std::max(right, x);
        }
    }
    if (bottom < 0) return {};
    return {top, left, bottom - top + 1, right - left + 1};
}

// Zero-padded correlation with the separable kernel, anchor at size/2.
std::vector<double> blur(const std::vector<double>& src, int h, int w, const GaussKernel& k) {
    const int a = k.anchor();
    std::vector<double> tmp(src.size(), 0.0), out(src.size(), 0.0);
    detail::parallel_for(0, h, [&](std::int64_t y) {
        for (int x = 0; x < w; ++x) {
            double s = 0.0;
            for (int j = 0; j < k.size; ++j) {
                const int xx = x + j - a;
                if (xx < 0 || xx >= w) continue;
                s += k.profile[j] * src[y * w + xx];
            }
            tmp[y * w + x] = s;
        }
    });
    detail::parallel_for(0, h, [&](std::int64_t y) {
        for (int x = 0; x < w; ++x) {
            double s = 0.0;
            for (int i = 0; i < k.size; ++i) {
                const std::int64_t yy = y + i - a;
                if (yy < 0 || yy >= h) continue;
                s += k.profile[i] * tmp[yy * w + x];
            }
            out[y * w + x] = s;
        }
    });
    return out;
}

}  // namespace

std::size_t Mask::unknown_count() const {
    return static_cast<std::size_t>(std::count(values.begin(), values.end(), std::uint8_t{1}));
}

Mask Mask::known(int h, int w) {
    if (h < 1 || w < 1) throw std::invalid_argument("mask dimensions must be positive");
    Mask m;
    m.h = h;
    m.w = w;
    m.values.assign(static_cast<std::size_t>(h) * w, 0);
    return m;
}

Mask Mask::from_gray(int h, int w, std::span<const std::uint8_t> gray) {
    Mask m = known(h, w);
    if (gray.size() != m.values.size()) {
        throw std::invalid_argument("mask pixel count " + std::to_string(gray.size()) +
                                    " does not match " + std::to_string(h) + "x" +
                                    std::to_string(w));
    }
    for (std::size_t i = 0; i < gray.size(); ++i) m.values[i] = gray[i] >= 128 ? 1 : 0;
    m.hole = tight_box(h, w, m.values);
    return m;
}

std::vector<std::uint8_t> Mask::to_gray() const {
    std::vector<std::uint8_t> out(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) out[i] = values[i] ? 255 : 0;
    return out;
}

Mask sample_mask(std::mt19937_64& rng, int image_h, int image_w, int max_hole_h, int max_hole_w) {
    if (image_h < 1 || image_w < 1 || max_hole_h < 1 || max_hole_w < 1) {
        throw std::invalid_argument("mask and hole dimensions must be positive");
    }
    if (max_hole_h > image_h || max_hole_w > image_w) {
        throw std::invalid_argument("max hole " + std::to_string(max_hole_h) + "x" +
                                    std::to_string(max_hole_w) + " exceeds image " +
                                    std::to_string(image_h) + "x" + std::to_string(image_w));
    }
    std::uniform_int_distribution<int> dh(1, max_hole_h), dw(1, max_hole_w);
    const int hh = dh(rng);
    const int hw = dw(rng);
    std::uniform_int_distribution<int> dt(0, image_h - hh), dl(0, image_w - hw);
    const int top = dt(rng);
    const int left = dl(rng);

    Mask m = Mask::known(image_h, image_w);
    for (int y = top; y < top + hh; ++y)
        std::fill_n(m.values.begin() + static_cast<std::ptrdiff_t>(y) * image_w + left, hw, 1);
    m.hole = {top, left, hh, hw};
    return m;
}

Mask sample_mask(std::uint64_t seed, int image_h, int image_w, int max_hole_h, int max_hole_w) {
    std::mt19937_64 rng(seed);
    return sample_mask(rng, image_h, image_w, max_hole_h, max_hole_w);
}

GaussKernel gaussian_kernel(int size, double sigma) {
    if (size < 1) throw std::invalid_argument("gaussian kernel size must be >= 1");
    if (!(sigma > 0)) throw std::invalid_argument("gaussian sigma must be positive");
    GaussKernel k;
    k.size = size;
    k.sigma = sigma;
    k.profile.resize(size);
    const double centre = (size - 1) / 2.0;
    double total = 0.0;
    for (int i = 0; i < size; ++i) {
        const double d = i - centre;
        k.profile[i] = std::exp(-d * d / (2.0 * sigma * sigma));
        total += k.profile[i];
    }
    for (double& v : k.profile) v /= total;
    k.values.resize(static_cast<std::size_t>(size) * size);
    for (int i = 0; i < size; ++i)
        for (int j = 0; j < size; ++j) k.values[static_cast<std::size_t>(i) * size + j] = k.profile[i] * k.profile[j];
    return k;
}

GaussKernel default_confidence_kernel(int image_size) {
    if (image_size == 256) return gaussian_kernel(64, 40.0);
    const int size = std::max(1, image_size / 4);
    return gaussian_kernel(size, 0.625 * size);
}

WeightMask propagate_confidence(const Mask& mask, const GaussKernel& kernel, int iterations) {
    if (iterations < 1) throw std::invalid_argument("propagate_confidence needs >= 1 iteration");
    const int h = mask.h, w = mask.w;
    const std::size_t n = static_cast<std::size_t>(h) * w;
    std::vector<double> weight(n, 0.0), conf(n);
    for (int it = 0; it < iterations; ++it) {
        for (std::size_t i = 0; i < n; ++i) conf[i] = 1.0 - mask.values[i] + weight[i];
        std::vector<double> blurred = blur(conf, h, w, kernel);
        for (std::size_t i = 0; i < n; ++i) weight[i] = mask.values[i] ? blurred[i] : 0.0;
    }
    return {h, w, std::move(weight), iterations};
}

Tensor mask_tensor(std::span<const Mask> masks) {
    if (masks.empty()) throw std::invalid_argument("mask_tensor of empty batch");
    const int h = masks[0].h, w = masks[0].w;
    std::vector<double> data;
    data.reserve(masks.size() * h * w);
    for (const Mask& m : masks) {
        if (m.h != h || m.w != w) throw std::invalid_argument("mask batch with mixed sizes");
        data.insert(data.end(), m.values.begin(), m.values.end());
    }
    return Tensor::from_data({static_cast<int>(masks.size()), h, w, 1}, std::move(data));
}

Tensor weight_tensor(std::span<const WeightMask> weights) {
    if (weights.empty()) throw std::invalid_argument("weight_tensor of empty batch");
    const int h = weights[0].h, w = weights[0].w;
    std::vector<double> data;
    data.reserve(weights.size() * h * w);
    for (const WeightMask& m : weights) {
        if (m.h != h || m.w != w) throw std::invalid_argument("weight batch with mixed sizes");
        data.insert(data.end(), m.values.begin(), m.values.end());
    }
    return Tensor::from_data({static_cast<int>(weights.size()), h, w, 1}, std::move(data));
}

}  // namespace gmcnn
