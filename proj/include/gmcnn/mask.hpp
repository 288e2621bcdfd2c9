#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "gmcnn/tensor.hpp"

namespace gmcnn {

struct BoundingBox {
    int top = 0;
    int left = 0;
    int height = 0;
    int width = 0;

    bool empty() const { return height <= 0 || width <= 0; }
    bool contains(int y, int x) const {
        return y >= top && y < top + height && x >= left && x < left + width;
    }
    friend bool operator==(const BoundingBox&, const BoundingBox&) = default;
};

// Binary hole mask: 0 marks a known pixel, 1 an unknown one.
struct Mask {
    int h = 0;
    int w = 0;
    std::vector<std::uint8_t> values;
    BoundingBox hole;  // tight box around the unknown pixels

    std::uint8_t at(int y, int x) const { return values[static_cast<std::size_t>(y) * w + x]; }
    std::size_t unknown_count() const;

    static Mask known(int h, int w);
    // Any value >= 128 is unknown.
    static Mask from_gray(int h, int w, std::span<const std::uint8_t> gray);
    // 0 for known, 255 for unknown.
    std::vector<std::uint8_t> to_gray() const;
};

// Confidence weight mask; zero on known pixels.
struct WeightMask {
    int h = 0;
    int w = 0;
    std::vector<double> values;
    int iterations_used = 0;

    double at(int y, int x) const { return values[static_cast<std::size_t>(y) * w + x]; }
};

// Isotropic Gaussian sampled at cell centres and normalised to sum 1.
// The convolution anchor is cell (size/2, size/2), which for even sizes sits
// half a cell off the geometric centre.
struct GaussKernel {
    int size = 1;
    double sigma = 1.0;
    std::vector<double> profile;  // normalised 1-D factor, length size
    std::vector<double> values;   // size x size, outer product of profile

    double at(int i, int j) const { return values[static_cast<std::size_t>(i) * size + j]; }
    int anchor() const { return size / 2; }
};

Mask sample_mask(std::mt19937_64& rng, int image_h, int image_w, int max_hole_h, int max_hole_w);
Mask sample_mask(std::uint64_t seed, int image_h, int image_w, int max_hole_h, int max_hole_w);

GaussKernel gaussian_kernel(int size, double sigma);

// 64x64, sigma 40 at 256x256; size = image/4 and sigma = 0.625 * size otherwise.
GaussKernel default_confidence_kernel(int image_size);

inline constexpr int kDefaultConfidenceIterations = 5;

WeightMask propagate_confidence(const Mask& mask, const GaussKernel& kernel,
                                int iterations = kDefaultConfidenceIterations);

// Batch tensors of shape (n, h, w, 1).
Tensor mask_tensor(std::span<const Mask> masks);
Tensor weight_tensor(std::span<const WeightMask> weights);

}  // namespace gmcnn
