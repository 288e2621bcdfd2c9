#pragma once

#include <span>

#include "gmcnn/image_io.hpp"

namespace gmcnn {

// 10 log10(255^2 / MSE) over all channels; +inf for identical inputs.
double psnr(const Image& a, const Image& b);
double psnr(std::span<const double> a, std::span<const double> b, double peak = 255.0);

struct SsimParams {
    int window = 11;
    double sigma = 1.5;
    double k1 = 0.01;
    double k2 = 0.03;
    double data_range = 255.0;
};

// Gaussian-windowed SSIM on BT.601 luma, averaged over every window that fits
// inside the image (population statistics).
double ssim(const Image& a, const Image& b, const SsimParams& params = {});
double ssim(std::span<const double> a, std::span<const double> b, int h, int w,
            const SsimParams& params = {});

}  // namespace gmcnn
