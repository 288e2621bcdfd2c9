#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "gmcnn/image_io.hpp"
#include "gmcnn/mask.hpp"
#include "gmcnn/tensor.hpp"

namespace gmcnn {

// Pixel value in [0, 255] to [-1, 1].
inline double to_unit(double pixel) { return pixel / 127.5 - 1.0; }

// (1, h, w, c) tensor in [-1, 1].
Tensor image_to_tensor(const Image& image);
// Stacks equally sized images into an (n, h, w, c) batch.
Tensor images_to_batch(std::span<const Image> images);
// Quantises element `index` of an (n, h, w, c) batch: round((v + 1) * 127.5),
// halves away from zero, clamped to [0, 255].
Image tensor_to_image(const Tensor& batch, int index = 0);

// Replicates gray to RGB or reduces RGB to rounded BT.601 luma.
Image convert_channels(const Image& image, int channels);

// Striped, checkered and gradient textures with smooth colour variation.
std::vector<Image> synthetic_textures(int count, int size, int channels, std::uint64_t seed);

// All *.png files in dir, in name order, converted to `channels`.
std::vector<Image> load_image_dir(const std::string& dir, int channels);

// Scales by s ~ U[scale_min, scale_max] (bilinear) and takes a uniformly
// placed target x target crop of the scaled image.
Image random_crop_scale(const Image& image, int target, double scale_min, double scale_max,
                        std::mt19937_64& rng);

struct MaskSampling {
    int max_hole = 32;
    GaussKernel kernel;
    int iterations = kDefaultConfidenceIterations;
};

struct TrainingBatch {
    Tensor target;  // Y, (n, h, w, c)
    Tensor input;   // X = Y * (1 - M)
    Tensor mask;    // M, (n, h, w, 1)
    Tensor weight;  // M_w, (n, h, w, 1)
    std::vector<Mask> masks;
    std::vector<BoundingBox> holes;
};

// Samples one mask per image and builds (Y, X, M, M_w).
TrainingBatch make_training_batch(std::span<const Image> images, const MaskSampling& sampling,
                                  std::mt19937_64& rng);
// Same, with caller-supplied masks.
TrainingBatch make_training_batch(std::span<const Image> images, std::vector<Mask> masks,
                                  const GaussKernel& kernel, int iterations);

}  // namespace gmcnn
