#include "gmcnn/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numbers>
#include <stdexcept>
#include <tuple>

namespace gmcnn {

Tensor image_to_tensor(const Image& image) { return images_to_batch(std::span<const Image>(&image, 1)); }

Tensor images_to_batch(std::span<const Image> images) {
    if (images.empty()) throw std::invalid_argument("images_to_batch: no images");
    const Image& first = images.front();
    const Shape shape{static_cast<int>(images.size()), first.h, first.w, first.channels};
    std::vector<double> values;
    values.reserve(shape.numel());
    for (const Image& im : images) {
        if (im.h != first.h || im.w != first.w || im.channels != first.channels) {
            throw std::invalid_argument("images_to_batch: images differ in size");
        }
        for (std::uint8_t p : im.pixels) values.push_back(round_to_precision(to_unit(p)));
    }
    return Tensor::from_data(shape, std::move(values));
}

Image tensor_to_image(const Tensor& batch, int index) {
    const Shape& s = batch.shape();
    if (index < 0 || index >= s.n) throw std::out_of_range("tensor_to_image: batch index out of range");
    if (s.c != 1 && s.c != 3) throw std::invalid_argument("tensor_to_image: channels must be 1 or 3");
    Image img{s.h, s.w, s.c, {}};
    img.pixels.resize(static_cast<std::size_t>(s.h) * s.w * s.c);
    const auto data = batch.data();
    const std::size_t base = static_cast<std::size_t>(index) * img.pixels.size();
    for (std::size_t i = 0; i < img.pixels.size(); ++i) {
        const double v = std::lround((data[base + i] + 1.0) * 127.5);
        img.pixels[i] = static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
    }
    return img;
}

Image convert_channels(const Image& image, int channels) {
    if (image.channels == channels) return image;
    Image out{image.h, image.w, channels, {}};
    const std::size_t n = static_cast<std::size_t>(image.h) * image.w;
    if (image.channels == 1 && channels == 3) {
        out.pixels.resize(n * 3);
        for (std::size_t i = 0; i < n; ++i) out.pixels[3 * i] = out.pixels[3 * i + 1] = out.pixels[3 * i + 2] = image.pixels[i];
    } else if (image.channels == 3 && channels == 1) {
        const auto luma = to_luma(image);
        out.pixels.resize(n);
        for (std::size_t i = 0; i < n; ++i) out.pixels[i] = static_cast<std::uint8_t>(std::clamp(std::lround(luma[i]), 0L, 255L));
    } else {
        throw std::invalid_argument("convert_channels: unsupported conversion");
    }
    return out;
}

std::vector<Image> synthetic_textures(int count, int size, int channels, std::uint64_t seed) {
    if (count < 1 || size < 1) throw std::invalid_argument("synthetic_textures: count and size must be positive");
    if (channels != 1 && channels != 3) throw std::invalid_argument("synthetic_textures: channels must be 1 or 3");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    std::vector<Image> out;
    for (int k = 0; k < count; ++k) {
        const int kind = k % 3;
        const double period = 6.0 + 10.0 * uni(rng);
        const double angle = std::numbers::pi * uni(rng);
        const double ca = std::cos(angle), sa = std::sin(angle);
        double base[3], amp[3], tilt[3];
        for (int c = 0; c < 3; ++c) {
            base[c] = 60.0 + 135.0 * uni(rng);
            amp[c] = 30.0 + 30.0 * uni(rng);
            tilt[c] = 40.0 * (uni(rng) - 0.5);
        }
        Image img{size, size, channels, std::vector<std::uint8_t>(static_cast<std::size_t>(size) * size * channels)};
        for (int y = 0; y < size; ++y) {
            for (int x = 0; x < size; ++x) {
                const double u = (ca * x + sa * y) / period;
                const double gy = static_cast<double>(y) / size - 0.5;
                const double gx = static_cast<double>(x) / size - 0.5;
                double pattern = 0.0;
                switch (kind) {
                    case 0: pattern = std::sin(2.0 * std::numbers::pi * u); break;
                    case 1: {
                        const double vv = (-sa * x + ca * y) / period;
                        pattern = std::sin(std::numbers::pi * u) * std::sin(std::numbers::pi * vv);
                        pattern = std::tanh(3.0 * pattern);
                        break;
                    }
                    default: pattern = 2.0 * (gx * ca + gy * sa); break;
                }
                for (int c = 0; c < channels; ++c) {
                    const double v = base[c] + amp[c] * pattern + tilt[c] * (gx - gy);
                    img.at(y, x, c) = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
                }
            }
        }
        out.push_back(std::move(img));
    }
    return out;
}

std::vector<Image> load_image_dir(const std::string& dir, int channels) {
    namespace fs = std::filesystem;
    std::error_code ec;
    if (!fs::is_directory(dir, ec)) throw std::runtime_error("data directory '" + dir + "' does not exist");
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".png") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    std::vector<Image> out;
    for (const auto& f : files) out.push_back(convert_channels(read_png(f.string()), channels));
    if (out.empty()) throw std::runtime_error("data directory '" + dir + "' contains no PNG images");
    return out;
}

Image random_crop_scale(const Image& image, int target, double scale_min, double scale_max, std::mt19937_64& rng) {
    if (!(scale_min > 0) || scale_max < scale_min) throw std::invalid_argument("random_crop_scale: bad scale range");
    if (target < 1) throw std::invalid_argument("random_crop_scale: target must be positive");
    const double s = scale_min == scale_max ? scale_min : std::uniform_real_distribution<double>(scale_min, scale_max)(rng);
    const int sh = static_cast<int>(std::floor(image.h * s));
    const int sw = static_cast<int>(std::floor(image.w * s));
    if (sh < target || sw < target) {
        throw std::invalid_argument("random_crop_scale: " + std::to_string(image.h) + "x" + std::to_string(image.w) +
                                    " image scaled by " + std::to_string(s) + " is smaller than " +
                                    std::to_string(target));
    }
    const int top = std::uniform_int_distribution<int>(0, sh - target)(rng);
    const int left = std::uniform_int_distribution<int>(0, sw - target)(rng);

    // Pixel centres of the scaled image mapped back to source coordinates.
    auto source = [s](int i, int n) {
        const double p = std::max(0.0, (i + 0.5) / s - 0.5);
        const int i0 = std::min(static_cast<int>(p), n - 1);
        const int i1 = std::min(i0 + 1, n - 1);
        return std::tuple{i0, i1, p - i0};
    };
    Image out{target, target, image.channels, std::vector<std::uint8_t>(static_cast<std::size_t>(target) * target * image.channels)};
    for (int y = 0; y < target; ++y) {
        const auto [y0, y1, fy] = source(top + y, image.h);
        for (int x = 0; x < target; ++x) {
            const auto [x0, x1, fx] = source(left + x, image.w);
            for (int c = 0; c < image.channels; ++c) {
                const double v = (1 - fy) * ((1 - fx) * image.at(y0, x0, c) + fx * image.at(y0, x1, c)) +
                                 fy * ((1 - fx) * image.at(y1, x0, c) + fx * image.at(y1, x1, c));
                out.at(y, x, c) = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
            }
        }
    }
    return out;
}

TrainingBatch make_training_batch(std::span<const Image> images, std::vector<Mask> masks, const GaussKernel& kernel,
                                  int iterations) {
    if (images.empty()) throw std::invalid_argument("make_training_batch: no images");
    if (masks.size() != images.size()) throw std::invalid_argument("make_training_batch: one mask per image required");
    TrainingBatch b;
    b.target = images_to_batch(images);
    const Shape& s = b.target.shape();
    std::vector<WeightMask> weights;
    for (const Mask& m : masks) {
        if (m.h != s.h || m.w != s.w) throw std::invalid_argument("make_training_batch: mask does not match image size");
        weights.push_back(propagate_confidence(m, kernel, iterations));
        b.holes.push_back(m.hole);
    }
    b.mask = mask_tensor(masks);
    b.weight = weight_tensor(weights);
    std::vector<double> x(b.target.data().begin(), b.target.data().end());
    const auto mv = b.mask.data();
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (mv[i / s.c] != 0.0) x[i] = 0.0;
    }
    b.input = Tensor::from_data(s, std::move(x));
    b.masks = std::move(masks);
    return b;
}

TrainingBatch make_training_batch(std::span<const Image> images, const MaskSampling& sampling, std::mt19937_64& rng) {
    std::vector<Mask> masks;
    for (const Image& im : images) {
        if (sampling.max_hole > im.h || sampling.max_hole > im.w) {
            throw std::invalid_argument("make_training_batch: image smaller than the maximum hole");
        }
        masks.push_back(sample_mask(rng, im.h, im.w, sampling.max_hole, sampling.max_hole));
    }
    return make_training_batch(images, std::move(masks), sampling.kernel, sampling.iterations);
}

}  // namespace gmcnn
