#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "gmcnn/conv.hpp"
#include "gmcnn/mask.hpp"
#include "gmcnn/ops.hpp"
#include "gmcnn/tensor.hpp"

namespace gmcnn {

using NamedTensors = std::map<std::string, Tensor>;

// One encoder-decoder column. widths[d] is the channel count at resolution
// level d (level 0 is full resolution), so widths has depth + 1 entries.
struct BranchSpec {
    int filter = 3;
    int depth = 1;     // number of stride-2 stages
    int dilation = 1;  // dilation of the two convolutions at the deepest level
    std::vector<int> widths;
    int out_channels = 8;

    void validate() const;
    // Receptive field of one branch output pixel, in input pixels.
    int receptive_field() const;
};

struct GeneratorConfig {
    int image_channels = 3;
    std::vector<BranchSpec> branches;
    int decoder_width = 32;
    Activation activation = Activation::elu;

    // Three columns with 7x7 / 5x5 / 3x3 filters and depths 1 / 2 / 2, widths
    // scaled by `width` (1.0 gives roughly 0.4M parameters).
    static GeneratorConfig desk_default(double width = 1.0);
    int fused_channels() const;
    void validate() const;
};

struct CriticConfig {
    int image_channels = 3;
    int input_size = 64;  // square input the critic is built for
    int base_width = 16;
    Activation activation = Activation::softplus;

    void validate() const;
};

class Generator {
public:
    Generator() = default;
    Generator(GeneratorConfig config, std::uint64_t seed);
    static Generator from_tensors(GeneratorConfig config, const NamedTensors& tensors);

    // image: (n, h, w, c) in [-1, 1], zero inside the hole; mask: (n, h, w, 1).
    // Returns the raw prediction, squashed to [-1, 1].
    Tensor forward(const Tensor& image, const Tensor& mask) const;
    // Concatenated, upsampled branch features fed to the shared decoder.
    Tensor fused_features(const Tensor& image, const Tensor& mask) const;

    const GeneratorConfig& config() const { return config_; }
    const NamedTensors& tensors() const { return params_; }
    std::vector<Tensor> parameters() const;
    std::size_t parameter_count() const;

private:
    GeneratorConfig config_;
    NamedTensors params_;
};

// Strided convolutional critic ending in one scalar per batch element.
class CriticNet {
public:
    CriticNet() = default;
    CriticNet(CriticConfig config, std::uint64_t seed);
    static CriticNet from_tensors(CriticConfig config, const NamedTensors& tensors);

    Tensor forward(const Tensor& image) const;  // (n, s, s, c) -> (n, 1, 1, 1)

    const CriticConfig& config() const { return config_; }
    const NamedTensors& tensors() const { return params_; }
    std::vector<Tensor> parameters() const;
    int stages() const;

private:
    CriticConfig config_;
    NamedTensors params_;
};

struct CriticPair {
    CriticNet global;
    CriticNet local;

    // Global critic sees image_size; local critic sees image_size / 2 crops.
    static CriticPair make(int image_channels, int image_size, int base_width, std::uint64_t seed);
};

struct CriticScores {
    Tensor global;  // (n, 1, 1, 1)
    Tensor local;   // (n, 1, 1, 1)
};

// Local scores come from each element's hole box resized to the local critic input.
Tensor local_crops(const Tensor& image, const std::vector<BoundingBox>& holes, int size);
CriticScores critic_scores(const Tensor& image, const std::vector<BoundingBox>& holes,
                           const CriticPair& critics);
// Mean of global and local scores.
Tensor combined_score(const CriticScores& scores);

// y * (1 - m) + g * m, with m of shape (n, h, w, 1).
Tensor compose_output(const Tensor& target, const Tensor& mask, const Tensor& generated);

}  // namespace gmcnn
