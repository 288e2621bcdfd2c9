#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gmcnn/idmrf.hpp"
#include "gmcnn/model.hpp"
#include "gmcnn/objective.hpp"
#include "gmcnn/tensor.hpp"

namespace gmcnn {

// Run configuration. Serialised as flat "key = value" lines with keys
// namespaced by module (see to_text() for the full key list).
struct TrainConfig {
    std::uint64_t seed = 1;
    Precision precision = Precision::f32;
    int threads = 1;

    // data
    std::string data_dir;  // empty: synthetic textures
    int synthetic_count = 8;
    double scale_min = 1.0;
    double scale_max = 1.5;

    int image_size = 256;
    int image_channels = 3;

    // mask
    int max_hole = 128;
    int mask_iterations = kDefaultConfidenceIterations;
    int mask_kernel_size = 0;       // 0: derived from image_size
    double mask_kernel_sigma = 0;   // 0: derived from image_size

    // optimisation
    int batch_size = 16;
    AdamConfig optim;
    LossWeights loss;
    L1Reduction l1_reduction = L1Reduction::sum;
    int critic_steps = 1;
    int phase1_iters = 500;
    int phase2_iters = 200;
    int checkpoint_every = 0;  // 0: final checkpoint only
    std::string out_dir = "run";

    IdMrfConfig idmrf;
    int backbone_width = 8;
    std::uint64_t backbone_seed = FeatureBackbone::kDefaultSeed;

    // architecture
    std::vector<int> filters = {7, 5, 3};
    std::vector<int> depths = {1, 2, 2};
    std::vector<int> dilations = {2, 2, 2};
    double width = 1.0;
    int critic_width = 16;

    void validate() const;
    GeneratorConfig generator_config() const;
    GaussKernel confidence_kernel() const;

    // Canonical text form: every key, sorted, one per line.
    std::string to_text() const;
    // Unknown or duplicate keys and malformed values are rejected.
    static TrainConfig parse(const std::string& text);
    static TrainConfig load(const std::string& path);
};

}  // namespace gmcnn
