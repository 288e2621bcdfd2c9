#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "gmcnn/conv.hpp"
#include "gmcnn/tensor.hpp"

namespace gmcnn {

using NamedTensors = std::map<std::string, Tensor>;

// Fixed-weight convolutional feature extractor standing in for a pretrained
// network. Four stages of two 3x3 convolutions each; stages 2-4 start with a
// stride-2 convolution. Tap "convS_2" is the activated output of stage S.
class FeatureBackbone {
public:
    static constexpr std::uint64_t kDefaultSeed = 0x5eed'baccULL;

    static FeatureBackbone make_default(int in_channels = 3, std::uint64_t seed = kDefaultSeed,
                                        int base_width = 8);
    // Rebuilds a backbone from tensors named "conv<S>_<I>/w" and "conv<S>_<I>/b".
    static FeatureBackbone from_tensors(const NamedTensors& tensors);

    // Differentiable w.r.t. the image; the weights never receive gradients.
    std::map<std::string, Tensor> extract(const Tensor& image,
                                          const std::vector<std::string>& layers) const;

    static int layer_stride(const std::string& layer);
    static std::vector<std::string> layer_names();
    int in_channels() const { return in_channels_; }
    const NamedTensors& tensors() const { return weights_; }

private:
    int in_channels_ = 3;
    NamedTensors weights_;
    std::vector<int> widths_;
};

struct PatchSet {
    int patch_size = 1;
    int stride = 1;
    int count = 0;
    int dim = 0;
    std::string layer;
    Tensor vectors;  // (1, count, dim, 1); row p is patch p flattened in (ky, kx, c) order
};

struct IdMrfConfig {
    double h = 0.5;
    double eps = 1e-5;
    int patch_size = 3;
    int patch_stride = 1;
    // Layer name -> multiplicity in the total. conv4_2 appears twice (once for
    // structure, once in the texture sum).
    std::vector<std::pair<std::string, double>> layers = {{"conv4_2", 2.0}, {"conv3_2", 1.0}};
    // Norm floor in cosine similarity.
    double norm_guard = 1e-12;

    void validate() const;
};

struct RelativeSimilarity {
    Tensor logits;  // (1, P_gen, P_ref, 1)
    Tensor rs_bar;  // row-normalised relative similarity
};

// All valid k x k windows of a single-image feature map in raster order.
PatchSet extract_patches(const Tensor& features, int k, int stride, std::string layer = {});

// mu(v, s) = <v, s> / (max(|v|, guard) * max(|s|, guard)).
Tensor cosine_similarity_matrix(const PatchSet& gen, const PatchSet& ref, double norm_guard = 1e-12);

// logit(v, s) = (mu(v, s) / (max(0, max_{r != s} mu(v, r)) + eps)) / h and its
// row-wise exponential normalisation, evaluated with a per-row shift.
RelativeSimilarity relative_similarity(const Tensor& mu, const IdMrfConfig& config);

// -log((1/Z) sum_s max_v rs_bar(v, s)); Z defaults to the reference count.
Tensor idmrf_layer_loss(const Tensor& rs_bar, double z = 0.0);

struct IdMrfTerms {
    std::vector<std::pair<std::string, Tensor>> per_layer;  // unweighted L_M per layer
    Tensor total;
};

// Weighted sum of per-layer losses, averaged over the batch. The reference
// image is treated as a constant.
IdMrfTerms idmrf_terms(const Tensor& gen_image, const Tensor& ref_image,
                       const FeatureBackbone& backbone, const IdMrfConfig& config);
Tensor idmrf_total(const Tensor& gen_image, const Tensor& ref_image,
                   const FeatureBackbone& backbone, const IdMrfConfig& config);

}  // namespace gmcnn
