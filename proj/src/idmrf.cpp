#include "gmcnn/idmrf.hpp"

#include <cmath>
#include <random>
#include <set>
#include <stdexcept>

#include "gmcnn/ops.hpp"

namespace gmcnn {

namespace {

constexpr int kStages = 4;

std::string conv_name(int stage, int idx) {
    return "conv" + std::to_string(stage) + "_" + std::to_string(idx);
}

ConvSpec backbone_spec(int cin, int cout, int stride) {
    ConvSpec s;
    s.kh = s.kw = 3;
    s.c_in = cin;
    s.c_out = cout;
    s.stride_h = s.stride_w = stride;
    return s;
}

int parse_stage(const std::string& layer) {
    // conv<S>_2 with S in 1..4
    if (layer.size() == 7 && layer.starts_with("conv") && layer[5] == '_' && layer[6] == '2') {
        const int s = layer[4] - '0';
        if (s >= 1 && s <= kStages) return s;
    }
    throw std::invalid_argument("unknown backbone layer '" + layer + "'");
}

std::vector<std::size_t> argmax_rows(std::span<const double> m, int r, int c) {
    std::vector<std::size_t> idx(r);
    for (int i = 0; i < r; ++i) {
        int best = 0;
        for (int j = 1; j < c; ++j)
            if (m[static_cast<std::size_t>(i) * c + j] > m[static_cast<std::size_t>(i) * c + best]) best = j;
        idx[i] = static_cast<std::size_t>(i) * c + best;
    }
    return idx;
}

}  // namespace

// --- backbone ----------------------------------------------------------------

FeatureBackbone FeatureBackbone::make_default(int in_channels, std::uint64_t seed, int base_width) {
    if (in_channels < 1 || base_width < 1) throw std::invalid_argument("invalid backbone widths");
    FeatureBackbone b;
    b.in_channels_ = in_channels;
    b.widths_ = {base_width, 2 * base_width, 4 * base_width, 4 * base_width};
    std::mt19937_64 rng(seed);
    int cin = in_channels;
    for (int s = 1; s <= kStages; ++s) {
        const int cout = b.widths_[s - 1];
        for (int i = 1; i <= 2; ++i) {
            ConvSpec spec = backbone_spec(i == 1 ? cin : cout, cout, 1);
            std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / (9.0 * spec.c_in)));
            std::vector<double> w(spec.weight_shape().numel());
            for (double& v : w) v = dist(rng);
            b.weights_[conv_name(s, i) + "/w"] = Tensor::from_data(spec.weight_shape(), std::move(w));
            b.weights_[conv_name(s, i) + "/b"] = Tensor::zeros(spec.bias_shape());
        }
        cin = cout;
    }
    return b;
}

FeatureBackbone FeatureBackbone::from_tensors(const NamedTensors& tensors) {
    FeatureBackbone b;
    int cin = -1;
    for (int s = 1; s <= kStages; ++s) {
        for (int i = 1; i <= 2; ++i) {
            auto w = tensors.find(conv_name(s, i) + "/w");
            auto bias = tensors.find(conv_name(s, i) + "/b");
            if (w == tensors.end() || bias == tensors.end()) {
                throw std::invalid_argument("backbone tensors missing " + conv_name(s, i));
            }
            const Shape& ws = w->second.shape();
            if (ws.n != 3 || ws.h != 3 || bias->second.shape() != Shape{1, 1, 1, ws.c}) {
                throw std::invalid_argument("backbone tensor " + conv_name(s, i) +
                                            " has unexpected shape " + ws.str());
            }
            if (cin < 0) b.in_channels_ = ws.w;
            if (cin >= 0 && ws.w != cin) {
                throw std::invalid_argument("backbone channel chain broken at " + conv_name(s, i));
            }
            cin = ws.c;
            if (i == 2) b.widths_.push_back(ws.c);
            b.weights_[conv_name(s, i) + "/w"] = w->second.detach();
            b.weights_[conv_name(s, i) + "/b"] = bias->second.detach();
        }
    }
    return b;
}

int FeatureBackbone::layer_stride(const std::string& layer) { return 1 << (parse_stage(layer) - 1); }

std::vector<std::string> FeatureBackbone::layer_names() {
    std::vector<std::string> names;
    for (int s = 1; s <= kStages; ++s) names.push_back(conv_name(s, 2));
    return names;
}

std::map<std::string, Tensor> FeatureBackbone::extract(const Tensor& image,
                                                       const std::vector<std::string>& layers) const {
    if (image.shape().c != in_channels_) {
        throw ShapeError("backbone input channels", image.shape(),
                         Shape{image.shape().n, image.shape().h, image.shape().w, in_channels_});
    }
    int deepest = 0;
    for (const auto& l : layers) deepest = std::max(deepest, parse_stage(l));
    const std::set<std::string> wanted(layers.begin(), layers.end());

    std::map<std::string, Tensor> out;
    Tensor x = image;
    int cin = in_channels_;
    for (int s = 1; s <= deepest; ++s) {
        const int cout = widths_[s - 1];
        for (int i = 1; i <= 2; ++i) {
            const int stride = (i == 1 && s > 1) ? 2 : 1;
            ConvSpec spec = backbone_spec(i == 1 ? cin : cout, cout, stride);
            x = softplus(conv2d(x, spec, weights_.at(conv_name(s, i) + "/w"),
                                weights_.at(conv_name(s, i) + "/b")));
        }
        cin = cout;
        if (wanted.contains(conv_name(s, 2))) out[conv_name(s, 2)] = x;
    }
    return out;
}

// --- patches and similarities ------------------------------------------------

void IdMrfConfig::validate() const {
    if (!(h > 0) || !(eps > 0)) throw std::invalid_argument("idmrf h and eps must be positive");
    if (patch_size < 1 || patch_stride < 1) throw std::invalid_argument("invalid idmrf patch geometry");
    if (layers.empty()) throw std::invalid_argument("idmrf needs at least one layer");
    for (const auto& [name, weight] : layers) {
        FeatureBackbone::layer_stride(name);
        if (weight < 0) throw std::invalid_argument("negative idmrf layer weight for " + name);
    }
}

PatchSet extract_patches(const Tensor& features, int k, int stride, std::string layer) {
    const Shape& s = features.shape();
    if (s.n != 1) throw std::invalid_argument("extract_patches expects a single image, got " + s.str());
    if (k < 1 || stride < 1) throw std::invalid_argument("invalid patch size or stride");
    if (k > s.h || k > s.w) {
        throw std::invalid_argument("patch size " + std::to_string(k) + " exceeds feature map " +
                                    s.str());
    }
    const int ny = (s.h - k) / stride + 1;
    const int nx = (s.w - k) / stride + 1;
    const int count = ny * nx;
    const int dim = k * k * s.c;

    auto map = std::make_shared<SparseMap>();
    map->in_shape = s;
    map->out_shape = matrix_shape(count, dim);
    map->unit = s.c;
    map->row_ptr.reserve(static_cast<std::size_t>(count) * k * k + 1);
    map->row_ptr.push_back(0);
    for (int py = 0; py < ny; ++py)
        for (int px = 0; px < nx; ++px)
            for (int ky = 0; ky < k; ++ky)
                for (int kx = 0; kx < k; ++kx) {
                    map->col.push_back(static_cast<std::size_t>(py * stride + ky) * s.w + px * stride + kx);
                    map->weight.push_back(1.0);
                    map->row_ptr.push_back(map->col.size());
                }
    PatchSet p;
    p.patch_size = k;
    p.stride = stride;
    p.count = count;
    p.dim = dim;
    p.layer = std::move(layer);
    p.vectors = apply_sparse(features, std::move(map));
    return p;
}

Tensor cosine_similarity_matrix(const PatchSet& gen, const PatchSet& ref, double norm_guard) {
    if (gen.dim != ref.dim) {
        throw ShapeError("cosine_similarity_matrix patch length", gen.vectors.shape(), ref.vectors.shape());
    }
    auto normalise = [norm_guard](const Tensor& v) {
        Tensor norms = sqrt(sum_to(square(v), matrix_shape(rows(v), 1)));
        return div(v, clamp_min(norms, norm_guard));
    };
    return matmul(normalise(gen.vectors), normalise(ref.vectors), false, true);
}

RelativeSimilarity relative_similarity(const Tensor& mu, const IdMrfConfig& config) {
    const int p = rows(mu), q = cols(mu);
    if (mu.shape() != matrix_shape(p, q)) throw std::invalid_argument("similarity must be a matrix");
    if (q < 2) {
        throw std::invalid_argument("relative similarity needs at least 2 reference patches, got " +
                                    std::to_string(q));
    }
    // Competitor for (v, s): best reference other than s. Ties go to the lowest index.
    auto m = mu.data();
    std::vector<std::size_t> competitor(static_cast<std::size_t>(p) * q);
    for (int i = 0; i < p; ++i) {
        const double* row = m.data() + static_cast<std::size_t>(i) * q;
        int first = 0;
        for (int j = 1; j < q; ++j)
            if (row[j] > row[first]) first = j;
        int second = first == 0 ? 1 : 0;
        for (int j = 0; j < q; ++j)
            if (j != first && row[j] > row[second]) second = j;
        for (int j = 0; j < q; ++j)
            competitor[static_cast<std::size_t>(i) * q + j] =
                static_cast<std::size_t>(i) * q + (j == first ? second : first);
    }
    Tensor best_other = gather(mu, competitor, mu.shape());
    Tensor denom = add_scalar(clamp_min(best_other, 0.0), config.eps);
    Tensor logits = scale(div(mu, denom), 1.0 / config.h);

    // Row shift; RS-bar is invariant to it, so it is held constant.
    Tensor shift = gather(logits, argmax_rows(logits.data(), p, q), matrix_shape(p, 1)).detach();
    Tensor e = exp(sub(logits, shift));
    Tensor rs_bar = div(e, sum_to(e, matrix_shape(p, 1)));
    return {logits, rs_bar};
}

Tensor idmrf_layer_loss(const Tensor& rs_bar, double z) {
    const int p = rows(rs_bar), q = cols(rs_bar);
    if (rs_bar.numel() == 0 || p < 1 || q < 1) throw std::invalid_argument("idmrf_layer_loss of empty matrix");
    auto m = rs_bar.data();
    // Column argmax over generated patches; ties go to the lowest row.
    std::vector<std::size_t> pick(q);
    for (int j = 0; j < q; ++j) {
        int best = 0;
        for (int i = 1; i < p; ++i)
            if (m[static_cast<std::size_t>(i) * q + j] > m[static_cast<std::size_t>(best) * q + j]) best = i;
        pick[j] = static_cast<std::size_t>(best) * q + j;
    }
    const double norm = z > 0 ? z : static_cast<double>(q);
    Tensor col_max = gather(rs_bar, pick, matrix_shape(1, q));
    return neg(log(scale(sum(col_max), 1.0 / norm)));
}

IdMrfTerms idmrf_terms(const Tensor& gen_image, const Tensor& ref_image,
                       const FeatureBackbone& backbone, const IdMrfConfig& config) {
    config.validate();
    if (gen_image.shape() != ref_image.shape()) {
        throw ShapeError("idmrf images", gen_image.shape(), ref_image.shape());
    }
    std::vector<std::string> names;
    for (const auto& [name, w] : config.layers) names.push_back(name);

    auto gen_feats = backbone.extract(gen_image, names);
    std::map<std::string, Tensor> ref_feats;
    {
        NoGradScope no_grad;
        ref_feats = backbone.extract(ref_image.detach(), names);
    }

    const int batch = gen_image.shape().n;
    IdMrfTerms terms;
    std::map<std::string, Tensor> per_layer;
    for (const std::string& name : names) {
        if (per_layer.contains(name)) continue;
        Tensor acc;
        for (int b = 0; b < batch; ++b) {
            PatchSet g = extract_patches(slice_batch(gen_feats.at(name), b, 1), config.patch_size,
                                         config.patch_stride, name);
            PatchSet r = extract_patches(slice_batch(ref_feats.at(name), b, 1), config.patch_size,
                                         config.patch_stride, name);
            Tensor mu = cosine_similarity_matrix(g, r, config.norm_guard);
            Tensor loss = idmrf_layer_loss(relative_similarity(mu, config).rs_bar);
            acc = acc.defined() ? add(acc, loss) : loss;
        }
        per_layer[name] = batch == 1 ? acc : scale(acc, 1.0 / batch);
    }
    Tensor total;
    for (const auto& [name, weight] : config.layers) {
        Tensor term = scale(per_layer.at(name), weight);
        total = total.defined() ? add(total, term) : term;
    }
    for (const std::string& name : names) {
        bool seen = false;
        for (const auto& [n, t] : terms.per_layer) seen = seen || n == name;
        if (!seen) terms.per_layer.emplace_back(name, per_layer.at(name));
    }
    terms.total = total;
    return terms;
}

Tensor idmrf_total(const Tensor& gen_image, const Tensor& ref_image, const FeatureBackbone& backbone,
                   const IdMrfConfig& config) {
    return idmrf_terms(gen_image, ref_image, backbone, config).total;
}

}  // namespace gmcnn
