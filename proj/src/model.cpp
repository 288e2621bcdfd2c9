#include "gmcnn/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

namespace gmcnn {

namespace {

struct LayerDef {
    std::string name;
    ConvSpec spec;
    double gain = 2.0;  // init variance = gain / fan_in
};

ConvSpec square_conv(int k, int cin, int cout, int stride = 1, int dilation = 1,
                     Padding pad = Padding::same) {
    ConvSpec s;
    s.kh = s.kw = k;
    s.c_in = cin;
    s.c_out = cout;
    s.stride_h = s.stride_w = stride;
    s.dilation_h = s.dilation_w = dilation;
    s.padding = pad;
    return s;
}

std::string branch_prefix(std::size_t i) { return "branch" + std::to_string(i) + "/"; }

std::vector<LayerDef> branch_layers(const BranchSpec& b, std::size_t index, int in_channels) {
    const std::string p = branch_prefix(index);
    std::vector<LayerDef> layers;
    layers.push_back({p + "conv0", square_conv(b.filter, in_channels, b.widths[0])});
    for (int d = 1; d <= b.depth; ++d) {
        layers.push_back({p + "down" + std::to_string(d),
                          square_conv(b.filter, b.widths[d - 1], b.widths[d], 2)});
    }
    const int deep = b.widths[b.depth];
    for (int i = 0; i < 2; ++i) {
        layers.push_back({p + "dilated" + std::to_string(i), square_conv(b.filter, deep, deep, 1, b.dilation)});
    }
    layers.push_back({p + "out", square_conv(b.filter, deep, b.out_channels)});
    return layers;
}

std::vector<LayerDef> decoder_layers(const GeneratorConfig& c) {
    return {{"decoder/conv0", square_conv(3, c.fused_channels(), c.decoder_width)},
            {"decoder/conv1", square_conv(3, c.decoder_width, c.image_channels), 1.0}};
}

std::vector<LayerDef> generator_layers(const GeneratorConfig& c) {
    std::vector<LayerDef> all;
    for (std::size_t i = 0; i < c.branches.size(); ++i) {
        auto b = branch_layers(c.branches[i], i, c.image_channels + 1);
        all.insert(all.end(), b.begin(), b.end());
    }
    auto d = decoder_layers(c);
    all.insert(all.end(), d.begin(), d.end());
    return all;
}

std::vector<LayerDef> critic_layers(const CriticConfig& c) {
    std::vector<LayerDef> layers;
    int size = c.input_size;
    int cin = c.image_channels;
    int width = c.base_width;
    int stage = 0;
    while (size > 4) {
        layers.push_back({"conv" + std::to_string(stage), square_conv(5, cin, width, 2)});
        size = (size + 1) / 2;
        cin = width;
        width = std::min(width * 2, c.base_width * 4);
        ++stage;
    }
    LayerDef fc{"fc", square_conv(size, cin, 1, 1, 1, Padding::valid), 1.0};
    layers.push_back(fc);
    return layers;
}

void init_layers(const std::vector<LayerDef>& layers, std::uint64_t seed, NamedTensors& out) {
    std::mt19937_64 rng(seed);
    for (const LayerDef& l : layers) {
        const double fan_in = static_cast<double>(l.spec.kh) * l.spec.kw * l.spec.c_in;
        std::normal_distribution<double> dist(0.0, std::sqrt(l.gain / fan_in));
        std::vector<double> w(l.spec.weight_shape().numel());
        for (double& v : w) v = dist(rng);
        out[l.name + "/w"] = Tensor::from_data(l.spec.weight_shape(), std::move(w), true);
        out[l.name + "/b"] = Tensor::zeros(l.spec.bias_shape(), true);
    }
}

void load_layers(const std::vector<LayerDef>& layers, const NamedTensors& src, NamedTensors& out) {
    for (const LayerDef& l : layers) {
        for (const auto& [suffix, shape] :
             {std::pair{std::string("/w"), l.spec.weight_shape()}, std::pair{std::string("/b"), l.spec.bias_shape()}}) {
            auto it = src.find(l.name + suffix);
            if (it == src.end()) throw std::invalid_argument("missing parameter tensor " + l.name + suffix);
            if (it->second.shape() != shape) throw ShapeError("parameter " + l.name + suffix, it->second.shape(), shape);
            out[l.name + suffix] = it->second.copy(true);
        }
    }
}

Tensor apply_layer(const Tensor& x, const LayerDef& l, const NamedTensors& params) {
    return conv2d(x, l.spec, params.at(l.name + "/w"), params.at(l.name + "/b"));
}

std::vector<Tensor> values_of(const NamedTensors& t) {
    std::vector<Tensor> v;
    v.reserve(t.size());
    for (const auto& [name, tensor] : t) v.push_back(tensor);
    return v;
}

}  // namespace

// --- configuration -----------------------------------------------------------

void BranchSpec::validate() const {
    if (filter < 1 || depth < 0 || dilation < 1 || out_channels < 1) {
        throw std::invalid_argument("invalid branch spec");
    }
    if (static_cast<int>(widths.size()) != depth + 1) {
        throw std::invalid_argument("branch widths must have depth + 1 entries");
    }
    for (int w : widths)
        if (w < 1) throw std::invalid_argument("branch widths must be positive");
}

int BranchSpec::receptive_field() const {
    int rf = 1;
    int jump = 1;
    auto layer = [&](int extent, int stride) {
        rf += (extent - 1) * jump;
        jump *= stride;
    };
    layer(filter, 1);
    for (int d = 0; d < depth; ++d) layer(filter, 2);
    const int dilated_extent = (filter - 1) * dilation + 1;
    layer(dilated_extent, 1);
    layer(dilated_extent, 1);
    layer(filter, 1);
    return rf;
}

GeneratorConfig GeneratorConfig::desk_default(double width) {
    if (!(width > 0)) throw std::invalid_argument("width multiplier must be positive");
    auto w = [width](int base) { return std::max(1, static_cast<int>(std::lround(base * width))); };
    GeneratorConfig c;
    c.branches = {
        {7, 1, 2, {w(16), w(32)}, w(16)},
        {5, 2, 2, {w(16), w(32), w(48)}, w(16)},
        {3, 2, 2, {w(16), w(32), w(48)}, w(16)},
    };
    c.decoder_width = w(32);
    return c;
}

int GeneratorConfig::fused_channels() const {
    int total = 0;
    for (const BranchSpec& b : branches) total += b.out_channels;
    return total;
}

void GeneratorConfig::validate() const {
    if (image_channels < 1 || decoder_width < 1) throw std::invalid_argument("invalid generator config");
    if (branches.empty()) throw std::invalid_argument("generator needs at least one branch");
    for (const BranchSpec& b : branches) b.validate();
}

void CriticConfig::validate() const {
    if (image_channels < 1 || input_size < 1 || base_width < 1) {
        throw std::invalid_argument("invalid critic config");
    }
}

// --- generator -----------------------------------------------------------------

Generator::Generator(GeneratorConfig config, std::uint64_t seed) : config_(std::move(config)) {
    config_.validate();
    init_layers(generator_layers(config_), seed, params_);
}

Generator Generator::from_tensors(GeneratorConfig config, const NamedTensors& tensors) {
    config.validate();
    Generator g;
    g.config_ = std::move(config);
    load_layers(generator_layers(g.config_), tensors, g.params_);
    return g;
}

Tensor Generator::fused_features(const Tensor& image, const Tensor& mask) const {
    const Shape& s = image.shape();
    if (s.c != config_.image_channels) {
        throw ShapeError("generator image channels", s, Shape{s.n, s.h, s.w, config_.image_channels});
    }
    if (mask.shape() != Shape{s.n, s.h, s.w, 1}) {
        throw ShapeError("generator mask", mask.shape(), Shape{s.n, s.h, s.w, 1});
    }
    const Tensor input = concat_channels({image, mask});
    std::vector<Tensor> columns;
    for (std::size_t i = 0; i < config_.branches.size(); ++i) {
        Tensor x = input;
        for (const LayerDef& l : branch_layers(config_.branches[i], i, config_.image_channels + 1)) {
            x = activate(apply_layer(x, l, params_), config_.activation);
        }
        columns.push_back(bilinear_upsample(x, s.h, s.w));
    }
    return concat_channels(columns);
}

Tensor Generator::forward(const Tensor& image, const Tensor& mask) const {
    const auto dec = decoder_layers(config_);
    Tensor x = fused_features(image, mask);
    x = activate(apply_layer(x, dec[0], params_), config_.activation);
    return tanh(apply_layer(x, dec[1], params_));
}

std::vector<Tensor> Generator::parameters() const { return values_of(params_); }

std::size_t Generator::parameter_count() const {
    std::size_t n = 0;
    for (const auto& [name, t] : params_) n += t.numel();
    return n;
}

// --- critics -------------------------------------------------------------------

CriticNet::CriticNet(CriticConfig config, std::uint64_t seed) : config_(config) {
    config_.validate();
    init_layers(critic_layers(config_), seed, params_);
}

CriticNet CriticNet::from_tensors(CriticConfig config, const NamedTensors& tensors) {
    config.validate();
    CriticNet c;
    c.config_ = config;
    load_layers(critic_layers(config), tensors, c.params_);
    return c;
}

Tensor CriticNet::forward(const Tensor& image) const {
    const Shape& s = image.shape();
    const Shape want{s.n, config_.input_size, config_.input_size, config_.image_channels};
    if (s != want) throw ShapeError("critic input", s, want);
    const auto layers = critic_layers(config_);
    Tensor x = image;
    for (std::size_t i = 0; i + 1 < layers.size(); ++i) {
        x = activate(apply_layer(x, layers[i], params_), config_.activation);
    }
    return apply_layer(x, layers.back(), params_);
}

std::vector<Tensor> CriticNet::parameters() const { return values_of(params_); }

int CriticNet::stages() const { return static_cast<int>(critic_layers(config_).size()) - 1; }

CriticPair CriticPair::make(int image_channels, int image_size, int base_width, std::uint64_t seed) {
    CriticConfig g{image_channels, image_size, base_width};
    CriticConfig l{image_channels, std::max(1, image_size / 2), base_width};
    return {CriticNet(g, seed), CriticNet(l, seed ^ 0x9e3779b97f4a7c15ULL)};
}

Tensor local_crops(const Tensor& image, const std::vector<BoundingBox>& holes, int size) {
    if (static_cast<int>(holes.size()) != image.shape().n) {
        throw std::invalid_argument("local_crops needs one hole box per batch element");
    }
    std::vector<CropBox> boxes;
    for (const BoundingBox& b : holes) {
        if (b.empty()) throw std::invalid_argument("local critic needs a non-empty hole box");
        boxes.push_back({b.top, b.left, b.height, b.width});
    }
    return crop_resize(image, boxes, size, size);
}

CriticScores critic_scores(const Tensor& image, const std::vector<BoundingBox>& holes,
                           const CriticPair& critics) {
    CriticScores s;
    s.global = critics.global.forward(image);
    s.local = critics.local.forward(local_crops(image, holes, critics.local.config().input_size));
    return s;
}

Tensor combined_score(const CriticScores& scores) { return scale(add(scores.global, scores.local), 0.5); }

Tensor compose_output(const Tensor& target, const Tensor& mask, const Tensor& generated) {
    if (target.shape() != generated.shape()) throw ShapeError("compose_output", target.shape(), generated.shape());
    const Shape& s = target.shape();
    if (mask.shape() != Shape{s.n, s.h, s.w, 1}) throw ShapeError("compose_output mask", mask.shape(), Shape{s.n, s.h, s.w, 1});
    Tensor keep = add_scalar(neg(mask), 1.0);
    return add(mul(target, keep), mul(generated, mask));
}

}  // namespace gmcnn
