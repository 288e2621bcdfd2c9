#include "gmcnn/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

namespace gmcnn {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::string fmt_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

template <class T>
T parse_number(const std::string& key, const std::string& v) {
    T out{};
    auto res = std::from_chars(v.data(), v.data() + v.size(), out);
    if (res.ec != std::errc{} || res.ptr != v.data() + v.size()) {
        throw std::invalid_argument("config key '" + key + "': cannot parse '" + v + "'");
    }
    return out;
}

std::vector<int> parse_int_list(const std::string& key, const std::string& v) {
    std::vector<int> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(parse_number<int>(key, trim(item)));
    if (out.empty()) throw std::invalid_argument("config key '" + key + "': empty list");
    return out;
}

std::string int_list(const std::vector<int>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
    return s;
}

struct Field {
    std::function<std::string(const TrainConfig&)> get;
    std::function<void(TrainConfig&, const std::string&)> set;
};

template <class T>
Field number(T TrainConfig::*member) {
    return {[member](const TrainConfig& c) {
                if constexpr (std::is_floating_point_v<T>) return fmt_double(c.*member);
                else return std::to_string(c.*member);
            },
            [member](TrainConfig& c, const std::string& v) {
                c.*member = parse_number<T>("", v);
            }};
}

template <class S, class T>
Field nested(S TrainConfig::*outer, T S::*inner) {
    return {[=](const TrainConfig& c) {
                if constexpr (std::is_floating_point_v<T>) return fmt_double(c.*outer.*inner);
                else return std::to_string(c.*outer.*inner);
            },
            [=](TrainConfig& c, const std::string& v) { c.*outer.*inner = parse_number<T>("", v); }};
}

const std::map<std::string, Field>& fields() {
    static const std::map<std::string, Field> table = [] {
        std::map<std::string, Field> t;
        t["seed"] = number(&TrainConfig::seed);
        t["threads"] = number(&TrainConfig::threads);
        t["precision"] = {[](const TrainConfig& c) { return std::string(c.precision == Precision::f32 ? "f32" : "f64"); },
                          [](TrainConfig& c, const std::string& v) {
                              if (v == "f32") c.precision = Precision::f32;
                              else if (v == "f64") c.precision = Precision::f64;
                              else throw std::invalid_argument("precision must be f32 or f64");
                          }};
        t["data.dir"] = {[](const TrainConfig& c) { return c.data_dir; },
                         [](TrainConfig& c, const std::string& v) { c.data_dir = v; }};
        t["data.synthetic_count"] = number(&TrainConfig::synthetic_count);
        t["data.scale_min"] = number(&TrainConfig::scale_min);
        t["data.scale_max"] = number(&TrainConfig::scale_max);
        t["image.size"] = number(&TrainConfig::image_size);
        t["image.channels"] = number(&TrainConfig::image_channels);
        t["mask.max_hole"] = number(&TrainConfig::max_hole);
        t["mask.iterations"] = number(&TrainConfig::mask_iterations);
        t["mask.kernel_size"] = number(&TrainConfig::mask_kernel_size);
        t["mask.kernel_sigma"] = number(&TrainConfig::mask_kernel_sigma);
        t["train.batch_size"] = number(&TrainConfig::batch_size);
        t["train.critic_steps"] = number(&TrainConfig::critic_steps);
        t["train.phase1_iters"] = number(&TrainConfig::phase1_iters);
        t["train.phase2_iters"] = number(&TrainConfig::phase2_iters);
        t["train.checkpoint_every"] = number(&TrainConfig::checkpoint_every);
        t["train.out_dir"] = {[](const TrainConfig& c) { return c.out_dir; },
                              [](TrainConfig& c, const std::string& v) { c.out_dir = v; }};
        t["optim.lr"] = nested(&TrainConfig::optim, &AdamConfig::lr);
        t["optim.beta1"] = nested(&TrainConfig::optim, &AdamConfig::beta1);
        t["optim.beta2"] = nested(&TrainConfig::optim, &AdamConfig::beta2);
        t["optim.eps"] = nested(&TrainConfig::optim, &AdamConfig::eps);
        t["loss.lambda_mrf"] = nested(&TrainConfig::loss, &LossWeights::mrf);
        t["loss.lambda_adv"] = nested(&TrainConfig::loss, &LossWeights::adv);
        t["loss.lambda_gp"] = nested(&TrainConfig::loss, &LossWeights::gp);
        t["loss.l1_reduction"] = {
            [](const TrainConfig& c) { return std::string(c.l1_reduction == L1Reduction::sum ? "sum" : "mean"); },
            [](TrainConfig& c, const std::string& v) {
                if (v == "sum") c.l1_reduction = L1Reduction::sum;
                else if (v == "mean") c.l1_reduction = L1Reduction::mean;
                else throw std::invalid_argument("loss.l1_reduction must be sum or mean");
            }};
        t["idmrf.h"] = nested(&TrainConfig::idmrf, &IdMrfConfig::h);
        t["idmrf.eps"] = nested(&TrainConfig::idmrf, &IdMrfConfig::eps);
        t["idmrf.patch_size"] = nested(&TrainConfig::idmrf, &IdMrfConfig::patch_size);
        t["idmrf.patch_stride"] = nested(&TrainConfig::idmrf, &IdMrfConfig::patch_stride);
        t["idmrf.layers"] = {
            [](const TrainConfig& c) {
                std::string s;
                for (std::size_t i = 0; i < c.idmrf.layers.size(); ++i) {
                    s += (i ? "," : "") + c.idmrf.layers[i].first + ":" + fmt_double(c.idmrf.layers[i].second);
                }
                return s;
            },
            [](TrainConfig& c, const std::string& v) {
                c.idmrf.layers.clear();
                std::stringstream ss(v);
                std::string item;
                while (std::getline(ss, item, ',')) {
                    const auto colon = item.find(':');
                    if (colon == std::string::npos) throw std::invalid_argument("idmrf.layers entries are name:weight");
                    c.idmrf.layers.emplace_back(trim(item.substr(0, colon)),
                                                parse_number<double>("idmrf.layers", trim(item.substr(colon + 1))));
                }
            }};
        t["backbone.width"] = number(&TrainConfig::backbone_width);
        t["backbone.seed"] = number(&TrainConfig::backbone_seed);
        t["model.filters"] = {[](const TrainConfig& c) { return int_list(c.filters); },
                              [](TrainConfig& c, const std::string& v) { c.filters = parse_int_list("model.filters", v); }};
        t["model.depths"] = {[](const TrainConfig& c) { return int_list(c.depths); },
                             [](TrainConfig& c, const std::string& v) { c.depths = parse_int_list("model.depths", v); }};
        t["model.dilations"] = {[](const TrainConfig& c) { return int_list(c.dilations); },
                                [](TrainConfig& c, const std::string& v) { c.dilations = parse_int_list("model.dilations", v); }};
        t["model.width"] = number(&TrainConfig::width);
        t["critic.width"] = number(&TrainConfig::critic_width);
        return t;
    }();
    return table;
}

}  // namespace

void TrainConfig::validate() const {
    auto require = [](bool ok, const char* what) {
        if (!ok) throw std::invalid_argument(std::string("invalid config: ") + what);
    };
    require(threads >= 1, "threads must be >= 1");
    require(synthetic_count >= 1, "data.synthetic_count must be >= 1");
    require(scale_min > 0 && scale_max >= scale_min, "data scale range");
    require(image_size >= 8, "image.size must be >= 8");
    require(image_channels == 1 || image_channels == 3, "image.channels must be 1 or 3");
    require(max_hole >= 1 && max_hole <= image_size, "mask.max_hole must be in [1, image.size]");
    require(mask_iterations >= 1, "mask.iterations must be >= 1");
    require(mask_kernel_size >= 0 && mask_kernel_sigma >= 0, "mask kernel settings");
    require(batch_size >= 1, "train.batch_size must be >= 1");
    require(critic_steps >= 1, "train.critic_steps must be >= 1");
    require(phase1_iters >= 0 && phase2_iters >= 0, "phase budgets must be >= 0");
    require(checkpoint_every >= 0, "train.checkpoint_every must be >= 0");
    require(optim.lr >= 0 && optim.beta1 >= 0 && optim.beta1 < 1 && optim.beta2 >= 0 && optim.beta2 < 1 &&
                optim.eps > 0,
            "optimizer settings");
    loss.validate();
    idmrf.validate();
    require(backbone_width >= 1, "backbone.width must be >= 1");
    require(!filters.empty() && filters.size() == depths.size() && filters.size() == dilations.size(),
            "model.filters, model.depths and model.dilations must have equal length");
    require(width > 0, "model.width must be positive");
    require(critic_width >= 1, "critic.width must be >= 1");
    generator_config().validate();
}

GeneratorConfig TrainConfig::generator_config() const {
    auto scaled = [this](int base) { return std::max(1, static_cast<int>(std::lround(base * width))); };
    GeneratorConfig g;
    g.image_channels = image_channels;
    for (std::size_t i = 0; i < filters.size(); ++i) {
        BranchSpec b;
        b.filter = filters[i];
        b.depth = depths[i];
        b.dilation = dilations[i];
        for (int level = 0; level <= b.depth; ++level) b.widths.push_back(scaled(level == 0 ? 16 : 16 * (level + 1)));
        b.out_channels = scaled(16);
        g.branches.push_back(std::move(b));
    }
    g.decoder_width = scaled(32);
    return g;
}

GaussKernel TrainConfig::confidence_kernel() const {
    if (mask_kernel_size == 0 && mask_kernel_sigma == 0) return default_confidence_kernel(image_size);
    const int size = mask_kernel_size > 0 ? mask_kernel_size : default_confidence_kernel(image_size).size;
    const double sigma = mask_kernel_sigma > 0 ? mask_kernel_sigma : 0.625 * size;
    return gaussian_kernel(size, sigma);
}

std::string TrainConfig::to_text() const {
    std::string out;
    for (const auto& [key, field] : fields()) out += key + " = " + field.get(*this) + "\n";
    return out;
}

TrainConfig TrainConfig::parse(const std::string& text) {
    TrainConfig c;
    std::set<std::string> seen;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw std::invalid_argument("config line " + std::to_string(line_no) + ": expected key = value");
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        auto it = fields().find(key);
        if (it == fields().end()) {
            throw std::invalid_argument("config line " + std::to_string(line_no) + ": unknown key '" + key + "'");
        }
        if (!seen.insert(key).second) {
            throw std::invalid_argument("config line " + std::to_string(line_no) + ": duplicate key '" + key + "'");
        }
        try {
            it->second.set(c, value);
        } catch (const std::invalid_argument& e) {
            throw std::invalid_argument("config line " + std::to_string(line_no) + " (" + key + "): " + e.what());
        }
    }
    c.validate();
    return c;
}

TrainConfig TrainConfig::load(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open config file '" + path + "'");
    std::stringstream ss;
    ss << f.rdbuf();
    return parse(ss.str());
}

}  // namespace gmcnn
