#include "gmcnn/train.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>

#include "gmcnn/parallel.hpp"

namespace gmcnn {

namespace {

constexpr std::uint64_t kSyntheticSalt = 0x7e97u;
constexpr std::uint64_t kProbeSalt = 0x9406eu;

std::mt19937_64 seeded(std::uint64_t a, std::uint64_t b) {
    std::seed_seq seq{static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32),
                      static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(b >> 32)};
    return std::mt19937_64(seq);
}

CriticConfig global_config(const TrainConfig& c) { return {c.image_channels, c.image_size, c.critic_width}; }
CriticConfig local_config(const TrainConfig& c) {
    return {c.image_channels, std::max(1, c.image_size / 2), c.critic_width};
}

std::vector<std::string> critic_param_names(const CriticPair& critics) {
    std::vector<std::string> names;
    for (const auto& [n, t] : critics.global.tensors()) names.push_back("global/" + n);
    for (const auto& [n, t] : critics.local.tensors()) names.push_back("local/" + n);
    return names;
}

std::vector<Tensor> critic_parameters(const CriticPair& critics) {
    auto p = critics.global.parameters();
    auto l = critics.local.parameters();
    p.insert(p.end(), l.begin(), l.end());
    return p;
}

void put_adam(Checkpoint& ck, const std::string& prefix, const AdamState& state,
              const std::vector<std::string>& names, const std::vector<Tensor>& params) {
    for (std::size_t i = 0; i < names.size(); ++i) {
        const Shape& s = params[i].shape();
        const bool started = !state.m.empty();
        ck.tensors[prefix + "/m/" + names[i]] =
            Tensor::from_data(s, started ? state.m[i] : std::vector<double>(s.numel(), 0.0));
        ck.tensors[prefix + "/v/" + names[i]] =
            Tensor::from_data(s, started ? state.v[i] : std::vector<double>(s.numel(), 0.0));
    }
    ck.tensors["state/" + prefix + "_step"] = Tensor::scalar(static_cast<double>(state.step));
}

AdamState get_adam(const Checkpoint& ck, const std::string& prefix, const AdamConfig& config,
                   const std::vector<std::string>& names, const std::vector<Tensor>& params) {
    AdamState state;
    state.config = config;
    state.step = static_cast<std::int64_t>(ck.at("state/" + prefix + "_step").item());
    for (std::size_t i = 0; i < names.size(); ++i) {
        const Tensor& m = ck.at(prefix + "/m/" + names[i]);
        const Tensor& v = ck.at(prefix + "/v/" + names[i]);
        if (m.shape() != params[i].shape() || v.shape() != params[i].shape()) {
            throw CheckpointError("optimizer state for '" + names[i] + "' does not match the parameter shape");
        }
        state.m.emplace_back(m.data().begin(), m.data().end());
        state.v.emplace_back(v.data().begin(), v.data().end());
    }
    return state;
}

void require_finite(const LossRecord& r) {
    for (double v : {r.reconstruction, r.mrf, r.adversarial, r.critic, r.total}) {
        if (std::isfinite(v)) continue;
        std::ostringstream msg;
        msg << "non-finite loss at iteration " << r.iteration << " (phase " << r.phase << "): L_c=" << r.reconstruction
            << " L_mrf=" << r.mrf << " L_adv=" << r.adversarial << " critic=" << r.critic << " total=" << r.total;
        throw NonFiniteLoss(msg.str());
    }
}

void require_finite_grads(const std::vector<Tensor>& grads, std::int64_t iteration, const char* what) {
    for (std::size_t i = 0; i < grads.size(); ++i) {
        if (!grads[i].defined()) continue;
        for (double v : grads[i].data()) {
            if (!std::isfinite(v)) {
                throw NonFiniteLoss("non-finite " + std::string(what) + " gradient in parameter " + std::to_string(i) +
                                    " at iteration " + std::to_string(iteration));
            }
        }
    }
}

}  // namespace

std::string loss_log_header() { return "iter\tphase\tL_c\tL_mrf\tL_adv\tcritic\ttotal\tmasked_l1"; }

std::string loss_log_row(const LossRecord& r) {
    char buf[512];
    std::snprintf(buf, sizeof buf, "%lld\t%d\t%.17g\t%.17g\t%.17g\t%.17g\t%.17g\t%.17g",
                  static_cast<long long>(r.iteration), r.phase, r.reconstruction, r.mrf, r.adversarial, r.critic,
                  r.total, r.masked_l1);
    return buf;
}

double masked_l1(const Tensor& target, const Tensor& generated, const Tensor& mask) {
    const Shape& s = target.shape();
    if (generated.shape() != s) throw ShapeError("masked_l1", generated.shape(), s);
    if (mask.shape() != Shape{s.n, s.h, s.w, 1}) throw ShapeError("masked_l1 mask", mask.shape(), Shape{s.n, s.h, s.w, 1});
    const auto y = target.data(), g = generated.data(), m = mask.data();
    double num = 0, den = 0;
    for (std::size_t p = 0; p < m.size(); ++p) {
        if (m[p] == 0.0) continue;
        den += m[p] * s.c;
        for (int c = 0; c < s.c; ++c) num += m[p] * std::abs(y[p * s.c + c] - g[p * s.c + c]);
    }
    return den > 0 ? num / den : 0.0;
}

// --- trainer -------------------------------------------------------------------

Trainer::Trainer(TrainConfig config, std::vector<Image> dataset) : config_(std::move(config)), dataset_(std::move(dataset)) {
    config_.validate();
    if (dataset_.empty()) throw std::invalid_argument("training dataset is empty");
    PrecisionScope precision(config_.precision);
    generator_ = Generator(config_.generator_config(), config_.seed);
    critics_ = {CriticNet(global_config(config_), config_.seed + 1),
                CriticNet(local_config(config_), (config_.seed + 1) ^ 0x9e3779b97f4a7c15ULL)};
    backbone_ = FeatureBackbone::make_default(config_.image_channels, config_.backbone_seed, config_.backbone_width);
    adam_gen_.config = config_.optim;
    adam_critic_.config = config_.optim;
}

Trainer Trainer::resume(const Checkpoint& ck, std::vector<Image> dataset) {
    Trainer t;
    t.config_ = TrainConfig::parse(ck.config_text);
    if (dataset.empty()) throw std::invalid_argument("training dataset is empty");
    t.dataset_ = std::move(dataset);
    PrecisionScope precision(t.config_.precision);
    t.generator_ = Generator::from_tensors(t.config_.generator_config(), ck.with_prefix("gen/"));
    t.critics_ = {CriticNet::from_tensors(global_config(t.config_), ck.with_prefix("critic_global/")),
                  CriticNet::from_tensors(local_config(t.config_), ck.with_prefix("critic_local/"))};
    t.backbone_ = FeatureBackbone::from_tensors(ck.with_prefix("backbone/"));
    std::vector<std::string> gen_names;
    for (const auto& [n, p] : t.generator_.tensors()) gen_names.push_back(n);
    t.adam_gen_ = get_adam(ck, "adam_gen", t.config_.optim, gen_names, t.generator_.parameters());
    t.adam_critic_ = get_adam(ck, "adam_critic", t.config_.optim, critic_param_names(t.critics_),
                              critic_parameters(t.critics_));
    t.iteration_ = static_cast<std::int64_t>(ck.at("state/iteration").item());
    return t;
}

Checkpoint Trainer::checkpoint() const {
    Checkpoint ck;
    ck.config_text = config_.to_text();
    ck.put("gen/", generator_.tensors());
    ck.put("critic_global/", critics_.global.tensors());
    ck.put("critic_local/", critics_.local.tensors());
    ck.put("backbone/", backbone_.tensors());
    std::vector<std::string> gen_names;
    for (const auto& [n, p] : generator_.tensors()) gen_names.push_back(n);
    put_adam(ck, "adam_gen", adam_gen_, gen_names, generator_.parameters());
    put_adam(ck, "adam_critic", adam_critic_, critic_param_names(critics_), critic_parameters(critics_));
    ck.tensors["state/iteration"] = Tensor::scalar(static_cast<double>(iteration_));
    return ck;
}

bool Trainer::done() const { return iteration_ >= static_cast<std::int64_t>(config_.phase1_iters) + config_.phase2_iters; }

int Trainer::phase_of(std::int64_t iteration) const { return iteration <= config_.phase1_iters ? 1 : 2; }

TrainingBatch Trainer::sample_batch(std::mt19937_64& rng) const {
    std::uniform_int_distribution<std::size_t> pick(0, dataset_.size() - 1);
    std::vector<Image> crops;
    for (int b = 0; b < config_.batch_size; ++b) {
        crops.push_back(random_crop_scale(dataset_[pick(rng)], config_.image_size, config_.scale_min,
                                          config_.scale_max, rng));
    }
    return make_training_batch(crops, MaskSampling{config_.max_hole, config_.confidence_kernel(), config_.mask_iterations},
                               rng);
}

double Trainer::probe_masked_l1() const {
    PrecisionScope precision(config_.precision);
    NoGradScope no_grad;
    auto rng = seeded(config_.seed, kProbeSalt);
    std::vector<Image> crops;
    for (const Image& im : dataset_) {
        crops.push_back(random_crop_scale(im, config_.image_size, config_.scale_min, config_.scale_min, rng));
    }
    const TrainingBatch b = make_training_batch(
        crops, MaskSampling{config_.max_hole, config_.confidence_kernel(), config_.mask_iterations}, rng);
    return masked_l1(b.target, generator_.forward(b.input, b.mask), b.mask);
}

LossRecord Trainer::step() {
    if (done()) throw std::logic_error("training budget exhausted");
    PrecisionScope precision(config_.precision);
    const std::int64_t it = iteration_ + 1;
    auto rng = seeded(config_.seed, static_cast<std::uint64_t>(it));
    const TrainingBatch batch = sample_batch(rng);
    LossRecord r = phase_of(it) == 1 ? phase1_step(batch) : phase2_step(batch, rng);
    r.iteration = it;
    r.phase = phase_of(it);
    iteration_ = it;
    return r;
}

LossRecord Trainer::phase1_step(const TrainingBatch& batch) {
    LossRecord r;
    r.iteration = iteration_ + 1;
    const Tensor g = generator_.forward(batch.input, batch.mask);
    const Tensor lc = reconstruction_loss(batch.target, g, batch.weight, config_.l1_reduction);
    r.reconstruction = r.total = lc.item();
    r.masked_l1 = masked_l1(batch.target, g, batch.mask);
    require_finite(r);
    auto params = generator_.parameters();
    const auto grads = grad(lc, params);
    require_finite_grads(grads, r.iteration, "generator");
    adam_step(params, grads, adam_gen_);
    return r;
}

double Trainer::critic_step(const TrainingBatch& batch, std::mt19937_64& rng) {
    Tensor fake;
    {
        NoGradScope no_grad;
        fake = compose_output(batch.target, batch.mask, generator_.forward(batch.input, batch.mask));
    }
    const double lambda = config_.loss.gp;
    auto one_critic = [&](const CriticNet& net, const Tensor& real, const Tensor& generated, const Tensor& weight) {
        Critic fn = [&net](const Tensor& x) { return net.forward(x); };
        Tensor gp = gradient_penalty(fn, real, generated, weight, rng);
        return critic_loss(net.forward(real), net.forward(generated), scale(gp, lambda));
    };
    const int ls = critics_.local.config().input_size;
    Tensor loss = add(one_critic(critics_.global, batch.target, fake, batch.weight),
                      one_critic(critics_.local, local_crops(batch.target, batch.holes, ls),
                                 local_crops(fake, batch.holes, ls), local_crops(batch.weight, batch.holes, ls)));
    const double value = loss.item();
    if (!std::isfinite(value)) {
        throw NonFiniteLoss("non-finite critic loss at iteration " + std::to_string(iteration_ + 1));
    }
    auto params = critic_parameters(critics_);
    const auto grads = grad(loss, params);
    require_finite_grads(grads, iteration_ + 1, "critic");
    adam_step(params, grads, adam_critic_);
    return value;
}

LossRecord Trainer::phase2_step(const TrainingBatch& batch, std::mt19937_64& rng) {
    LossRecord r;
    r.iteration = iteration_ + 1;
    for (int k = 0; k < config_.critic_steps; ++k) r.critic = critic_step(batch, rng);

    const Tensor g = generator_.forward(batch.input, batch.mask);
    const Tensor composed = compose_output(batch.target, batch.mask, g);
    const Tensor lc = reconstruction_loss(batch.target, g, batch.weight, config_.l1_reduction);
    const Tensor lmrf = idmrf_total(composed, batch.target, backbone_, config_.idmrf);
    const Tensor ladv = generator_adv_loss(combined_score(critic_scores(composed, batch.holes, critics_)));
    const Tensor total = total_objective(lc, lmrf, ladv, config_.loss);
    r.reconstruction = lc.item();
    r.mrf = lmrf.item();
    r.adversarial = ladv.item();
    r.total = total.item();
    r.masked_l1 = masked_l1(batch.target, g, batch.mask);
    require_finite(r);
    auto params = generator_.parameters();
    const auto grads = grad(total, params);
    require_finite_grads(grads, r.iteration, "generator");
    adam_step(params, grads, adam_gen_);
    return r;
}

// --- drivers ---------------------------------------------------------------------

std::vector<Image> load_dataset(const TrainConfig& config) {
    if (config.data_dir.empty()) {
        return synthetic_textures(config.synthetic_count, config.image_size, config.image_channels,
                                  config.seed ^ kSyntheticSalt);
    }
    return load_image_dir(config.data_dir, config.image_channels);
}

TrainResult train(const TrainConfig& config, const TrainOptions& options) {
    config.validate();
    set_num_threads(config.threads);
    Trainer trainer(config, load_dataset(config));
    TrainResult result;
    result.probe_before = trainer.probe_masked_l1();

    namespace fs = std::filesystem;
    std::ofstream log_file;
    if (options.write_files) {
        fs::create_directories(config.out_dir);
        const fs::path log_path = fs::path(config.out_dir) / "loss.tsv";
        log_file.open(log_path);
        if (!log_file) throw std::runtime_error("cannot open loss log '" + log_path.string() + "'");
        log_file << loss_log_header() << "\n";
    }
    if (options.log) *options.log << loss_log_header() << "\n";

    while (!trainer.done()) {
        const LossRecord r = trainer.step();
        result.records.push_back(r);
        const std::string row = loss_log_row(r);
        if (options.write_files) log_file << row << "\n" << std::flush;
        if (options.log) *options.log << row << "\n" << std::flush;
        if (options.on_step) options.on_step(r);
        if (options.write_files && config.checkpoint_every > 0 && r.iteration % config.checkpoint_every == 0) {
            char name[64];
            std::snprintf(name, sizeof name, "ckpt_%08lld.gmcn", static_cast<long long>(r.iteration));
            trainer.checkpoint().save((fs::path(config.out_dir) / name).string());
        }
    }
    result.final_checkpoint = trainer.checkpoint();
    if (options.write_files) result.final_checkpoint.save((fs::path(config.out_dir) / "final.gmcn").string());
    result.probe_after = trainer.probe_masked_l1();
    return result;
}

Generator generator_from_checkpoint(const Checkpoint& ck) {
    const TrainConfig config = TrainConfig::parse(ck.config_text);
    return Generator::from_tensors(config.generator_config(), ck.with_prefix("gen/"));
}

Image infer(const Generator& generator, const Image& image, const Mask& mask) {
    if (mask.h != image.h || mask.w != image.w) {
        throw std::invalid_argument("mask is " + std::to_string(mask.h) + "x" + std::to_string(mask.w) + " but image is " +
                                    std::to_string(image.h) + "x" + std::to_string(image.w));
    }
    const Image input = convert_channels(image, generator.config().image_channels);
    NoGradScope no_grad;
    const TrainingBatch b = make_training_batch(std::span<const Image>(&input, 1), std::vector<Mask>{mask},
                                                gaussian_kernel(1, 1.0), 1);
    const Tensor out = compose_output(b.target, b.mask, generator.forward(b.input, b.mask));
    return tensor_to_image(out, 0);
}

std::vector<EvalRow> evaluate(const Generator& generator, const std::vector<std::pair<std::string, Image>>& images,
                              int max_hole, std::uint64_t seed) {
    if (max_hole < 1) throw std::invalid_argument("evaluate: max_hole must be positive");
    std::vector<EvalRow> rows;
    for (std::size_t i = 0; i < images.size(); ++i) {
        const Image truth = convert_channels(images[i].second, generator.config().image_channels);
        auto rng = seeded(seed, i);
        const Mask m = sample_mask(rng, truth.h, truth.w, std::min(max_hole, truth.h), std::min(max_hole, truth.w));
        const Image out = infer(generator, truth, m);
        rows.push_back({images[i].first, psnr(out, truth), ssim(out, truth)});
    }
    return rows;
}

}  // namespace gmcnn
