#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <random>
#include <string>
#include <vector>

#include "gmcnn/checkpoint.hpp"
#include "gmcnn/config.hpp"
#include "gmcnn/data.hpp"
#include "gmcnn/idmrf.hpp"
#include "gmcnn/metrics.hpp"
#include "gmcnn/model.hpp"
#include "gmcnn/objective.hpp"

namespace gmcnn {

struct LossRecord {
    std::int64_t iteration = 0;
    int phase = 1;
    double reconstruction = 0;  // L_c
    double mrf = 0;             // L_mrf (unweighted)
    double adversarial = 0;     // L_adv (unweighted)
    double critic = 0;          // summed critic losses
    double total = 0;           // generator objective
    double masked_l1 = 0;       // mean |Y - G| over hole pixels and channels
};

// Header and row of the tab-separated loss log.
std::string loss_log_header();
std::string loss_log_row(const LossRecord& r);

class NonFiniteLoss : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Mean |Y - G| over unknown pixels and channels.
double masked_l1(const Tensor& target, const Tensor& generated, const Tensor& mask);

// Training state: generator, critics, backbone and both optimisers. Every
// iteration draws from its own RNG seeded by (seed, iteration), so a resumed
// trainer continues exactly where the saved one stopped.
class Trainer {
public:
    Trainer(TrainConfig config, std::vector<Image> dataset);
    static Trainer resume(const Checkpoint& checkpoint, std::vector<Image> dataset);

    // Runs iteration() + 1. Phase 1 (reconstruction only) covers the first
    // phase1_iters iterations, phase 2 the following phase2_iters.
    LossRecord step();
    bool done() const;
    std::int64_t iteration() const { return iteration_; }
    int phase_of(std::int64_t iteration) const;

    Checkpoint checkpoint() const;

    // Masked L1 of the generator on a fixed batch (one image per dataset
    // entry, masks from the run seed).
    double probe_masked_l1() const;

    const TrainConfig& config() const { return config_; }
    const Generator& generator() const { return generator_; }
    const CriticPair& critics() const { return critics_; }
    const FeatureBackbone& backbone() const { return backbone_; }

private:
    Trainer() = default;
    TrainingBatch sample_batch(std::mt19937_64& rng) const;
    LossRecord phase1_step(const TrainingBatch& batch);
    LossRecord phase2_step(const TrainingBatch& batch, std::mt19937_64& rng);
    double critic_step(const TrainingBatch& batch, std::mt19937_64& rng);

    TrainConfig config_;
    std::vector<Image> dataset_;
    Generator generator_;
    CriticPair critics_;
    FeatureBackbone backbone_;
    AdamState adam_gen_;
    AdamState adam_critic_;
    std::int64_t iteration_ = 0;
};

std::vector<Image> load_dataset(const TrainConfig& config);

struct TrainOptions {
    std::ostream* log = nullptr;       // loss log destination besides loss.tsv
    bool write_files = true;           // loss.tsv and checkpoints under out_dir
    std::function<void(const LossRecord&)> on_step;
};

struct TrainResult {
    std::vector<LossRecord> records;
    double probe_before = 0;
    double probe_after = 0;
    Checkpoint final_checkpoint;
};

// Runs both phases from scratch; throws NonFiniteLoss with diagnostics on a
// non-finite loss.
TrainResult train(const TrainConfig& config, const TrainOptions& options = {});

// Generator-only restore.
Generator generator_from_checkpoint(const Checkpoint& checkpoint);

// Runs the generator and composes with the known pixels. The mask must
// match the image size; a gray image is replicated for an RGB model.
Image infer(const Generator& generator, const Image& image, const Mask& mask);

struct EvalRow {
    std::string name;
    double psnr = 0;
    double ssim = 0;
};

// Completes each image with a mask sampled from (seed, index) and scores the
// result against the original.
std::vector<EvalRow> evaluate(const Generator& generator, const std::vector<std::pair<std::string, Image>>& images,
                              int max_hole, std::uint64_t seed);

}  // namespace gmcnn
