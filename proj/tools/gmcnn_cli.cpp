// Command-line front end: train, infer, eval, maskgen, selftest.
#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>

#include "gmcnn/checkpoint.hpp"
#include "gmcnn/config.hpp"
#include "gmcnn/data.hpp"
#include "gmcnn/image_io.hpp"
#include "gmcnn/mask.hpp"
#include "gmcnn/parallel.hpp"
#include "gmcnn/selftest.hpp"
#include "gmcnn/train.hpp"

namespace fs = std::filesystem;
using namespace gmcnn;

namespace {

int cmd_train(const std::string& config_path, int threads) {
    TrainConfig config = TrainConfig::load(config_path);
    if (threads > 0) config.threads = threads;
    const auto start = std::chrono::steady_clock::now();
    TrainOptions opt;
    opt.log = &std::cout;
    const TrainResult r = train(config, opt);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::fprintf(stderr, "probe masked L1: %.6g -> %.6g (%.1f%%), %.1fs, checkpoint %s\n", r.probe_before,
                 r.probe_after, 100.0 * r.probe_after / r.probe_before, secs,
                 (fs::path(config.out_dir) / "final.gmcn").string().c_str());
    return 0;
}

Mask load_mask(const std::string& path) {
    const Image m = convert_channels(read_png(path), 1);
    return Mask::from_gray(m.h, m.w, m.pixels);
}

int cmd_infer(const std::string& ckpt, const std::string& image, const std::string& mask, const std::string& out) {
    const Generator g = generator_from_checkpoint(Checkpoint::load(ckpt));
    write_png(out, infer(g, read_png(image), load_mask(mask)));
    return 0;
}

int cmd_eval(const std::string& ckpt, const std::string& dir, std::uint64_t seed, int max_hole) {
    const Checkpoint ck = Checkpoint::load(ckpt);
    const Generator g = generator_from_checkpoint(ck);
    if (max_hole <= 0) max_hole = TrainConfig::parse(ck.config_text).max_hole;
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ".png") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    if (files.empty()) throw std::runtime_error("no PNG images in '" + dir + "'");
    std::vector<std::pair<std::string, Image>> images;
    for (const auto& f : files) images.emplace_back(f.filename().string(), read_png(f.string()));
    const auto rows = evaluate(g, images, max_hole, seed);
    double sp = 0, ss = 0;
    std::printf("%-32s %12s %10s\n", "image", "psnr_db", "ssim");
    for (const auto& r : rows) {
        std::printf("%-32s %12.6f %10.6f\n", r.name.c_str(), r.psnr, r.ssim);
        sp += r.psnr;
        ss += r.ssim;
    }
    std::printf("%-32s %12.6f %10.6f\n", "mean", sp / rows.size(), ss / rows.size());
    return 0;
}

int cmd_maskgen(int h, int w, int max_hole, std::uint64_t seed, const std::string& out) {
    const Mask m = sample_mask(seed, h, w, max_hole, max_hole);
    write_png(out, Image{h, w, 1, m.to_gray()});
    return 0;
}

int cmd_selftest(std::uint64_t seed) {
    int failed = 0;
    for (const auto& r : run_selftest(seed)) {
        std::printf("%s  %-40s %s\n", r.passed ? "PASS" : "FAIL", r.name.c_str(), r.detail.c_str());
        failed += !r.passed;
    }
    return failed == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Multi-column inpainting network: training, inference and evaluation"};
    app.require_subcommand(1);
    int threads = 0;
    app.add_option("--threads", threads, "worker threads (default: config value, else 1)")->check(CLI::NonNegativeNumber);

    std::string config_path;
    auto* train_cmd = app.add_subcommand("train", "train from a config file");
    train_cmd->add_option("--config", config_path, "key = value config file")->required()->check(CLI::ExistingFile);

    std::string ckpt, image, mask, out, dir;
    std::uint64_t seed = 0;
    int max_hole = 0;
    auto* infer_cmd = app.add_subcommand("infer", "complete one image");
    infer_cmd->add_option("--checkpoint", ckpt)->required()->check(CLI::ExistingFile);
    infer_cmd->add_option("--image", image)->required()->check(CLI::ExistingFile);
    infer_cmd->add_option("--mask", mask, "PNG mask, white = hole")->required()->check(CLI::ExistingFile);
    infer_cmd->add_option("--out", out)->required();

    auto* eval_cmd = app.add_subcommand("eval", "PSNR/SSIM over a directory with sampled masks");
    eval_cmd->add_option("--checkpoint", ckpt)->required()->check(CLI::ExistingFile);
    eval_cmd->add_option("--dir", dir)->required()->check(CLI::ExistingDirectory);
    eval_cmd->add_option("--seed", seed)->required();
    eval_cmd->add_option("--max-hole", max_hole, "default: the checkpoint's mask.max_hole");

    int h = 0, w = 0;
    auto* maskgen_cmd = app.add_subcommand("maskgen", "write a random rectangular hole mask");
    maskgen_cmd->set_help_flag("--help", "print this help message and exit");
    maskgen_cmd->add_option("--h", h)->required()->check(CLI::PositiveNumber);
    maskgen_cmd->add_option("--w", w)->required()->check(CLI::PositiveNumber);
    maskgen_cmd->add_option("--max-hole", max_hole)->required()->check(CLI::PositiveNumber);
    maskgen_cmd->add_option("--seed", seed)->required();
    maskgen_cmd->add_option("--out", out)->required();

    auto* selftest_cmd = app.add_subcommand("selftest", "run the built-in oracle and gradient checks");
    selftest_cmd->add_option("--seed", seed, "default 1");

    CLI11_PARSE(app, argc, argv);
    try {
        if (threads > 0) set_num_threads(threads);
        if (*train_cmd) return cmd_train(config_path, threads);
        if (*infer_cmd) return cmd_infer(ckpt, image, mask, out);
        if (*eval_cmd) return cmd_eval(ckpt, dir, seed, max_hole);
        if (*maskgen_cmd) return cmd_maskgen(h, w, max_hole, seed, out);
        if (*selftest_cmd) return cmd_selftest(seed == 0 ? 1 : seed);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
