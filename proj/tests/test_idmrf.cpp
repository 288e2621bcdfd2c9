#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "gmcnn/idmrf.hpp"
#include "gmcnn/ops.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace gmcnn;
using namespace gmcnn::testing;

TEST_CASE("relative similarity rows sum to one without NaN or Inf") {
    PrecisionScope p(Precision::f64);
    for (const Tensor& mu : stress_matrices()) {
        const auto rs = relative_similarity(mu, IdMrfConfig{});
        const int r = rows(mu), c = cols(mu);
        for (int v = 0; v < r; ++v) {
            long double s = 0;
            for (int j = 0; j < c; ++j) {
                const double x = rs.rs_bar.data()[static_cast<std::size_t>(v) * c + j];
                REQUIRE(std::isfinite(x));
                REQUIRE(x >= 0.0);
                s += x;
            }
            CHECK(std::abs(static_cast<double>(s) - 1.0) <= 1e-9);
        }
        const double loss = idmrf_layer_loss(rs.rs_bar).item();
        CHECK(std::isfinite(loss));
    }
}

TEST_CASE("ID-MRF terms match the extended-precision direct evaluation") {
    PrecisionScope p(Precision::f64);
    for (std::uint64_t seed : kSeeds) {
        std::mt19937_64 rng(seed);
        for (int dim : {3, 9}) {
            std::vector<std::vector<double>> gen(6), ref(8);
            for (auto& v : gen) v = uniform_values(dim, rng, 0.0, 1.0);
            for (auto& v : ref) v = uniform_values(dim, rng, 0.0, 1.0);
            const Matrix mu = cosine_oracle(gen, ref);
            const Tensor mu_lib = cosine_similarity_matrix(patch_set_from(gen), patch_set_from(ref));
            for (int v = 0; v < 6; ++v)
                for (int s = 0; s < 8; ++s) CHECK(std::abs(mu_lib.data()[v * 8 + s] - static_cast<double>(mu[v][s])) <= 1e-9);
            for (double h : {0.5, 0.1, 2.0}) {
                IdMrfConfig cfg;
                cfg.h = h;
                const Matrix rs = rs_bar_oracle(mu, h, cfg.eps);
                const auto lib = relative_similarity(mu_lib, cfg);
                for (int v = 0; v < 6; ++v)
                    for (int s = 0; s < 8; ++s)
                        CHECK(std::abs(lib.rs_bar.data()[v * 8 + s] - static_cast<double>(rs[v][s])) <= 1e-9);
                CHECK(std::abs(idmrf_layer_loss(lib.rs_bar).item() - static_cast<double>(layer_loss_oracle(rs))) <= 1e-9);
            }
        }
    }
}

TEST_CASE("one-to-one matching scores strictly lower than collapse") {
    PrecisionScope p(Precision::f64);
    for (int n = 2; n <= 5; ++n) {
        std::vector<int> perm(n);
        std::iota(perm.begin(), perm.end(), 0);
        double worst_one_to_one = -INFINITY;
        do {
            std::vector<double> rs(static_cast<std::size_t>(n) * n, 0.0);
            for (int v = 0; v < n; ++v) rs[static_cast<std::size_t>(v) * n + perm[v]] = 1.0;
            worst_one_to_one = std::max(worst_one_to_one, idmrf_layer_loss(Tensor::from_data(matrix_shape(n, n), rs)).item());
        } while (std::next_permutation(perm.begin(), perm.end()));
        for (int target = 0; target < n; ++target) {
            std::vector<double> rs(static_cast<std::size_t>(n) * n, 0.0);
            for (int v = 0; v < n; ++v) rs[static_cast<std::size_t>(v) * n + target] = 1.0;
            const double collapse = idmrf_layer_loss(Tensor::from_data(matrix_shape(n, n), rs)).item();
            CHECK(worst_one_to_one < collapse);
            CHECK(collapse == doctest::Approx(std::log(static_cast<double>(n))).epsilon(1e-14));
        }

        // Same ordering through cosine similarity and RS-bar: generated
        // patches copying distinct references versus copying one reference.
        std::mt19937_64 rng(static_cast<std::uint64_t>(n));
        std::vector<std::vector<double>> ref(n);
        for (auto& r : ref) r = uniform_values(6, rng, 0.0, 1.0);
        const PatchSet ref_set = patch_set_from(ref);
        const double diverse =
            idmrf_layer_loss(relative_similarity(cosine_similarity_matrix(patch_set_from(ref), ref_set), IdMrfConfig{}).rs_bar)
                .item();
        for (int target = 0; target < n; ++target) {
            const std::vector<std::vector<double>> copies(n, ref[target]);
            const double collapsed =
                idmrf_layer_loss(
                    relative_similarity(cosine_similarity_matrix(patch_set_from(copies), ref_set), IdMrfConfig{}).rs_bar)
                    .item();
            CHECK(diverse < collapsed);
        }
    }
}

TEST_CASE("layer loss of the degenerate inputs") {
    PrecisionScope p(Precision::f64);
    const Tensor uniform = Tensor::full(matrix_shape(3, 4), 0.25);
    CHECK(idmrf_layer_loss(uniform).item() == doctest::Approx(-std::log(0.25)));
    CHECK(idmrf_layer_loss(uniform, 2.0).item() == doctest::Approx(-std::log(0.5)));
    CHECK_THROWS(relative_similarity(Tensor::zeros(matrix_shape(3, 1)), IdMrfConfig{}));
}

TEST_CASE("patches are raster-ordered windows flattened as (ky, kx, c)") {
    std::vector<double> v(4 * 5 * 2);
    std::iota(v.begin(), v.end(), 0.0);
    const Tensor f = Tensor::from_data({1, 4, 5, 2}, v);
    const PatchSet p = extract_patches(f, 2, 1);
    CHECK(p.count == 12);
    CHECK(p.dim == 8);
    auto row = [&](int i) { return std::vector<double>(p.vectors.data().begin() + i * 8, p.vectors.data().begin() + (i + 1) * 8); };
    CHECK(row(0) == std::vector<double>{0, 1, 2, 3, 10, 11, 12, 13});
    CHECK(row(5) == std::vector<double>{12, 13, 14, 15, 22, 23, 24, 25});
    const PatchSet s = extract_patches(f, 3, 2);
    CHECK(s.count == 2);
    CHECK_THROWS(extract_patches(f, 5, 1));
    CHECK_THROWS(extract_patches(Tensor::zeros({2, 4, 4, 1}), 2, 1));
}

TEST_CASE("backbone taps have the documented strides") {
    const auto b = FeatureBackbone::make_default(3);
    const Tensor img = Tensor::zeros({1, 32, 32, 3});
    const auto f = b.extract(img, FeatureBackbone::layer_names());
    CHECK(f.at("conv1_2").shape() == Shape{1, 32, 32, 8});
    CHECK(f.at("conv2_2").shape() == Shape{1, 16, 16, 16});
    CHECK(f.at("conv3_2").shape() == Shape{1, 8, 8, 32});
    CHECK(f.at("conv4_2").shape() == Shape{1, 4, 4, 32});
    CHECK(FeatureBackbone::layer_stride("conv4_2") == 8);
    CHECK_THROWS(FeatureBackbone::layer_stride("conv5_2"));
    const auto rebuilt = FeatureBackbone::from_tensors(b.tensors());
    CHECK(values(rebuilt.extract(img, {"conv3_2"}).at("conv3_2")) == values(f.at("conv3_2")));
}

TEST_CASE("default total is 2 x conv4_2 + conv3_2") {
    PrecisionScope p(Precision::f64);
    const auto backbone = FeatureBackbone::make_default(3);
    for (std::uint64_t seed : kSeeds) {
        std::mt19937_64 rng(seed);
        const Tensor gen = random_const({2, 32, 32, 3}, rng);
        const Tensor ref = random_const({2, 32, 32, 3}, rng);
        const IdMrfConfig cfg;
        const auto terms = idmrf_terms(gen, ref, backbone, cfg);
        double l4 = 0, l3 = 0;
        for (const auto& [name, t] : terms.per_layer) (name == "conv4_2" ? l4 : l3) = t.item();
        CHECK(terms.total.item() == 2 * l4 + l3);
    }
}

TEST_CASE("ID-MRF gradient on 8x8 images matches finite differences") {
    PrecisionScope p(Precision::f64);
    const auto backbone = FeatureBackbone::make_default(3);
    IdMrfConfig cfg;
    cfg.patch_size = 1;
    cfg.layers = {{"conv2_2", 2.0}, {"conv3_2", 1.0}};
    for (std::uint64_t seed : kSeeds) {
        std::mt19937_64 rng(seed);
        Tensor gen = random_leaf({1, 8, 8, 3}, rng);
        const Tensor ref = random_const({1, 8, 8, 3}, rng);
        CHECK(fd_max_rel_error([&](const std::vector<Tensor>& in) { return idmrf_total(in[0], ref, backbone, cfg); },
                               {gen}) <= 1e-3);
    }
}

TEST_CASE("relative similarity is differentiable in the similarities") {
    PrecisionScope p(Precision::f64);
    for (std::uint64_t seed : kSeeds) {
        std::mt19937_64 rng(seed);
        Tensor mu = random_leaf(matrix_shape(4, 5), rng, 0.1, 0.9);
        IdMrfConfig cfg;
        cfg.h = 2.0;
        const Tensor w = random_const(matrix_shape(4, 5), rng);
        CHECK(fd_max_rel_error([&](const std::vector<Tensor>& in) {
            return sum(mul(relative_similarity(in[0], cfg).rs_bar, w));
        }, {mu}, 1e-6) <= 1e-4);
    }
}
