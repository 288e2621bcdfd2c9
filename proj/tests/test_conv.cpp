#include <doctest.h>

#include "gmcnn/conv.hpp"
#include "gmcnn/parallel.hpp"
#include "gmcnn/ops.hpp"
#include "support.hpp"

using namespace gmcnn;
using namespace gmcnn::testing;

namespace {

ConvSpec make_spec(int k, int cin, int cout, int stride, int dilation, Padding pad) {
    ConvSpec s;
    s.kh = s.kw = k;
    s.c_in = cin;
    s.c_out = cout;
    s.stride_h = s.stride_w = stride;
    s.dilation_h = s.dilation_w = dilation;
    s.padding = pad;
    return s;
}

// Direct cross-correlation over an explicitly zero-padded copy.
std::vector<double> conv_oracle(const Tensor& x, const Tensor& w, const ConvSpec& sp) {
    const Shape& xs = x.shape();
    int oh, ow, pt = 0, pl = 0;
    if (sp.padding == Padding::same) {
        oh = (xs.h + sp.stride_h - 1) / sp.stride_h;
        ow = (xs.w + sp.stride_w - 1) / sp.stride_w;
        pt = std::max((oh - 1) * sp.stride_h + sp.extent_h() - xs.h, 0) / 2;
        pl = std::max((ow - 1) * sp.stride_w + sp.extent_w() - xs.w, 0) / 2;
    } else {
        oh = (xs.h - sp.extent_h()) / sp.stride_h + 1;
        ow = (xs.w - sp.extent_w()) / sp.stride_w + 1;
    }
    const int ph = xs.h + 2 * sp.extent_h(), pw = xs.w + 2 * sp.extent_w();
    std::vector<double> padded(static_cast<std::size_t>(xs.n) * ph * pw * xs.c, 0.0);
    auto P = [&](int n, int y, int x_, int c) -> double& {
        return padded[((static_cast<std::size_t>(n) * ph + y) * pw + x_) * xs.c + c];
    };
    for (int n = 0; n < xs.n; ++n)
        for (int y = 0; y < xs.h; ++y)
            for (int x_ = 0; x_ < xs.w; ++x_)
                for (int c = 0; c < xs.c; ++c) P(n, y + pt, x_ + pl, c) = x.at(n, y, x_, c);
    std::vector<double> out;
    for (int n = 0; n < xs.n; ++n)
        for (int oy = 0; oy < oh; ++oy)
            for (int ox = 0; ox < ow; ++ox)
                for (int co = 0; co < sp.c_out; ++co) {
                    double s = 0;
                    for (int ky = 0; ky < sp.kh; ++ky)
                        for (int kx = 0; kx < sp.kw; ++kx)
                            for (int ci = 0; ci < sp.c_in; ++ci)
                                s += P(n, oy * sp.stride_h + ky * sp.dilation_h, ox * sp.stride_w + kx * sp.dilation_w, ci) *
                                     w.at(ky, kx, ci, co);
                    out.push_back(s);
                }
    return out;
}

const ConvSpec kSpecs[] = {
    make_spec(3, 2, 3, 1, 1, Padding::same), make_spec(3, 2, 2, 2, 1, Padding::same),
    make_spec(5, 1, 2, 2, 1, Padding::same), make_spec(3, 2, 2, 1, 2, Padding::same),
    make_spec(2, 2, 3, 1, 1, Padding::same), make_spec(3, 3, 1, 1, 1, Padding::valid),
    make_spec(4, 2, 1, 2, 1, Padding::valid),
};

}  // namespace

TEST_CASE("same padding output and offsets") {
    const auto g = ConvGeometry::make(make_spec(3, 1, 1, 2, 1, Padding::same), 7, 8);
    CHECK(g.out_h == 4);
    CHECK(g.out_w == 4);
    CHECK(g.pad_top == 1);
    CHECK(g.pad_left == 0);
    const auto d = ConvGeometry::make(make_spec(3, 1, 1, 1, 2, Padding::same), 9, 9);
    CHECK(d.out_h == 9);
    CHECK(d.pad_top == 2);
    CHECK_THROWS(ConvGeometry::make(make_spec(5, 1, 1, 1, 1, Padding::valid), 4, 9));
    CHECK_THROWS(make_spec(0, 1, 1, 1, 1, Padding::same).validate());
}

TEST_CASE("conv2d matches the direct oracle") {
    PrecisionScope p(Precision::f64);
    for (std::uint64_t seed : kSeeds) {
        std::mt19937_64 rng(seed);
        for (const ConvSpec& sp : kSpecs) {
            const Tensor x = random_const({2, 7, 6, sp.c_in}, rng);
            const Tensor w = random_const(sp.weight_shape(), rng);
            const auto got = values(conv2d(x, sp, w));
            const auto want = conv_oracle(x, w, sp);
            REQUIRE(got.size() == want.size());
            for (std::size_t i = 0; i < got.size(); ++i) CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-13));
        }
    }
}

TEST_CASE("bias is added per output channel") {
    const ConvSpec sp = make_spec(1, 1, 2, 1, 1, Padding::same);
    const Tensor x = Tensor::from_data({1, 1, 2, 1}, {1, 2});
    const Tensor w = Tensor::from_data(sp.weight_shape(), {1, -1});
    const Tensor b = Tensor::from_data(sp.bias_shape(), {10, 20});
    CHECK(values(conv2d(x, sp, w, b)) == std::vector<double>{11, 19, 12, 18});
    CHECK_THROWS_AS(conv2d(x, sp, w, Tensor::zeros({1, 1, 1, 3})), ShapeError);
    CHECK_THROWS_AS(conv2d(Tensor::zeros({1, 2, 2, 3}), sp, w), ShapeError);
}

TEST_CASE("input and weight gradients are adjoint to the forward map") {
    PrecisionScope p(Precision::f64);
    for (std::uint64_t seed : kSeeds) {
        std::mt19937_64 rng(seed);
        for (const ConvSpec& sp : kSpecs) {
            const Tensor x = random_const({2, 7, 6, sp.c_in}, rng);
            const Tensor w = random_const(sp.weight_shape(), rng);
            const auto geo = ConvGeometry::make(sp, 7, 6);
            const Tensor g = random_const({2, geo.out_h, geo.out_w, sp.c_out}, rng);
            const double fwd = sum(mul(conv2d(x, sp, w), g)).item();
            CHECK(sum(mul(x, conv2d_input_grad(g, w, geo, 2))).item() == doctest::Approx(fwd).epsilon(1e-12));
            CHECK(sum(mul(w, conv2d_weight_grad(x, g, geo))).item() == doctest::Approx(fwd).epsilon(1e-12));
        }
    }
}

TEST_CASE("conv2d gradients match finite differences") {
    PrecisionScope p(Precision::f64);
    for (std::uint64_t seed : kSeeds) {
        std::mt19937_64 rng(seed);
        for (const ConvSpec& sp : kSpecs) {
            Tensor x = random_leaf({1, 6, 5, sp.c_in}, rng);
            Tensor w = random_leaf(sp.weight_shape(), rng);
            Tensor b = random_leaf(sp.bias_shape(), rng);
            CHECK(fd_max_rel_error([&](const std::vector<Tensor>& in) {
                return sum(square(conv2d(in[0], sp, in[1], in[2])));
            }, {x, w, b}) <= 1e-4);
        }
    }
}

TEST_CASE("second-order gradients through conv2d") {
    PrecisionScope p(Precision::f64);
    for (std::uint64_t seed : kSeeds) {
        std::mt19937_64 rng(seed);
        const ConvSpec sp = kSpecs[seed % 5];
        Tensor x = random_leaf({1, 5, 5, sp.c_in}, rng);
        Tensor w = random_leaf(sp.weight_shape(), rng);
        // || d/dx sum(softplus(conv(x, w))) ||^2 as a function of w and x.
        auto f = [&](const std::vector<Tensor>& in) {
            Tensor xx = in[0];
            const Tensor y = sum(softplus(conv2d(xx, sp, in[1])));
            return sum(square(grad(y, {xx}, true)[0]));
        };
        CHECK(fd_max_rel_error(f, {x, w}) <= 1e-4);
    }
}

TEST_CASE("conv2d output does not depend on the thread count") {
    PrecisionScope p(Precision::f32);
    std::mt19937_64 rng(9);
    const ConvSpec sp = make_spec(3, 4, 5, 2, 1, Padding::same);
    const Tensor x = random_const({3, 11, 9, 4}, rng);
    const Tensor w = random_const(sp.weight_shape(), rng);
    const auto geo = ConvGeometry::make(sp, 11, 9);
    const Tensor g = random_const({3, geo.out_h, geo.out_w, 5}, rng);
    set_num_threads(1);
    const auto a = values(conv2d(x, sp, w));
    const auto ai = values(conv2d_input_grad(g, w, geo, 3));
    const auto aw = values(conv2d_weight_grad(x, g, geo));
    set_num_threads(3);
    CHECK(values(conv2d(x, sp, w)) == a);
    CHECK(values(conv2d_input_grad(g, w, geo, 3)) == ai);
    CHECK(values(conv2d_weight_grad(x, g, geo)) == aw);
    set_num_threads(1);
}
