#include <doctest.h>

#include <cmath>
#include <limits>

#include "gmcnn/ops.hpp"
#include "support.hpp"

using namespace gmcnn;
using namespace gmcnn::testing;

namespace {

// Square op whose backward cannot itself be differentiated.
class OnceNode final : public Node {
public:
    std::vector<Tensor> backward(const Tensor& g) override {
        NoGradScope no_grad;
        const auto x = inputs[0].data();
        std::vector<double> out(x.size());
        for (std::size_t i = 0; i < x.size(); ++i) out[i] = 2 * x[i] * g.data()[i];
        return {Tensor::from_data(inputs[0].shape(), out)};
    }
    const char* name() const override { return "once_square"; }
    bool twice_differentiable() const override { return false; }
};

Tensor once_square(const Tensor& x) {
    std::vector<double> v(x.data().begin(), x.data().end());
    for (double& e : v) e *= e;
    return Tensor::make_result(x.shape(), std::move(v), {x}, std::make_shared<OnceNode>());
}

}  // namespace

TEST_CASE("shape indexing is row-major NHWC") {
    const Shape s{2, 3, 4, 5};
    CHECK(s.numel() == 120);
    CHECK(s.index(0, 0, 0, 1) == 1);
    CHECK(s.index(0, 0, 1, 0) == 5);
    CHECK(s.index(0, 1, 0, 0) == 20);
    CHECK(s.index(1, 0, 0, 0) == 60);
    CHECK(s.index(1, 2, 3, 4) == 119);
}

TEST_CASE("factories validate sizes") {
    CHECK_THROWS_AS(Tensor::from_data({1, 2, 2, 1}, {1, 2, 3}), std::invalid_argument);
    CHECK_THROWS_AS(Tensor::zeros({0, 1, 1, 1}), std::invalid_argument);
    CHECK_THROWS_AS(Tensor::zeros({1, 2, 1, 1}).item(), std::invalid_argument);
    CHECK(Tensor::scalar(3.5).item() == 3.5);
}

TEST_CASE("f32 mode rounds every stored value to float") {
    const double third = 1.0 / 3.0;
    {
        PrecisionScope p(Precision::f32);
        CHECK(Tensor::scalar(third).item() == static_cast<double>(static_cast<float>(third)));
        const Tensor a = Tensor::scalar(0.1);
        const Tensor b = Tensor::scalar(0.2);
        const double expect = static_cast<float>(static_cast<double>(0.1f) + static_cast<double>(0.2f));
        CHECK(add(a, b).item() == expect);
    }
    PrecisionScope p(Precision::f64);
    CHECK(Tensor::scalar(third).item() == third);
}

TEST_CASE("precision and grad scopes restore the previous mode") {
    const Precision before = current_precision();
    {
        PrecisionScope p(before == Precision::f32 ? Precision::f64 : Precision::f32);
        CHECK(current_precision() != before);
    }
    CHECK(current_precision() == before);
    CHECK(grad_enabled());
    {
        NoGradScope n;
        CHECK_FALSE(grad_enabled());
        const Tensor x = Tensor::scalar(2.0, true);
        CHECK(mul(x, x).grad_fn() == nullptr);
    }
    CHECK(grad_enabled());
}

TEST_CASE("backward accumulates into leaves") {
    PrecisionScope p(Precision::f64);
    Tensor x = Tensor::from_data({1, 1, 1, 3}, {1.0, -2.0, 3.0}, true);
    Tensor y = Tensor::scalar(0.5, true);
    backward(sum(mul(square(x), y)));
    CHECK(values(x.grad()) == std::vector<double>{1.0, -2.0, 3.0});
    CHECK(y.grad().item() == doctest::Approx(14.0));
    backward(sum(x));
    CHECK(values(x.grad()) == std::vector<double>{2.0, -1.0, 4.0});
    x.zero_grad();
    CHECK_FALSE(x.grad().defined());
}

TEST_CASE("backward rejects non-scalar roots") {
    Tensor x = Tensor::from_data({1, 1, 1, 2}, {1.0, 2.0}, true);
    CHECK_THROWS_AS(backward(square(x)), std::invalid_argument);
    CHECK_THROWS_AS(grad(square(x), {x}), std::invalid_argument);
}

TEST_CASE("grad returns zeros for unreachable inputs") {
    Tensor x = Tensor::scalar(1.5, true);
    Tensor unused = Tensor::from_data({1, 1, 2, 1}, {1.0, 1.0}, true);
    const auto g = grad(square(x), {x, unused});
    CHECK(g[0].item() == doctest::Approx(3.0));
    CHECK(values(g[1]) == std::vector<double>{0.0, 0.0});
}

TEST_CASE("shared subexpressions are differentiated once per use") {
    PrecisionScope p(Precision::f64);
    Tensor x = Tensor::scalar(0.7, true);
    const Tensor e = exp(x);
    const Tensor y = mul(e, e);  // exp(2x)
    CHECK(grad(y, {x})[0].item() == doctest::Approx(2 * std::exp(1.4)).epsilon(1e-14));
}

TEST_CASE("second derivatives through create_graph") {
    PrecisionScope p(Precision::f64);
    for (double v : {-1.3, 0.2, 0.9}) {
        Tensor x = Tensor::scalar(v, true);
        // f = tanh(x) * x^3; f'' checked against a closed form.
        const Tensor f = mul(tanh(x), mul(x, square(x)));
        const Tensor d1 = grad(f, {x}, true)[0];
        const Tensor d2 = grad(d1, {x})[0];
        const double t = std::tanh(v), s = 1 - t * t;
        const double expect = -2 * t * s * v * v * v + 2 * s * 3 * v * v + t * 6 * v;
        CHECK(d2.item() == doctest::Approx(expect).epsilon(1e-12));
    }
}

TEST_CASE("create_graph through a once-differentiable op is rejected") {
    Tensor x = Tensor::scalar(1.0, true);
    const Tensor y = sum(once_square(x));
    CHECK(grad(y, {x})[0].item() == doctest::Approx(2.0));
    CHECK_THROWS_AS(grad(sum(once_square(x)), {x}, true), std::logic_error);
}

TEST_CASE("mutable_data is limited to leaves") {
    Tensor x = Tensor::scalar(1.0, true);
    Tensor y = square(x);
    CHECK_THROWS_AS(y.mutable_data(), std::logic_error);
    x.mutable_data()[0] = 4.0;
    CHECK(x.item() == 4.0);
}

TEST_CASE("detach and copy cut the graph") {
    Tensor x = Tensor::scalar(2.0, true);
    const Tensor y = square(x);
    CHECK_FALSE(y.detach().requires_grad());
    CHECK(y.detach().grad_fn() == nullptr);
    Tensor c = y.copy(true);
    CHECK(c.is_leaf());
    c.mutable_data()[0] = 1.0;
    CHECK(y.item() == 4.0);
}
