#include "gmcnn/conv.hpp"

#include <algorithm>
#include <string>

#include "gmcnn/ops.hpp"
#include "gmcnn/parallel.hpp"

namespace gmcnn {

void ConvSpec::validate() const {
    if (kh < 1 || kw < 1 || c_in < 1 || c_out < 1 || stride_h < 1 || stride_w < 1 ||
        dilation_h < 1 || dilation_w < 1) {
        throw std::invalid_argument("invalid convolution spec");
    }
}

std::pair<int, int> ConvSpec::output_dims(int in_h, int in_w) const {
    if (padding == Padding::same) {
        return {(in_h + stride_h - 1) / stride_h, (in_w + stride_w - 1) / stride_w};
    }
    const int oh = in_h >= extent_h() ? (in_h - extent_h()) / stride_h + 1 : 0;
    const int ow = in_w >= extent_w() ? (in_w - extent_w()) / stride_w + 1 : 0;
    return {oh, ow};
}

ConvGeometry ConvGeometry::make(const ConvSpec& spec, int in_h, int in_w) {
    spec.validate();
    ConvGeometry g;
    g.spec = spec;
    g.in_h = in_h;
    g.in_w = in_w;
    auto [oh, ow] = spec.output_dims(in_h, in_w);
    if (oh < 1 || ow < 1) {
        throw std::invalid_argument("convolution input " + std::to_string(in_h) + "x" +
                                    std::to_string(in_w) + " smaller than kernel extent");
    }
    g.out_h = oh;
    g.out_w = ow;
    if (spec.padding == Padding::same) {
        const int pad_h = std::max((oh - 1) * spec.stride_h + spec.extent_h() - in_h, 0);
        const int pad_w = std::max((ow - 1) * spec.stride_w + spec.extent_w() - in_w, 0);
        g.pad_top = pad_h / 2;
        g.pad_left = pad_w / 2;
    }
    return g;
}

namespace {

using Grads = std::vector<Tensor>;

Tensor conv_forward(const Tensor& x, const Tensor& w, const ConvGeometry& geo);

class ConvNode final : public Node {
public:
    enum class Kind { forward, input_grad, weight_grad };
    ConvNode(Kind kind, ConvGeometry geo) : kind_(kind), geo_(std::move(geo)) {}

    Grads backward(const Tensor& g) override {
        const Tensor& a = inputs[0];
        const Tensor& b = inputs[1];
        switch (kind_) {
            case Kind::forward:  // a = input, b = weights
                return {conv2d_input_grad(g, b, geo_, a.shape().n), conv2d_weight_grad(a, g, geo_)};
            case Kind::input_grad:  // a = grad_out, b = weights
                return {conv_forward(g, b, geo_), conv2d_weight_grad(g, a, geo_)};
            case Kind::weight_grad:  // a = input, b = grad_out
                return {conv2d_input_grad(b, g, geo_, a.shape().n), conv_forward(a, g, geo_)};
        }
        return {};
    }
    const char* name() const override {
        switch (kind_) {
            case Kind::forward: return "conv2d";
            case Kind::input_grad: return "conv2d_input_grad";
            case Kind::weight_grad: return "conv2d_weight_grad";
        }
        return "conv2d";
    }

private:
    Kind kind_;
    ConvGeometry geo_;
};

Tensor conv_forward(const Tensor& x, const Tensor& w, const ConvGeometry& geo) {
    const ConvSpec& sp = geo.spec;
    const Shape& xs = x.shape();
    const int cin = sp.c_in, cout = sp.c_out;
    Shape out_shape{xs.n, geo.out_h, geo.out_w, cout};
    std::vector<double> out(out_shape.numel(), 0.0);
    auto X = x.data();
    auto W = w.data();
    detail::parallel_for(0, static_cast<std::int64_t>(xs.n) * geo.out_h, [&](std::int64_t row) {
        const int n = static_cast<int>(row / geo.out_h);
        const int oy = static_cast<int>(row % geo.out_h);
        for (int ox = 0; ox < geo.out_w; ++ox) {
            double* dst = out.data() + out_shape.index(n, oy, ox, 0);
            for (int ky = 0; ky < sp.kh; ++ky) {
                const int iy = oy * sp.stride_h - geo.pad_top + ky * sp.dilation_h;
                if (iy < 0 || iy >= xs.h) continue;
                for (int kx = 0; kx < sp.kw; ++kx) {
                    const int ix = ox * sp.stride_w - geo.pad_left + kx * sp.dilation_w;
                    if (ix < 0 || ix >= xs.w) continue;
                    const double* src = X.data() + xs.index(n, iy, ix, 0);
                    const double* wk = W.data() + (static_cast<std::size_t>(ky) * sp.kw + kx) * cin * cout;
                    for (int ci = 0; ci < cin; ++ci) {
                        const double v = src[ci];
                        const double* wr = wk + static_cast<std::size_t>(ci) * cout;
                        for (int co = 0; co < cout; ++co) dst[co] += v * wr[co];
                    }
                }
            }
        }
    });
    return Tensor::make_result(out_shape, std::move(out), {x, w},
                               std::make_shared<ConvNode>(ConvNode::Kind::forward, geo));
}

}  // namespace

Tensor conv2d_input_grad(const Tensor& grad_out, const Tensor& weights, const ConvGeometry& geo,
                         int batch) {
    const ConvSpec& sp = geo.spec;
    const Shape& gs = grad_out.shape();
    const int cin = sp.c_in, cout = sp.c_out;
    Shape xs{batch, geo.in_h, geo.in_w, cin};
    if (gs != Shape{batch, geo.out_h, geo.out_w, cout}) {
        throw ShapeError("conv2d_input_grad", gs, Shape{batch, geo.out_h, geo.out_w, cout});
    }
    std::vector<double> out(xs.numel(), 0.0);
    auto G = grad_out.data();
    auto W = weights.data();
    detail::parallel_for(0, static_cast<std::int64_t>(batch) * geo.in_h, [&](std::int64_t row) {
        const int n = static_cast<int>(row / geo.in_h);
        const int iy = static_cast<int>(row % geo.in_h);
        for (int ix = 0; ix < geo.in_w; ++ix) {
            double* dst = out.data() + xs.index(n, iy, ix, 0);
            for (int ky = 0; ky < sp.kh; ++ky) {
                const int ty = iy + geo.pad_top - ky * sp.dilation_h;
                if (ty < 0 || ty % sp.stride_h != 0) continue;
                const int oy = ty / sp.stride_h;
                if (oy >= geo.out_h) continue;
                for (int kx = 0; kx < sp.kw; ++kx) {
                    const int tx = ix + geo.pad_left - kx * sp.dilation_w;
                    if (tx < 0 || tx % sp.stride_w != 0) continue;
                    const int ox = tx / sp.stride_w;
                    if (ox >= geo.out_w) continue;
                    const double* g = G.data() + gs.index(n, oy, ox, 0);
                    const double* wk = W.data() + (static_cast<std::size_t>(ky) * sp.kw + kx) * cin * cout;
                    for (int ci = 0; ci < cin; ++ci) {
                        const double* wr = wk + static_cast<std::size_t>(ci) * cout;
                        double s = 0.0;
                        for (int co = 0; co < cout; ++co) s += g[co] * wr[co];
                        dst[ci] += s;
                    }
                }
            }
        }
    });
    return Tensor::make_result(xs, std::move(out), {grad_out, weights},
                               std::make_shared<ConvNode>(ConvNode::Kind::input_grad, geo));
}

Tensor conv2d_weight_grad(const Tensor& input, const Tensor& grad_out, const ConvGeometry& geo) {
    const ConvSpec& sp = geo.spec;
    const Shape& xs = input.shape();
    const Shape& gs = grad_out.shape();
    const int cin = sp.c_in, cout = sp.c_out;
    if (gs != Shape{xs.n, geo.out_h, geo.out_w, cout}) {
        throw ShapeError("conv2d_weight_grad", gs, Shape{xs.n, geo.out_h, geo.out_w, cout});
    }
    Shape ws = sp.weight_shape();
    std::vector<double> out(ws.numel(), 0.0);
    auto X = input.data();
    auto G = grad_out.data();
    detail::parallel_for(0, static_cast<std::int64_t>(sp.kh) * sp.kw, [&](std::int64_t tap) {
        const int ky = static_cast<int>(tap / sp.kw);
        const int kx = static_cast<int>(tap % sp.kw);
        double* wk = out.data() + static_cast<std::size_t>(tap) * cin * cout;
        for (int n = 0; n < xs.n; ++n) {
            for (int oy = 0; oy < geo.out_h; ++oy) {
                const int iy = oy * sp.stride_h - geo.pad_top + ky * sp.dilation_h;
                if (iy < 0 || iy >= xs.h) continue;
                for (int ox = 0; ox < geo.out_w; ++ox) {
                    const int ix = ox * sp.stride_w - geo.pad_left + kx * sp.dilation_w;
                    if (ix < 0 || ix >= xs.w) continue;
                    const double* src = X.data() + xs.index(n, iy, ix, 0);
                    const double* g = G.data() + gs.index(n, oy, ox, 0);
                    for (int ci = 0; ci < cin; ++ci) {
                        const double v = src[ci];
                        double* wr = wk + static_cast<std::size_t>(ci) * cout;
                        for (int co = 0; co < cout; ++co) wr[co] += v * g[co];
                    }
                }
            }
        }
    });
    return Tensor::make_result(ws, std::move(out), {input, grad_out},
                               std::make_shared<ConvNode>(ConvNode::Kind::weight_grad, geo));
}

Tensor conv2d(const Tensor& input, const ConvSpec& spec, const Tensor& weights, const Tensor& bias) {
    spec.validate();
    if (weights.shape() != spec.weight_shape()) {
        throw ShapeError("conv2d weights", weights.shape(), spec.weight_shape());
    }
    const Shape& xs = input.shape();
    if (xs.c != spec.c_in) {
        throw ShapeError("conv2d input channels", xs, Shape{xs.n, xs.h, xs.w, spec.c_in});
    }
    ConvGeometry geo = ConvGeometry::make(spec, xs.h, xs.w);
    Tensor out = conv_forward(input, weights, geo);
    if (!bias.defined()) return out;
    if (bias.shape() != spec.bias_shape()) throw ShapeError("conv2d bias", bias.shape(), spec.bias_shape());
    return add(out, bias);
}

}  // namespace gmcnn
