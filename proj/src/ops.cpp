#include "gmcnn/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <utility>

#include "gmcnn/parallel.hpp"

namespace gmcnn {

namespace {

using Grads = std::vector<Tensor>;

template <class F>
class FnNode final : public Node {
public:
    FnNode(const char* name, F fn, bool twice) : name_(name), fn_(std::move(fn)), twice_(twice) {}
    Grads backward(const Tensor& g) override { return fn_(inputs, g); }
    const char* name() const override { return name_; }
    bool twice_differentiable() const override { return twice_; }

private:
    const char* name_;
    F fn_;
    bool twice_;
};

template <class F>
std::shared_ptr<Node> make_node(const char* name, F fn, bool twice = true) {
    return std::make_shared<FnNode<F>>(name, std::move(fn), twice);
}

// Non-differentiable tensor computed elementwise from x (masks, signs).
template <class F>
Tensor constant_map(const Tensor& x, F f) {
    auto src = x.data();
    std::vector<double> out(src.size());
    for (std::size_t i = 0; i < src.size(); ++i) out[i] = f(src[i]);
    return Tensor::from_data(x.shape(), std::move(out));
}

template <class F>
std::vector<double> map_values(const Tensor& x, F f) {
    auto src = x.data();
    std::vector<double> out(src.size());
    for (std::size_t i = 0; i < src.size(); ++i) out[i] = f(src[i]);
    return out;
}

Shape broadcast_shape(const Shape& a, const Shape& b, const char* op) {
    auto dim = [&](int x, int y) {
        if (x == y || y == 1) return x;
        if (x == 1) return y;
        throw ShapeError(op, a, b);
    };
    return {dim(a.n, b.n), dim(a.h, b.h), dim(a.w, b.w), dim(a.c, b.c)};
}

enum class BinaryKind { add, sub, mul, div };

Tensor binary_same(const Tensor& a, const Tensor& b, BinaryKind kind) {
    auto x = a.data();
    auto y = b.data();
    std::vector<double> out(x.size());
    switch (kind) {
        case BinaryKind::add:
            for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + y[i];
            return Tensor::make_result(a.shape(), std::move(out), {a, b},
                                       make_node("add", [](const Grads&, const Tensor& g) {
                                           return Grads{g, g};
                                       }));
        case BinaryKind::sub:
            for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] - y[i];
            return Tensor::make_result(a.shape(), std::move(out), {a, b},
                                       make_node("sub", [](const Grads&, const Tensor& g) {
                                           return Grads{g, neg(g)};
                                       }));
        case BinaryKind::mul:
            for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * y[i];
            return Tensor::make_result(a.shape(), std::move(out), {a, b},
                                       make_node("mul", [](const Grads& in, const Tensor& g) {
                                           return Grads{mul(g, in[1]), mul(g, in[0])};
                                       }));
        case BinaryKind::div:
            for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] / y[i];
            return Tensor::make_result(
                a.shape(), std::move(out), {a, b},
                make_node("div", [](const Grads& in, const Tensor& g) {
                    Tensor ga = div(g, in[1]);
                    Tensor gb = neg(div(mul(g, in[0]), square(in[1])));
                    return Grads{ga, gb};
                }));
    }
    throw std::logic_error("unknown binary op");
}

Tensor binary(const Tensor& a, const Tensor& b, BinaryKind kind, const char* name) {
    if (a.shape() == b.shape()) return binary_same(a, b, kind);
    Shape s = broadcast_shape(a.shape(), b.shape(), name);
    return binary_same(broadcast_to(a, s), broadcast_to(b, s), kind);
}

Tensor elu_grad(const Tensor& x) {
    auto out = map_values(x, [](double v) { return v > 0 ? 1.0 : std::exp(v); });
    return Tensor::make_result(x.shape(), std::move(out), {x},
                               make_node("elu_grad", [](const Grads& in, const Tensor& g) {
                                   Tensor neg_side = constant_map(
                                       in[0], [](double v) { return v > 0 ? 0.0 : 1.0; });
                                   return Grads{mul(g, mul(neg_side, exp(in[0])))};
                               }));
}

Tensor pad_channels(const Tensor& x, int begin, int total);
Tensor pad_batch(const Tensor& x, int begin, int total);

}  // namespace

// --- elementwise -----------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) { return binary(a, b, BinaryKind::add, "add"); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary(a, b, BinaryKind::sub, "sub"); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary(a, b, BinaryKind::mul, "mul"); }
Tensor div(const Tensor& a, const Tensor& b) { return binary(a, b, BinaryKind::div, "div"); }

Tensor neg(const Tensor& x) {
    return Tensor::make_result(x.shape(), map_values(x, [](double v) { return -v; }), {x},
                               make_node("neg", [](const Grads&, const Tensor& g) {
                                   return Grads{neg(g)};
                               }));
}

Tensor scale(const Tensor& x, double s) {
    return Tensor::make_result(x.shape(), map_values(x, [s](double v) { return v * s; }), {x},
                               make_node("scale", [s](const Grads&, const Tensor& g) {
                                   return Grads{scale(g, s)};
                               }));
}

Tensor add_scalar(const Tensor& x, double s) {
    return Tensor::make_result(x.shape(), map_values(x, [s](double v) { return v + s; }), {x},
                               make_node("add_scalar", [](const Grads&, const Tensor& g) {
                                   return Grads{g};
                               }));
}

Tensor abs(const Tensor& x) {
    return Tensor::make_result(
        x.shape(), map_values(x, [](double v) { return std::fabs(v); }), {x},
        make_node("abs", [](const Grads& in, const Tensor& g) {
            Tensor sign = constant_map(in[0], [](double v) {
                return v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0);
            });
            return Grads{mul(g, sign)};
        }));
}

Tensor square(const Tensor& x) {
    return Tensor::make_result(x.shape(), map_values(x, [](double v) { return v * v; }), {x},
                               make_node("square", [](const Grads& in, const Tensor& g) {
                                   return Grads{mul(g, scale(in[0], 2.0))};
                               }));
}

Tensor sqrt(const Tensor& x) {
    return Tensor::make_result(
        x.shape(), map_values(x, [](double v) { return std::sqrt(v); }), {x},
        make_node("sqrt", [](const Grads& in, const Tensor& g) {
            return Grads{mul(g, scale(reciprocal_or_zero(sqrt(in[0])), 0.5))};
        }));
}

Tensor exp(const Tensor& x) {
    return Tensor::make_result(x.shape(), map_values(x, [](double v) { return std::exp(v); }),
                               {x}, make_node("exp", [](const Grads& in, const Tensor& g) {
                                   return Grads{mul(g, exp(in[0]))};
                               }));
}

Tensor log(const Tensor& x) {
    return Tensor::make_result(x.shape(), map_values(x, [](double v) { return std::log(v); }),
                               {x}, make_node("log", [](const Grads& in, const Tensor& g) {
                                   return Grads{div(g, in[0])};
                               }));
}

Tensor reciprocal_or_zero(const Tensor& x) {
    return Tensor::make_result(
        x.shape(), map_values(x, [](double v) { return v == 0.0 ? 0.0 : 1.0 / v; }), {x},
        make_node("reciprocal_or_zero", [](const Grads& in, const Tensor& g) {
            return Grads{mul(g, neg(square(reciprocal_or_zero(in[0]))))};
        }));
}

Tensor clamp_min(const Tensor& x, double lo) {
    return Tensor::make_result(
        x.shape(), map_values(x, [lo](double v) { return v > lo ? v : lo; }), {x},
        make_node("clamp_min", [lo](const Grads& in, const Tensor& g) {
            Tensor pass = constant_map(in[0], [lo](double v) { return v > lo ? 1.0 : 0.0; });
            return Grads{mul(g, pass)};
        }));
}

Tensor leaky_relu(const Tensor& x, double slope) {
    return Tensor::make_result(
        x.shape(), map_values(x, [slope](double v) { return v > 0 ? v : slope * v; }), {x},
        make_node("leaky_relu", [slope](const Grads& in, const Tensor& g) {
            Tensor d = constant_map(in[0], [slope](double v) { return v > 0 ? 1.0 : slope; });
            return Grads{mul(g, d)};
        }));
}

Tensor elu(const Tensor& x) {
    return Tensor::make_result(
        x.shape(), map_values(x, [](double v) { return v > 0 ? v : std::expm1(v); }), {x},
        make_node("elu", [](const Grads& in, const Tensor& g) {
            return Grads{mul(g, elu_grad(in[0]))};
        }));
}

Tensor tanh(const Tensor& x) {
    return Tensor::make_result(
        x.shape(), map_values(x, [](double v) { return std::tanh(v); }), {x},
        make_node("tanh", [](const Grads& in, const Tensor& g) {
            return Grads{mul(g, add_scalar(neg(square(tanh(in[0]))), 1.0))};
        }));
}

Tensor sigmoid(const Tensor& x) {
    return Tensor::make_result(
        x.shape(), map_values(x, [](double v) { return activate(v, Activation::sigmoid); }),
        {x}, make_node("sigmoid", [](const Grads& in, const Tensor& g) {
            Tensor s = sigmoid(in[0]);
            return Grads{mul(g, mul(s, add_scalar(neg(s), 1.0)))};
        }));
}

Tensor softplus(const Tensor& x) {
    return Tensor::make_result(
        x.shape(), map_values(x, [](double v) { return activate(v, Activation::softplus); }),
        {x}, make_node("softplus", [](const Grads& in, const Tensor& g) {
            return Grads{mul(g, sigmoid(in[0]))};
        }));
}

double activate(double v, Activation act) {
    switch (act) {
        case Activation::identity: return v;
        case Activation::leaky_relu: return v > 0 ? v : 0.2 * v;
        case Activation::elu: return v > 0 ? v : std::expm1(v);
        case Activation::tanh: return std::tanh(v);
        case Activation::sigmoid:
            if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
            return std::exp(v) / (1.0 + std::exp(v));
        case Activation::softplus: return std::max(v, 0.0) + std::log1p(std::exp(-std::fabs(v)));
    }
    return v;
}

Tensor activate(const Tensor& x, Activation act) {
    switch (act) {
        case Activation::identity: return x;
        case Activation::leaky_relu: return leaky_relu(x);
        case Activation::elu: return elu(x);
        case Activation::tanh: return tanh(x);
        case Activation::sigmoid: return sigmoid(x);
        case Activation::softplus: return softplus(x);
    }
    return x;
}

// --- broadcasting ------------------------------------------------------------

Tensor broadcast_to(const Tensor& x, const Shape& target) {
    const Shape& s = x.shape();
    if (s == target) return x;
    auto ok = [](int from, int to) { return from == to || from == 1; };
    if (!ok(s.n, target.n) || !ok(s.h, target.h) || !ok(s.w, target.w) || !ok(s.c, target.c)) {
        throw ShapeError("broadcast_to", s, target);
    }
    auto src = x.data();
    std::vector<double> out(target.numel());
    std::size_t i = 0;
    for (int n = 0; n < target.n; ++n)
        for (int h = 0; h < target.h; ++h)
            for (int w = 0; w < target.w; ++w)
                for (int c = 0; c < target.c; ++c)
                    out[i++] = src[s.index(s.n == 1 ? 0 : n, s.h == 1 ? 0 : h, s.w == 1 ? 0 : w,
                                           s.c == 1 ? 0 : c)];
    return Tensor::make_result(target, std::move(out), {x},
                               make_node("broadcast_to", [](const Grads& in, const Tensor& g) {
                                   return Grads{sum_to(g, in[0].shape())};
                               }));
}

Tensor sum_to(const Tensor& x, const Shape& target) {
    const Shape& s = x.shape();
    if (s == target) return x;
    auto ok = [](int from, int to) { return from == to || to == 1; };
    if (!ok(s.n, target.n) || !ok(s.h, target.h) || !ok(s.w, target.w) || !ok(s.c, target.c)) {
        throw ShapeError("sum_to", s, target);
    }
    auto src = x.data();
    std::vector<double> out(target.numel(), 0.0);
    std::size_t i = 0;
    for (int n = 0; n < s.n; ++n)
        for (int h = 0; h < s.h; ++h)
            for (int w = 0; w < s.w; ++w)
                for (int c = 0; c < s.c; ++c)
                    out[target.index(target.n == 1 ? 0 : n, target.h == 1 ? 0 : h,
                                     target.w == 1 ? 0 : w, target.c == 1 ? 0 : c)] += src[i++];
    return Tensor::make_result(target, std::move(out), {x},
                               make_node("sum_to", [](const Grads& in, const Tensor& g) {
                                   return Grads{broadcast_to(g, in[0].shape())};
                               }));
}

Tensor reshape(const Tensor& x, const Shape& target) {
    if (target.numel() != x.numel()) throw ShapeError("reshape", x.shape(), target);
    if (target == x.shape()) return x;
    auto src = x.data();
    return Tensor::make_result(target, std::vector<double>(src.begin(), src.end()), {x},
                               make_node("reshape", [](const Grads& in, const Tensor& g) {
                                   return Grads{reshape(g, in[0].shape())};
                               }));
}

// --- reductions --------------------------------------------------------------

Tensor sum(const Tensor& x) {
    double acc = 0.0;
    for (double v : x.data()) acc += v;
    return Tensor::make_result(Shape{}, {acc}, {x},
                               make_node("sum", [](const Grads& in, const Tensor& g) {
                                   return Grads{broadcast_to(g, in[0].shape())};
                               }));
}

Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.numel())); }

Tensor l1_norm(const Tensor& x) { return sum(abs(x)); }

Tensor l2_norm(const Tensor& x) { return sqrt(sum(square(x))); }

Tensor reduce(const Tensor& x, ReduceKind kind) {
    switch (kind) {
        case ReduceKind::sum: return sum(x);
        case ReduceKind::mean: return mean(x);
        case ReduceKind::l1_norm: return l1_norm(x);
        case ReduceKind::l2_norm: return l2_norm(x);
    }
    throw std::invalid_argument("unknown reduction");
}

// --- channel / batch slicing -------------------------------------------------

namespace {

Tensor pad_channels(const Tensor& x, int begin, int total) {
    const Shape& s = x.shape();
    Shape out_shape{s.n, s.h, s.w, total};
    std::vector<double> out(out_shape.numel(), 0.0);
    auto src = x.data();
    const std::size_t pixels = static_cast<std::size_t>(s.n) * s.h * s.w;
    for (std::size_t p = 0; p < pixels; ++p)
        std::copy_n(src.begin() + p * s.c, s.c, out.begin() + p * total + begin);
    return Tensor::make_result(out_shape, std::move(out), {x},
                               make_node("pad_channels", [begin](const Grads& in, const Tensor& g) {
                                   return Grads{slice_channels(g, begin, in[0].shape().c)};
                               }));
}

Tensor pad_batch(const Tensor& x, int begin, int total) {
    const Shape& s = x.shape();
    Shape out_shape{total, s.h, s.w, s.c};
    std::vector<double> out(out_shape.numel(), 0.0);
    auto src = x.data();
    std::copy(src.begin(), src.end(), out.begin() + static_cast<std::ptrdiff_t>(begin) * s.h * s.w * s.c);
    return Tensor::make_result(out_shape, std::move(out), {x},
                               make_node("pad_batch", [begin](const Grads& in, const Tensor& g) {
                                   return Grads{slice_batch(g, begin, in[0].shape().n)};
                               }));
}

}  // namespace

Tensor concat_channels(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_channels of zero tensors");
    const Shape& first = parts.front().shape();
    int total = 0;
    for (const Tensor& t : parts) {
        const Shape& s = t.shape();
        if (s.n != first.n || s.h != first.h || s.w != first.w) {
            throw ShapeError("concat_channels", first, s);
        }
        total += s.c;
    }
    Shape out_shape{first.n, first.h, first.w, total};
    std::vector<double> out(out_shape.numel());
    const std::size_t pixels = static_cast<std::size_t>(first.n) * first.h * first.w;
    int offset = 0;
    for (const Tensor& t : parts) {
        auto src = t.data();
        const int c = t.shape().c;
        for (std::size_t p = 0; p < pixels; ++p)
            std::copy_n(src.begin() + p * c, c, out.begin() + p * total + offset);
        offset += c;
    }
    return Tensor::make_result(out_shape, std::move(out), parts,
                               make_node("concat_channels", [](const Grads& in, const Tensor& g) {
                                   Grads out;
                                   int off = 0;
                                   for (const Tensor& t : in) {
                                       out.push_back(slice_channels(g, off, t.shape().c));
                                       off += t.shape().c;
                                   }
                                   return out;
                               }));
}

Tensor slice_channels(const Tensor& x, int begin, int count) {
    const Shape& s = x.shape();
    if (begin < 0 || count < 1 || begin + count > s.c) {
        throw std::invalid_argument("slice_channels [" + std::to_string(begin) + ", " +
                                    std::to_string(begin + count) + ") out of range for " +
                                    s.str());
    }
    if (begin == 0 && count == s.c) return x;
    Shape out_shape{s.n, s.h, s.w, count};
    std::vector<double> out(out_shape.numel());
    auto src = x.data();
    const std::size_t pixels = static_cast<std::size_t>(s.n) * s.h * s.w;
    for (std::size_t p = 0; p < pixels; ++p)
        std::copy_n(src.begin() + p * s.c + begin, count, out.begin() + p * count);
    return Tensor::make_result(
        out_shape, std::move(out), {x},
        make_node("slice_channels", [begin](const Grads& in, const Tensor& g) {
            return Grads{pad_channels(g, begin, in[0].shape().c)};
        }));
}

Tensor slice_batch(const Tensor& x, int begin, int count) {
    const Shape& s = x.shape();
    if (begin < 0 || count < 1 || begin + count > s.n) {
        throw std::invalid_argument("slice_batch out of range for " + s.str());
    }
    if (begin == 0 && count == s.n) return x;
    Shape out_shape{count, s.h, s.w, s.c};
    auto src = x.data();
    const std::size_t stride = static_cast<std::size_t>(s.h) * s.w * s.c;
    std::vector<double> out(src.begin() + begin * stride, src.begin() + (begin + count) * stride);
    return Tensor::make_result(out_shape, std::move(out), {x},
                               make_node("slice_batch", [begin](const Grads& in, const Tensor& g) {
                                   return Grads{pad_batch(g, begin, in[0].shape().n)};
                               }));
}

// --- matrices ----------------------------------------------------------------

Shape matrix_shape(int r, int c) { return {1, r, c, 1}; }
int rows(const Tensor& m) { return m.shape().h; }
int cols(const Tensor& m) { return m.shape().w; }

Tensor matmul(const Tensor& a, const Tensor& b, bool trans_a, bool trans_b) {
    const Shape& sa = a.shape();
    const Shape& sb = b.shape();
    if (sa.n != 1 || sa.c != 1 || sb.n != 1 || sb.c != 1) {
        throw ShapeError("matmul expects (1, rows, cols, 1) matrices", sa, sb);
    }
    const int m = trans_a ? sa.w : sa.h;
    const int k = trans_a ? sa.h : sa.w;
    const int kb = trans_b ? sb.w : sb.h;
    const int n = trans_b ? sb.h : sb.w;
    if (k != kb) throw ShapeError("matmul inner dimension", sa, sb);

    auto A = a.data();
    auto B = b.data();
    const std::size_t a_row = trans_a ? 1 : sa.w, a_col = trans_a ? sa.w : 1;
    const std::size_t b_row = trans_b ? 1 : sb.w, b_col = trans_b ? sb.w : 1;
    std::vector<double> out(static_cast<std::size_t>(m) * n, 0.0);
    detail::parallel_for(0, m, [&](std::int64_t i) {
        double* dst = out.data() + i * n;
        for (int p = 0; p < k; ++p) {
            const double av = A[i * a_row + p * a_col];
            if (b_col == 1) {
                const double* src = B.data() + p * b_row;
                for (int j = 0; j < n; ++j) dst[j] += av * src[j];
            } else {
                for (int j = 0; j < n; ++j) dst[j] += av * B[p * b_row + j * b_col];
            }
        }
    });
    return Tensor::make_result(
        matrix_shape(m, n), std::move(out), {a, b},
        make_node("matmul", [trans_a, trans_b](const Grads& in, const Tensor& g) {
            const Tensor& A = in[0];
            const Tensor& B = in[1];
            Tensor ga = trans_a ? matmul(B, g, trans_b, true) : matmul(g, B, false, !trans_b);
            Tensor gb = trans_b ? matmul(g, A, true, trans_a) : matmul(A, g, !trans_a, false);
            return Grads{ga, gb};
        }));
}

// --- sparse maps ---------------------------------------------------------------

void SparseMap::validate() const {
    if (unit < 1 || in_shape.numel() % unit != 0 || out_shape.numel() % unit != 0) {
        throw std::invalid_argument("sparse map unit does not divide tensor sizes");
    }
    if (row_ptr.size() != out_blocks() + 1 || row_ptr.back() != col.size() ||
        col.size() != weight.size()) {
        throw std::invalid_argument("malformed sparse map");
    }
    const std::size_t limit = in_blocks();
    for (std::size_t c : col) {
        if (c >= limit) throw std::out_of_range("sparse map column out of range");
    }
}

std::shared_ptr<const SparseMap> SparseMap::transposed() const {
    auto t = std::make_shared<SparseMap>();
    t->in_shape = out_shape;
    t->out_shape = in_shape;
    t->unit = unit;
    const std::size_t n_out = in_blocks();
    t->row_ptr.assign(n_out + 1, 0);
    for (std::size_t c : col) ++t->row_ptr[c + 1];
    for (std::size_t i = 0; i < n_out; ++i) t->row_ptr[i + 1] += t->row_ptr[i];
    t->col.resize(col.size());
    t->weight.resize(weight.size());
    std::vector<std::size_t> fill(t->row_ptr.begin(), t->row_ptr.end() - 1);
    const std::size_t n_rows = out_blocks();
    for (std::size_t r = 0; r < n_rows; ++r) {
        for (std::size_t k = row_ptr[r]; k < row_ptr[r + 1]; ++k) {
            const std::size_t slot = fill[col[k]]++;
            t->col[slot] = r;
            t->weight[slot] = weight[k];
        }
    }
    return t;
}

Tensor apply_sparse(const Tensor& x, std::shared_ptr<const SparseMap> map) {
    if (x.shape() != map->in_shape) throw ShapeError("apply_sparse", x.shape(), map->in_shape);
    const int unit = map->unit;
    auto src = x.data();
    std::vector<double> out(map->out_shape.numel(), 0.0);
    const auto& M = *map;
    detail::parallel_for(0, static_cast<std::int64_t>(M.out_blocks()), [&](std::int64_t r) {
        double* dst = out.data() + r * unit;
        for (std::size_t k = M.row_ptr[r]; k < M.row_ptr[r + 1]; ++k) {
            const double w = M.weight[k];
            const double* s = src.data() + M.col[k] * unit;
            for (int u = 0; u < unit; ++u) dst[u] += w * s[u];
        }
    });
    return Tensor::make_result(M.out_shape, std::move(out), {x},
                               make_node("apply_sparse", [map](const Grads&, const Tensor& g) {
                                   return Grads{apply_sparse(g, map->transposed())};
                               }));
}

Tensor gather(const Tensor& x, const std::vector<std::size_t>& index, const Shape& out_shape) {
    if (index.size() != out_shape.numel()) {
        throw std::invalid_argument("gather index count does not match output shape " +
                                    out_shape.str());
    }
    auto map = std::make_shared<SparseMap>();
    map->in_shape = x.shape();
    map->out_shape = out_shape;
    map->unit = 1;
    map->row_ptr.resize(index.size() + 1);
    std::iota(map->row_ptr.begin(), map->row_ptr.end(), std::size_t{0});
    map->col = index;
    map->weight.assign(index.size(), 1.0);
    map->validate();
    return apply_sparse(x, std::move(map));
}

namespace {

// Source sampling positions along one axis, align_corners=false.
struct AxisTaps {
    std::vector<int> i0, i1;
    std::vector<double> frac;
};

AxisTaps axis_taps(int offset, int in_size, int out_size) {
    AxisTaps t;
    const double ratio = static_cast<double>(in_size) / out_size;
    for (int d = 0; d < out_size; ++d) {
        double src = (d + 0.5) * ratio - 0.5;
        if (src < 0) src = 0;
        int lo = static_cast<int>(std::floor(src));
        if (lo > in_size - 1) lo = in_size - 1;
        int hi = std::min(lo + 1, in_size - 1);
        double f = src - lo;
        if (hi == lo) f = 0.0;
        t.i0.push_back(offset + lo);
        t.i1.push_back(offset + hi);
        t.frac.push_back(f);
    }
    return t;
}

void push_tap(SparseMap& m, std::size_t col, double w) {
    if (w == 0.0) return;
    m.col.push_back(col);
    m.weight.push_back(w);
}

std::shared_ptr<SparseMap> resample_map(const Shape& in, const std::vector<CropBox>& boxes,
                                        int out_h, int out_w) {
    auto map = std::make_shared<SparseMap>();
    map->in_shape = in;
    map->out_shape = Shape{in.n, out_h, out_w, in.c};
    map->unit = in.c;
    map->row_ptr.reserve(static_cast<std::size_t>(in.n) * out_h * out_w + 1);
    map->row_ptr.push_back(0);
    for (int n = 0; n < in.n; ++n) {
        const CropBox& b = boxes[n];
        AxisTaps ty = axis_taps(b.top, b.height, out_h);
        AxisTaps tx = axis_taps(b.left, b.width, out_w);
        for (int y = 0; y < out_h; ++y) {
            for (int x = 0; x < out_w; ++x) {
                auto pix = [&](int yy, int xx) {
                    return (static_cast<std::size_t>(n) * in.h + yy) * in.w + xx;
                };
                const double fy = ty.frac[y], fx = tx.frac[x];
                push_tap(*map, pix(ty.i0[y], tx.i0[x]), (1 - fy) * (1 - fx));
                push_tap(*map, pix(ty.i0[y], tx.i1[x]), (1 - fy) * fx);
                push_tap(*map, pix(ty.i1[y], tx.i0[x]), fy * (1 - fx));
                push_tap(*map, pix(ty.i1[y], tx.i1[x]), fy * fx);
                map->row_ptr.push_back(map->col.size());
            }
        }
    }
    return map;
}

}  // namespace

Tensor bilinear_resize(const Tensor& x, int target_h, int target_w) {
    const Shape& s = x.shape();
    if (target_h < 1 || target_w < 1) throw std::invalid_argument("bilinear_resize to empty size");
    if (target_h == s.h && target_w == s.w) return x;
    std::vector<CropBox> boxes(s.n, CropBox{0, 0, s.h, s.w});
    return apply_sparse(x, resample_map(s, boxes, target_h, target_w));
}

Tensor bilinear_upsample(const Tensor& x, int target_h, int target_w) {
    const Shape& s = x.shape();
    if (target_h < s.h || target_w < s.w) {
        throw std::invalid_argument("bilinear_upsample target " + std::to_string(target_h) + "x" +
                                    std::to_string(target_w) + " is smaller than source " +
                                    s.str());
    }
    return bilinear_resize(x, target_h, target_w);
}

Tensor crop_resize(const Tensor& x, const std::vector<CropBox>& boxes, int out_h, int out_w) {
    const Shape& s = x.shape();
    if (static_cast<int>(boxes.size()) != s.n) {
        throw std::invalid_argument("crop_resize needs one box per batch element");
    }
    for (const CropBox& b : boxes) {
        if (b.top < 0 || b.left < 0 || b.height < 1 || b.width < 1 || b.top + b.height > s.h ||
            b.left + b.width > s.w) {
            throw std::out_of_range("crop box (" + std::to_string(b.top) + ", " +
                                    std::to_string(b.left) + ", " + std::to_string(b.height) +
                                    ", " + std::to_string(b.width) + ") outside image " +
                                    s.str());
        }
    }
    if (out_h < 1 || out_w < 1) throw std::invalid_argument("crop_resize to empty size");
    return apply_sparse(x, resample_map(s, boxes, out_h, out_w));
}

}  // namespace gmcnn
