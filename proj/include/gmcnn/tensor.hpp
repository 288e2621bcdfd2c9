#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace gmcnn {

// Dense rank-4 shape in (batch, height, width, channels) order.
struct Shape {
    int n = 1;
    int h = 1;
    int w = 1;
    int c = 1;

    std::size_t numel() const {
        return static_cast<std::size_t>(n) * h * w * c;
    }
    std::size_t index(int in, int ih, int iw, int ic) const {
        return ((static_cast<std::size_t>(in) * h + ih) * w + iw) * c + ic;
    }
    bool valid() const { return n >= 1 && h >= 1 && w >= 1 && c >= 1; }
    std::string str() const;

    friend bool operator==(const Shape&, const Shape&) = default;
};

class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
    ShapeError(const std::string& what, const Shape& a, const Shape& b);
};

// Computation precision. Values are stored as double; in f32 mode every
// produced value is rounded to the nearest float, so the arithmetic seen by
// callers is 32-bit. f64 exists for gradient checks and oracle tests.
enum class Precision { f32, f64 };

Precision current_precision();

class PrecisionScope {
public:
    explicit PrecisionScope(Precision p);
    ~PrecisionScope();
    PrecisionScope(const PrecisionScope&) = delete;
    PrecisionScope& operator=(const PrecisionScope&) = delete;

private:
    Precision saved_;
};

// Rounds v in place to the active precision.
void round_to_precision(std::span<double> v);
double round_to_precision(double v);

bool grad_enabled();

// Disables graph recording for the lifetime of the guard.
class NoGradScope {
public:
    NoGradScope();
    ~NoGradScope();
    NoGradScope(const NoGradScope&) = delete;
    NoGradScope& operator=(const NoGradScope&) = delete;

private:
    bool saved_;
};

class Tensor;

// A recorded operation. backward() maps the gradient of the op output to
// one gradient per input (undefined where the input does not need one).
// backward is written in terms of graph ops, so gradients are themselves
// differentiable when recorded with create_graph.
class Node {
public:
    virtual ~Node() = default;
    virtual std::vector<Tensor> backward(const Tensor& grad_out) = 0;
    virtual const char* name() const = 0;
    virtual bool twice_differentiable() const { return true; }

    std::vector<Tensor> inputs;
};

struct TensorImpl {
    Shape shape;
    std::vector<double> data;
    bool requires_grad = false;
    std::shared_ptr<Node> grad_fn;
    std::shared_ptr<TensorImpl> grad;
};

class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(const Shape& s, bool requires_grad = false);
    static Tensor full(const Shape& s, double value, bool requires_grad = false);
    static Tensor from_data(const Shape& s, std::vector<double> data, bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);

    bool defined() const { return impl_ != nullptr; }
    const Shape& shape() const;
    std::size_t numel() const { return shape().numel(); }
    std::span<const double> data() const;
    double item() const;
    double at(int n, int h, int w, int c) const;

    bool requires_grad() const;
    bool is_leaf() const;
    const std::shared_ptr<Node>& grad_fn() const;

    // Accumulated gradient after backward(); undefined if none.
    Tensor grad() const;
    void zero_grad();

    // Leaf storage for optimizers and loaders. Throws on non-leaf tensors.
    std::span<double> mutable_data();

    Tensor detach() const;
    Tensor copy(bool requires_grad = false) const;

    const TensorImpl* impl() const { return impl_.get(); }
    TensorImpl* impl() { return impl_.get(); }

    // Used by op implementations.
    static Tensor make_result(const Shape& s, std::vector<double> data,
                              std::vector<Tensor> inputs, std::shared_ptr<Node> node);
    static Tensor wrap(std::shared_ptr<TensorImpl> impl);

private:
    std::shared_ptr<TensorImpl> impl_;
};

// Accumulates d(root)/d(leaf) into every reachable leaf with requires_grad.
void backward(const Tensor& root);

// Returns d(root)/d(x) for each x in wrt (zeros where unreachable). With
// create_graph the returned tensors are part of a graph and can be
// differentiated again.
std::vector<Tensor> grad(const Tensor& root, const std::vector<Tensor>& wrt,
                         bool create_graph = false);

}  // namespace gmcnn
