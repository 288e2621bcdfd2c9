#include "gmcnn/tensor.hpp"

#include <sstream>
#include <unordered_map>
#include <unordered_set>
#include <utility>

#include "gmcnn/ops.hpp"

namespace gmcnn {

namespace {

thread_local Precision t_precision = Precision::f32;
thread_local bool t_grad_enabled = true;

struct GradModeScope {
    bool saved = t_grad_enabled;
    explicit GradModeScope(bool enabled) { t_grad_enabled = enabled; }
    ~GradModeScope() { t_grad_enabled = saved; }
};

}  // namespace

std::string Shape::str() const {
    std::ostringstream os;
    os << '(' << n << ", " << h << ", " << w << ", " << c << ')';
    return os.str();
}

ShapeError::ShapeError(const std::string& what, const Shape& a, const Shape& b)
    : std::invalid_argument(what + ": shape mismatch " + a.str() + " vs " + b.str()) {}

Precision current_precision() { return t_precision; }

PrecisionScope::PrecisionScope(Precision p) : saved_(t_precision) { t_precision = p; }
PrecisionScope::~PrecisionScope() { t_precision = saved_; }

void round_to_precision(std::span<double> v) {
    if (t_precision == Precision::f64) return;
    for (double& x : v) x = static_cast<double>(static_cast<float>(x));
}

double round_to_precision(double v) {
    return t_precision == Precision::f64 ? v : static_cast<double>(static_cast<float>(v));
}

bool grad_enabled() { return t_grad_enabled; }

NoGradScope::NoGradScope() : saved_(t_grad_enabled) { t_grad_enabled = false; }
NoGradScope::~NoGradScope() { t_grad_enabled = saved_; }

// ---------------------------------------------------------------------------

Tensor Tensor::wrap(std::shared_ptr<TensorImpl> impl) {
    Tensor t;
    t.impl_ = std::move(impl);
    return t;
}

Tensor Tensor::from_data(const Shape& s, std::vector<double> data, bool requires_grad) {
    if (!s.valid()) throw std::invalid_argument("invalid tensor shape " + s.str());
    if (data.size() != s.numel()) {
        throw std::invalid_argument("tensor data length " + std::to_string(data.size()) +
                                    " does not match shape " + s.str());
    }
    auto impl = std::make_shared<TensorImpl>();
    impl->shape = s;
    impl->data = std::move(data);
    round_to_precision(impl->data);
    impl->requires_grad = requires_grad;
    return wrap(std::move(impl));
}

Tensor Tensor::zeros(const Shape& s, bool requires_grad) {
    return from_data(s, std::vector<double>(s.numel(), 0.0), requires_grad);
}

Tensor Tensor::full(const Shape& s, double value, bool requires_grad) {
    return from_data(s, std::vector<double>(s.numel(), value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
    return from_data(Shape{}, {value}, requires_grad);
}

const Shape& Tensor::shape() const {
    if (!impl_) throw std::logic_error("use of undefined tensor");
    return impl_->shape;
}

std::span<const double> Tensor::data() const {
    if (!impl_) throw std::logic_error("use of undefined tensor");
    return impl_->data;
}

double Tensor::item() const {
    if (numel() != 1) throw std::invalid_argument("item() on non-scalar tensor " + shape().str());
    return impl_->data[0];
}

double Tensor::at(int n, int h, int w, int c) const {
    return impl_->data[impl_->shape.index(n, h, w, c)];
}

bool Tensor::requires_grad() const { return impl_ && impl_->requires_grad; }

bool Tensor::is_leaf() const { return impl_ && !impl_->grad_fn; }

const std::shared_ptr<Node>& Tensor::grad_fn() const { return impl_->grad_fn; }

Tensor Tensor::grad() const {
    if (!impl_ || !impl_->grad) return {};
    return wrap(impl_->grad);
}

void Tensor::zero_grad() {
    if (impl_) impl_->grad.reset();
}

std::span<double> Tensor::mutable_data() {
    if (!impl_) throw std::logic_error("use of undefined tensor");
    if (impl_->grad_fn) throw std::logic_error("mutable_data() on a non-leaf tensor");
    return impl_->data;
}

Tensor Tensor::detach() const {
    if (!impl_) return {};
    if (!impl_->grad_fn && !impl_->requires_grad) return *this;
    auto impl = std::make_shared<TensorImpl>();
    impl->shape = impl_->shape;
    impl->data = impl_->data;
    return wrap(std::move(impl));
}

Tensor Tensor::copy(bool requires_grad) const {
    auto impl = std::make_shared<TensorImpl>();
    impl->shape = shape();
    impl->data = impl_->data;
    impl->requires_grad = requires_grad;
    return wrap(std::move(impl));
}

Tensor Tensor::make_result(const Shape& s, std::vector<double> data, std::vector<Tensor> inputs,
                           std::shared_ptr<Node> node) {
    auto impl = std::make_shared<TensorImpl>();
    impl->shape = s;
    impl->data = std::move(data);
    round_to_precision(impl->data);
    bool needs = false;
    if (t_grad_enabled) {
        for (const Tensor& in : inputs) needs = needs || in.requires_grad();
    }
    if (needs && node) {
        node->inputs = std::move(inputs);
        impl->requires_grad = true;
        impl->grad_fn = std::move(node);
    }
    return wrap(std::move(impl));
}

// ---------------------------------------------------------------------------

namespace {

// Post-order over the graph reachable from root: inputs precede consumers.
std::vector<TensorImpl*> topo_order(TensorImpl* root) {
    std::vector<TensorImpl*> order;
    std::unordered_set<TensorImpl*> visited;
    std::vector<std::pair<TensorImpl*, std::size_t>> stack;
    stack.emplace_back(root, 0);
    visited.insert(root);
    while (!stack.empty()) {
        auto& [impl, next] = stack.back();
        const auto* node = impl->grad_fn.get();
        if (node && next < node->inputs.size()) {
            TensorImpl* child = const_cast<TensorImpl*>(node->inputs[next].impl());
            ++next;
            if (child && child->requires_grad && visited.insert(child).second) {
                stack.emplace_back(child, 0);
            }
            continue;
        }
        order.push_back(impl);
        stack.pop_back();
    }
    return order;
}

using GradMap = std::unordered_map<const TensorImpl*, Tensor>;

void accumulate(GradMap& grads, const TensorImpl* key, const Tensor& g) {
    auto it = grads.find(key);
    if (it == grads.end()) {
        grads.emplace(key, g);
    } else {
        it->second = add(it->second, g);
    }
}

// Runs reverse-mode accumulation. `needed` marks tensors whose gradient must
// be produced; nodes that cannot reach a needed tensor are skipped.
GradMap run_backward(const Tensor& root, const std::unordered_set<const TensorImpl*>& targets,
                     bool create_graph) {
    if (!root.defined()) throw std::invalid_argument("backward on undefined tensor");
    if (root.numel() != 1) {
        throw std::invalid_argument("backward requires a scalar root, got shape " +
                                    root.shape().str());
    }
    GradMap grads;
    if (!root.requires_grad()) return grads;

    TensorImpl* root_impl = const_cast<TensorImpl*>(root.impl());
    std::vector<TensorImpl*> order = topo_order(root_impl);

    std::unordered_set<const TensorImpl*> needed;
    for (TensorImpl* impl : order) {
        bool need = targets.contains(impl);
        if (!need && impl->grad_fn) {
            for (const Tensor& in : impl->grad_fn->inputs) {
                if (in.defined() && needed.contains(in.impl())) {
                    need = true;
                    break;
                }
            }
        }
        if (need) needed.insert(impl);
    }

    if (create_graph) {
        for (TensorImpl* impl : order) {
            if (impl->grad_fn && needed.contains(impl) &&
                !impl->grad_fn->twice_differentiable()) {
                throw std::logic_error(std::string("operation '") + impl->grad_fn->name() +
                                       "' does not support higher-order gradients");
            }
        }
    }

    // Backward ops are recorded only when building a differentiable gradient graph.
    GradModeScope mode(create_graph);

    grads.emplace(root_impl, Tensor::full(root.shape(), 1.0));
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        TensorImpl* impl = *it;
        if (!impl->grad_fn || !needed.contains(impl)) continue;
        auto git = grads.find(impl);
        if (git == grads.end()) continue;
        Tensor g = git->second;
        Node& node = *impl->grad_fn;
        std::vector<Tensor> in_grads = node.backward(g);
        for (std::size_t i = 0; i < node.inputs.size() && i < in_grads.size(); ++i) {
            const Tensor& in = node.inputs[i];
            if (!in.defined() || !in_grads[i].defined() || !needed.contains(in.impl())) continue;
            if (in_grads[i].shape() != in.shape()) {
                throw ShapeError(std::string("internal gradient shape in '") + node.name() + "'",
                                 in_grads[i].shape(), in.shape());
            }
            accumulate(grads, in.impl(), in_grads[i]);
        }
        // Intermediate gradients are no longer needed once propagated.
        if (!targets.contains(impl)) grads.erase(impl);
    }
    return grads;
}

}  // namespace

void backward(const Tensor& root) {
    if (!root.defined()) throw std::invalid_argument("backward on undefined tensor");
    std::unordered_set<const TensorImpl*> leaves;
    if (root.requires_grad()) {
        for (TensorImpl* impl : topo_order(const_cast<TensorImpl*>(root.impl()))) {
            if (!impl->grad_fn && impl->requires_grad) leaves.insert(impl);
        }
    }
    GradMap grads = run_backward(root, leaves, false);
    for (const TensorImpl* key : leaves) {
        auto it = grads.find(key);
        if (it == grads.end()) continue;
        auto* impl = const_cast<TensorImpl*>(key);
        if (!impl->grad) {
            auto g = std::make_shared<TensorImpl>();
            g->shape = impl->shape;
            g->data.assign(it->second.data().begin(), it->second.data().end());
            impl->grad = std::move(g);
        } else {
            auto src = it->second.data();
            for (std::size_t i = 0; i < src.size(); ++i) impl->grad->data[i] += src[i];
            round_to_precision(impl->grad->data);
        }
    }
}

std::vector<Tensor> grad(const Tensor& root, const std::vector<Tensor>& wrt, bool create_graph) {
    std::unordered_set<const TensorImpl*> targets;
    for (const Tensor& t : wrt) {
        if (!t.defined()) throw std::invalid_argument("grad with respect to undefined tensor");
        targets.insert(t.impl());
    }
    GradMap grads = run_backward(root, targets, create_graph);
    std::vector<Tensor> out;
    out.reserve(wrt.size());
    for (const Tensor& t : wrt) {
        auto it = grads.find(t.impl());
        if (it == grads.end()) {
            out.push_back(Tensor::zeros(t.shape()));
        } else {
            out.push_back(create_graph ? it->second : it->second.detach());
        }
    }
    return out;
}

}  // namespace gmcnn
