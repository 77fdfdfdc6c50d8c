#include "slt/tensor.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_set>

namespace slt {

int64_t shape_numel(const Shape& s) {
    int64_t n = 1;
    for (int64_t d : s) n *= d;
    return n;
}

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) os << "x";
        os << s[i];
    }
    os << "]";
    return os.str();
}

void TensorNode::accum_grad(const ArrayXf& g) {
    if (grad.size() == 0) {
        grad = g;
    } else {
        grad += g;
    }
}

namespace {
thread_local bool g_grad_enabled = true;

std::shared_ptr<TensorNode> new_node(Shape s, ArrayXf v) {
    auto n = std::make_shared<TensorNode>();
    if (shape_numel(s) != v.size())
        throw DimensionError("tensor data size " + std::to_string(v.size()) +
                             " does not match shape " + shape_str(s));
    n->shape = std::move(s);
    n->value = std::move(v);
    return n;
}
}  // namespace

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

Tensor Tensor::zeros(const Shape& s) { return wrap(new_node(s, ArrayXf::Zero(shape_numel(s)))); }
Tensor Tensor::ones(const Shape& s) { return wrap(new_node(s, ArrayXf::Ones(shape_numel(s)))); }
Tensor Tensor::full(const Shape& s, float v) {
    return wrap(new_node(s, ArrayXf::Constant(shape_numel(s), v)));
}
Tensor Tensor::scalar(float v) { return full({1}, v); }

Tensor Tensor::from_data(const Shape& s, std::vector<float> data) {
    ArrayXf a(static_cast<int64_t>(data.size()));
    std::copy(data.begin(), data.end(), a.data());
    return wrap(new_node(s, std::move(a)));
}

Tensor Tensor::from_array(const Shape& s, ArrayXf data) {
    return wrap(new_node(s, std::move(data)));
}

float Tensor::item() const {
    if (numel() != 1) throw ContractError("item() on tensor of " + std::to_string(numel()) + " elements");
    return n_->value[0];
}

float Tensor::at(const std::vector<int64_t>& idx) const {
    const Shape& s = n_->shape;
    if (idx.size() != s.size()) throw IndexError("at(): rank mismatch");
    int64_t flat = 0;
    for (size_t i = 0; i < idx.size(); ++i) {
        if (idx[i] < 0 || idx[i] >= s[i]) throw IndexError("at(): index out of range");
        flat = flat * s[i] + idx[i];
    }
    return n_->value[flat];
}

Tensor Tensor::grad() const {
    if (n_->grad.size() == 0) return Tensor::zeros(n_->shape);
    return Tensor::from_array(n_->shape, n_->grad);
}

void Tensor::zero_grad() {
    n_->grad = ArrayXf::Zero(n_->value.size());
}

Tensor Tensor::detach() const {
    return Tensor::from_array(n_->shape, n_->value);
}

void ensure_finite(const ArrayXf& a, const char* op) {
    if (!a.allFinite()) throw NumericError(std::string("non-finite values produced by ") + op);
}

Tensor make_op_result(Shape shape, ArrayXf value, const std::vector<Tensor>& inputs,
                      std::function<void(TensorNode&)> backward_fn, const char* op) {
    ensure_finite(value, op);
    auto n = new_node(std::move(shape), std::move(value));
    n->op = op;
    bool track = grad_enabled();
    if (track) {
        bool any = false;
        for (const Tensor& t : inputs)
            if (t.node()->wants_grad()) {
                any = true;
                break;
            }
        track = any;
    }
    if (track) {
        n->parents.reserve(inputs.size());
        for (const Tensor& t : inputs) n->parents.push_back(t.node());
        n->backward_fn = std::move(backward_fn);
    }
    return Tensor::wrap(std::move(n));
}

void backward(const Tensor& loss) {
    if (!loss.defined()) throw ContractError("backward: undefined tensor");
    if (loss.numel() != 1) throw ContractError("backward: loss must be scalar, got " + shape_str(loss.shape()));

    // Iterative post-order DFS for a reverse topological order.
    std::vector<TensorNode*> order;
    std::unordered_set<TensorNode*> visited;
    struct Frame {
        TensorNode* node;
        size_t next_parent;
    };
    std::vector<Frame> stack;
    stack.push_back({loss.node().get(), 0});
    visited.insert(loss.node().get());
    while (!stack.empty()) {
        Frame& f = stack.back();
        if (f.next_parent < f.node->parents.size()) {
            TensorNode* p = f.node->parents[f.next_parent++].get();
            if (visited.insert(p).second) stack.push_back({p, 0});
        } else {
            order.push_back(f.node);
            stack.pop_back();
        }
    }

    // Interior grads are transient per sweep; leaf grads persist/accumulate.
    for (TensorNode* n : order) {
        if (!n->is_leaf()) n->grad = ArrayXf::Zero(n->value.size());
    }
    TensorNode* root = loss.node().get();
    if (root->is_leaf()) {
        if (root->requires_grad) root->accum_grad(ArrayXf::Ones(1));
        return;
    }
    root->grad = ArrayXf::Ones(1);

    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        TensorNode* n = *it;
        if (n->backward_fn) n->backward_fn(*n);
    }
}

Tensor custom_grad(const Shape& out_shape, CustomForwardFn forward_fn,
                   CustomBackwardFn backward_fn, std::vector<Tensor> inputs) {
    ArrayXf out = forward_fn(inputs);
    if (out.size() != shape_numel(out_shape))
        throw DimensionError("custom_grad: forward produced " + std::to_string(out.size()) +
                             " values for shape " + shape_str(out_shape));
    auto bw = [inputs, backward_fn](TensorNode& self) {
        std::vector<ArrayXf> grads = backward_fn(self.grad, inputs, self.value);
        if (grads.size() != inputs.size())
            throw GradientError("custom_grad: backward returned " + std::to_string(grads.size()) +
                                " gradients for " + std::to_string(inputs.size()) + " inputs");
        for (size_t i = 0; i < inputs.size(); ++i) {
            auto& p = *inputs[i].node();
            if (!p.wants_grad()) continue;
            if (grads[i].size() != p.value.size())
                throw GradientError("custom_grad: gradient " + std::to_string(i) + " has " +
                                    std::to_string(grads[i].size()) + " values, input has " +
                                    std::to_string(p.value.size()));
            p.accum_grad(grads[i]);
        }
    };
    return make_op_result(out_shape, std::move(out), inputs, std::move(bw), "custom_grad");
}

}  // namespace slt
