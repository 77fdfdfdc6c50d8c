#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "slt/error.hpp"

namespace slt {

using Shape = std::vector<int64_t>;
using ArrayXf = Eigen::ArrayXf;

int64_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

class Tensor;

// One node of the gradient tape. Interior nodes carry a backward rule that
// reads this node's grad and accumulates into the parents' grads.
struct TensorNode {
    Shape shape;
    ArrayXf value;  // flat, row-major
    ArrayXf grad;   // empty until first accumulation
    bool requires_grad = false;  // leaf parameter flag
    std::vector<std::shared_ptr<TensorNode>> parents;
    std::function<void(TensorNode&)> backward_fn;
    const char* op = "leaf";

    bool is_leaf() const { return parents.empty(); }
    // True if a gradient flowing here is ever consumed.
    bool wants_grad() const { return requires_grad || !parents.empty(); }
    void accum_grad(const ArrayXf& g);
};

bool grad_enabled();

class NoGradGuard {
  public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

  private:
    bool prev_;
};

// Shared-handle view of a tape node. Copying a Tensor aliases the node;
// ops build fresh nodes. All data is f32 row-major.
class Tensor {
  public:
    Tensor() = default;

    static Tensor zeros(const Shape& s);
    static Tensor ones(const Shape& s);
    static Tensor full(const Shape& s, float v);
    static Tensor scalar(float v);
    static Tensor from_data(const Shape& s, std::vector<float> data);
    static Tensor from_array(const Shape& s, ArrayXf data);
    static Tensor wrap(std::shared_ptr<TensorNode> n) { return Tensor(std::move(n)); }

    bool defined() const { return n_ != nullptr; }
    const Shape& shape() const { return n_->shape; }
    int rank() const { return static_cast<int>(n_->shape.size()); }
    int64_t dim(int i) const { return n_->shape[static_cast<size_t>(i)]; }
    int64_t numel() const { return n_->value.size(); }

    float item() const;
    float at(const std::vector<int64_t>& idx) const;

    std::span<const float> data() const { return {n_->value.data(), static_cast<size_t>(n_->value.size())}; }
    std::span<float> mutable_data() { return {n_->value.data(), static_cast<size_t>(n_->value.size())}; }
    const ArrayXf& array() const { return n_->value; }
    ArrayXf& mutable_array() { return n_->value; }

    Tensor& set_requires_grad(bool r) {
        n_->requires_grad = r;
        return *this;
    }
    bool requires_grad() const { return n_->requires_grad; }

    bool has_grad() const { return n_->grad.size() > 0; }
    const ArrayXf& grad_array() const { return n_->grad; }
    Tensor grad() const;   // copy of the accumulated gradient (zeros if none)
    void zero_grad();      // zero-fill (allocating if absent)

    // Value copy detached from the tape.
    Tensor detach() const;

    std::shared_ptr<TensorNode> node() const { return n_; }

  private:
    explicit Tensor(std::shared_ptr<TensorNode> n) : n_(std::move(n)) {}
    std::shared_ptr<TensorNode> n_;
};

// Reverse-mode sweep from a scalar loss. Interior grads in the reachable
// subgraph are reset first; leaf grads accumulate across calls.
void backward(const Tensor& loss);

using CustomForwardFn = std::function<ArrayXf(const std::vector<Tensor>&)>;
using CustomBackwardFn = std::function<std::vector<ArrayXf>(
    const ArrayXf& upstream, const std::vector<Tensor>& inputs, const ArrayXf& output)>;

// Detached forward with a caller-supplied backward rule; the tape stores
// backward_fn and routes upstream grads through it to every input.
Tensor custom_grad(const Shape& out_shape, CustomForwardFn forward_fn,
                   CustomBackwardFn backward_fn, std::vector<Tensor> inputs);

// --- op-author helpers ----------------------------------------------------

void ensure_finite(const ArrayXf& a, const char* op);

// Builds the result node; attaches tape edges only when grads are enabled
// and some input wants them.
Tensor make_op_result(Shape shape, ArrayXf value, const std::vector<Tensor>& inputs,
                      std::function<void(TensorNode&)> backward_fn, const char* op);

}  // namespace slt
