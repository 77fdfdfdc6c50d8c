#pragma once

#include <vector>

#include "slt/tensor.hpp"

namespace slt {

// Elementwise; shapes must match exactly (no broadcasting).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& a);
Tensor add_scalar(const Tensor& a, float c);
Tensor mul_scalar(const Tensor& a, float c);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator*(const Tensor& a, float c) { return mul_scalar(a, c); }
inline Tensor operator*(float c, const Tensor& a) { return mul_scalar(a, c); }
inline Tensor operator+(const Tensor& a, float c) { return add_scalar(a, c); }
inline Tensor operator-(const Tensor& a) { return neg(a); }

// x[..., n] + b[n], broadcast over all leading dims.
Tensor add_bias(const Tensor& x, const Tensor& b);

// a[m, k] x b[k, n] -> [m, n].
Tensor matmul(const Tensor& a, const Tensor& b);

// x[..., in] x w[out, in]^T -> [..., out].
Tensor linear(const Tensor& x, const Tensor& w);

// Last two dims are matrices, identical leading batch dims.
Tensor batched_matmul(const Tensor& a, const Tensor& b, bool transpose_a = false,
                      bool transpose_b = false);

// Cross-correlation (no kernel flip): x[B,C,H,W], k[O,C,kh,kw].
Tensor conv2d(const Tensor& x, const Tensor& k, int stride, int padding);

// 2x2/stride-2 pooling over [B,C,H,W]; H and W must be even.
Tensor avg_pool2(const Tensor& x);
Tensor max_pool2(const Tensor& x);

Tensor relu(const Tensor& x);

// Same element count and order; value copy.
Tensor reshape(const Tensor& x, const Shape& s);

// Axis permutation (perm[i] = source axis of output axis i).
Tensor permute(const Tensor& x, const std::vector<int>& perm);

// Drops axis 0 at index i: [T, ...] -> [...].
Tensor slice0(const Tensor& x, int64_t i);

// Stacks equal-shape tensors along a new axis 0.
Tensor stack0(const std::vector<Tensor>& xs);

// Selects indices along an axis; backward scatter-adds.
Tensor gather_axis(const Tensor& x, int axis, const std::vector<int64_t>& idx);

Tensor mean_axis(const Tensor& x, int axis);
Tensor sum_all(const Tensor& x);

// Mean softmax cross-entropy over rows of logits[B, C].
Tensor cross_entropy(const Tensor& logits, const std::vector<int>& labels);

// Row-wise argmax with lowest-index tie-break.
std::vector<int> argmax_rows(const Tensor& logits);

bool is_binary(const Tensor& x);

}  // namespace slt
