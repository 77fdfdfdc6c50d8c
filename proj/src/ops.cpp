#include "slt/ops.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>

namespace slt {

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using MapConstMat = Eigen::Map<const RowMat>;

namespace {

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape())
        throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                             " vs " + shape_str(b.shape()));
}

void add_into(TensorNode& p, const ArrayXf& g) {
    if (!p.wants_grad()) return;
    p.accum_grad(g);
}

ArrayXf& grad_buffer(TensorNode& p) {
    if (p.grad.size() == 0) p.grad = ArrayXf::Zero(p.value.size());
    return p.grad;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "add");
    ArrayXf v = a.array() + b.array();
    auto an = a.node(), bn = b.node();
    return make_op_result(a.shape(), std::move(v), {a, b},
                          [an, bn](TensorNode& self) {
                              add_into(*an, self.grad);
                              add_into(*bn, self.grad);
                          },
                          "add");
}

Tensor sub(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "sub");
    ArrayXf v = a.array() - b.array();
    auto an = a.node(), bn = b.node();
    return make_op_result(a.shape(), std::move(v), {a, b},
                          [an, bn](TensorNode& self) {
                              add_into(*an, self.grad);
                              if (bn->wants_grad()) bn->accum_grad(-self.grad);
                          },
                          "sub");
}

Tensor mul(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "mul");
    ArrayXf v = a.array() * b.array();
    auto an = a.node(), bn = b.node();
    return make_op_result(a.shape(), std::move(v), {a, b},
                          [an, bn](TensorNode& self) {
                              if (an->wants_grad()) an->accum_grad(self.grad * bn->value);
                              if (bn->wants_grad()) bn->accum_grad(self.grad * an->value);
                          },
                          "mul");
}

Tensor neg(const Tensor& a) {
    ArrayXf v = -a.array();
    auto an = a.node();
    return make_op_result(a.shape(), std::move(v), {a},
                          [an](TensorNode& self) {
                              if (an->wants_grad()) an->accum_grad(-self.grad);
                          },
                          "neg");
}

Tensor add_scalar(const Tensor& a, float c) {
    ArrayXf v = a.array() + c;
    auto an = a.node();
    return make_op_result(a.shape(), std::move(v), {a},
                          [an](TensorNode& self) { add_into(*an, self.grad); }, "add_scalar");
}

Tensor mul_scalar(const Tensor& a, float c) {
    ArrayXf v = a.array() * c;
    auto an = a.node();
    return make_op_result(a.shape(), std::move(v), {a},
                          [an, c](TensorNode& self) {
                              if (an->wants_grad()) an->accum_grad(self.grad * c);
                          },
                          "mul_scalar");
}

Tensor add_bias(const Tensor& x, const Tensor& b) {
    if (x.rank() < 1 || b.rank() != 1 || x.dim(x.rank() - 1) != b.dim(0))
        throw DimensionError("add_bias: x " + shape_str(x.shape()) + " vs b " + shape_str(b.shape()));
    const int64_t n = b.dim(0);
    const int64_t rows = x.numel() / n;
    ArrayXf v(x.numel());
    MapMat vm(v.data(), rows, n);
    vm = MapConstMat(x.array().data(), rows, n);
    vm.rowwise() += Eigen::Map<const Eigen::RowVectorXf>(b.array().data(), n);
    auto xn = x.node(), bn = b.node();
    return make_op_result(x.shape(), std::move(v), {x, b},
                          [xn, bn, rows, n](TensorNode& self) {
                              add_into(*xn, self.grad);
                              if (bn->wants_grad()) {
                                  MapConstMat g(self.grad.data(), rows, n);
                                  ArrayXf db(n);
                                  Eigen::Map<Eigen::RowVectorXf>(db.data(), n) = g.colwise().sum();
                                  bn->accum_grad(db);
                              }
                          },
                          "add_bias");
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2)
        throw DimensionError("matmul: expects rank-2 operands");
    const int64_t m = a.dim(0), k = a.dim(1), k2 = b.dim(0), n = b.dim(1);
    if (k != k2)
        throw DimensionError("matmul: inner dims disagree " + shape_str(a.shape()) + " x " +
                             shape_str(b.shape()));
    ArrayXf v(m * n);
    MapMat(v.data(), m, n).noalias() =
        MapConstMat(a.array().data(), m, k) * MapConstMat(b.array().data(), k, n);
    auto an = a.node(), bn = b.node();
    return make_op_result({m, n}, std::move(v), {a, b},
                          [an, bn, m, k, n](TensorNode& self) {
                              MapConstMat g(self.grad.data(), m, n);
                              if (an->wants_grad()) {
                                  ArrayXf da(m * k);
                                  MapMat(da.data(), m, k).noalias() =
                                      g * MapConstMat(bn->value.data(), k, n).transpose();
                                  an->accum_grad(da);
                              }
                              if (bn->wants_grad()) {
                                  ArrayXf db(k * n);
                                  MapMat(db.data(), k, n).noalias() =
                                      MapConstMat(an->value.data(), m, k).transpose() * g;
                                  bn->accum_grad(db);
                              }
                          },
                          "matmul");
}

Tensor linear(const Tensor& x, const Tensor& w) {
    if (x.rank() < 1 || w.rank() != 2)
        throw DimensionError("linear: w must be rank-2 [out, in]");
    const int64_t in = w.dim(1), out = w.dim(0);
    if (x.dim(x.rank() - 1) != in)
        throw DimensionError("linear: feature dim " + std::to_string(x.dim(x.rank() - 1)) +
                             " vs weight in-dim " + std::to_string(in));
    const int64_t rows = x.numel() / in;
    Shape os(x.shape());
    os.back() = out;
    ArrayXf v(rows * out);
    MapMat(v.data(), rows, out).noalias() =
        MapConstMat(x.array().data(), rows, in) * MapConstMat(w.array().data(), out, in).transpose();
    auto xn = x.node(), wn = w.node();
    return make_op_result(std::move(os), std::move(v), {x, w},
                          [xn, wn, rows, in, out](TensorNode& self) {
                              MapConstMat g(self.grad.data(), rows, out);
                              if (xn->wants_grad()) {
                                  ArrayXf dx(rows * in);
                                  MapMat(dx.data(), rows, in).noalias() =
                                      g * MapConstMat(wn->value.data(), out, in);
                                  xn->accum_grad(dx);
                              }
                              if (wn->wants_grad()) {
                                  ArrayXf dw(out * in);
                                  MapMat(dw.data(), out, in).noalias() =
                                      g.transpose() * MapConstMat(xn->value.data(), rows, in);
                                  wn->accum_grad(dw);
                              }
                          },
                          "linear");
}

Tensor batched_matmul(const Tensor& a, const Tensor& b, bool transpose_a, bool transpose_b) {
    if (a.rank() < 2 || b.rank() != a.rank())
        throw DimensionError("batched_matmul: rank mismatch");
    const int r = a.rank();
    for (int i = 0; i < r - 2; ++i)
        if (a.dim(i) != b.dim(i)) throw DimensionError("batched_matmul: batch dims disagree");
    const int64_t ap = a.dim(r - 2), aq = a.dim(r - 1);
    const int64_t bp = b.dim(r - 2), bq = b.dim(r - 1);
    const int64_t m = transpose_a ? aq : ap;
    const int64_t k = transpose_a ? ap : aq;
    const int64_t k2 = transpose_b ? bq : bp;
    const int64_t n = transpose_b ? bp : bq;
    if (k != k2) throw DimensionError("batched_matmul: inner dims disagree");
    int64_t nb = 1;
    for (int i = 0; i < r - 2; ++i) nb *= a.dim(i);
    Shape os(a.shape());
    os[static_cast<size_t>(r - 2)] = m;
    os[static_cast<size_t>(r - 1)] = n;
    ArrayXf v(nb * m * n);
    for (int64_t i = 0; i < nb; ++i) {
        MapConstMat A(a.array().data() + i * ap * aq, ap, aq);
        MapConstMat B(b.array().data() + i * bp * bq, bp, bq);
        MapMat C(v.data() + i * m * n, m, n);
        if (!transpose_a && !transpose_b)
            C.noalias() = A * B;
        else if (transpose_a && !transpose_b)
            C.noalias() = A.transpose() * B;
        else if (!transpose_a && transpose_b)
            C.noalias() = A * B.transpose();
        else
            C.noalias() = A.transpose() * B.transpose();
    }
    auto an = a.node(), bn = b.node();
    auto bw = [an, bn, nb, ap, aq, bp, bq, m, n, transpose_a, transpose_b](TensorNode& self) {
        ArrayXf da, db;
        if (an->wants_grad()) da = ArrayXf::Zero(an->value.size());
        if (bn->wants_grad()) db = ArrayXf::Zero(bn->value.size());
        for (int64_t i = 0; i < nb; ++i) {
            MapConstMat G(self.grad.data() + i * m * n, m, n);
            MapConstMat A(an->value.data() + i * ap * aq, ap, aq);
            MapConstMat B(bn->value.data() + i * bp * bq, bp, bq);
            if (an->wants_grad()) {
                MapMat dA(da.data() + i * ap * aq, ap, aq);
                // dA' = G * B'^T with A' the effective (possibly transposed) factor
                if (!transpose_a) {
                    if (!transpose_b)
                        dA.noalias() = G * B.transpose();
                    else
                        dA.noalias() = G * B;
                } else {
                    if (!transpose_b)
                        dA.noalias() = B * G.transpose();
                    else
                        dA.noalias() = B.transpose() * G.transpose();
                }
            }
            if (bn->wants_grad()) {
                MapMat dB(db.data() + i * bp * bq, bp, bq);
                if (!transpose_b) {
                    if (!transpose_a)
                        dB.noalias() = A.transpose() * G;
                    else
                        dB.noalias() = A * G;
                } else {
                    if (!transpose_a)
                        dB.noalias() = G.transpose() * A;
                    else
                        dB.noalias() = G.transpose() * A.transpose();
                }
            }
        }
        if (an->wants_grad()) an->accum_grad(da);
        if (bn->wants_grad()) bn->accum_grad(db);
    };
    return make_op_result(std::move(os), std::move(v), {a, b}, std::move(bw), "batched_matmul");
}

namespace {

// im2col for one sample: patches(K, P) with K = C*kh*kw, P = Ho*Wo.
void fill_patches(const float* x, int64_t C, int64_t H, int64_t W, int64_t kh, int64_t kw,
                  int stride, int pad, int64_t Ho, int64_t Wo, Eigen::MatrixXf& patches) {
    for (int64_t c = 0; c < C; ++c)
        for (int64_t i = 0; i < kh; ++i)
            for (int64_t j = 0; j < kw; ++j) {
                const int64_t q = (c * kh + i) * kw + j;
                for (int64_t oy = 0; oy < Ho; ++oy) {
                    const int64_t y = oy * stride - pad + i;
                    for (int64_t ox = 0; ox < Wo; ++ox) {
                        const int64_t xx = ox * stride - pad + j;
                        const bool in = y >= 0 && y < H && xx >= 0 && xx < W;
                        patches(q, oy * Wo + ox) = in ? x[(c * H + y) * W + xx] : 0.0f;
                    }
                }
            }
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& k, int stride, int padding) {
    if (x.rank() != 4 || k.rank() != 4) throw DimensionError("conv2d: expects x[B,C,H,W], k[O,C,kh,kw]");
    if (stride < 1) throw DimensionError("conv2d: stride must be >= 1");
    if (padding < 0) throw DimensionError("conv2d: padding must be >= 0");
    const int64_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int64_t O = k.dim(0), kC = k.dim(1), kh = k.dim(2), kw = k.dim(3);
    if (C != kC) throw DimensionError("conv2d: channel mismatch");
    const int64_t hnum = H + 2 * padding - kh;
    const int64_t wnum = W + 2 * padding - kw;
    if (hnum < 0 || wnum < 0 || hnum % stride != 0 || wnum % stride != 0)
        throw DimensionError("conv2d: non-integral output size for input " + shape_str(x.shape()) +
                             " kernel " + shape_str(k.shape()));
    const int64_t Ho = hnum / stride + 1, Wo = wnum / stride + 1;
    const int64_t K = C * kh * kw, P = Ho * Wo;

    auto patches = std::make_shared<std::vector<Eigen::MatrixXf>>(static_cast<size_t>(B));
    ArrayXf v(B * O * P);
    MapConstMat Kmat(k.array().data(), O, K);
    for (int64_t b = 0; b < B; ++b) {
        auto& pb = (*patches)[static_cast<size_t>(b)];
        pb.resize(K, P);
        fill_patches(x.array().data() + b * C * H * W, C, H, W, kh, kw, stride, padding, Ho, Wo, pb);
        MapMat(v.data() + b * O * P, O, P).noalias() = Kmat * pb;
    }

    auto xn = x.node(), kn = k.node();
    auto bw = [xn, kn, patches, B, C, H, W, O, kh, kw, K, P, Ho, Wo, stride,
               padding](TensorNode& self) {
        MapConstMat Km(kn->value.data(), O, K);
        if (kn->wants_grad()) {
            RowMat dK = RowMat::Zero(O, K);
            for (int64_t b = 0; b < B; ++b) {
                MapConstMat g(self.grad.data() + b * O * P, O, P);
                dK.noalias() += g * (*patches)[static_cast<size_t>(b)].transpose();
            }
            kn->accum_grad(Eigen::Map<const ArrayXf>(dK.data(), O * K));
        }
        if (xn->wants_grad()) {
            ArrayXf dx = ArrayXf::Zero(xn->value.size());
            Eigen::MatrixXf dpatch(K, P);
            for (int64_t b = 0; b < B; ++b) {
                MapConstMat g(self.grad.data() + b * O * P, O, P);
                dpatch.noalias() = Km.transpose() * g;
                float* dxb = dx.data() + b * C * H * W;
                for (int64_t c = 0; c < C; ++c)
                    for (int64_t i = 0; i < kh; ++i)
                        for (int64_t j = 0; j < kw; ++j) {
                            const int64_t q = (c * kh + i) * kw + j;
                            for (int64_t oy = 0; oy < Ho; ++oy) {
                                const int64_t y = oy * stride - padding + i;
                                if (y < 0 || y >= H) continue;
                                for (int64_t ox = 0; ox < Wo; ++ox) {
                                    const int64_t xx = ox * stride - padding + j;
                                    if (xx < 0 || xx >= W) continue;
                                    dxb[(c * H + y) * W + xx] += dpatch(q, oy * Wo + ox);
                                }
                            }
                        }
            }
            xn->accum_grad(dx);
        }
    };
    return make_op_result({B, O, Ho, Wo}, std::move(v), {x, k}, std::move(bw), "conv2d");
}

Tensor avg_pool2(const Tensor& x) {
    if (x.rank() != 4) throw DimensionError("avg_pool2: expects [B,C,H,W]");
    const int64_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    if (H % 2 != 0 || W % 2 != 0) throw DimensionError("avg_pool2: H and W must be even");
    const int64_t Ho = H / 2, Wo = W / 2;
    ArrayXf v(B * C * Ho * Wo);
    const float* xd = x.array().data();
    for (int64_t bc = 0; bc < B * C; ++bc) {
        const float* in = xd + bc * H * W;
        float* out = v.data() + bc * Ho * Wo;
        for (int64_t oy = 0; oy < Ho; ++oy)
            for (int64_t ox = 0; ox < Wo; ++ox) {
                const int64_t y = 2 * oy, xx = 2 * ox;
                out[oy * Wo + ox] = 0.25f * (in[y * W + xx] + in[y * W + xx + 1] +
                                             in[(y + 1) * W + xx] + in[(y + 1) * W + xx + 1]);
            }
    }
    auto xn = x.node();
    return make_op_result({B, C, Ho, Wo}, std::move(v), {x},
                          [xn, B, C, H, W, Ho, Wo](TensorNode& self) {
                              if (!xn->wants_grad()) return;
                              ArrayXf dx = ArrayXf::Zero(xn->value.size());
                              for (int64_t bc = 0; bc < B * C; ++bc) {
                                  const float* g = self.grad.data() + bc * Ho * Wo;
                                  float* out = dx.data() + bc * H * W;
                                  for (int64_t oy = 0; oy < Ho; ++oy)
                                      for (int64_t ox = 0; ox < Wo; ++ox) {
                                          const float q = 0.25f * g[oy * Wo + ox];
                                          const int64_t y = 2 * oy, xx = 2 * ox;
                                          out[y * W + xx] += q;
                                          out[y * W + xx + 1] += q;
                                          out[(y + 1) * W + xx] += q;
                                          out[(y + 1) * W + xx + 1] += q;
                                      }
                              }
                              xn->accum_grad(dx);
                          },
                          "avg_pool2");
}

Tensor max_pool2(const Tensor& x) {
    if (x.rank() != 4) throw DimensionError("max_pool2: expects [B,C,H,W]");
    const int64_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    if (H % 2 != 0 || W % 2 != 0) throw DimensionError("max_pool2: H and W must be even");
    const int64_t Ho = H / 2, Wo = W / 2;
    ArrayXf v(B * C * Ho * Wo);
    auto argmax = std::make_shared<std::vector<int64_t>>(static_cast<size_t>(B * C * Ho * Wo));
    const float* xd = x.array().data();
    for (int64_t bc = 0; bc < B * C; ++bc) {
        const float* in = xd + bc * H * W;
        for (int64_t oy = 0; oy < Ho; ++oy)
            for (int64_t ox = 0; ox < Wo; ++ox) {
                const int64_t y = 2 * oy, xx = 2 * ox;
                // scan order fixes the tie-break deterministically
                const int64_t cand[4] = {y * W + xx, y * W + xx + 1, (y + 1) * W + xx,
                                         (y + 1) * W + xx + 1};
                int64_t best = cand[0];
                for (int t = 1; t < 4; ++t)
                    if (in[cand[t]] > in[best]) best = cand[t];
                const int64_t oi = bc * Ho * Wo + oy * Wo + ox;
                v[oi] = in[best];
                (*argmax)[static_cast<size_t>(oi)] = bc * H * W + best;
            }
    }
    auto xn = x.node();
    return make_op_result({B, C, Ho, Wo}, std::move(v), {x},
                          [xn, argmax](TensorNode& self) {
                              if (!xn->wants_grad()) return;
                              ArrayXf& dx = grad_buffer(*xn);
                              for (int64_t i = 0; i < self.grad.size(); ++i)
                                  dx[(*argmax)[static_cast<size_t>(i)]] += self.grad[i];
                          },
                          "max_pool2");
}

Tensor relu(const Tensor& x) {
    ArrayXf v = x.array().max(0.0f);
    auto xn = x.node();
    return make_op_result(x.shape(), std::move(v), {x},
                          [xn](TensorNode& self) {
                              if (!xn->wants_grad()) return;
                              xn->accum_grad(self.grad * (xn->value > 0.0f).cast<float>());
                          },
                          "relu");
}

Tensor reshape(const Tensor& x, const Shape& s) {
    if (shape_numel(s) != x.numel())
        throw DimensionError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(s));
    ArrayXf v = x.array();
    auto xn = x.node();
    return make_op_result(s, std::move(v), {x},
                          [xn](TensorNode& self) { add_into(*xn, self.grad); }, "reshape");
}

namespace {

// Iterates the output of a permutation in row-major order, yielding the
// matching flat index in the source tensor.
template <typename Fn>
void for_each_permuted(const Shape& out_s, const std::vector<int64_t>& src_stride_per_out_axis,
                       Fn&& fn) {
    const int r = static_cast<int>(out_s.size());
    std::vector<int64_t> idx(static_cast<size_t>(r), 0);
    const int64_t total = shape_numel(out_s);
    int64_t src = 0;
    for (int64_t out = 0; out < total; ++out) {
        fn(out, src);
        for (int a = r - 1; a >= 0; --a) {
            idx[a]++;
            src += src_stride_per_out_axis[a];
            if (idx[a] < out_s[a]) break;
            src -= src_stride_per_out_axis[a] * out_s[a];
            idx[a] = 0;
        }
    }
}

}  // namespace

Tensor permute(const Tensor& x, const std::vector<int>& perm) {
    const int r = x.rank();
    if (static_cast<int>(perm.size()) != r) throw DimensionError("permute: rank mismatch");
    std::vector<bool> seen(static_cast<size_t>(r), false);
    for (int p : perm) {
        if (p < 0 || p >= r || seen[static_cast<size_t>(p)])
            throw DimensionError("permute: invalid axis list");
        seen[static_cast<size_t>(p)] = true;
    }
    const Shape& in_s = x.shape();
    std::vector<int64_t> in_stride(static_cast<size_t>(r), 1);
    for (int i = r - 2; i >= 0; --i) in_stride[i] = in_stride[i + 1] * in_s[i + 1];
    Shape out_s(static_cast<size_t>(r));
    std::vector<int64_t> stride_for_out(static_cast<size_t>(r));
    for (int i = 0; i < r; ++i) {
        out_s[i] = in_s[static_cast<size_t>(perm[i])];
        stride_for_out[i] = in_stride[static_cast<size_t>(perm[i])];
    }
    ArrayXf v(x.numel());
    const float* xd = x.array().data();
    for_each_permuted(out_s, stride_for_out, [&](int64_t out, int64_t src) { v[out] = xd[src]; });
    auto xn = x.node();
    return make_op_result(out_s, std::move(v), {x},
                          [xn, out_s, stride_for_out](TensorNode& self) {
                              if (!xn->wants_grad()) return;
                              ArrayXf& dx = grad_buffer(*xn);
                              const float* g = self.grad.data();
                              for_each_permuted(out_s, stride_for_out,
                                                [&](int64_t out, int64_t src) { dx[src] += g[out]; });
                          },
                          "permute");
}

Tensor slice0(const Tensor& x, int64_t i) {
    if (x.rank() < 1) throw DimensionError("slice0: rank-0 input");
    const int64_t T = x.dim(0);
    if (i < 0 || i >= T) throw IndexError("slice0: index " + std::to_string(i) + " out of range");
    const int64_t chunk = x.numel() / T;
    Shape os(x.shape().begin() + 1, x.shape().end());
    if (os.empty()) os = {1};
    ArrayXf v = x.array().segment(i * chunk, chunk);
    auto xn = x.node();
    return make_op_result(std::move(os), std::move(v), {x},
                          [xn, i, chunk](TensorNode& self) {
                              if (!xn->wants_grad()) return;
                              grad_buffer(*xn).segment(i * chunk, chunk) += self.grad;
                          },
                          "slice0");
}

Tensor stack0(const std::vector<Tensor>& xs) {
    if (xs.empty()) throw ContractError("stack0: empty list");
    const Shape& es = xs[0].shape();
    for (const Tensor& t : xs) check_same_shape(xs[0], t, "stack0");
    const int64_t chunk = xs[0].numel();
    const int64_t T = static_cast<int64_t>(xs.size());
    Shape os;
    os.push_back(T);
    os.insert(os.end(), es.begin(), es.end());
    ArrayXf v(T * chunk);
    for (int64_t t = 0; t < T; ++t) v.segment(t * chunk, chunk) = xs[t].array();
    std::vector<std::shared_ptr<TensorNode>> nodes;
    nodes.reserve(xs.size());
    for (const Tensor& t : xs) nodes.push_back(t.node());
    return make_op_result(std::move(os), std::move(v), xs,
                          [nodes, chunk](TensorNode& self) {
                              for (size_t t = 0; t < nodes.size(); ++t) {
                                  if (!nodes[t]->wants_grad()) continue;
                                  nodes[t]->accum_grad(
                                      self.grad.segment(static_cast<int64_t>(t) * chunk, chunk));
                              }
                          },
                          "stack0");
}

Tensor gather_axis(const Tensor& x, int axis, const std::vector<int64_t>& idx) {
    const int r = x.rank();
    if (axis < 0 || axis >= r) throw DimensionError("gather_axis: bad axis");
    const int64_t L = x.dim(axis);
    for (int64_t i : idx)
        if (i < 0 || i >= L) throw IndexError("gather_axis: index " + std::to_string(i) + " out of range");
    int64_t outer = 1, inner = 1;
    for (int i = 0; i < axis; ++i) outer *= x.dim(i);
    for (int i = axis + 1; i < r; ++i) inner *= x.dim(i);
    const int64_t M = static_cast<int64_t>(idx.size());
    Shape os(x.shape());
    os[static_cast<size_t>(axis)] = M;
    ArrayXf v(outer * M * inner);
    const float* xd = x.array().data();
    for (int64_t o = 0; o < outer; ++o)
        for (int64_t j = 0; j < M; ++j)
            std::copy_n(xd + (o * L + idx[static_cast<size_t>(j)]) * inner, inner,
                        v.data() + (o * M + j) * inner);
    auto xn = x.node();
    auto ids = idx;
    return make_op_result(std::move(os), std::move(v), {x},
                          [xn, ids, outer, inner, L, M](TensorNode& self) {
                              if (!xn->wants_grad()) return;
                              ArrayXf& dx = grad_buffer(*xn);
                              const float* g = self.grad.data();
                              for (int64_t o = 0; o < outer; ++o)
                                  for (int64_t j = 0; j < M; ++j) {
                                      float* dst = dx.data() + (o * L + ids[static_cast<size_t>(j)]) * inner;
                                      const float* src = g + (o * M + j) * inner;
                                      for (int64_t i = 0; i < inner; ++i) dst[i] += src[i];
                                  }
                          },
                          "gather_axis");
}

Tensor mean_axis(const Tensor& x, int axis) {
    const int r = x.rank();
    if (axis < 0 || axis >= r) throw DimensionError("mean_axis: bad axis");
    const int64_t L = x.dim(axis);
    int64_t outer = 1, inner = 1;
    for (int i = 0; i < axis; ++i) outer *= x.dim(i);
    for (int i = axis + 1; i < r; ++i) inner *= x.dim(i);
    Shape os;
    for (int i = 0; i < r; ++i)
        if (i != axis) os.push_back(x.dim(i));
    if (os.empty()) os = {1};
    ArrayXf v = ArrayXf::Zero(outer * inner);
    const float* xd = x.array().data();
    for (int64_t o = 0; o < outer; ++o)
        for (int64_t l = 0; l < L; ++l) {
            const float* src = xd + (o * L + l) * inner;
            float* dst = v.data() + o * inner;
            for (int64_t i = 0; i < inner; ++i) dst[i] += src[i];
        }
    v /= static_cast<float>(L);
    auto xn = x.node();
    return make_op_result(std::move(os), std::move(v), {x},
                          [xn, outer, inner, L](TensorNode& self) {
                              if (!xn->wants_grad()) return;
                              ArrayXf& dx = grad_buffer(*xn);
                              const float* g = self.grad.data();
                              const float scale = 1.0f / static_cast<float>(L);
                              for (int64_t o = 0; o < outer; ++o)
                                  for (int64_t l = 0; l < L; ++l) {
                                      float* dst = dx.data() + (o * L + l) * inner;
                                      const float* src = g + o * inner;
                                      for (int64_t i = 0; i < inner; ++i) dst[i] += src[i] * scale;
                                  }
                          },
                          "mean_axis");
}

Tensor sum_all(const Tensor& x) {
    double acc = 0.0;
    const float* xd = x.array().data();
    for (int64_t i = 0; i < x.numel(); ++i) acc += xd[i];
    ArrayXf v(1);
    v[0] = static_cast<float>(acc);
    auto xn = x.node();
    return make_op_result({1}, std::move(v), {x},
                          [xn](TensorNode& self) {
                              if (!xn->wants_grad()) return;
                              xn->accum_grad(ArrayXf::Constant(xn->value.size(), self.grad[0]));
                          },
                          "sum_all");
}

Tensor cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
    if (logits.rank() != 2) throw DimensionError("cross_entropy: expects [B, C] logits");
    const int64_t B = logits.dim(0), C = logits.dim(1);
    if (static_cast<int64_t>(labels.size()) != B)
        throw DimensionError("cross_entropy: label count mismatch");
    for (int y : labels)
        if (y < 0 || y >= C) throw IndexError("cross_entropy: label out of range");
    const float* ld = logits.array().data();
    auto lse = std::make_shared<std::vector<float>>(static_cast<size_t>(B));
    double acc = 0.0;
    for (int64_t b = 0; b < B; ++b) {
        const float* row = ld + b * C;
        float mx = row[0];
        for (int64_t c = 1; c < C; ++c) mx = std::max(mx, row[c]);
        double s = 0.0;
        for (int64_t c = 0; c < C; ++c) s += std::exp(static_cast<double>(row[c] - mx));
        const float l = mx + static_cast<float>(std::log(s));
        (*lse)[static_cast<size_t>(b)] = l;
        acc += static_cast<double>(l - row[labels[static_cast<size_t>(b)]]);
    }
    ArrayXf v(1);
    v[0] = static_cast<float>(acc / static_cast<double>(B));
    auto ln = logits.node();
    auto ys = labels;
    return make_op_result({1}, std::move(v), {logits},
                          [ln, ys, lse, B, C](TensorNode& self) {
                              if (!ln->wants_grad()) return;
                              const float g = self.grad[0] / static_cast<float>(B);
                              ArrayXf dl(B * C);
                              const float* row = ln->value.data();
                              for (int64_t b = 0; b < B; ++b)
                                  for (int64_t c = 0; c < C; ++c) {
                                      float p = std::exp(row[b * C + c] - (*lse)[static_cast<size_t>(b)]);
                                      if (c == ys[static_cast<size_t>(b)]) p -= 1.0f;
                                      dl[b * C + c] = p * g;
                                  }
                              ln->accum_grad(dl);
                          },
                          "cross_entropy");
}

std::vector<int> argmax_rows(const Tensor& logits) {
    if (logits.rank() != 2) throw DimensionError("argmax_rows: expects [B, C]");
    const int64_t B = logits.dim(0), C = logits.dim(1);
    std::vector<int> out(static_cast<size_t>(B));
    const float* ld = logits.array().data();
    for (int64_t b = 0; b < B; ++b) {
        int best = 0;
        for (int64_t c = 1; c < C; ++c)
            if (ld[b * C + c] > ld[b * C + best]) best = static_cast<int>(c);
        out[static_cast<size_t>(b)] = best;
    }
    return out;
}

bool is_binary(const Tensor& x) {
    const float* d = x.array().data();
    for (int64_t i = 0; i < x.numel(); ++i)
        if (d[i] != 0.0f && d[i] != 1.0f) return false;
    return true;
}

}  // namespace slt
