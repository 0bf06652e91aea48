#pragma once

#include <cstddef>
#include <vector>

#include "crosstvr/tensor.hpp"

// Differentiable tensor ops. All shapes are checked explicitly; the only
// broadcasting is through the named helpers (add_bias, scale_rows,
// mul_scalar). Instantiated for float and double.
namespace crosstvr::ops {

template <typename Real> Tensor<Real> matmul(const Tensor<Real>& a, const Tensor<Real>& b);
// a · bᵀ without materializing the transpose.
template <typename Real> Tensor<Real> matmul_nt(const Tensor<Real>& a, const Tensor<Real>& b);
template <typename Real> Tensor<Real> transpose(const Tensor<Real>& a);

template <typename Real> Tensor<Real> add(const Tensor<Real>& a, const Tensor<Real>& b);
template <typename Real> Tensor<Real> sub(const Tensor<Real>& a, const Tensor<Real>& b);
template <typename Real> Tensor<Real> mul(const Tensor<Real>& a, const Tensor<Real>& b);
template <typename Real> Tensor<Real> scale(const Tensor<Real>& a, Real s);
// x * s where s holds exactly one element.
template <typename Real> Tensor<Real> mul_scalar(const Tensor<Real>& x, const Tensor<Real>& s);
template <typename Real> Tensor<Real> exp(const Tensor<Real>& x);

// x[n×d] + b[d] on every row.
template <typename Real> Tensor<Real> add_bias(const Tensor<Real>& x, const Tensor<Real>& b);
// Row i of x[n×d] times s[i].
template <typename Real> Tensor<Real> scale_rows(const Tensor<Real>& x, const Tensor<Real>& s);
template <typename Real>
Tensor<Real> linear(const Tensor<Real>& x, const Tensor<Real>& w, const Tensor<Real>& b);

// tanh approximation: 0.5·x·(1 + tanh(√(2/π)·(x + 0.044715·x³))).
template <typename Real> Tensor<Real> gelu(const Tensor<Real>& x);
template <typename Real> Tensor<Real> softmax_lastdim(const Tensor<Real>& x);
template <typename Real>
Tensor<Real> layernorm(const Tensor<Real>& x, const Tensor<Real>& gamma, const Tensor<Real>& beta,
                       Real eps);
template <typename Real> Tensor<Real> l2_normalize_rows(const Tensor<Real>& x);

template <typename Real> Tensor<Real> sum(const Tensor<Real>& x);
template <typename Real> Tensor<Real> mean(const Tensor<Real>& x);
// [n×d] -> [1×d]
template <typename Real> Tensor<Real> mean_rows(const Tensor<Real>& x);

template <typename Real> Tensor<Real> reshape(const Tensor<Real>& x, Shape shape);
// x[i] for a tensor of rank ≥ 2; drops the leading axis.
template <typename Real> Tensor<Real> index_first(const Tensor<Real>& x, std::size_t i);
template <typename Real> Tensor<Real> slice_rows(const Tensor<Real>& x, std::size_t start, std::size_t count);
template <typename Real> Tensor<Real> slice_cols(const Tensor<Real>& x, std::size_t start, std::size_t count);
template <typename Real> Tensor<Real> concat_rows(const std::vector<Tensor<Real>>& parts);
template <typename Real> Tensor<Real> concat_cols(const std::vector<Tensor<Real>>& parts);
template <typename Real>
Tensor<Real> gather_rows(const Tensor<Real>& x, const std::vector<std::size_t>& rows);

// −log softmax(logits)[target] for a logits vector with n ≥ 2 entries.
template <typename Real> Tensor<Real> cross_entropy(const Tensor<Real>& logits, std::size_t target);
// Mean over rows of the per-row cross entropy of logits[n×c].
template <typename Real>
Tensor<Real> cross_entropy_rows(const Tensor<Real>& logits, const std::vector<std::size_t>& targets);

// Optional capture of attention weights [Lq×Lk], one entry per call.
template <typename Real>
struct AttentionTrace {
  std::vector<Tensor<Real>> weights;
};

// softmax(q·kᵀ/√d)·v
template <typename Real>
Tensor<Real> scaled_dot_attention(const Tensor<Real>& q, const Tensor<Real>& k, const Tensor<Real>& v,
                                  AttentionTrace<Real>* trace = nullptr);

}  // namespace crosstvr::ops
