#include "crosstvr/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "crosstvr/errors.hpp"

namespace crosstvr::ops {
namespace {

template <typename Real>
using Node = TensorNode<Real>;
template <typename Real>
using BackwardFn = std::function<void(Node<Real>&)>;

template <typename Real>
Tensor<Real> make_result(Shape shape, std::vector<Real> data, std::vector<Tensor<Real>> inputs,
                         BackwardFn<Real> fn) {
  auto node = std::make_shared<Node<Real>>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  Tape<Real>* tape = TapeScope<Real>::active();
  const bool tracked =
      tape && std::any_of(inputs.begin(), inputs.end(), [](const auto& t) { return t.requires_grad(); });
  if (tracked) {
    node->requires_grad = true;
    node->inputs.reserve(inputs.size());
    for (auto& t : inputs) node->inputs.push_back(t.node_ptr());
    node->backward = std::move(fn);
    tape->record(node);
  }
  return Tensor<Real>(std::move(node));
}

// Grad buffer of input i, or nullptr when it does not take gradients.
template <typename Real>
Real* input_grad(Node<Real>& self, std::size_t i) {
  auto& in = *self.inputs[i];
  if (!in.requires_grad) return nullptr;
  return in.grad_buffer().data();
}

template <typename Real>
void require_rank(const Tensor<Real>& t, std::size_t rank, const char* op) {
  if (!t.defined() || t.rank() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                     (t.defined() ? shape_str(t.shape()) : std::string("undefined")));
  }
}

template <typename Real>
void require_same_shape(const Tensor<Real>& a, const Tensor<Real>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
}

// C[m×n] += A[m×k]·B[k×n]
template <typename Real>
void gemm_nn(const Real* a, const Real* b, Real* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    Real* crow = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const Real av = a[i * k + p];
      const Real* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C[m×n] += A[m×k]·B[n×k]ᵀ
template <typename Real>
void gemm_nt(const Real* a, const Real* b, Real* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const Real* arow = a + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const Real* brow = b + j * k;
      Real acc = 0;
      for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
      c[i * n + j] += acc;
    }
  }
}

// C[m×n] += A[k×m]ᵀ·B[k×n]
template <typename Real>
void gemm_tn(const Real* a, const Real* b, Real* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t p = 0; p < k; ++p) {
    const Real* arow = a + p * m;
    const Real* brow = b + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const Real av = arow[i];
      Real* crow = c + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

template <typename Real>
Tensor<Real> elementwise_binary(const Tensor<Real>& a, const Tensor<Real>& b, const char* name,
                                Real sign_b, bool product) {
  require_same_shape(a, b, name);
  const auto n = a.numel();
  std::vector<Real> out(n);
  const auto ad = a.data();
  const auto bd = b.data();
  for (std::size_t i = 0; i < n; ++i) out[i] = product ? ad[i] * bd[i] : ad[i] + sign_b * bd[i];
  return make_result<Real>(a.shape(), std::move(out), {a, b}, [n, sign_b, product](Node<Real>& self) {
    const Real* g = self.grad.data();
    const auto& av = self.inputs[0]->data;
    const auto& bv = self.inputs[1]->data;
    if (Real* ga = input_grad(self, 0)) {
      for (std::size_t i = 0; i < n; ++i) ga[i] += product ? g[i] * bv[i] : g[i];
    }
    if (Real* gb = input_grad(self, 1)) {
      for (std::size_t i = 0; i < n; ++i) gb[i] += product ? g[i] * av[i] : sign_b * g[i];
    }
  });
}

}  // namespace

template <typename Real>
Tensor<Real> matmul(const Tensor<Real>& a, const Tensor<Real>& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  if (a.dim(1) != b.dim(0)) {
    throw ShapeError("matmul: inner extents differ, " + shape_str(a.shape()) + " · " + shape_str(b.shape()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<Real> out(m * n, Real(0));
  gemm_nn(a.data().data(), b.data().data(), out.data(), m, k, n);
  return make_result<Real>({m, n}, std::move(out), {a, b}, [m, k, n](Node<Real>& self) {
    const Real* g = self.grad.data();
    if (Real* ga = input_grad(self, 0)) gemm_nt(g, self.inputs[1]->data.data(), ga, m, n, k);
    if (Real* gb = input_grad(self, 1)) gemm_tn(self.inputs[0]->data.data(), g, gb, k, m, n);
  });
}

template <typename Real>
Tensor<Real> matmul_nt(const Tensor<Real>& a, const Tensor<Real>& b) {
  require_rank(a, 2, "matmul_nt");
  require_rank(b, 2, "matmul_nt");
  if (a.dim(1) != b.dim(1)) {
    throw ShapeError("matmul_nt: inner extents differ, " + shape_str(a.shape()) + " · " +
                     shape_str(b.shape()) + "ᵀ");
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(0);
  std::vector<Real> out(m * n, Real(0));
  gemm_nt(a.data().data(), b.data().data(), out.data(), m, k, n);
  return make_result<Real>({m, n}, std::move(out), {a, b}, [m, k, n](Node<Real>& self) {
    const Real* g = self.grad.data();
    if (Real* ga = input_grad(self, 0)) gemm_nn(g, self.inputs[1]->data.data(), ga, m, n, k);
    if (Real* gb = input_grad(self, 1)) gemm_tn(g, self.inputs[0]->data.data(), gb, n, m, k);
  });
}

template <typename Real>
Tensor<Real> transpose(const Tensor<Real>& a) {
  require_rank(a, 2, "transpose");
  const std::size_t m = a.dim(0), n = a.dim(1);
  std::vector<Real> out(m * n);
  const auto ad = a.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = ad[i * n + j];
  return make_result<Real>({n, m}, std::move(out), {a}, [m, n](Node<Real>& self) {
    const Real* g = self.grad.data();
    if (Real* ga = input_grad(self, 0)) {
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += g[j * m + i];
    }
  });
}

template <typename Real>
Tensor<Real> add(const Tensor<Real>& a, const Tensor<Real>& b) {
  return elementwise_binary(a, b, "add", Real(1), false);
}

template <typename Real>
Tensor<Real> sub(const Tensor<Real>& a, const Tensor<Real>& b) {
  return elementwise_binary(a, b, "sub", Real(-1), false);
}

template <typename Real>
Tensor<Real> mul(const Tensor<Real>& a, const Tensor<Real>& b) {
  return elementwise_binary(a, b, "mul", Real(1), true);
}

template <typename Real>
Tensor<Real> scale(const Tensor<Real>& a, Real s) {
  const auto n = a.numel();
  std::vector<Real> out(n);
  const auto ad = a.data();
  for (std::size_t i = 0; i < n; ++i) out[i] = ad[i] * s;
  return make_result<Real>(a.shape(), std::move(out), {a}, [n, s](Node<Real>& self) {
    const Real* g = self.grad.data();
    if (Real* ga = input_grad(self, 0))
      for (std::size_t i = 0; i < n; ++i) ga[i] += g[i] * s;
  });
}

template <typename Real>
Tensor<Real> mul_scalar(const Tensor<Real>& x, const Tensor<Real>& s) {
  if (s.numel() != 1) throw ShapeError("mul_scalar: scale must hold one value, got " + shape_str(s.shape()));
  const auto n = x.numel();
  const Real sv = s[0];
  std::vector<Real> out(n);
  const auto xd = x.data();
  for (std::size_t i = 0; i < n; ++i) out[i] = xd[i] * sv;
  return make_result<Real>(x.shape(), std::move(out), {x, s}, [n](Node<Real>& self) {
    const Real* g = self.grad.data();
    const auto& xv = self.inputs[0]->data;
    const Real sv = self.inputs[1]->data[0];
    if (Real* gx = input_grad(self, 0))
      for (std::size_t i = 0; i < n; ++i) gx[i] += g[i] * sv;
    if (Real* gs = input_grad(self, 1)) {
      Real acc = 0;
      for (std::size_t i = 0; i < n; ++i) acc += g[i] * xv[i];
      gs[0] += acc;
    }
  });
}

template <typename Real>
Tensor<Real> exp(const Tensor<Real>& x) {
  const auto n = x.numel();
  std::vector<Real> out(n);
  const auto xd = x.data();
  for (std::size_t i = 0; i < n; ++i) out[i] = std::exp(xd[i]);
  return make_result<Real>(x.shape(), std::move(out), {x}, [n](Node<Real>& self) {
    const Real* g = self.grad.data();
    if (Real* gx = input_grad(self, 0))
      for (std::size_t i = 0; i < n; ++i) gx[i] += g[i] * self.data[i];
  });
}

template <typename Real>
Tensor<Real> add_bias(const Tensor<Real>& x, const Tensor<Real>& b) {
  require_rank(x, 2, "add_bias");
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  if (b.numel() != cols) {
    throw ShapeError("add_bias: bias " + shape_str(b.shape()) + " does not fit rows of " + shape_str(x.shape()));
  }
  std::vector<Real> out(x.data().begin(), x.data().end());
  const auto bd = b.data();
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) out[i * cols + j] += bd[j];
  return make_result<Real>(x.shape(), std::move(out), {x, b}, [rows, cols](Node<Real>& self) {
    const Real* g = self.grad.data();
    if (Real* gx = input_grad(self, 0))
      for (std::size_t i = 0; i < rows * cols; ++i) gx[i] += g[i];
    if (Real* gb = input_grad(self, 1))
      for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j) gb[j] += g[i * cols + j];
  });
}

template <typename Real>
Tensor<Real> scale_rows(const Tensor<Real>& x, const Tensor<Real>& s) {
  require_rank(x, 2, "scale_rows");
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  if (s.numel() != rows) {
    throw ShapeError("scale_rows: " + shape_str(s.shape()) + " scales for " + shape_str(x.shape()));
  }
  std::vector<Real> out(rows * cols);
  const auto xd = x.data();
  const auto sd = s.data();
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) out[i * cols + j] = xd[i * cols + j] * sd[i];
  return make_result<Real>(x.shape(), std::move(out), {x, s}, [rows, cols](Node<Real>& self) {
    const Real* g = self.grad.data();
    const auto& xv = self.inputs[0]->data;
    const auto& sv = self.inputs[1]->data;
    if (Real* gx = input_grad(self, 0))
      for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j) gx[i * cols + j] += g[i * cols + j] * sv[i];
    if (Real* gs = input_grad(self, 1))
      for (std::size_t i = 0; i < rows; ++i) {
        Real acc = 0;
        for (std::size_t j = 0; j < cols; ++j) acc += g[i * cols + j] * xv[i * cols + j];
        gs[i] += acc;
      }
  });
}

template <typename Real>
Tensor<Real> linear(const Tensor<Real>& x, const Tensor<Real>& w, const Tensor<Real>& b) {
  return add_bias(matmul(x, w), b);
}

template <typename Real>
Tensor<Real> gelu(const Tensor<Real>& x) {
  constexpr Real c = Real(0.7978845608028654);  // √(2/π)
  constexpr Real a = Real(0.044715);
  const auto n = x.numel();
  std::vector<Real> out(n);
  const auto xd = x.data();
  for (std::size_t i = 0; i < n; ++i) {
    const Real v = xd[i];
    out[i] = Real(0.5) * v * (Real(1) + std::tanh(c * (v + a * v * v * v)));
  }
  return make_result<Real>(x.shape(), std::move(out), {x}, [n](Node<Real>& self) {
    const Real* g = self.grad.data();
    const auto& xv = self.inputs[0]->data;
    if (Real* gx = input_grad(self, 0)) {
      for (std::size_t i = 0; i < n; ++i) {
        const Real v = xv[i];
        const Real th = std::tanh(c * (v + a * v * v * v));
        const Real d = Real(0.5) * (Real(1) + th) +
                       Real(0.5) * v * (Real(1) - th * th) * c * (Real(1) + Real(3) * a * v * v);
        gx[i] += g[i] * d;
      }
    }
  });
}

template <typename Real>
Tensor<Real> softmax_lastdim(const Tensor<Real>& x) {
  if (!x.defined() || x.rank() == 0 || x.shape().back() == 0) {
    throw ShapeError("softmax_lastdim: needs a non-empty last axis");
  }
  const std::size_t n = x.shape().back();
  const std::size_t rows = x.numel() / n;
  std::vector<Real> out(x.numel());
  const auto xd = x.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const Real* in = xd.data() + r * n;
    Real* o = out.data() + r * n;
    const Real mx = *std::max_element(in, in + n);
    Real total = 0;
    for (std::size_t j = 0; j < n; ++j) {
      o[j] = std::exp(in[j] - mx);
      total += o[j];
    }
    for (std::size_t j = 0; j < n; ++j) o[j] /= total;
  }
  return make_result<Real>(x.shape(), std::move(out), {x}, [rows, n](Node<Real>& self) {
    const Real* g = self.grad.data();
    const Real* y = self.data.data();
    if (Real* gx = input_grad(self, 0)) {
      for (std::size_t r = 0; r < rows; ++r) {
        Real dot = 0;
        for (std::size_t j = 0; j < n; ++j) dot += g[r * n + j] * y[r * n + j];
        for (std::size_t j = 0; j < n; ++j) gx[r * n + j] += y[r * n + j] * (g[r * n + j] - dot);
      }
    }
  });
}

template <typename Real>
Tensor<Real> layernorm(const Tensor<Real>& x, const Tensor<Real>& gamma, const Tensor<Real>& beta, Real eps) {
  if (!(eps > Real(0))) throw std::invalid_argument("layernorm: eps must be positive");
  if (!x.defined() || x.rank() == 0) throw ShapeError("layernorm: needs rank ≥ 1");
  const std::size_t d = x.shape().back();
  if (gamma.numel() != d || beta.numel() != d) {
    throw ShapeError("layernorm: affine params " + shape_str(gamma.shape()) + "/" + shape_str(beta.shape()) +
                     " do not match " + shape_str(x.shape()));
  }
  const std::size_t rows = d ? x.numel() / d : 0;
  std::vector<Real> out(x.numel());
  std::vector<Real> xhat(x.numel());
  std::vector<Real> rstd(rows);
  const auto xd = x.data();
  const auto gd = gamma.data();
  const auto bd = beta.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const Real* in = xd.data() + r * d;
    Real mu = 0;
    for (std::size_t j = 0; j < d; ++j) mu += in[j];
    mu /= Real(d);
    Real var = 0;
    for (std::size_t j = 0; j < d; ++j) var += (in[j] - mu) * (in[j] - mu);
    var /= Real(d);
    rstd[r] = Real(1) / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) {
      xhat[r * d + j] = (in[j] - mu) * rstd[r];
      out[r * d + j] = gd[j] * xhat[r * d + j] + bd[j];
    }
  }
  return make_result<Real>(
      x.shape(), std::move(out), {x, gamma, beta},
      [rows, d, xhat = std::move(xhat), rstd = std::move(rstd)](Node<Real>& self) {
        const Real* g = self.grad.data();
        const auto& gam = self.inputs[1]->data;
        if (Real* gg = input_grad(self, 1))
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < d; ++j) gg[j] += g[r * d + j] * xhat[r * d + j];
        if (Real* gb = input_grad(self, 2))
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < d; ++j) gb[j] += g[r * d + j];
        if (Real* gx = input_grad(self, 0)) {
          for (std::size_t r = 0; r < rows; ++r) {
            Real mean_dh = 0, mean_dh_xh = 0;
            for (std::size_t j = 0; j < d; ++j) {
              const Real dh = g[r * d + j] * gam[j];
              mean_dh += dh;
              mean_dh_xh += dh * xhat[r * d + j];
            }
            mean_dh /= Real(d);
            mean_dh_xh /= Real(d);
            for (std::size_t j = 0; j < d; ++j) {
              const Real dh = g[r * d + j] * gam[j];
              gx[r * d + j] += rstd[r] * (dh - mean_dh - xhat[r * d + j] * mean_dh_xh);
            }
          }
        }
      });
}

template <typename Real>
Tensor<Real> l2_normalize_rows(const Tensor<Real>& x) {
  require_rank(x, 2, "l2_normalize_rows");
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  std::vector<Real> out(rows * cols);
  std::vector<Real> norms(rows);
  const auto xd = x.data();
  for (std::size_t i = 0; i < rows; ++i) {
    Real ss = 0;
    for (std::size_t j = 0; j < cols; ++j) ss += xd[i * cols + j] * xd[i * cols + j];
    norms[i] = std::max(std::sqrt(ss), Real(1e-12));
    for (std::size_t j = 0; j < cols; ++j) out[i * cols + j] = xd[i * cols + j] / norms[i];
  }
  return make_result<Real>(x.shape(), std::move(out), {x},
                           [rows, cols, norms = std::move(norms)](Node<Real>& self) {
                             const Real* g = self.grad.data();
                             const Real* y = self.data.data();
                             if (Real* gx = input_grad(self, 0)) {
                               for (std::size_t i = 0; i < rows; ++i) {
                                 Real dot = 0;
                                 for (std::size_t j = 0; j < cols; ++j) dot += g[i * cols + j] * y[i * cols + j];
                                 for (std::size_t j = 0; j < cols; ++j)
                                   gx[i * cols + j] += (g[i * cols + j] - y[i * cols + j] * dot) / norms[i];
                               }
                             }
                           });
}

template <typename Real>
Tensor<Real> sum(const Tensor<Real>& x) {
  Real total = 0;
  for (Real v : x.data()) total += v;
  const auto n = x.numel();
  return make_result<Real>(Shape{}, {total}, {x}, [n](Node<Real>& self) {
    const Real g = self.grad[0];
    if (Real* gx = input_grad(self, 0))
      for (std::size_t i = 0; i < n; ++i) gx[i] += g;
  });
}

template <typename Real>
Tensor<Real> mean(const Tensor<Real>& x) {
  if (x.numel() == 0) throw ShapeError("mean: empty tensor");
  return scale(sum(x), Real(1) / Real(x.numel()));
}

template <typename Real>
Tensor<Real> mean_rows(const Tensor<Real>& x) {
  require_rank(x, 2, "mean_rows");
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  if (rows == 0) throw ShapeError("mean_rows: no rows");
  std::vector<Real> out(cols, Real(0));
  const auto xd = x.data();
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) out[j] += xd[i * cols + j];
  for (auto& v : out) v /= Real(rows);
  return make_result<Real>({1, cols}, std::move(out), {x}, [rows, cols](Node<Real>& self) {
    const Real* g = self.grad.data();
    if (Real* gx = input_grad(self, 0))
      for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j) gx[i * cols + j] += g[j] / Real(rows);
  });
}

template <typename Real>
Tensor<Real> reshape(const Tensor<Real>& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw ShapeError("reshape: " + shape_str(x.shape()) + " cannot become " + shape_str(shape));
  }
  const auto n = x.numel();
  return make_result<Real>(std::move(shape), std::vector<Real>(x.data().begin(), x.data().end()), {x},
                           [n](Node<Real>& self) {
                             const Real* g = self.grad.data();
                             if (Real* gx = input_grad(self, 0))
                               for (std::size_t i = 0; i < n; ++i) gx[i] += g[i];
                           });
}

template <typename Real>
Tensor<Real> index_first(const Tensor<Real>& x, std::size_t i) {
  if (!x.defined() || x.rank() < 2) throw ShapeError("index_first: needs rank ≥ 2");
  if (i >= x.dim(0)) {
    throw ShapeError("index_first: index " + std::to_string(i) + " out of range for " + shape_str(x.shape()));
  }
  Shape sub(x.shape().begin() + 1, x.shape().end());
  const std::size_t block = shape_numel(sub);
  const std::size_t offset = i * block;
  std::vector<Real> out(x.data().begin() + offset, x.data().begin() + offset + block);
  return make_result<Real>(std::move(sub), std::move(out), {x}, [block, offset](Node<Real>& self) {
    const Real* g = self.grad.data();
    if (Real* gx = input_grad(self, 0))
      for (std::size_t j = 0; j < block; ++j) gx[offset + j] += g[j];
  });
}

template <typename Real>
Tensor<Real> slice_rows(const Tensor<Real>& x, std::size_t start, std::size_t count) {
  require_rank(x, 2, "slice_rows");
  if (start + count > x.dim(0)) {
    throw ShapeError("slice_rows: [" + std::to_string(start) + ", +" + std::to_string(count) + ") exceeds " +
                     shape_str(x.shape()));
  }
  const std::size_t cols = x.dim(1);
  const std::size_t offset = start * cols;
  const std::size_t n = count * cols;
  std::vector<Real> out(x.data().begin() + offset, x.data().begin() + offset + n);
  return make_result<Real>({count, cols}, std::move(out), {x}, [offset, n](Node<Real>& self) {
    const Real* g = self.grad.data();
    if (Real* gx = input_grad(self, 0))
      for (std::size_t j = 0; j < n; ++j) gx[offset + j] += g[j];
  });
}

template <typename Real>
Tensor<Real> slice_cols(const Tensor<Real>& x, std::size_t start, std::size_t count) {
  require_rank(x, 2, "slice_cols");
  if (start + count > x.dim(1)) {
    throw ShapeError("slice_cols: [" + std::to_string(start) + ", +" + std::to_string(count) + ") exceeds " +
                     shape_str(x.shape()));
  }
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  std::vector<Real> out(rows * count);
  const auto xd = x.data();
  for (std::size_t i = 0; i < rows; ++i)
    std::copy_n(xd.data() + i * cols + start, count, out.data() + i * count);
  return make_result<Real>({rows, count}, std::move(out), {x}, [rows, cols, start, count](Node<Real>& self) {
    const Real* g = self.grad.data();
    if (Real* gx = input_grad(self, 0))
      for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < count; ++j) gx[i * cols + start + j] += g[i * count + j];
  });
}

template <typename Real>
Tensor<Real> concat_rows(const std::vector<Tensor<Real>>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows: nothing to concatenate");
  const std::size_t cols = parts.front().dim(1);
  std::size_t rows = 0;
  for (const auto& p : parts) {
    require_rank(p, 2, "concat_rows");
    if (p.dim(1) != cols) {
      throw ShapeError("concat_rows: column mismatch " + shape_str(parts.front().shape()) + " vs " +
                       shape_str(p.shape()));
    }
    rows += p.dim(0);
  }
  std::vector<Real> out;
  out.reserve(rows * cols);
  std::vector<std::size_t> sizes;
  for (const auto& p : parts) {
    out.insert(out.end(), p.data().begin(), p.data().end());
    sizes.push_back(p.numel());
  }
  return make_result<Real>({rows, cols}, std::move(out), parts, [sizes = std::move(sizes)](Node<Real>& self) {
    const Real* g = self.grad.data();
    std::size_t offset = 0;
    for (std::size_t k = 0; k < sizes.size(); ++k) {
      if (Real* gp = input_grad(self, k))
        for (std::size_t j = 0; j < sizes[k]; ++j) gp[j] += g[offset + j];
      offset += sizes[k];
    }
  });
}

template <typename Real>
Tensor<Real> concat_cols(const std::vector<Tensor<Real>>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: nothing to concatenate");
  const std::size_t rows = parts.front().dim(0);
  std::vector<std::size_t> widths;
  std::size_t cols = 0;
  for (const auto& p : parts) {
    require_rank(p, 2, "concat_cols");
    if (p.dim(0) != rows) {
      throw ShapeError("concat_cols: row mismatch " + shape_str(parts.front().shape()) + " vs " +
                       shape_str(p.shape()));
    }
    widths.push_back(p.dim(1));
    cols += p.dim(1);
  }
  std::vector<Real> out(rows * cols);
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto pd = parts[k].data();
    for (std::size_t i = 0; i < rows; ++i)
      std::copy_n(pd.data() + i * widths[k], widths[k], out.data() + i * cols + offset);
    offset += widths[k];
  }
  return make_result<Real>({rows, cols}, std::move(out), parts,
                           [rows, cols, widths = std::move(widths)](Node<Real>& self) {
                             const Real* g = self.grad.data();
                             std::size_t off = 0;
                             for (std::size_t k = 0; k < widths.size(); ++k) {
                               if (Real* gp = input_grad(self, k))
                                 for (std::size_t i = 0; i < rows; ++i)
                                   for (std::size_t j = 0; j < widths[k]; ++j)
                                     gp[i * widths[k] + j] += g[i * cols + off + j];
                               off += widths[k];
                             }
                           });
}

template <typename Real>
Tensor<Real> gather_rows(const Tensor<Real>& x, const std::vector<std::size_t>& rows) {
  require_rank(x, 2, "gather_rows");
  const std::size_t cols = x.dim(1);
  std::vector<Real> out(rows.size() * cols);
  const auto xd = x.data();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= x.dim(0)) {
      throw ShapeError("gather_rows: row " + std::to_string(rows[i]) + " out of range for " + shape_str(x.shape()));
    }
    std::copy_n(xd.data() + rows[i] * cols, cols, out.data() + i * cols);
  }
  return make_result<Real>({rows.size(), cols}, std::move(out), {x}, [rows, cols](Node<Real>& self) {
    const Real* g = self.grad.data();
    if (Real* gx = input_grad(self, 0))
      for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < cols; ++j) gx[rows[i] * cols + j] += g[i * cols + j];
  });
}

template <typename Real>
Tensor<Real> cross_entropy(const Tensor<Real>& logits, std::size_t target) {
  const std::size_t n = logits.numel();
  if (n < 2) throw ShapeError("cross_entropy: needs at least 2 logits, got " + shape_str(logits.shape()));
  return cross_entropy_rows(reshape(logits, {1, n}), {target});
}

template <typename Real>
Tensor<Real> cross_entropy_rows(const Tensor<Real>& logits, const std::vector<std::size_t>& targets) {
  require_rank(logits, 2, "cross_entropy_rows");
  const std::size_t rows = logits.dim(0), n = logits.dim(1);
  if (n < 2) throw ShapeError("cross_entropy_rows: needs at least 2 classes, got " + shape_str(logits.shape()));
  if (targets.size() != rows) {
    throw ShapeError("cross_entropy_rows: " + std::to_string(targets.size()) + " targets for " +
                     shape_str(logits.shape()));
  }
  std::vector<Real> probs(rows * n);
  Real total = 0;
  const auto ld = logits.data();
  for (std::size_t r = 0; r < rows; ++r) {
    if (targets[r] >= n) {
      throw std::out_of_range("cross_entropy: target " + std::to_string(targets[r]) + " outside " +
                              std::to_string(n) + " classes");
    }
    const Real* in = ld.data() + r * n;
    const Real mx = *std::max_element(in, in + n);
    Real z = 0;
    for (std::size_t j = 0; j < n; ++j) {
      probs[r * n + j] = std::exp(in[j] - mx);
      z += probs[r * n + j];
    }
    for (std::size_t j = 0; j < n; ++j) probs[r * n + j] /= z;
    total += (mx + std::log(z)) - in[targets[r]];
  }
  total /= Real(rows);
  return make_result<Real>(Shape{}, {total}, {logits},
                           [rows, n, targets, probs = std::move(probs)](Node<Real>& self) {
                             const Real g = self.grad[0] / Real(rows);
                             if (Real* gl = input_grad(self, 0)) {
                               for (std::size_t r = 0; r < rows; ++r) {
                                 for (std::size_t j = 0; j < n; ++j) gl[r * n + j] += g * probs[r * n + j];
                                 gl[r * n + targets[r]] -= g;
                               }
                             }
                           });
}

template <typename Real>
Tensor<Real> scaled_dot_attention(const Tensor<Real>& q, const Tensor<Real>& k, const Tensor<Real>& v,
                                  AttentionTrace<Real>* trace) {
  require_rank(q, 2, "scaled_dot_attention");
  require_rank(k, 2, "scaled_dot_attention");
  require_rank(v, 2, "scaled_dot_attention");
  if (q.dim(1) != k.dim(1)) {
    throw ShapeError("scaled_dot_attention: query width " + shape_str(q.shape()) + " vs key width " +
                     shape_str(k.shape()));
  }
  if (k.dim(0) == 0 || k.dim(0) != v.dim(0)) {
    throw ShapeError("scaled_dot_attention: keys " + shape_str(k.shape()) + " and values " + shape_str(v.shape()) +
                     " must have the same non-zero length");
  }
  const Real inv_sqrt_d = Real(1) / std::sqrt(Real(q.dim(1)));
  auto weights = softmax_lastdim(scale(matmul_nt(q, k), inv_sqrt_d));
  if (trace) trace->weights.push_back(weights);
  return matmul(weights, v);
}

#define CROSSTVR_INSTANTIATE_OPS(Real)                                                                        \
  template Tensor<Real> matmul(const Tensor<Real>&, const Tensor<Real>&);                                     \
  template Tensor<Real> matmul_nt(const Tensor<Real>&, const Tensor<Real>&);                                  \
  template Tensor<Real> transpose(const Tensor<Real>&);                                                       \
  template Tensor<Real> add(const Tensor<Real>&, const Tensor<Real>&);                                        \
  template Tensor<Real> sub(const Tensor<Real>&, const Tensor<Real>&);                                        \
  template Tensor<Real> mul(const Tensor<Real>&, const Tensor<Real>&);                                        \
  template Tensor<Real> scale(const Tensor<Real>&, Real);                                                     \
  template Tensor<Real> mul_scalar(const Tensor<Real>&, const Tensor<Real>&);                                 \
  template Tensor<Real> exp(const Tensor<Real>&);                                                             \
  template Tensor<Real> add_bias(const Tensor<Real>&, const Tensor<Real>&);                                   \
  template Tensor<Real> scale_rows(const Tensor<Real>&, const Tensor<Real>&);                                 \
  template Tensor<Real> linear(const Tensor<Real>&, const Tensor<Real>&, const Tensor<Real>&);                 \
  template Tensor<Real> gelu(const Tensor<Real>&);                                                            \
  template Tensor<Real> softmax_lastdim(const Tensor<Real>&);                                                 \
  template Tensor<Real> layernorm(const Tensor<Real>&, const Tensor<Real>&, const Tensor<Real>&, Real);       \
  template Tensor<Real> l2_normalize_rows(const Tensor<Real>&);                                               \
  template Tensor<Real> sum(const Tensor<Real>&);                                                             \
  template Tensor<Real> mean(const Tensor<Real>&);                                                            \
  template Tensor<Real> mean_rows(const Tensor<Real>&);                                                       \
  template Tensor<Real> reshape(const Tensor<Real>&, Shape);                                                  \
  template Tensor<Real> index_first(const Tensor<Real>&, std::size_t);                                        \
  template Tensor<Real> slice_rows(const Tensor<Real>&, std::size_t, std::size_t);                            \
  template Tensor<Real> slice_cols(const Tensor<Real>&, std::size_t, std::size_t);                            \
  template Tensor<Real> concat_rows(const std::vector<Tensor<Real>>&);                                        \
  template Tensor<Real> concat_cols(const std::vector<Tensor<Real>>&);                                        \
  template Tensor<Real> gather_rows(const Tensor<Real>&, const std::vector<std::size_t>&);                    \
  template Tensor<Real> cross_entropy(const Tensor<Real>&, std::size_t);                                      \
  template Tensor<Real> cross_entropy_rows(const Tensor<Real>&, const std::vector<std::size_t>&);             \
  template Tensor<Real> scaled_dot_attention(const Tensor<Real>&, const Tensor<Real>&, const Tensor<Real>&,    \
                                             AttentionTrace<Real>*);

CROSSTVR_INSTANTIATE_OPS(float)
CROSSTVR_INSTANTIATE_OPS(double)

}  // namespace crosstvr::ops
