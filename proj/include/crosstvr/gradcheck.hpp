#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "crosstvr/ops.hpp"
#include "crosstvr/rng.hpp"
#include "crosstvr/tensor.hpp"

namespace crosstvr {

struct GradCheckResult {
  double max_abs_error = 0;
  double worst_ratio = 0;  // max over entries of |a−n| / (rtol·max(|a|,|n|) + atol); ≤ 1 passes
  std::size_t checked = 0;
  std::string worst;  // "input[i] entry j: analytic a numeric n"
  bool passed() const { return worst_ratio <= 1.0; }
};

// Central differences against the tape's gradients. `loss` rebuilds a scalar
// from `inputs` on every call; each input must require grad.
inline GradCheckResult gradient_check(const std::function<TensorD()>& loss, const std::vector<TensorD>& inputs,
                                      double h = 1e-4, double rtol = 1e-3, double atol = 1e-7) {
  for (auto input : inputs) input.zero_grad();
  Tape<double> tape;
  TensorD out;
  {
    TapeScope<double> scope(tape);
    out = loss();
  }
  backward(out, tape);

  GradCheckResult result;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    auto x = inputs[k];
    const auto analytic = std::vector<double>(x.grad().begin(), x.grad().end());
    for (std::size_t j = 0; j < x.numel(); ++j) {
      auto data = x.mutable_data();
      const double saved = data[j];
      data[j] = saved + h;
      const double up = loss().item();
      data[j] = saved - h;
      const double down = loss().item();
      data[j] = saved;
      const double numeric = (up - down) / (2 * h);
      const double err = std::abs(analytic[j] - numeric);
      const double ratio = err / (rtol * std::max(std::abs(analytic[j]), std::abs(numeric)) + atol);
      result.max_abs_error = std::max(result.max_abs_error, err);
      if (ratio > result.worst_ratio) {
        result.worst_ratio = ratio;
        result.worst = "input[" + std::to_string(k) + "] entry " + std::to_string(j) +
                       ": analytic " + std::to_string(analytic[j]) + " numeric " + std::to_string(numeric);
      }
      ++result.checked;
    }
  }
  return result;
}

// Leaf of the given shape with N(0, scale²) entries, requiring grad.
inline TensorD random_leaf(const Shape& shape, Rng& rng, double scale = 1.0) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = scale * rng.normal();
  return TensorD::from(shape, std::move(v), true);
}

// Σ out ⊙ w for a fixed random w, turning any output into a generic scalar loss.
inline TensorD project_to_scalar(const TensorD& out, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> w(out.numel());
  for (auto& x : w) x = rng.normal();
  return ops::sum(ops::mul(out, TensorD::from(out.shape(), std::move(w))));
}

}  // namespace crosstvr
