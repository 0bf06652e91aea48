#pragma once

#include <cstddef>
#include <vector>

#include "crosstvr/cross_attention.hpp"

namespace crosstvr {

// Linear warmup from 0 to base_lr, then half-cosine decay to 0 at total_steps.
struct Schedule {
  std::size_t total_steps = 0;
  std::size_t warmup_steps = 0;
  double base_lr = 1e-4;
};

Schedule make_schedule(std::size_t total_steps, double warmup_fraction, double base_lr);
double lr_at(std::size_t step, const Schedule& schedule);

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  // Throws FrozenError if any tensor is frozen.
  Adam(NamedTensors<float> params, AdamConfig config = {});

  void zero_grad();
  void step(double lr);

  std::size_t steps_taken() const { return t_; }
  const NamedTensors<float>& params() const { return params_; }

 private:
  NamedTensors<float> params_;
  AdamConfig config_;
  std::vector<std::vector<float>> m_, v_;
  std::size_t t_ = 0;
};

}  // namespace crosstvr
