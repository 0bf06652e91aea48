#include "crosstvr/optim.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include "crosstvr/errors.hpp"

namespace crosstvr {

Schedule make_schedule(std::size_t total_steps, double warmup_fraction, double base_lr) {
  if (total_steps == 0) throw ConfigError("schedule: total_steps must be positive");
  if (!(warmup_fraction >= 0.0 && warmup_fraction < 1.0)) throw ConfigError("schedule: warmup_fraction must be in [0, 1)");
  if (!(base_lr > 0.0)) throw ConfigError("schedule: base_lr must be positive");
  const auto warmup = static_cast<std::size_t>(std::llround(warmup_fraction * double(total_steps)));
  return {total_steps, warmup, base_lr};
}

double lr_at(std::size_t step, const Schedule& s) {
  if (step > s.total_steps) {
    throw std::out_of_range("lr_at: step " + std::to_string(step) + " beyond " + std::to_string(s.total_steps));
  }
  if (step < s.warmup_steps) return s.base_lr * double(step) / double(s.warmup_steps);
  const std::size_t decay = s.total_steps - s.warmup_steps;
  if (decay == 0) return s.base_lr;
  const double progress = double(step - s.warmup_steps) / double(decay);
  return s.base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

Adam::Adam(NamedTensors<float> params, AdamConfig config) : params_(std::move(params)), config_(config) {
  for (const auto& [name, t] : params_) {
    if (t.frozen()) throw FrozenError("optimizer given frozen tensor '" + name + "'");
    m_.emplace_back(t.numel(), 0.0f);
    v_.emplace_back(t.numel(), 0.0f);
  }
}

void Adam::zero_grad() {
  for (auto& [name, t] : params_) t.zero_grad();
}

void Adam::step(double lr) {
  ++t_;
  const double bc1 = 1.0 - std::pow(config_.beta1, double(t_));
  const double bc2 = 1.0 - std::pow(config_.beta2, double(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& [name, t] = params_[i];
    if (t.frozen()) throw FrozenError("update of frozen tensor '" + name + "'");
    if (!t.requires_grad()) continue;
    auto values = t.mutable_data();
    const auto grad = t.grad();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < values.size(); ++j) {
      const double g = grad[j];
      m[j] = static_cast<float>(config_.beta1 * m[j] + (1.0 - config_.beta1) * g);
      v[j] = static_cast<float>(config_.beta2 * v[j] + (1.0 - config_.beta2) * g * g);
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      values[j] = static_cast<float>(values[j] - lr * mhat / (std::sqrt(vhat) + config_.eps));
    }
  }
}

}  // namespace crosstvr
