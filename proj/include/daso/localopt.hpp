#pragma once

#include <algorithm>
#include <cmath>
#include <deque>
#include <string>

#include "daso/errors.hpp"
#include "daso/numerics.hpp"

namespace daso {

struct SgdConfig {
  double lr = 0.025;
  double momentum = 0.9;
  double weight_decay = 1e-4;

  void validate() const {
    if (!(lr > 0)) throw ConfigError("optimizer.lr must be > 0");
    if (!(momentum >= 0 && momentum < 1)) throw ConfigError("optimizer.momentum must be in [0, 1)");
    if (!(weight_decay >= 0)) throw ConfigError("optimizer.weight_decay must be >= 0");
  }
};

struct SgdState {
  ParamVector velocity;

  static SgdState zeros(std::size_t n) { return SgdState{ParamVector(n)}; }
};

// g' = grad + wd * params;  v = momentum * v + g';  params -= lr * v
inline void sgd_step(ParamVector& params, const ParamVector& grad, const SgdConfig& cfg,
                     SgdState& state, double lr_now) {
  if (grad.size() != params.size() || state.velocity.size() != params.size()) {
    throw ShapeError("sgd_step: params, grad and velocity lengths differ");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grad[i] + cfg.weight_decay * params[i];
    state.velocity[i] = cfg.momentum * state.velocity[i] + g;
    params[i] -= lr_now * state.velocity[i];
  }
}

struct PlateauConfig {
  int window_epochs = 5;
  double rel_threshold = 0.01;

  void validate(const std::string& section) const {
    if (window_epochs < 2) throw ConfigError(section + ".plateau_window must be >= 2");
    if (!(rel_threshold > 0)) throw ConfigError(section + ".plateau_threshold must be > 0");
  }
};

/// Sliding window of per-epoch losses. Fires when the best loss of the newer
/// half of the window improves on the best of the older half by less than
/// rel_threshold (relative). After firing, stays quiet for window_epochs - 1
/// updates, so two events are at least window_epochs apart.
struct PlateauState {
  std::deque<double> history;
  int cooldown_remaining = 0;
};

inline bool plateau_update(PlateauState& state, const PlateauConfig& cfg, double epoch_mean_loss) {
  if (std::isnan(epoch_mean_loss)) throw DivergenceError("plateau detector received a NaN loss");
  state.history.push_back(epoch_mean_loss);
  while (state.history.size() > static_cast<std::size_t>(cfg.window_epochs)) {
    state.history.pop_front();
  }
  if (state.cooldown_remaining > 0) {
    --state.cooldown_remaining;
    return false;
  }
  if (state.history.size() < static_cast<std::size_t>(cfg.window_epochs)) return false;

  const auto mid = state.history.begin() + cfg.window_epochs / 2;
  const double older = *std::min_element(state.history.begin(), mid);
  const double newer = *std::min_element(mid, state.history.end());
  const double improvement = (older - newer) / std::max(std::fabs(older), 1e-12);
  if (improvement < cfg.rel_threshold) {
    state.cooldown_remaining = cfg.window_epochs - 1;
    return true;
  }
  return false;
}

struct LrSchedule {
  double base_lr = 0.025;
  double world_scale = 1.0;
  int warmup_epochs = 5;
  double decay_factor = 0.5;
  PlateauConfig plateau{};

  double peak_lr() const { return base_lr * world_scale; }

  void validate() const {
    if (!(base_lr > 0)) throw ConfigError("optimizer.lr must be > 0");
    if (!(world_scale > 0)) throw ConfigError("schedule.world_scale must be > 0");
    if (warmup_epochs < 0) throw ConfigError("schedule.warmup_epochs must be >= 0");
    if (!(decay_factor > 0 && decay_factor < 1)) {
      throw ConfigError("schedule.decay_factor must be in (0, 1)");
    }
    plateau.validate("schedule");
  }
};

// Linear warm-up from peak/(warmup+1) to peak, then one decay per plateau event.
inline double lr_at(const LrSchedule& s, int epoch, int plateau_events) {
  if (epoch < s.warmup_epochs) {
    return s.peak_lr() * static_cast<double>(epoch + 1) / static_cast<double>(s.warmup_epochs + 1);
  }
  return s.peak_lr() * std::pow(s.decay_factor, plateau_events);
}

}  // namespace daso
