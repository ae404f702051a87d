#pragma once
// Geometric noise schedule and the per-step coefficients of the annealed
// Langevin sampler. The continuous schedule interpolates log-linearly between
// sigma_min (t = 0) and sigma_max (t = 1); discretization produces N + 1
// levels in descending order whose consecutive ratio delta is constant.

#include <cmath>
#include <cstddef>
#include <vector>

#include "dag/core.hpp"

namespace dag {

struct Discretization {
  std::vector<real> levels;  // size N + 1, strictly descending
  real delta = 0.0;          // levels[i + 1] / levels[i], constant by construction
};

struct StepCoefficients {
  real eta = 0.0;   // 1 - delta^alpha, in (0, 1)
  real beta = 0.0;  // sqrt(1 - delta^(2 (alpha - 1))), in [0, 1)
};

class NoiseSchedule {
 public:
  explicit NoiseSchedule(real sigma_min = 1e-3, real sigma_max = 1.0)
      : sigma_min_(sigma_min), sigma_max_(sigma_max) {
    require_domain(std::isfinite(sigma_min) && std::isfinite(sigma_max),
                   "NoiseSchedule: bounds must be finite");
    require_domain(sigma_min > 0.0, "NoiseSchedule: sigma_min must be positive");
    require_domain(sigma_min < sigma_max,
                   "NoiseSchedule: sigma_min must be below sigma_max");
  }

  real sigma_min() const { return sigma_min_; }
  real sigma_max() const { return sigma_max_; }

  // sigma(t) = sigma_min^(1 - t) * sigma_max^t for t in [0, 1];
  // exact at both endpoints.
  real sigma_at(real t) const {
    require_domain(t >= 0.0 && t <= 1.0, "sigma_at: t must lie in [0, 1]");
    if (t == 0.0) return sigma_min_;
    if (t == 1.0) return sigma_max_;
    return std::exp((1.0 - t) * std::log(sigma_min_) + t * std::log(sigma_max_));
  }

  // N + 1 descending levels from sigma_max down to sigma_min with constant
  // consecutive ratio delta = (sigma_min / sigma_max)^(1 / N).
  Discretization discretize(int steps) const {
    require_domain(steps >= 1, "discretize: steps must be >= 1");
    Discretization d;
    d.delta = std::pow(sigma_min_ / sigma_max_, 1.0 / static_cast<real>(steps));
    d.levels.resize(static_cast<std::size_t>(steps) + 1);
    const real log_max = std::log(sigma_max_);
    const real log_min = std::log(sigma_min_);
    for (int i = 1; i < steps; ++i) {
      real f = static_cast<real>(i) / static_cast<real>(steps);
      d.levels[static_cast<std::size_t>(i)] =
          std::exp((1.0 - f) * log_max + f * log_min);
    }
    d.levels.front() = sigma_max_;
    d.levels.back() = sigma_min_;
    return d;
  }

 private:
  real sigma_min_;
  real sigma_max_;
};

// Langevin step sizes for a geometric level ratio delta and exponent alpha.
// eta scales the score correction; beta scales the injected noise and is the
// unique value keeping a point-mass conditional exactly on-schedule:
// (1 - eta)^2 + beta^2 delta^2 = delta^2.
inline StepCoefficients step_coefficients(real delta, real alpha) {
  require_domain(delta > 0.0 && delta < 1.0,
                 "step_coefficients: delta must lie in (0, 1)");
  require_domain(alpha >= 1.0, "step_coefficients: alpha must be >= 1");
  StepCoefficients c;
  c.eta = 1.0 - std::pow(delta, alpha);
  // Algebraically sqrt(1 - ((1 - eta) / delta)^2); this form is exact for
  // alpha = 1 and avoids cancellation near delta -> 1.
  c.beta = std::sqrt(1.0 - std::pow(delta, 2.0 * (alpha - 1.0)));
  return c;
}

}  // namespace dag
