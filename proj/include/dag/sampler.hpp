#pragma once
// Noise-consistent annealed Langevin sampling with classifier-free guidance
// and 100th-percentile dynamic thresholding of the empirically denoised
// sample. One correction step is taken per discretized noise level:
//
//   x_{n-1} = x_n + eta sigma_n^2 S(x_n, c, sigma_n) + beta sigma_{n-1} z
//
// With thresholding enabled the step is computed in the algebraically
// equivalent denoised form x_{n-1} = (1-eta) x_n + eta x0_hat + beta
// sigma_{n-1} z, where x0_hat = x_n + sigma_n^2 S is rescaled into [-1, 1]
// whenever its peak exceeds 1.

#include <cstdint>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dag/core.hpp"
#include "dag/network.hpp"
#include "dag/schedule.hpp"

namespace dag {

struct SamplerConfig {
  int steps = 100;
  real alpha = 2.0;
  real gamma = 0.0;
  std::uint64_t seed = 0;
  bool threshold_enabled = true;

  void validate() const {
    require_domain(steps >= 1, "sampler: steps must be >= 1");
    require_domain(std::isfinite(alpha) && alpha >= 1.0,
                   "sampler: alpha must be >= 1");
    require_domain(std::isfinite(gamma) && gamma >= 0.0,
                   "sampler: gamma must be >= 0");
  }
};

struct StepTrace {
  int level = 0;          // n, counting down from steps-1 conceptually
  real sigma = 0.0;       // sigma_n of this step
  real sigma_prev = 0.0;  // sigma_{n-1} (destination level)
  real x0_peak_raw = 0.0; // peak |x0_hat| before thresholding
  real x0_peak = 0.0;     // peak |x0_hat| after thresholding
  real x_peak = 0.0;      // peak |x| after the step
  real score_rms = 0.0;
};

// x0_hat = x + sigma^2 * score.
inline std::vector<real> denoised_estimate(std::span<const real> x,
                                           std::span<const real> score,
                                           real sigma) {
  require_domain(x.size() == score.size(), "denoised_estimate: shape mismatch");
  std::vector<real> out(x.size());
  const real s2 = sigma * sigma;
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] + s2 * score[i];
  return out;
}

// 100th-percentile dynamic thresholding: divide by the peak only when it
// exceeds 1. Returns the factor applied (1 when untouched, including the
// all-zero case).
inline real rescale_threshold(std::vector<real>& x) {
  const real p = peak_abs(x);
  if (p <= 1.0) return 1.0;
  const real inv = 1.0 / p;
  for (real& v : x) v *= inv;
  return inv;
}

// One annealing step from sigma_n down to sigma_prev. `z` carries the
// pre-drawn standard normal noise. Mutates x in place.
inline void langevin_step(std::vector<real>& x, real sigma_n, real sigma_prev,
                          const StepCoefficients& c, std::span<const real> S,
                          const std::vector<real>& z, bool threshold_enabled,
                          StepTrace* tr = nullptr) {
  require_domain(sigma_prev > 0.0 && sigma_prev < sigma_n,
                 "langevin_step: needs 0 < sigma_prev < sigma_n");
  require_domain(S.size() == x.size() && z.size() == x.size(),
                 "langevin_step: shape mismatch");
  if (!all_finite(S)) {
    throw SampleError("langevin_step: non-finite score at sigma " +
                      std::to_string(sigma_n));
  }
  const std::size_t L = x.size();
  const real noise = c.beta * sigma_prev;
  if (threshold_enabled) {
    std::vector<real> x0 = denoised_estimate(x, S, sigma_n);
    const real raw_peak = peak_abs(x0);
    rescale_threshold(x0);
    for (std::size_t i = 0; i < L; ++i) {
      x[i] = (1.0 - c.eta) * x[i] + c.eta * x0[i] + noise * z[i];
    }
    if (tr) {
      tr->x0_peak_raw = raw_peak;
      tr->x0_peak = peak_abs(x0);
    }
  } else {
    const real drift = c.eta * sigma_n * sigma_n;
    for (std::size_t i = 0; i < L; ++i) {
      x[i] = x[i] + drift * S[i] + noise * z[i];
    }
    if (tr) {
      tr->x0_peak_raw = 0.0;
      tr->x0_peak = 0.0;
    }
  }
  if (tr) {
    tr->sigma = sigma_n;
    tr->sigma_prev = sigma_prev;
    tr->x_peak = peak_abs(x);
    real acc = 0.0;
    for (real s : S) acc += s * s;
    tr->score_rms = std::sqrt(acc / static_cast<real>(L));
  }
}

// Generic annealed run over score(x, sigma). Initialization is
// sigma_max * z (plus the style-transfer signal when given); noise streams
// are keyed by (seed, purpose, run_index, step) so batches of runs are
// reproducible run-by-run.
template <class ScoreFn>
std::vector<real> sample_with(ScoreFn&& score, std::size_t length,
                              const NoiseSchedule& sch, const SamplerConfig& cfg,
                              std::uint64_t run_index = 0,
                              std::vector<StepTrace>* trace = nullptr,
                              const std::vector<real>* init_signal = nullptr) {
  cfg.validate();
  require_domain(length > 0, "sample: length must be positive");
  if (init_signal) {
    require_domain(init_signal->size() == length,
                   "style_transfer: input length mismatch");
    require_domain(peak_abs(*init_signal) <= 1.0,
                   "style_transfer: input must be peak-normalized to [-1, 1]");
  }
  const Discretization disc = sch.discretize(cfg.steps);
  const StepCoefficients coeffs = step_coefficients(disc.delta, cfg.alpha);

  std::vector<real> x(length);
  auto init_rng = Prng::stream(cfg.seed, stream::kSamplerInit, run_index, 0);
  init_rng.fill_normal(x);
  const real smax = sch.sigma_max();
  for (std::size_t i = 0; i < length; ++i) {
    x[i] *= smax;
    if (init_signal) x[i] += (*init_signal)[i];
  }

  if (trace) trace->clear();
  std::vector<real> z(length);
  for (int n = 0; n < cfg.steps; ++n) {
    const real sigma_n = disc.levels[static_cast<std::size_t>(n)];
    const real sigma_prev = disc.levels[static_cast<std::size_t>(n) + 1];
    const std::vector<real> S = score(x, sigma_n);
    auto rng = Prng::stream(cfg.seed, stream::kSamplerStep, run_index,
                            static_cast<std::uint64_t>(n));
    rng.fill_normal(z);
    StepTrace tr;
    tr.level = cfg.steps - 1 - n;
    langevin_step(x, sigma_n, sigma_prev, coeffs, S, z, cfg.threshold_enabled,
                  trace ? &tr : nullptr);
    if (!all_finite(x)) {
      throw SampleError("sample: non-finite iterate after level " +
                        std::to_string(n) + " (sigma " +
                        std::to_string(sigma_n) + ")");
    }
    if (trace) trace->push_back(tr);
  }
  // The completed sample honours max|x| <= 1 under thresholding; the final
  // iterate is the denoised full-audio estimate, so the same rescale applies.
  if (cfg.threshold_enabled) rescale_threshold(x);
  return x;
}

// Classifier-free guided score: (1 + gamma) S(x, c, sigma) - gamma
// S(x, NULL, sigma). gamma = 0 performs a single forward pass and returns the
// conditional score unchanged.
inline std::vector<real> guided_score(const DagNetwork& net,
                                      DagNetwork::Workspace& ws,
                                      std::span<const real> x,
                                      std::optional<int> label, real sigma,
                                      real gamma) {
  require_domain(std::isfinite(gamma) && gamma >= 0.0,
                 "guided_score: gamma must be >= 0");
  net.forward(ws, x, label, sigma);
  if (gamma == 0.0) return ws.y.v;
  std::vector<real> out = ws.y.v;
  net.forward(ws, x, std::nullopt, sigma);
  const std::vector<real>& uncond = ws.y.v;
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = (1.0 + gamma) * out[i] - gamma * uncond[i];
  }
  return out;
}

inline std::vector<real> guided_score(const DagNetwork& net,
                                      std::span<const real> x,
                                      std::optional<int> label, real sigma,
                                      real gamma) {
  DagNetwork::Workspace ws;
  return guided_score(net, ws, x, label, sigma, gamma);
}

inline std::vector<real> sample(const DagNetwork& net, std::optional<int> label,
                                std::size_t length, const NoiseSchedule& sch,
                                const SamplerConfig& cfg,
                                std::uint64_t run_index = 0,
                                std::vector<StepTrace>* trace = nullptr) {
  require_domain(length > 0 && length % net.config().stride_product() == 0,
                 "sample: length must be a positive multiple of " +
                     std::to_string(net.config().stride_product()));
  DagNetwork::Workspace ws;
  return sample_with(
      [&](const std::vector<real>& x, real sigma) {
        return guided_score(net, ws, x, label, sigma, cfg.gamma);
      },
      length, sch, cfg, run_index, trace);
}

// Style transfer: identical to sample() except the first iterate is
// x_1 = y + sigma_max * z.
inline std::vector<real> style_transfer(const DagNetwork& net,
                                        const std::vector<real>& y,
                                        std::optional<int> label,
                                        const NoiseSchedule& sch,
                                        const SamplerConfig& cfg,
                                        std::uint64_t run_index = 0,
                                        std::vector<StepTrace>* trace = nullptr) {
  require_domain(!y.empty() && y.size() % net.config().stride_product() == 0,
                 "style_transfer: input length must be a positive multiple of " +
                     std::to_string(net.config().stride_product()));
  DagNetwork::Workspace ws;
  return sample_with(
      [&](const std::vector<real>& x, real sigma) {
        return guided_score(net, ws, x, label, sigma, cfg.gamma);
      },
      y.size(), sch, cfg, run_index, trace, &y);
}

inline void write_trace_csv(const std::string& path,
                            const std::vector<StepTrace>& trace) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("trace: cannot open " + path);
  f << "level,sigma,sigma_prev,x0_peak_raw,x0_peak,x_peak,score_rms\n";
  for (const auto& t : trace) {
    f << t.level << ',' << t.sigma << ',' << t.sigma_prev << ','
      << t.x0_peak_raw << ',' << t.x0_peak << ',' << t.x_peak << ','
      << t.score_rms << '\n';
  }
}

}  // namespace dag
