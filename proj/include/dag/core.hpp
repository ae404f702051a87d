#pragma once
// Shared scalar type, error hierarchy, and the deterministic RNG used across
// the library. Every stochastic consumer derives an independent stream from
// (seed, tag, a, b) via Prng::stream, so reruns with the same seed are
// bit-identical regardless of call interleaving.

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace dag {

using real = double;

// Argument outside an operation's stated domain.
class DomainError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Training-time failure (divergence, non-finite loss).
class TrainError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Sampling-time failure (non-finite iterate).
class SampleError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// File-format / serialization failure.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Inconsistent or invalid configuration.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require_domain(bool ok, const std::string& msg) {
  if (!ok) throw DomainError(msg);
}

inline void require_config(bool ok, const std::string& msg) {
  if (!ok) throw ConfigError(msg);
}

namespace stream {
// Fixed tags for RNG stream derivation. The (a, b) meaning per tag:
//   kParamInit    (0, 0)               parameter initialization walk
//   kTrainNoise   (step, example)      per-example t, z draws in a train step
//   kCfgDropout   (step, example)      label-dropout coin flips
//   kCrop         (step, example)      crop offsets in a train batch
//   kDataOrder    (epoch, 0)           shuffle permutation of the train split
//   kValNoise     (example, t_index)   validation noise draws
//   kSamplerInit  (run, 0)             initial x draw of a sampling run
//   kSamplerStep  (run, step)          per-step noise of a sampling run
//   kSplit        (0, 0)               train/val stratified split
enum : std::uint64_t {
  kParamInit = 1,
  kTrainNoise = 2,
  kCfgDropout = 3,
  kCrop = 4,
  kDataOrder = 5,
  kValNoise = 6,
  kSamplerInit = 7,
  kSamplerStep = 8,
  kSplit = 9,
};
}  // namespace stream

inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Counter-style splittable PRNG. Uniforms come from splitmix64; normals from
// Box-Muller. Streams derived with distinct (seed, tag, a, b) are
// statistically independent for practical purposes.
class Prng {
 public:
  explicit Prng(std::uint64_t seed) : state_(seed) {
    // One warm-up round so that nearby seeds decorrelate immediately.
    (void)splitmix64(state_);
  }

  static Prng stream(std::uint64_t seed, std::uint64_t tag, std::uint64_t a = 0,
                     std::uint64_t b = 0) {
    std::uint64_t s = seed;
    s = mix(s, tag);
    s = mix(s, a);
    s = mix(s, b);
    return Prng(s);
  }

  std::uint64_t next_u64() { return splitmix64(state_); }

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform in (0, 1]; safe as a log() argument.
  double uniform_pos() {
    return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
  }

  // Unbiased integer in [0, n); n must be positive.
  std::uint64_t uniform_below(std::uint64_t n) {
    require_domain(n > 0, "uniform_below: n must be positive");
    // Lemire's multiply-shift with rejection.
    unsigned __int128 m =
        static_cast<unsigned __int128>(next_u64()) * static_cast<unsigned __int128>(n);
    auto lo = static_cast<std::uint64_t>(m);
    if (lo < n) {
      std::uint64_t t = (0 - n) % n;
      while (lo < t) {
        m = static_cast<unsigned __int128>(next_u64()) * static_cast<unsigned __int128>(n);
        lo = static_cast<std::uint64_t>(m);
      }
    }
    return static_cast<std::uint64_t>(m >> 64);
  }

  // Standard normal via Box-Muller (caches the second draw).
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform_pos();
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 2.0 * std::numbers::pi_v<double> * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  void fill_normal(std::span<real> out) {
    for (real& v : out) v = normal();
  }

  // In-place Fisher-Yates shuffle.
  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = uniform_below(i);
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  static std::uint64_t mix(std::uint64_t h, std::uint64_t v) {
    // Spread the absorbed word across all bits multiplicatively before
    // finalizing; adjacent small words (step or item counters) must land in
    // unrelated states even in the top bits that uniform_below() consumes.
    std::uint64_t x = h + 0x9e3779b97f4a7c15ULL * (v + 1);
    x = (x ^ (x >> 33)) * 0xff51afd7ed558ccdULL;
    x = (x ^ (x >> 33)) * 0xc4ceb9fe1a85ec53ULL;
    x ^= x >> 33;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
  }

  std::uint64_t state_ = 0;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

inline real peak_abs(std::span<const real> x) {
  real p = 0.0;
  for (real v : x) p = std::max(p, std::abs(v));
  return p;
}

inline bool all_finite(std::span<const real> x) {
  for (real v : x) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

}  // namespace dag
