#pragma once
// Small signal-processing toolkit: radix-2 FFT, Hann-windowed short-time
// power spectra, a 64-band log-mel front-end, spectral centroid, and a
// windowed-sinc rational resampler (cutoff 0.9 * output Nyquist).

#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <numeric>
#include <span>
#include <vector>

#include "dag/core.hpp"

namespace dag {

using cplx = std::complex<real>;

inline bool is_pow2(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

inline std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

// In-place iterative radix-2 Cooley-Tukey. inverse=true applies the 1/n
// scaling so ifft(fft(x)) == x.
inline void fft_inplace(std::vector<cplx>& a, bool inverse = false) {
  const std::size_t n = a.size();
  require_domain(is_pow2(n), "fft: length must be a power of two");
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const real ang =
        2.0 * std::numbers::pi_v<real> / static_cast<real>(len) * (inverse ? 1.0 : -1.0);
    const cplx wl(std::cos(ang), std::sin(ang));
    for (std::size_t i = 0; i < n; i += len) {
      cplx w(1.0, 0.0);
      for (std::size_t k = 0; k < len / 2; ++k) {
        const cplx u = a[i + k];
        const cplx v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wl;
      }
    }
  }
  if (inverse) {
    const real inv = 1.0 / static_cast<real>(n);
    for (cplx& v : a) v *= inv;
  }
}

inline std::vector<cplx> fft(std::span<const real> x, std::size_t n) {
  require_domain(is_pow2(n) && n >= x.size(), "fft: bad transform size");
  std::vector<cplx> a(n, cplx(0.0, 0.0));
  for (std::size_t i = 0; i < x.size(); ++i) a[i] = cplx(x[i], 0.0);
  fft_inplace(a);
  return a;
}

inline std::vector<real> hann_window(std::size_t n) {
  std::vector<real> w(n);
  for (std::size_t i = 0; i < n; ++i) {
    w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi_v<real> *
                                static_cast<real>(i) / static_cast<real>(n));
  }
  return w;
}

// Hann-windowed one-sided power spectra, one row per frame (n_fft/2 + 1 bins).
struct Spectrogram {
  std::size_t n_fft = 0;
  int sample_rate = 0;
  std::vector<std::vector<real>> frames;

  real bin_hz(std::size_t k) const {
    return static_cast<real>(sample_rate) * static_cast<real>(k) /
           static_cast<real>(n_fft);
  }
};

inline Spectrogram power_spectrogram(std::span<const real> x, int sample_rate,
                                     std::size_t win, std::size_t hop) {
  require_domain(win >= 2 && hop >= 1, "spectrogram: bad window/hop");
  require_domain(sample_rate > 0, "spectrogram: bad sample rate");
  Spectrogram out;
  out.n_fft = next_pow2(win);
  out.sample_rate = sample_rate;
  const std::vector<real> w = hann_window(win);
  std::vector<real> buf(win);
  // A clip shorter than one window still yields a single zero-padded frame.
  const std::size_t n_frames =
      x.size() >= win ? 1 + (x.size() - win) / hop : 1;
  out.frames.reserve(n_frames);
  for (std::size_t f = 0; f < n_frames; ++f) {
    const std::size_t start = f * hop;
    for (std::size_t i = 0; i < win; ++i) {
      const std::size_t j = start + i;
      buf[i] = j < x.size() ? x[j] * w[i] : 0.0;
    }
    std::vector<cplx> spec = fft(buf, out.n_fft);
    std::vector<real> row(out.n_fft / 2 + 1);
    for (std::size_t k = 0; k < row.size(); ++k) row[k] = std::norm(spec[k]);
    out.frames.push_back(std::move(row));
  }
  return out;
}

inline real hz_to_mel(real f) { return 2595.0 * std::log10(1.0 + f / 700.0); }
inline real mel_to_hz(real m) {
  return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0);
}

// Triangular mel filterbank over the one-sided spectrum, spanning 0 Hz to
// Nyquist. Returns bands x bins weights.
inline std::vector<std::vector<real>> mel_filterbank(int bands,
                                                     std::size_t n_fft,
                                                     int sample_rate) {
  require_domain(bands >= 1, "mel_filterbank: bands must be >= 1");
  const std::size_t bins = n_fft / 2 + 1;
  const real mel_max = hz_to_mel(static_cast<real>(sample_rate) / 2.0);
  std::vector<real> edges(static_cast<std::size_t>(bands) + 2);
  for (std::size_t i = 0; i < edges.size(); ++i) {
    edges[i] = mel_to_hz(mel_max * static_cast<real>(i) /
                         static_cast<real>(bands + 1));
  }
  std::vector<std::vector<real>> fb(static_cast<std::size_t>(bands),
                                    std::vector<real>(bins, 0.0));
  for (int b = 0; b < bands; ++b) {
    const real lo = edges[static_cast<std::size_t>(b)];
    const real mid = edges[static_cast<std::size_t>(b) + 1];
    const real hi = edges[static_cast<std::size_t>(b) + 2];
    for (std::size_t k = 0; k < bins; ++k) {
      const real f = static_cast<real>(sample_rate) * static_cast<real>(k) /
                     static_cast<real>(n_fft);
      if (f <= lo || f >= hi) continue;
      fb[static_cast<std::size_t>(b)][k] =
          f <= mid ? (f - lo) / (mid - lo) : (hi - f) / (hi - mid);
    }
  }
  return fb;
}

// Log-mel frames: 25 ms window, 10 ms hop, `bands` triangular filters,
// log(power + 1e-10).
inline std::vector<std::vector<real>> log_mel_frames(std::span<const real> x,
                                                     int sample_rate,
                                                     int bands) {
  const std::size_t win =
      static_cast<std::size_t>(std::lround(0.025 * sample_rate));
  const std::size_t hop =
      static_cast<std::size_t>(std::lround(0.010 * sample_rate));
  Spectrogram sg = power_spectrogram(x, sample_rate, win, hop);
  const auto fb = mel_filterbank(bands, sg.n_fft, sample_rate);
  std::vector<std::vector<real>> out(sg.frames.size(),
                                     std::vector<real>(static_cast<std::size_t>(bands)));
  for (std::size_t f = 0; f < sg.frames.size(); ++f) {
    for (std::size_t b = 0; b < fb.size(); ++b) {
      real acc = 0.0;
      for (std::size_t k = 0; k < fb[b].size(); ++k) {
        acc += fb[b][k] * sg.frames[f][k];
      }
      out[f][b] = std::log(acc + 1e-10);
    }
  }
  return out;
}

// Energy-weighted average spectral centroid in Hz over 25 ms / 10 ms frames.
inline real spectral_centroid(std::span<const real> x, int sample_rate) {
  const std::size_t win =
      static_cast<std::size_t>(std::lround(0.025 * sample_rate));
  const std::size_t hop =
      static_cast<std::size_t>(std::lround(0.010 * sample_rate));
  Spectrogram sg = power_spectrogram(x, sample_rate, win, hop);
  real num = 0.0, den = 0.0;
  for (const auto& row : sg.frames) {
    for (std::size_t k = 0; k < row.size(); ++k) {
      num += sg.bin_hz(k) * row[k];
      den += row[k];
    }
  }
  return den > 0.0 ? num / den : 0.0;
}

namespace detail {
inline real sinc(real u) {
  if (u == 0.0) return 1.0;
  const real pu = std::numbers::pi_v<real> * u;
  return std::sin(pu) / pu;
}
inline real blackman(real t) {  // t in [-1, 1]
  const real c = std::numbers::pi_v<real> * (t + 1.0);
  return 0.42 - 0.5 * std::cos(c) + 0.08 * std::cos(2.0 * c);
}
}  // namespace detail

// Rational resampling by p/q with a Blackman-windowed sinc kernel cut off at
// 0.9 of the tighter Nyquist. Output length is ceil(n * p / q).
inline std::vector<real> resample(std::span<const real> x, int p, int q) {
  require_domain(p >= 1 && q >= 1, "resample: factors must be positive");
  const int g = std::gcd(p, q);
  p /= g;
  q /= g;
  if (x.empty()) return {};
  const std::size_t out_len = static_cast<std::size_t>(
      (x.size() * static_cast<std::size_t>(p) + static_cast<std::size_t>(q) - 1) /
      static_cast<std::size_t>(q));
  if (p == q) return std::vector<real>(x.begin(), x.end());

  // Cutoff in cycles per input sample; downsampling narrows it by p/q.
  const real ratio = static_cast<real>(p) / static_cast<real>(q);
  const real fc = 0.9 * 0.5 * std::min(1.0, ratio);
  const real half_width = 32.0 * std::max(1.0, 1.0 / ratio);
  std::vector<real> y(out_len, 0.0);
  for (std::size_t m = 0; m < out_len; ++m) {
    const real t = static_cast<real>(m) / ratio;  // input-sample position
    const auto j0 = static_cast<std::ptrdiff_t>(std::ceil(t - half_width));
    const auto j1 = static_cast<std::ptrdiff_t>(std::floor(t + half_width));
    real acc = 0.0;
    for (std::ptrdiff_t j = std::max<std::ptrdiff_t>(0, j0);
         j <= std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(x.size()) - 1, j1);
         ++j) {
      const real u = t - static_cast<real>(j);
      acc += x[static_cast<std::size_t>(j)] * 2.0 * fc * detail::sinc(2.0 * fc * u) *
             detail::blackman(u / half_width);
    }
    y[m] = acc;
  }
  return y;
}

}  // namespace dag
