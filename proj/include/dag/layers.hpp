#pragma once
// Primitive differentiable layers over channel-major feature maps.
//
// Conventions shared by every layer here and by the blocks built on top:
//   * forward(P, ...) reads parameters from the flat buffer P at offsets
//     registered in a ParamArena at construction time;
//   * backward(P, G, ...) ACCUMULATES parameter gradients into G and input
//     gradients into the provided dx / dcond buffers — callers zero them;
//   * layers are stateless between calls: anything backward needs beyond the
//     layer inputs lives in an explicit Cache filled by forward.

#include <Eigen/Dense>

#include <algorithm>
#include <cstddef>
#include <string>
#include <vector>

#include "dag/core.hpp"
#include "dag/params.hpp"

namespace dag {

// C x T feature map, each channel contiguous in time.
struct FMap {
  int ch = 0;
  int len = 0;
  std::vector<real> v;

  void resize(int c, int t) {
    ch = c;
    len = t;
    v.assign(static_cast<std::size_t>(c) * static_cast<std::size_t>(t), 0.0);
  }
  void zero() { std::fill(v.begin(), v.end(), 0.0); }
  real* row(int c) { return v.data() + static_cast<std::size_t>(c) * len; }
  const real* row(int c) const {
    return v.data() + static_cast<std::size_t>(c) * len;
  }
};

namespace detail {
using MatC = Eigen::Map<const Eigen::Matrix<real, Eigen::Dynamic, Eigen::Dynamic,
                                            Eigen::RowMajor>>;
using MatM = Eigen::Map<Eigen::Matrix<real, Eigen::Dynamic, Eigen::Dynamic,
                                      Eigen::RowMajor>>;
using VecC = Eigen::Map<const Eigen::VectorXd>;
using VecM = Eigen::Map<Eigen::VectorXd>;
}  // namespace detail

// ---------------------------------------------------------------------------
// 1-D convolution with stride, dilation, and (a)symmetric zero padding.
// Weight layout: W[out][in][tap].
class Conv1d {
 public:
  Conv1d() = default;
  Conv1d(ParamArena& arena, const std::string& name, int in_ch, int out_ch,
         int kernel, int stride = 1, int dilation = 1, int pad_left = -1,
         int pad_right = -1)
      : in_(in_ch), out_(out_ch), k_(kernel), stride_(stride), dil_(dilation) {
    require_config(in_ch > 0 && out_ch > 0 && kernel > 0 && stride > 0 && dilation > 0,
                   "Conv1d " + name + ": sizes must be positive");
    if (pad_left < 0 || pad_right < 0) {
      // "Same" padding: output length T / stride for stride-divisible T.
      int total = std::max(0, (k_ - 1) * dil_ + 1 - stride_);
      pl_ = total / 2;
      pr_ = total - pl_;
    } else {
      pl_ = pad_left;
      pr_ = pad_right;
    }
    w_off_ = arena.add(name + ".w",
                       static_cast<std::size_t>(out_) * in_ * k_);
    b_off_ = arena.add(name + ".b", static_cast<std::size_t>(out_));
  }

  int in_ch() const { return in_; }
  int out_ch() const { return out_; }
  int kernel() const { return k_; }
  int stride() const { return stride_; }

  int out_len(int in_len) const {
    int span = (k_ - 1) * dil_ + 1;
    int num = in_len + pl_ + pr_ - span;
    require_domain(num >= 0, "Conv1d: input shorter than receptive span");
    return num / stride_ + 1;
  }

  void init(real* P, Prng& rng) const {
    real std = std::sqrt(1.0 / (static_cast<real>(in_) * k_));
    real* W = P + w_off_;
    for (std::size_t i = 0; i < static_cast<std::size_t>(out_) * in_ * k_; ++i) {
      W[i] = std * rng.normal();
    }
    std::fill(P + b_off_, P + b_off_ + out_, 0.0);
  }

  void forward(const real* P, const FMap& x, FMap& y) const {
    require_domain(x.ch == in_, "Conv1d: channel mismatch");
    const int T = x.len;
    const int To = out_len(T);
    y.resize(out_, To);
    const real* W = P + w_off_;
    const real* B = P + b_off_;
    for (int o = 0; o < out_; ++o) {
      real* yr = y.row(o);
      std::fill(yr, yr + To, B[o]);
      for (int i = 0; i < in_; ++i) {
        const real* xr = x.row(i);
        const real* Wr = W + (static_cast<std::size_t>(o) * in_ + i) * k_;
        for (int j = 0; j < k_; ++j) {
          const real w = Wr[j];
          int base = j * dil_ - pl_;
          int t0, t1;
          tap_range(base, T, To, t0, t1);
          if (stride_ == 1) {
            const real* xs = xr + base;
            for (int t = t0; t <= t1; ++t) yr[t] += w * xs[t];
          } else {
            for (int t = t0; t <= t1; ++t) {
              yr[t] += w * xr[static_cast<std::size_t>(t) * stride_ + base];
            }
          }
        }
      }
    }
  }

  void backward(const real* P, real* G, const FMap& x, const FMap& dy,
                FMap* dx) const {
    const int T = x.len;
    const int To = dy.len;
    const real* W = P + w_off_;
    real* gW = G + w_off_;
    real* gB = G + b_off_;
    for (int o = 0; o < out_; ++o) {
      const real* dyr = dy.row(o);
      real acc = 0.0;
      for (int t = 0; t < To; ++t) acc += dyr[t];
      gB[o] += acc;
      for (int i = 0; i < in_; ++i) {
        const real* xr = x.row(i);
        real* dxr = dx ? dx->row(i) : nullptr;
        const std::size_t base_idx = (static_cast<std::size_t>(o) * in_ + i) * k_;
        for (int j = 0; j < k_; ++j) {
          int base = j * dil_ - pl_;
          int t0, t1;
          tap_range(base, T, To, t0, t1);
          real gw = 0.0;
          if (stride_ == 1) {
            const real* xs = xr + base;
            for (int t = t0; t <= t1; ++t) gw += dyr[t] * xs[t];
          } else {
            for (int t = t0; t <= t1; ++t) {
              gw += dyr[t] * xr[static_cast<std::size_t>(t) * stride_ + base];
            }
          }
          gW[base_idx + j] += gw;
          if (dxr) {
            const real w = W[base_idx + j];
            if (stride_ == 1) {
              real* dxs = dxr + base;
              for (int t = t0; t <= t1; ++t) dxs[t] += w * dyr[t];
            } else {
              for (int t = t0; t <= t1; ++t) {
                dxr[static_cast<std::size_t>(t) * stride_ + base] += w * dyr[t];
              }
            }
          }
        }
      }
    }
  }

 private:
  // Valid output range [t0, t1] for a tap whose input index is t*stride + base.
  void tap_range(int base, int T, int To, int& t0, int& t1) const {
    t0 = base < 0 ? (-base + stride_ - 1) / stride_ : 0;
    long long hi = static_cast<long long>(T) - 1 - base;
    t1 = hi < 0 ? -1 : static_cast<int>(std::min<long long>(To - 1, hi / stride_));
  }

  int in_ = 0, out_ = 0, k_ = 0, stride_ = 1, dil_ = 1, pl_ = 0, pr_ = 0;
  std::size_t w_off_ = 0, b_off_ = 0;
};

// ---------------------------------------------------------------------------
// 1-D transposed convolution (upsampling by `stride`). Weight layout:
// W[in][out][tap]. The full overlap-add buffer of length (T-1)*stride + k is
// trimmed by (trim_left, trim_right) so that k = 2*stride yields exactly
// T*stride outputs.
class ConvTranspose1d {
 public:
  ConvTranspose1d() = default;
  ConvTranspose1d(ParamArena& arena, const std::string& name, int in_ch,
                  int out_ch, int kernel, int stride)
      : in_(in_ch), out_(out_ch), k_(kernel), stride_(stride) {
    require_config(in_ch > 0 && out_ch > 0 && stride > 0 && kernel >= stride,
                   "ConvTranspose1d " + name + ": kernel must cover stride");
    int total = k_ - stride_;
    trim_l_ = total / 2;
    trim_r_ = total - trim_l_;
    w_off_ = arena.add(name + ".w",
                       static_cast<std::size_t>(in_) * out_ * k_);
    b_off_ = arena.add(name + ".b", static_cast<std::size_t>(out_));
  }

  int out_len(int in_len) const {
    return (in_len - 1) * stride_ + k_ - trim_l_ - trim_r_;
  }

  void init(real* P, Prng& rng) const {
    real std = std::sqrt(1.0 / (static_cast<real>(in_) * k_));
    real* W = P + w_off_;
    for (std::size_t i = 0; i < static_cast<std::size_t>(in_) * out_ * k_; ++i) {
      W[i] = std * rng.normal();
    }
    std::fill(P + b_off_, P + b_off_ + out_, 0.0);
  }

  void forward(const real* P, const FMap& x, FMap& y) const {
    require_domain(x.ch == in_, "ConvTranspose1d: channel mismatch");
    const int T = x.len;
    const int Lf = (T - 1) * stride_ + k_;
    const int To = out_len(T);
    const real* W = P + w_off_;
    const real* B = P + b_off_;
    std::vector<real> full(static_cast<std::size_t>(out_) * Lf, 0.0);
    for (int i = 0; i < in_; ++i) {
      const real* xr = x.row(i);
      for (int o = 0; o < out_; ++o) {
        real* fr = full.data() + static_cast<std::size_t>(o) * Lf;
        const real* Wr = W + (static_cast<std::size_t>(i) * out_ + o) * k_;
        for (int t = 0; t < T; ++t) {
          const real v = xr[t];
          real* fs = fr + static_cast<std::size_t>(t) * stride_;
          for (int j = 0; j < k_; ++j) fs[j] += Wr[j] * v;
        }
      }
    }
    y.resize(out_, To);
    for (int o = 0; o < out_; ++o) {
      const real* fr = full.data() + static_cast<std::size_t>(o) * Lf + trim_l_;
      real* yr = y.row(o);
      const real b = B[o];
      for (int u = 0; u < To; ++u) yr[u] = fr[u] + b;
    }
  }

  void backward(const real* P, real* G, const FMap& x, const FMap& dy,
                FMap* dx) const {
    const int T = x.len;
    const int Lf = (T - 1) * stride_ + k_;
    const int To = dy.len;
    const real* W = P + w_off_;
    real* gW = G + w_off_;
    real* gB = G + b_off_;
    std::vector<real> dfull(static_cast<std::size_t>(out_) * Lf, 0.0);
    for (int o = 0; o < out_; ++o) {
      const real* dyr = dy.row(o);
      real* dfr = dfull.data() + static_cast<std::size_t>(o) * Lf + trim_l_;
      real acc = 0.0;
      for (int u = 0; u < To; ++u) {
        dfr[u] = dyr[u];
        acc += dyr[u];
      }
      gB[o] += acc;
    }
    for (int i = 0; i < in_; ++i) {
      const real* xr = x.row(i);
      real* dxr = dx ? dx->row(i) : nullptr;
      for (int o = 0; o < out_; ++o) {
        const real* dfr = dfull.data() + static_cast<std::size_t>(o) * Lf;
        const std::size_t base_idx = (static_cast<std::size_t>(i) * out_ + o) * k_;
        for (int t = 0; t < T; ++t) {
          const real* dfs = dfr + static_cast<std::size_t>(t) * stride_;
          const real xv = xr[t];
          real dxv = 0.0;
          for (int j = 0; j < k_; ++j) {
            gW[base_idx + j] += xv * dfs[j];
            dxv += W[base_idx + j] * dfs[j];
          }
          if (dxr) dxr[t] += dxv;
        }
      }
    }
  }

 private:
  int in_ = 0, out_ = 0, k_ = 0, stride_ = 1, trim_l_ = 0, trim_r_ = 0;
  std::size_t w_off_ = 0, b_off_ = 0;
};

// ---------------------------------------------------------------------------
// Dense layer y = W x + b with row-major W (out, in).
class Linear {
 public:
  Linear() = default;
  Linear(ParamArena& arena, const std::string& name, int in_dim, int out_dim)
      : in_(in_dim), out_(out_dim) {
    require_config(in_dim > 0 && out_dim > 0,
                   "Linear " + name + ": sizes must be positive");
    w_off_ = arena.add(name + ".w", static_cast<std::size_t>(out_) * in_);
    b_off_ = arena.add(name + ".b", static_cast<std::size_t>(out_));
  }

  int in_dim() const { return in_; }
  int out_dim() const { return out_; }

  void init(real* P, Prng& rng) const {
    real std = std::sqrt(1.0 / static_cast<real>(in_));
    real* W = P + w_off_;
    for (std::size_t i = 0; i < static_cast<std::size_t>(out_) * in_; ++i) {
      W[i] = std * rng.normal();
    }
    std::fill(P + b_off_, P + b_off_ + out_, 0.0);
  }

  // Single vector: y (out) = W x (in) + b.
  void forward_vec(const real* P, const real* x, real* y) const {
    detail::MatC W(P + w_off_, out_, in_);
    detail::VecC xv(x, in_);
    detail::VecC bv(P + b_off_, out_);
    detail::VecM yv(y, out_);
    yv.noalias() = W * xv;
    yv += bv;
  }

  // Accumulating backward for a single vector.
  void backward_vec(const real* P, real* G, const real* x, const real* dy,
                    real* dx) const {
    detail::MatC W(P + w_off_, out_, in_);
    detail::MatM gW(G + w_off_, out_, in_);
    detail::VecM gB(G + b_off_, out_);
    detail::VecC xv(x, in_);
    detail::VecC dyv(dy, out_);
    gW.noalias() += dyv * xv.transpose();
    gB += dyv;
    if (dx) {
      detail::VecM dxv(dx, in_);
      dxv.noalias() += W.transpose() * dyv;
    }
  }

  // Batched rows: X (T, in) row-major -> Y (T, out).
  void forward_mat(const real* P, const real* X, int T, real* Y) const {
    detail::MatC W(P + w_off_, out_, in_);
    detail::MatC Xm(X, T, in_);
    detail::MatM Ym(Y, T, out_);
    detail::VecC bv(P + b_off_, out_);
    Ym.noalias() = Xm * W.transpose();
    Ym.rowwise() += bv.transpose();
  }

  void backward_mat(const real* P, real* G, const real* X, int T,
                    const real* dY, real* dX) const {
    detail::MatC W(P + w_off_, out_, in_);
    detail::MatC Xm(X, T, in_);
    detail::MatC dYm(dY, T, out_);
    detail::MatM gW(G + w_off_, out_, in_);
    detail::VecM gB(G + b_off_, out_);
    gW.noalias() += dYm.transpose() * Xm;
    gB += dYm.colwise().sum().transpose();
    if (dX) {
      detail::MatM dXm(dX, T, in_);
      dXm.noalias() += dYm * W;
    }
  }

 private:
  int in_ = 0, out_ = 0;
  std::size_t w_off_ = 0, b_off_ = 0;
};

// ---------------------------------------------------------------------------
// Leaky ReLU. The positive slope (1) and the leak are both sign-preserving,
// so backward recovers the activation mask from the forward output.
inline void leaky_forward(std::span<real> x, real slope) {
  for (real& v : x) {
    if (v < 0.0) v *= slope;
  }
}

inline void leaky_backward(std::span<const real> y, std::span<real> dy,
                           real slope) {
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (y[i] < 0.0) dy[i] *= slope;
  }
}

inline void leaky_forward(FMap& x, real slope) {
  leaky_forward(std::span<real>(x.v), slope);
}

inline void leaky_backward(const FMap& y, FMap& dy, real slope) {
  leaky_backward(std::span<const real>(y.v), std::span<real>(dy.v), slope);
}

// ---------------------------------------------------------------------------
// Feature-wise linear modulation: per-channel scale and shift computed from a
// conditioning vector. Initialized to the identity map (scale bias 1, shift 0,
// small weights) so conditioning ramps in smoothly during training.
class Film {
 public:
  Film() = default;
  Film(ParamArena& arena, const std::string& name, int cond_dim, int channels)
      : cond_(cond_dim), ch_(channels) {
    ws_off_ = arena.add(name + ".ws", static_cast<std::size_t>(ch_) * cond_);
    bs_off_ = arena.add(name + ".bs", static_cast<std::size_t>(ch_));
    wh_off_ = arena.add(name + ".wh", static_cast<std::size_t>(ch_) * cond_);
    bh_off_ = arena.add(name + ".bh", static_cast<std::size_t>(ch_));
  }

  struct Cache {
    std::vector<real> scale;
  };

  void init(real* P, Prng& rng) const {
    real std = 0.1 / std::sqrt(static_cast<real>(cond_));
    for (std::size_t i = 0; i < static_cast<std::size_t>(ch_) * cond_; ++i) {
      P[ws_off_ + i] = std * rng.normal();
    }
    std::fill(P + bs_off_, P + bs_off_ + ch_, 1.0);
    for (std::size_t i = 0; i < static_cast<std::size_t>(ch_) * cond_; ++i) {
      P[wh_off_ + i] = std * rng.normal();
    }
    std::fill(P + bh_off_, P + bh_off_ + ch_, 0.0);
  }

  void forward(const real* P, const real* cond, const FMap& x, FMap& y,
               Cache& cache) const {
    require_domain(x.ch == ch_, "Film: channel mismatch");
    cache.scale.resize(ch_);
    std::vector<real> shift(ch_);
    gemv(P + ws_off_, P + bs_off_, cond, cache.scale.data());
    gemv(P + wh_off_, P + bh_off_, cond, shift.data());
    y.resize(ch_, x.len);
    for (int c = 0; c < ch_; ++c) {
      const real s = cache.scale[c];
      const real h = shift[c];
      const real* xr = x.row(c);
      real* yr = y.row(c);
      for (int t = 0; t < x.len; ++t) yr[t] = s * xr[t] + h;
    }
  }

  void backward(const real* P, real* G, const real* cond, const FMap& x,
                const Cache& cache, const FMap& dy, FMap& dx,
                real* dcond) const {
    std::vector<real> dscale(ch_), dshift(ch_);
    for (int c = 0; c < ch_; ++c) {
      const real* xr = x.row(c);
      const real* dyr = dy.row(c);
      real* dxr = dx.row(c);
      const real s = cache.scale[c];
      real ds = 0.0, dh = 0.0;
      for (int t = 0; t < x.len; ++t) {
        ds += dyr[t] * xr[t];
        dh += dyr[t];
        dxr[t] += s * dyr[t];
      }
      dscale[c] = ds;
      dshift[c] = dh;
    }
    gemv_back(P + ws_off_, G + ws_off_, G + bs_off_, cond, dscale.data(), dcond);
    gemv_back(P + wh_off_, G + wh_off_, G + bh_off_, cond, dshift.data(), dcond);
  }

 private:
  void gemv(const real* W, const real* b, const real* cond, real* out) const {
    detail::MatC Wm(W, ch_, cond_);
    detail::VecC cv(cond, cond_);
    detail::VecM ov(out, ch_);
    ov.noalias() = Wm * cv;
    ov += detail::VecC(b, ch_);
  }

  void gemv_back(const real* W, real* gW, real* gB, const real* cond,
                 const real* dout, real* dcond) const {
    detail::MatC Wm(W, ch_, cond_);
    detail::MatM gWm(gW, ch_, cond_);
    detail::VecC cv(cond, cond_);
    detail::VecC dv(dout, ch_);
    gWm.noalias() += dv * cv.transpose();
    detail::VecM(gB, ch_) += dv;
    if (dcond) {
      detail::VecM dcv(dcond, cond_);
      dcv.noalias() += Wm.transpose() * dv;
    }
  }

  int cond_ = 0, ch_ = 0;
  std::size_t ws_off_ = 0, bs_off_ = 0, wh_off_ = 0, bh_off_ = 0;
};

// ---------------------------------------------------------------------------
// Parameter-free resamplers used on residual skip paths.

// Mean pooling by an integer factor; input length must be divisible.
inline void pool_down(const FMap& x, int factor, FMap& y) {
  require_domain(factor >= 1 && x.len % factor == 0,
                 "pool_down: length not divisible by factor");
  const int To = x.len / factor;
  y.resize(x.ch, To);
  const real inv = 1.0 / factor;
  for (int c = 0; c < x.ch; ++c) {
    const real* xr = x.row(c);
    real* yr = y.row(c);
    for (int u = 0; u < To; ++u) {
      real s = 0.0;
      const real* xs = xr + static_cast<std::size_t>(u) * factor;
      for (int j = 0; j < factor; ++j) s += xs[j];
      yr[u] = s * inv;
    }
  }
}

inline void pool_down_backward(const FMap& dy, int factor, FMap& dx) {
  const real inv = 1.0 / factor;
  for (int c = 0; c < dy.ch; ++c) {
    const real* dyr = dy.row(c);
    real* dxr = dx.row(c);
    for (int u = 0; u < dy.len; ++u) {
      const real g = dyr[u] * inv;
      real* dxs = dxr + static_cast<std::size_t>(u) * factor;
      for (int j = 0; j < factor; ++j) dxs[j] += g;
    }
  }
}

// Linear-interpolation upsampling by an integer factor (last frame held).
inline void lerp_up(const FMap& x, int factor, FMap& y) {
  require_domain(factor >= 1, "lerp_up: factor must be >= 1");
  const int To = x.len * factor;
  y.resize(x.ch, To);
  for (int c = 0; c < x.ch; ++c) {
    const real* xr = x.row(c);
    real* yr = y.row(c);
    for (int u = 0; u < x.len; ++u) {
      const real a = xr[u];
      const real b = (u + 1 < x.len) ? xr[u + 1] : xr[x.len - 1];
      real* ys = yr + static_cast<std::size_t>(u) * factor;
      for (int r = 0; r < factor; ++r) {
        const real f = static_cast<real>(r) / factor;
        ys[r] = a * (1.0 - f) + b * f;
      }
    }
  }
}

inline void lerp_up_backward(const FMap& dy, int factor, FMap& dx) {
  const int Ti = dy.len / factor;
  for (int c = 0; c < dy.ch; ++c) {
    const real* dyr = dy.row(c);
    real* dxr = dx.row(c);
    for (int u = 0; u < Ti; ++u) {
      const real* dys = dyr + static_cast<std::size_t>(u) * factor;
      for (int r = 0; r < factor; ++r) {
        const real f = static_cast<real>(r) / factor;
        dxr[u] += dys[r] * (1.0 - f);
        if (u + 1 < Ti) {
          dxr[u + 1] += dys[r] * f;
        } else {
          dxr[u] += dys[r] * f;
        }
      }
    }
  }
}

}  // namespace dag
