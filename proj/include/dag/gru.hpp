#pragma once
// Gated recurrent units with exact backpropagation through time. Gate order
// and parameter layout follow the common (r, z, n) convention:
//   r = sigmoid(Wi_r x + bi_r + Wh_r h + bh_r)
//   z = sigmoid(Wi_z x + bi_z + Wh_z h + bh_z)
//   n = tanh  (Wi_n x + bi_n + r .* (Wh_n h + bh_n))
//   h' = (1 - z) .* n + z .* h
// Sequences are dense row-major (T, dim) buffers.

#include <cstddef>
#include <string>
#include <vector>

#include "dag/core.hpp"
#include "dag/layers.hpp"
#include "dag/params.hpp"

namespace dag {

class Gru {
 public:
  Gru() = default;
  Gru(ParamArena& arena, const std::string& name, int input_dim, int hidden)
      : d_(input_dim), h_(hidden) {
    wi_off_ = arena.add(name + ".wi", static_cast<std::size_t>(3) * h_ * d_);
    wh_off_ = arena.add(name + ".wh", static_cast<std::size_t>(3) * h_ * h_);
    bi_off_ = arena.add(name + ".bi", static_cast<std::size_t>(3) * h_);
    bh_off_ = arena.add(name + ".bh", static_cast<std::size_t>(3) * h_);
  }

  int input_dim() const { return d_; }
  int hidden() const { return h_; }

  void init(real* P, Prng& rng) const {
    // Uniform(-1/sqrt(H), 1/sqrt(H)) for all weights and biases.
    const real bound = 1.0 / std::sqrt(static_cast<real>(h_));
    auto fill = [&](std::size_t off, std::size_t n) {
      for (std::size_t i = 0; i < n; ++i) {
        P[off + i] = bound * (2.0 * rng.uniform() - 1.0);
      }
    };
    fill(wi_off_, static_cast<std::size_t>(3) * h_ * d_);
    fill(wh_off_, static_cast<std::size_t>(3) * h_ * h_);
    fill(bi_off_, static_cast<std::size_t>(3) * h_);
    fill(bh_off_, static_cast<std::size_t>(3) * h_);
  }

  // Per-timestep values backward needs, stored in processing order.
  struct Cache {
    std::vector<real> r, z, n, ghn;  // each (T, H)
    void resize(int T, int H) {
      const std::size_t n_ = static_cast<std::size_t>(T) * H;
      r.assign(n_, 0.0);
      z.assign(n_, 0.0);
      n.assign(n_, 0.0);
      ghn.assign(n_, 0.0);
    }
  };

  // X: (T, D); Y: (T, H) hidden states in sequence order. The initial hidden
  // state is zero. `reverse` processes the sequence right-to-left.
  void forward(const real* P, const real* X, int T, bool reverse, real* Y,
               Cache* cache) const {
    detail::MatC Wi(P + wi_off_, 3 * h_, d_);
    detail::MatC Wh(P + wh_off_, 3 * h_, h_);
    detail::VecC bi(P + bi_off_, 3 * h_);
    detail::VecC bh(P + bh_off_, 3 * h_);
    if (cache) cache->resize(T, h_);
    Eigen::VectorXd gi(3 * h_), gh(3 * h_), hprev = Eigen::VectorXd::Zero(h_);
    for (int step = 0; step < T; ++step) {
      const int t = reverse ? T - 1 - step : step;
      detail::VecC xt(X + static_cast<std::size_t>(t) * d_, d_);
      gi.noalias() = Wi * xt;
      gi += bi;
      gh.noalias() = Wh * hprev;
      gh += bh;
      real* yt = Y + static_cast<std::size_t>(t) * h_;
      const std::size_t crow = static_cast<std::size_t>(step) * h_;
      for (int j = 0; j < h_; ++j) {
        const real r = sigmoid(gi[j] + gh[j]);
        const real z = sigmoid(gi[h_ + j] + gh[h_ + j]);
        const real ghn = gh[2 * h_ + j];
        const real n = std::tanh(gi[2 * h_ + j] + r * ghn);
        const real h = (1.0 - z) * n + z * hprev[j];
        if (cache) {
          cache->r[crow + j] = r;
          cache->z[crow + j] = z;
          cache->n[crow + j] = n;
          cache->ghn[crow + j] = ghn;
        }
        yt[j] = h;
      }
      for (int j = 0; j < h_; ++j) hprev[j] = yt[j];
    }
  }

  // dY: (T, H) upstream gradient; dX accumulates (T, D). Y is the forward
  // output (needed for the previous hidden states).
  void backward(const real* P, real* G, const real* X, int T, bool reverse,
                const Cache& cache, const real* Y, const real* dY,
                real* dX) const {
    detail::MatC Wi(P + wi_off_, 3 * h_, d_);
    detail::MatC Wh(P + wh_off_, 3 * h_, h_);
    detail::MatM gWi(G + wi_off_, 3 * h_, d_);
    detail::MatM gWh(G + wh_off_, 3 * h_, h_);
    detail::VecM gbi(G + bi_off_, 3 * h_);
    detail::VecM gbh(G + bh_off_, 3 * h_);
    Eigen::VectorXd carry = Eigen::VectorXd::Zero(h_);
    Eigen::VectorXd gI(3 * h_), gH(3 * h_);
    for (int step = T - 1; step >= 0; --step) {
      const int t = reverse ? T - 1 - step : step;
      const int tprev = reverse ? t + 1 : t - 1;
      const real* hprev =
          step > 0 ? Y + static_cast<std::size_t>(tprev) * h_ : nullptr;
      const real* dyt = dY + static_cast<std::size_t>(t) * h_;
      const std::size_t crow = static_cast<std::size_t>(step) * h_;
      for (int j = 0; j < h_; ++j) {
        const real r = cache.r[crow + j];
        const real z = cache.z[crow + j];
        const real n = cache.n[crow + j];
        const real ghn = cache.ghn[crow + j];
        const real hp = hprev ? hprev[j] : 0.0;
        const real dh = dyt[j] + carry[j];
        const real dz = dh * (hp - n);
        const real dn = dh * (1.0 - z);
        carry[j] = dh * z;  // replaced; Wh^T gH added below
        const real dnp = dn * (1.0 - n * n);
        const real dr = dnp * ghn;
        const real dghn = dnp * r;
        const real dzp = dz * z * (1.0 - z);
        const real drp = dr * r * (1.0 - r);
        gI[j] = drp;
        gI[h_ + j] = dzp;
        gI[2 * h_ + j] = dnp;
        gH[j] = drp;
        gH[h_ + j] = dzp;
        gH[2 * h_ + j] = dghn;
      }
      detail::VecC xt(X + static_cast<std::size_t>(t) * d_, d_);
      gWi.noalias() += gI * xt.transpose();
      gbi += gI;
      if (hprev) {
        detail::VecC hp(hprev, h_);
        gWh.noalias() += gH * hp.transpose();
      }
      gbh += gH;
      if (dX) {
        detail::VecM dxt(dX + static_cast<std::size_t>(t) * d_, d_);
        dxt.noalias() += Wi.transpose() * gI;
      }
      carry.noalias() += Wh.transpose() * gH;
    }
  }

 private:
  static real sigmoid(real v) { return 1.0 / (1.0 + std::exp(-v)); }

  int d_ = 0, h_ = 0;
  std::size_t wi_off_ = 0, wh_off_ = 0, bi_off_ = 0, bh_off_ = 0;
};

// Bidirectional layer: forward and reverse passes concatenated to (T, 2H).
class BiGru {
 public:
  BiGru() = default;
  BiGru(ParamArena& arena, const std::string& name, int input_dim, int hidden)
      : fwd_(arena, name + ".f", input_dim, hidden),
        bwd_(arena, name + ".b", input_dim, hidden),
        h_(hidden) {}

  int out_dim() const { return 2 * h_; }

  void init(real* P, Prng& rng) const {
    fwd_.init(P, rng);
    bwd_.init(P, rng);
  }

  struct Cache {
    Gru::Cache f, b;
    std::vector<real> yf, yb;  // each (T, H)
  };

  void forward(const real* P, const real* X, int T, real* Y,
               Cache& cache) const {
    cache.yf.assign(static_cast<std::size_t>(T) * h_, 0.0);
    cache.yb.assign(static_cast<std::size_t>(T) * h_, 0.0);
    fwd_.forward(P, X, T, false, cache.yf.data(), &cache.f);
    bwd_.forward(P, X, T, true, cache.yb.data(), &cache.b);
    for (int t = 0; t < T; ++t) {
      real* yt = Y + static_cast<std::size_t>(t) * 2 * h_;
      const std::size_t row = static_cast<std::size_t>(t) * h_;
      for (int j = 0; j < h_; ++j) {
        yt[j] = cache.yf[row + j];
        yt[h_ + j] = cache.yb[row + j];
      }
    }
  }

  void backward(const real* P, real* G, const real* X, int T,
                const Cache& cache, const real* dY, real* dX) const {
    std::vector<real> dyf(static_cast<std::size_t>(T) * h_);
    std::vector<real> dyb(static_cast<std::size_t>(T) * h_);
    for (int t = 0; t < T; ++t) {
      const real* dyt = dY + static_cast<std::size_t>(t) * 2 * h_;
      const std::size_t row = static_cast<std::size_t>(t) * h_;
      for (int j = 0; j < h_; ++j) {
        dyf[row + j] = dyt[j];
        dyb[row + j] = dyt[h_ + j];
      }
    }
    fwd_.backward(P, G, X, T, false, cache.f, cache.yf.data(), dyf.data(), dX);
    bwd_.backward(P, G, X, T, true, cache.b, cache.yb.data(), dyb.data(), dX);
  }

 private:
  Gru fwd_, bwd_;
  int h_ = 0;
};

// Stacked bidirectional GRU followed by a linear projection back to the
// input width; the caller adds the residual connection.
class GruStack {
 public:
  GruStack() = default;
  GruStack(ParamArena& arena, const std::string& name, int input_dim,
           int hidden, int layers, int out_dim)
      : in_(input_dim), out_(out_dim) {
    require_config(layers >= 1, "GruStack: needs at least one layer");
    layers_.reserve(layers);
    for (int l = 0; l < layers; ++l) {
      int d = (l == 0) ? input_dim : 2 * hidden;
      layers_.emplace_back(arena, name + ".l" + std::to_string(l), d, hidden);
    }
    proj_ = Linear(arena, name + ".proj", 2 * hidden, out_dim);
  }

  void init(real* P, Prng& rng) const {
    for (const auto& l : layers_) l.init(P, rng);
    proj_.init(P, rng);
  }

  struct Cache {
    std::vector<BiGru::Cache> layer;
    std::vector<std::vector<real>> out;  // per-layer (T, 2H) outputs
  };

  // X: (T, in) -> Y: (T, out).
  void forward(const real* P, const real* X, int T, real* Y,
               Cache& cache) const {
    cache.layer.resize(layers_.size());
    cache.out.resize(layers_.size());
    const real* cur = X;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      cache.out[l].assign(static_cast<std::size_t>(T) * layers_[l].out_dim(), 0.0);
      layers_[l].forward(P, cur, T, cache.out[l].data(), cache.layer[l]);
      cur = cache.out[l].data();
    }
    proj_.forward_mat(P, cur, T, Y);
  }

  void backward(const real* P, real* G, const real* X, int T,
                const Cache& cache, const real* dY, real* dX) const {
    const std::size_t L = layers_.size();
    std::vector<real> dcur(static_cast<std::size_t>(T) * layers_[L - 1].out_dim(),
                           0.0);
    proj_.backward_mat(P, G, cache.out[L - 1].data(), T, dY, dcur.data());
    for (std::size_t l = L; l-- > 0;) {
      const real* xin = (l == 0) ? X : cache.out[l - 1].data();
      if (l == 0) {
        layers_[l].backward(P, G, xin, T, cache.layer[l], dcur.data(), dX);
      } else {
        std::vector<real> dprev(
            static_cast<std::size_t>(T) * layers_[l - 1].out_dim(), 0.0);
        layers_[l].backward(P, G, xin, T, cache.layer[l], dcur.data(),
                            dprev.data());
        dcur.swap(dprev);
      }
    }
  }

 private:
  std::vector<BiGru> layers_;
  Linear proj_;
  int in_ = 0, out_ = 0;
};

}  // namespace dag
