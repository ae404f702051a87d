#pragma once
// Conditional score network: a 1-D convolutional U-Net with FiLM conditioning
// in every block and an optional bidirectional-GRU bottleneck. The network
// maps (noisy signal, class label, noise level) to an estimate of the score
// of the perturbed data distribution at that noise level.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dag/core.hpp"
#include "dag/gru.hpp"
#include "dag/layers.hpp"
#include "dag/params.hpp"

namespace dag {

struct DagConfig {
  int sample_rate = 48000;
  std::vector<int> strides = {2, 2, 4, 4, 5};
  std::vector<int> widths = {64, 128, 128, 256, 512};
  int vocab_size = 1;
  int label_embed_factor = 10;  // label embedding dim = factor * vocab_size
  int sigma_embed_dim = 128;
  int sigma_hidden = 256;
  int fourier_features = 32;
  real fourier_scale = 16.0;
  int gru_hidden = 512;
  int gru_layers = 2;
  bool recurrent_bottleneck = true;
  real leaky_slope = 0.2;

  int levels() const { return static_cast<int>(strides.size()); }

  int stride_product() const {
    int p = 1;
    for (int s : strides) p *= s;
    return p;
  }

  int label_embed_dim() const { return label_embed_factor * vocab_size; }
  int cond_dim() const { return label_embed_dim() + sigma_embed_dim; }
  int latent_channels() const { return widths.back(); }

  void validate() const {
    require_config(sample_rate > 0, "config: sample_rate must be positive");
    require_config(!strides.empty() && strides.size() == widths.size(),
                   "config: strides and widths must be non-empty and equal length");
    for (int s : strides) require_config(s >= 1, "config: strides must be >= 1");
    for (int w : widths) require_config(w >= 1, "config: widths must be >= 1");
    require_config(vocab_size >= 1, "config: vocab_size must be >= 1");
    require_config(label_embed_factor >= 1 && sigma_embed_dim >= 1 &&
                       sigma_hidden >= 1 && fourier_features >= 1,
                   "config: embedding sizes must be >= 1");
    require_config(fourier_scale > 0.0, "config: fourier_scale must be positive");
    require_config(gru_hidden >= 1 && gru_layers >= 1,
                   "config: bottleneck sizes must be >= 1");
    require_config(leaky_slope > 0.0 && leaky_slope < 1.0,
                   "config: leaky_slope must lie in (0, 1)");
  }

  static DagConfig dag48(int vocab) {
    DagConfig c;
    c.vocab_size = vocab;
    return c;
  }

  static DagConfig dag22(int vocab) {
    DagConfig c;
    c.sample_rate = 22050;
    c.strides = {2, 2, 3, 3, 5};
    c.vocab_size = vocab;
    return c;
  }
};

// ---------------------------------------------------------------------------
// Class-label lookup table plus a learnable null token used when the label is
// dropped (classifier-free guidance training) or absent at sampling time.
class LabelEmbedding {
 public:
  LabelEmbedding() = default;
  LabelEmbedding(ParamArena& arena, const std::string& name, int vocab, int dim)
      : vocab_(vocab), dim_(dim) {
    table_off_ = arena.add(name + ".table", static_cast<std::size_t>(vocab) * dim);
    null_off_ = arena.add(name + ".null", static_cast<std::size_t>(dim));
  }

  void init(real* P, Prng& rng) const {
    for (std::size_t i = 0; i < static_cast<std::size_t>(vocab_) * dim_; ++i) {
      P[table_off_ + i] = rng.normal();
    }
    // Null token starts at zero and is trained like any other row.
    std::fill(P + null_off_, P + null_off_ + dim_, 0.0);
  }

  void embed(const real* P, std::optional<int> label, real* out) const {
    const real* src;
    if (label.has_value()) {
      require_domain(*label >= 0 && *label < vocab_,
                     "LabelEmbedding: label out of range");
      src = P + table_off_ + static_cast<std::size_t>(*label) * dim_;
    } else {
      src = P + null_off_;
    }
    std::copy(src, src + dim_, out);
  }

  void backward(real* G, std::optional<int> label, const real* dout) const {
    real* dst = label.has_value()
                    ? G + table_off_ + static_cast<std::size_t>(*label) * dim_
                    : G + null_off_;
    for (int i = 0; i < dim_; ++i) dst[i] += dout[i];
  }

 private:
  int vocab_ = 0, dim_ = 0;
  std::size_t table_off_ = 0, null_off_ = 0;
};

// ---------------------------------------------------------------------------
// Noise-level embedding: random Fourier features of log(sigma) with frozen
// frequencies, followed by a two-layer MLP.
class SigmaEmbedder {
 public:
  SigmaEmbedder() = default;
  SigmaEmbedder(ParamArena& arena, const std::string& name, int features,
                int hidden, int out_dim, real scale, real slope)
      : f_(features), out_(out_dim), scale_(scale), slope_(slope) {
    freq_off_ = arena.add(name + ".freq", static_cast<std::size_t>(features),
                          /*trainable=*/false);
    l1_ = Linear(arena, name + ".l1", 2 * features, hidden);
    l2_ = Linear(arena, name + ".l2", hidden, out_dim);
  }

  int out_dim() const { return out_; }

  void init(real* P, Prng& rng) const {
    for (int i = 0; i < f_; ++i) P[freq_off_ + i] = scale_ * rng.normal();
    l1_.init(P, rng);
    l2_.init(P, rng);
  }

  struct Cache {
    std::vector<real> feats;  // 2F
    std::vector<real> a1;     // hidden, post-activation
  };

  void embed(const real* P, real sigma, real* out, Cache* cache) const {
    require_domain(std::isfinite(sigma) && sigma > 0.0,
                   "SigmaEmbedder: sigma must be positive");
    Cache local;
    Cache& c = cache ? *cache : local;
    const real u = std::log(sigma);
    c.feats.resize(2 * f_);
    for (int i = 0; i < f_; ++i) {
      const real a = P[freq_off_ + i] * u;
      c.feats[i] = std::sin(a);
      c.feats[f_ + i] = std::cos(a);
    }
    c.a1.resize(l1_.out_dim());
    l1_.forward_vec(P, c.feats.data(), c.a1.data());
    leaky_forward(std::span<real>(c.a1), slope_);
    l2_.forward_vec(P, c.a1.data(), out);
  }

  void backward(const real* P, real* G, const Cache& cache,
                const real* dout) const {
    std::vector<real> da1(cache.a1.size(), 0.0);
    l2_.backward_vec(P, G, cache.a1.data(), dout, da1.data());
    leaky_backward(std::span<const real>(cache.a1), std::span<real>(da1), slope_);
    // Frequencies are frozen, so the chain stops at the feature layer.
    l1_.backward_vec(P, G, cache.feats.data(), da1.data(), nullptr);
  }

 private:
  int f_ = 0, out_ = 0;
  real scale_ = 1.0, slope_ = 0.2;
  std::size_t freq_off_ = 0;
  Linear l1_, l2_;
};

// ---------------------------------------------------------------------------
// Encoder block: strided entry convolution, then four FiLM -> LeakyReLU ->
// dilated-conv sub-blocks (dilations 1, 2, 4, 8), plus a resampled 1x1
// residual path around the whole block.
class GBlockDown {
 public:
  GBlockDown() = default;
  GBlockDown(ParamArena& arena, const std::string& name, int in_ch, int out_ch,
             int stride, int cond_dim, real slope)
      : stride_(stride), slope_(slope) {
    entry_ = Conv1d(arena, name + ".entry", in_ch, out_ch, 2 * stride, stride);
    for (int i = 0; i < 4; ++i) {
      const std::string sub = name + ".d" + std::to_string(i);
      film_[i] = Film(arena, sub + ".film", cond_dim, out_ch);
      conv_[i] = Conv1d(arena, sub + ".conv", out_ch, out_ch, 3, 1, 1 << i);
    }
    skip_ = Conv1d(arena, name + ".skip", in_ch, out_ch, 1);
  }

  void init(real* P, Prng& rng) const {
    entry_.init(P, rng);
    for (int i = 0; i < 4; ++i) {
      film_[i].init(P, rng);
      conv_[i].init(P, rng);
    }
    skip_.init(P, rng);
  }

  struct Cache {
    FMap entry;
    FMap act[4];
    FMap conv[4];
    Film::Cache fc[4];
    FMap pooled;
  };

  void forward(const real* P, const FMap& x, const real* cond, FMap& y,
               Cache& c) const {
    entry_.forward(P, x, c.entry);
    const FMap* cur = &c.entry;
    for (int i = 0; i < 4; ++i) {
      film_[i].forward(P, cond, *cur, c.act[i], c.fc[i]);
      leaky_forward(c.act[i], slope_);
      conv_[i].forward(P, c.act[i], c.conv[i]);
      cur = &c.conv[i];
    }
    pool_down(x, stride_, c.pooled);
    skip_.forward(P, c.pooled, y);
    for (std::size_t i = 0; i < y.v.size(); ++i) y.v[i] += cur->v[i];
  }

  void backward(const real* P, real* G, const FMap& x, const real* cond,
                const Cache& c, const FMap& dy, FMap& dx, real* dcond) const {
    // Residual path.
    FMap dpooled;
    dpooled.resize(c.pooled.ch, c.pooled.len);
    skip_.backward(P, G, c.pooled, dy, &dpooled);
    pool_down_backward(dpooled, stride_, dx);
    // Main path.
    FMap dcur = dy;
    for (int i = 3; i >= 0; --i) {
      FMap dact;
      dact.resize(c.act[i].ch, c.act[i].len);
      conv_[i].backward(P, G, c.act[i], dcur, &dact);
      leaky_backward(c.act[i], dact, slope_);
      const FMap& input = (i == 0) ? c.entry : c.conv[i - 1];
      FMap dinput;
      dinput.resize(input.ch, input.len);
      film_[i].backward(P, G, cond, input, c.fc[i], dact, dinput, dcond);
      dcur = std::move(dinput);
    }
    entry_.backward(P, G, x, dcur, &dx);
  }

 private:
  Conv1d entry_;
  Film film_[4];
  Conv1d conv_[4];
  Conv1d skip_;
  int stride_ = 1;
  real slope_ = 0.2;
};

// Decoder block: transposed entry convolution (upsampling), the same four
// conditioned sub-blocks, and an interpolated 1x1 residual path.
class GBlockUp {
 public:
  GBlockUp() = default;
  GBlockUp(ParamArena& arena, const std::string& name, int in_ch, int out_ch,
           int stride, int cond_dim, real slope)
      : stride_(stride), slope_(slope) {
    entry_ = ConvTranspose1d(arena, name + ".entry", in_ch, out_ch, 2 * stride,
                             stride);
    for (int i = 0; i < 4; ++i) {
      const std::string sub = name + ".d" + std::to_string(i);
      film_[i] = Film(arena, sub + ".film", cond_dim, out_ch);
      conv_[i] = Conv1d(arena, sub + ".conv", out_ch, out_ch, 3, 1, 1 << i);
    }
    skip_ = Conv1d(arena, name + ".skip", in_ch, out_ch, 1);
  }

  void init(real* P, Prng& rng) const {
    entry_.init(P, rng);
    for (int i = 0; i < 4; ++i) {
      film_[i].init(P, rng);
      conv_[i].init(P, rng);
    }
    skip_.init(P, rng);
  }

  struct Cache {
    FMap entry;
    FMap act[4];
    FMap conv[4];
    Film::Cache fc[4];
    FMap upsampled;
  };

  void forward(const real* P, const FMap& x, const real* cond, FMap& y,
               Cache& c) const {
    entry_.forward(P, x, c.entry);
    const FMap* cur = &c.entry;
    for (int i = 0; i < 4; ++i) {
      film_[i].forward(P, cond, *cur, c.act[i], c.fc[i]);
      leaky_forward(c.act[i], slope_);
      conv_[i].forward(P, c.act[i], c.conv[i]);
      cur = &c.conv[i];
    }
    lerp_up(x, stride_, c.upsampled);
    skip_.forward(P, c.upsampled, y);
    for (std::size_t i = 0; i < y.v.size(); ++i) y.v[i] += cur->v[i];
  }

  void backward(const real* P, real* G, const FMap& x, const real* cond,
                const Cache& c, const FMap& dy, FMap& dx, real* dcond) const {
    FMap dup;
    dup.resize(c.upsampled.ch, c.upsampled.len);
    skip_.backward(P, G, c.upsampled, dy, &dup);
    lerp_up_backward(dup, stride_, dx);
    FMap dcur = dy;
    for (int i = 3; i >= 0; --i) {
      FMap dact;
      dact.resize(c.act[i].ch, c.act[i].len);
      conv_[i].backward(P, G, c.act[i], dcur, &dact);
      leaky_backward(c.act[i], dact, slope_);
      const FMap& input = (i == 0) ? c.entry : c.conv[i - 1];
      FMap dinput;
      dinput.resize(input.ch, input.len);
      film_[i].backward(P, G, cond, input, c.fc[i], dact, dinput, dcond);
      dcur = std::move(dinput);
    }
    entry_.backward(P, G, x, dcur, &dx);
  }

 private:
  ConvTranspose1d entry_;
  Film film_[4];
  Conv1d conv_[4];
  Conv1d skip_;
  int stride_ = 1;
  real slope_ = 0.2;
};

// ---------------------------------------------------------------------------
class DagNetwork {
 public:
  explicit DagNetwork(DagConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    const int condD = cfg_.cond_dim();
    const int K = cfg_.levels();
    label_ = LabelEmbedding(arena_, "label", cfg_.vocab_size,
                            cfg_.label_embed_dim());
    sigma_ = SigmaEmbedder(arena_, "sigma", cfg_.fourier_features,
                           cfg_.sigma_hidden, cfg_.sigma_embed_dim,
                           cfg_.fourier_scale, cfg_.leaky_slope);
    enc_.reserve(K);
    int in_ch = 1;
    for (int k = 0; k < K; ++k) {
      enc_.emplace_back(arena_, "enc" + std::to_string(k), in_ch,
                        cfg_.widths[k], cfg_.strides[k], condD, cfg_.leaky_slope);
      in_ch = cfg_.widths[k];
    }
    if (cfg_.recurrent_bottleneck) {
      gru_ = GruStack(arena_, "bottleneck", cfg_.latent_channels(),
                      cfg_.gru_hidden, cfg_.gru_layers, cfg_.latent_channels());
    }
    dec_.reserve(K);
    for (int j = 0; j < K; ++j) {
      const int k = K - 1 - j;  // resolution level this block produces
      dec_.emplace_back(arena_, "dec" + std::to_string(k), cfg_.widths[k],
                        dec_out_ch(k), cfg_.strides[k], condD, cfg_.leaky_slope);
    }
    skip_.reserve(K);
    for (int k = 0; k < K; ++k) {
      skip_.emplace_back(arena_, "uskip" + std::to_string(k), enc_in_ch(k),
                         dec_out_ch(k), 1);
    }
    head_ = Conv1d(arena_, "head", cfg_.widths[0], 1, 1);
    arena_.finalize();
  }

  const DagConfig& config() const { return cfg_; }
  ParamArena& params() { return arena_; }
  const ParamArena& params() const { return arena_; }
  std::size_t param_count() const { return arena_.size(); }

  int latent_length(int input_len) const {
    return input_len / cfg_.stride_product();
  }

  void init_params(std::uint64_t seed) {
    auto rng = Prng::stream(seed, stream::kParamInit);
    real* P = arena_.data();
    label_.init(P, rng);
    sigma_.init(P, rng);
    for (const auto& b : enc_) b.init(P, rng);
    if (cfg_.recurrent_bottleneck) gru_.init(P, rng);
    for (const auto& b : dec_) b.init(P, rng);
    for (const auto& s : skip_) s.init(P, rng);
    head_.init(P, rng);
  }

  struct Workspace {
    std::vector<real> cond, dcond;
    SigmaEmbedder::Cache sig;
    std::vector<FMap> enc;  // K + 1 feature maps; enc[0] is the input
    std::vector<GBlockDown::Cache> enc_cache;
    std::vector<real> gru_x, gru_y;  // (T_latent, C) row-major
    GruStack::Cache gru_cache;
    FMap bot;
    std::vector<FMap> dec;  // K outputs in application order (post skip-add)
    std::vector<FMap> skip_out;
    std::vector<GBlockUp::Cache> dec_cache;
    FMap y;
    std::optional<int> label;
    real sigma = 0.0;
  };

  // Score forward pass; the result is ws.y (one channel, input length).
  void forward(Workspace& ws, std::span<const real> x, std::optional<int> label,
               real sigma) const {
    const int T = static_cast<int>(x.size());
    require_domain(T > 0 && T % cfg_.stride_product() == 0,
                   "DagNetwork: input length must be a positive multiple of " +
                       std::to_string(cfg_.stride_product()));
    const int K = cfg_.levels();
    const real* P = arena_.data();
    ws.label = label;
    ws.sigma = sigma;
    ws.cond.resize(cfg_.cond_dim());
    label_.embed(P, label, ws.cond.data());
    sigma_.embed(P, sigma, ws.cond.data() + cfg_.label_embed_dim(), &ws.sig);

    ws.enc.resize(K + 1);
    ws.enc_cache.resize(K);
    ws.enc[0].resize(1, T);
    std::copy(x.begin(), x.end(), ws.enc[0].v.begin());
    for (int k = 0; k < K; ++k) {
      enc_[k].forward(P, ws.enc[k], ws.cond.data(), ws.enc[k + 1],
                      ws.enc_cache[k]);
    }

    const FMap& lat = ws.enc[K];
    const int C = lat.ch, Tl = lat.len;
    if (cfg_.recurrent_bottleneck) {
      ws.gru_x.resize(static_cast<std::size_t>(Tl) * C);
      ws.gru_y.resize(static_cast<std::size_t>(Tl) * C);
      for (int c = 0; c < C; ++c) {
        const real* r = lat.row(c);
        for (int t = 0; t < Tl; ++t) ws.gru_x[static_cast<std::size_t>(t) * C + c] = r[t];
      }
      gru_.forward(P, ws.gru_x.data(), Tl, ws.gru_y.data(), ws.gru_cache);
      ws.bot.resize(C, Tl);
      for (int c = 0; c < C; ++c) {
        const real* r = lat.row(c);
        real* b = ws.bot.row(c);
        for (int t = 0; t < Tl; ++t) {
          b[t] = r[t] + ws.gru_y[static_cast<std::size_t>(t) * C + c];
        }
      }
    } else {
      ws.bot = lat;
    }

    ws.dec.resize(K);
    ws.skip_out.resize(K);
    ws.dec_cache.resize(K);
    const FMap* cur = &ws.bot;
    for (int j = 0; j < K; ++j) {
      const int k = K - 1 - j;
      dec_[j].forward(P, *cur, ws.cond.data(), ws.dec[j], ws.dec_cache[j]);
      skip_[k].forward(P, ws.enc[k], ws.skip_out[j]);
      for (std::size_t i = 0; i < ws.dec[j].v.size(); ++i) {
        ws.dec[j].v[i] += ws.skip_out[j].v[i];
      }
      cur = &ws.dec[j];
    }
    head_.forward(P, *cur, ws.y);
  }

  // Parameter gradients for upstream dL/dscore `dy`; accumulates into G.
  // Must follow a forward() on the same workspace.
  void backward(Workspace& ws, std::span<const real> dy, real* G) const {
    const int K = cfg_.levels();
    const real* P = arena_.data();
    ws.dcond.assign(cfg_.cond_dim(), 0.0);

    FMap dyf;
    dyf.resize(1, static_cast<int>(dy.size()));
    std::copy(dy.begin(), dy.end(), dyf.v.begin());

    std::vector<FMap> dEnc(K + 1);
    for (int k = 0; k <= K; ++k) dEnc[k].resize(ws.enc[k].ch, ws.enc[k].len);

    FMap dcur;
    dcur.resize(ws.dec[K - 1].ch, ws.dec[K - 1].len);
    head_.backward(P, G, ws.dec[K - 1], dyf, &dcur);

    for (int j = K - 1; j >= 0; --j) {
      const int k = K - 1 - j;
      skip_[k].backward(P, G, ws.enc[k], dcur, &dEnc[k]);
      const FMap& input = (j == 0) ? ws.bot : ws.dec[j - 1];
      FMap dprev;
      dprev.resize(input.ch, input.len);
      dec_[j].backward(P, G, input, ws.cond.data(), ws.dec_cache[j], dcur,
                       dprev, ws.dcond.data());
      dcur = std::move(dprev);
    }

    const int C = ws.bot.ch, Tl = ws.bot.len;
    if (cfg_.recurrent_bottleneck) {
      std::vector<real> dgy(static_cast<std::size_t>(Tl) * C);
      for (int c = 0; c < C; ++c) {
        const real* r = dcur.row(c);
        for (int t = 0; t < Tl; ++t) dgy[static_cast<std::size_t>(t) * C + c] = r[t];
      }
      std::vector<real> dgx(static_cast<std::size_t>(Tl) * C, 0.0);
      gru_.backward(P, G, ws.gru_x.data(), Tl, ws.gru_cache, dgy.data(),
                    dgx.data());
      for (int c = 0; c < C; ++c) {
        real* d = dEnc[K].row(c);
        const real* r = dcur.row(c);
        for (int t = 0; t < Tl; ++t) {
          d[t] += r[t] + dgx[static_cast<std::size_t>(t) * C + c];
        }
      }
    } else {
      for (std::size_t i = 0; i < dcur.v.size(); ++i) dEnc[K].v[i] += dcur.v[i];
    }

    for (int k = K - 1; k >= 0; --k) {
      enc_[k].backward(P, G, ws.enc[k], ws.cond.data(), ws.enc_cache[k],
                       dEnc[k + 1], dEnc[k], ws.dcond.data());
    }

    label_.backward(G, ws.label, ws.dcond.data());
    sigma_.backward(P, G, ws.sig, ws.dcond.data() + cfg_.label_embed_dim());
  }

  // Convenience wrapper allocating a fresh workspace.
  std::vector<real> score(std::span<const real> x, std::optional<int> label,
                          real sigma) const {
    Workspace ws;
    forward(ws, x, label, sigma);
    return ws.y.v;
  }

 private:
  int enc_in_ch(int k) const { return k == 0 ? 1 : cfg_.widths[k - 1]; }
  int dec_out_ch(int k) const {
    return k == 0 ? cfg_.widths[0] : cfg_.widths[k - 1];
  }

  DagConfig cfg_;
  ParamArena arena_;
  LabelEmbedding label_;
  SigmaEmbedder sigma_;
  std::vector<GBlockDown> enc_;
  GruStack gru_;
  std::vector<GBlockUp> dec_;
  std::vector<Conv1d> skip_;
  Conv1d head_;
};

}  // namespace dag
