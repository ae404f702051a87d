#pragma once
// Denoising score-matching training: loss evaluation, conditioning dropout,
// Adam, the optimization step with divergence protection, checkpoint
// round-tripping, and validation-loss tracking.
//
// Determinism contract: every random draw comes from a stream keyed by
// (seed, purpose, step, example) — reruns and resumed runs are bit-identical.

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "dag/core.hpp"
#include "dag/network.hpp"
#include "dag/params.hpp"
#include "dag/schedule.hpp"

namespace dag {

struct TrainConfig {
  int batch_size = 8;
  real learning_rate = 1e-4;
  real cfg_dropout_prob = 0.1;
  long max_steps = 100000;
  std::uint64_t seed = 0;
  int crop_length = 48000;
  real divergence_threshold = 1e6;
  int val_interval = 500;
  int checkpoint_interval = 2000;
  int log_interval = 50;

  void validate() const {
    require_config(batch_size >= 1, "train: batch_size must be >= 1");
    require_config(std::isfinite(learning_rate) && learning_rate >= 0.0,
                   "train: learning_rate must be finite and >= 0");
    require_config(cfg_dropout_prob >= 0.0 && cfg_dropout_prob < 1.0,
                   "train: cfg_dropout_prob must lie in [0, 1)");
    require_config(max_steps >= 1, "train: max_steps must be >= 1");
    require_config(crop_length >= 1, "train: crop_length must be >= 1");
    require_config(divergence_threshold > 0.0,
                   "train: divergence_threshold must be positive");
    require_config(val_interval >= 1 && checkpoint_interval >= 1 && log_interval >= 1,
                   "train: intervals must be >= 1");
  }
};

struct Example {
  std::vector<real> wave;
  std::optional<int> label;
};

using Batch = std::vector<Example>;

// Replace each label independently by the null token with probability p.
// Waveforms are untouched.
inline std::vector<std::optional<int>> apply_cfg_dropout(
    const std::vector<std::optional<int>>& labels, real p, Prng& rng) {
  require_domain(p >= 0.0 && p < 1.0, "apply_cfg_dropout: p must lie in [0, 1)");
  std::vector<std::optional<int>> out = labels;
  for (auto& l : out) {
    if (rng.uniform() < p) l = std::nullopt;
  }
  return out;
}

// L = mean_batch mean_elements 1/2 (sigma S(x0 + sigma z, c, sigma) + z)^2
// with per-example t ~ U(0,1), sigma = sigma_at(t), z ~ N(0, I).
// `score` is called as score(i, x_t, label, sigma) -> vector; `rng_for(i)`
// yields the per-example stream (t is drawn first, then z).
template <class ScoreFn, class RngFactory>
real score_loss_with(ScoreFn&& score, const Batch& batch,
                     const NoiseSchedule& sch, RngFactory&& rng_for) {
  require_domain(!batch.empty(), "score_loss: empty batch");
  real total = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const Example& ex = batch[i];
    require_domain(!ex.wave.empty(), "score_loss: empty waveform");
    Prng rng = rng_for(i);
    const real t = rng.uniform();
    const real sigma = sch.sigma_at(t);
    const std::size_t L = ex.wave.size();
    std::vector<real> z(L), xt(L);
    rng.fill_normal(z);
    for (std::size_t j = 0; j < L; ++j) xt[j] = ex.wave[j] + sigma * z[j];
    const std::vector<real> S = score(i, xt, ex.label, sigma);
    if (!all_finite(S)) {
      throw TrainError("score_loss: non-finite network output at sigma " +
                       std::to_string(sigma));
    }
    real acc = 0.0;
    for (std::size_t j = 0; j < L; ++j) {
      const real r = sigma * S[j] + z[j];
      acc += r * r;
    }
    total += 0.5 * acc / static_cast<real>(L);
  }
  return total / static_cast<real>(batch.size());
}

inline real score_loss(const DagNetwork& net, const Batch& batch,
                       const NoiseSchedule& sch, std::uint64_t seed, long step) {
  return score_loss_with(
      [&](std::size_t, std::span<const real> xt, std::optional<int> label,
          real sigma) { return net.score(xt, label, sigma); },
      batch, sch,
      [&](std::size_t i) {
        return Prng::stream(seed, stream::kTrainNoise, static_cast<std::uint64_t>(step), i);
      });
}

// Validation loss on a fixed t-grid {0.1, ..., 0.9} with noise fixed per
// (example, grid point): a low-variance convergence tracker.
inline real validation_loss(const DagNetwork& net, const Batch& val,
                            const NoiseSchedule& sch, std::uint64_t seed) {
  require_domain(!val.empty(), "validation_loss: empty validation set");
  real total = 0.0;
  long count = 0;
  std::vector<real> z, xt;
  DagNetwork::Workspace ws;
  for (std::size_t i = 0; i < val.size(); ++i) {
    const Example& ex = val[i];
    const std::size_t L = ex.wave.size();
    z.resize(L);
    xt.resize(L);
    for (int k = 0; k < 9; ++k) {
      const real t = 0.1 * (k + 1);
      const real sigma = sch.sigma_at(t);
      auto rng = Prng::stream(seed, stream::kValNoise, i, static_cast<std::uint64_t>(k));
      rng.fill_normal(z);
      for (std::size_t j = 0; j < L; ++j) xt[j] = ex.wave[j] + sigma * z[j];
      net.forward(ws, xt, ex.label, sigma);
      real acc = 0.0;
      for (std::size_t j = 0; j < L; ++j) {
        const real r = sigma * ws.y.v[j] + z[j];
        acc += r * r;
      }
      total += 0.5 * acc / static_cast<real>(L);
      ++count;
    }
  }
  return total / static_cast<real>(count);
}

// ---------------------------------------------------------------------------
// Adam with bias correction; frozen arena entries are never touched.
class Adam {
 public:
  explicit Adam(std::size_t n) : m_(n, 0.0), v_(n, 0.0) {}

  void step(ParamArena& arena, const std::vector<real>& G, real lr,
            real beta1 = 0.9, real beta2 = 0.999, real eps = 1e-8) {
    ++t_;
    const real bc1 = 1.0 - std::pow(beta1, static_cast<real>(t_));
    const real bc2 = 1.0 - std::pow(beta2, static_cast<real>(t_));
    real* P = arena.data();
    for (const auto& e : arena.entries()) {
      if (!e.trainable) continue;
      for (std::size_t i = e.offset; i < e.offset + e.size; ++i) {
        const real g = G[i];
        m_[i] = beta1 * m_[i] + (1.0 - beta1) * g;
        v_[i] = beta2 * v_[i] + (1.0 - beta2) * g * g;
        P[i] -= lr * (m_[i] / bc1) / (std::sqrt(v_[i] / bc2) + eps);
      }
    }
  }

  std::uint64_t t() const { return t_; }
  std::vector<real>& m() { return m_; }
  std::vector<real>& v() { return v_; }
  const std::vector<real>& m() const { return m_; }
  const std::vector<real>& v() const { return v_; }
  void restore(std::uint64_t t, std::vector<real> m, std::vector<real> v) {
    t_ = t;
    m_ = std::move(m);
    v_ = std::move(v);
  }

 private:
  std::uint64_t t_ = 0;
  std::vector<real> m_, v_;
};

// ---------------------------------------------------------------------------
// Checkpoint container: versioned, named parameter slices, optimizer moments,
// and an opaque configuration document. Round-trips bit-exactly.

namespace ckpt {
inline constexpr char kMagic[8] = {'D', 'A', 'G', 'C', 'K', 'P', 'T', '\0'};
inline constexpr std::uint32_t kVersion = 1;
inline constexpr std::uint64_t kEndSentinel = 0x21214447454e4421ULL;

template <class T>
void write_pod(std::ofstream& f, const T& v) {
  f.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
void read_pod(std::ifstream& f, T& v) {
  f.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!f) throw IoError("checkpoint: truncated or unreadable file");
}
}  // namespace ckpt

struct CheckpointMeta {
  std::uint64_t step = 0;
  std::uint64_t seed = 0;
  std::uint64_t adam_t = 0;
  bool has_adam = false;
  std::string config_json;
};

inline void save_checkpoint(const std::string& path, const CheckpointMeta& meta,
                            const ParamArena& arena, const std::vector<real>* m,
                            const std::vector<real>* v) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("checkpoint: cannot open for writing: " + path);
  f.write(ckpt::kMagic, 8);
  ckpt::write_pod(f, ckpt::kVersion);
  ckpt::write_pod(f, meta.step);
  ckpt::write_pod(f, meta.seed);
  ckpt::write_pod(f, meta.adam_t);
  const std::uint64_t jlen = meta.config_json.size();
  ckpt::write_pod(f, jlen);
  f.write(meta.config_json.data(), static_cast<std::streamsize>(jlen));
  const std::uint64_t n = arena.entries().size();
  ckpt::write_pod(f, n);
  for (const auto& e : arena.entries()) {
    const std::uint32_t nl = static_cast<std::uint32_t>(e.name.size());
    ckpt::write_pod(f, nl);
    f.write(e.name.data(), nl);
    const std::uint64_t sz = e.size;
    ckpt::write_pod(f, sz);
    const std::uint8_t tr = e.trainable ? 1 : 0;
    ckpt::write_pod(f, tr);
    f.write(reinterpret_cast<const char*>(arena.data() + e.offset),
            static_cast<std::streamsize>(e.size * sizeof(real)));
  }
  const std::uint8_t has_adam = (m && v) ? 1 : 0;
  ckpt::write_pod(f, has_adam);
  if (has_adam) {
    f.write(reinterpret_cast<const char*>(m->data()),
            static_cast<std::streamsize>(m->size() * sizeof(real)));
    f.write(reinterpret_cast<const char*>(v->data()),
            static_cast<std::streamsize>(v->size() * sizeof(real)));
  }
  ckpt::write_pod(f, ckpt::kEndSentinel);
  if (!f) throw IoError("checkpoint: write failed: " + path);
}

// Reads only the header (configuration and counters); used to rebuild the
// network before loading parameters.
inline CheckpointMeta read_checkpoint_meta(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("checkpoint: cannot open: " + path);
  char magic[8];
  f.read(magic, 8);
  if (!f || std::memcmp(magic, ckpt::kMagic, 8) != 0) {
    throw IoError("checkpoint: bad magic (not a checkpoint file): " + path);
  }
  std::uint32_t version = 0;
  ckpt::read_pod(f, version);
  if (version != ckpt::kVersion) {
    throw ConfigError("checkpoint: unsupported version " + std::to_string(version));
  }
  CheckpointMeta meta;
  ckpt::read_pod(f, meta.step);
  ckpt::read_pod(f, meta.seed);
  ckpt::read_pod(f, meta.adam_t);
  std::uint64_t jlen = 0;
  ckpt::read_pod(f, jlen);
  meta.config_json.resize(jlen);
  f.read(meta.config_json.data(), static_cast<std::streamsize>(jlen));
  if (!f) throw IoError("checkpoint: truncated configuration block");
  return meta;
}

// Loads parameters (and optionally Adam moments) into an arena whose entry
// set must match the file exactly.
inline CheckpointMeta load_checkpoint(const std::string& path, ParamArena& arena,
                                      std::vector<real>* m,
                                      std::vector<real>* v) {
  CheckpointMeta meta = read_checkpoint_meta(path);
  std::ifstream f(path, std::ios::binary);
  f.seekg(8 + sizeof(std::uint32_t) + 3 * sizeof(std::uint64_t) +
          sizeof(std::uint64_t) + static_cast<std::streamoff>(meta.config_json.size()));
  std::uint64_t n = 0;
  ckpt::read_pod(f, n);
  if (n != arena.entries().size()) {
    throw ConfigError("checkpoint: parameter table has " + std::to_string(n) +
                      " entries, network expects " +
                      std::to_string(arena.entries().size()));
  }
  for (std::uint64_t i = 0; i < n; ++i) {
    std::uint32_t nl = 0;
    ckpt::read_pod(f, nl);
    std::string name(nl, '\0');
    f.read(name.data(), nl);
    std::uint64_t sz = 0;
    ckpt::read_pod(f, sz);
    std::uint8_t tr = 0;
    ckpt::read_pod(f, tr);
    const ParamArena::Entry* e = arena.find(name);
    if (!e || e->size != sz) {
      throw ConfigError("checkpoint: entry '" + name +
                        "' does not match the network architecture");
    }
    f.read(reinterpret_cast<char*>(arena.data() + e->offset),
           static_cast<std::streamsize>(sz * sizeof(real)));
    if (!f) throw IoError("checkpoint: truncated parameter data");
  }
  std::uint8_t has_adam = 0;
  ckpt::read_pod(f, has_adam);
  meta.has_adam = has_adam != 0;
  if (has_adam) {
    std::vector<real> mm(arena.size()), vv(arena.size());
    f.read(reinterpret_cast<char*>(mm.data()),
           static_cast<std::streamsize>(mm.size() * sizeof(real)));
    f.read(reinterpret_cast<char*>(vv.data()),
           static_cast<std::streamsize>(vv.size() * sizeof(real)));
    if (!f) throw IoError("checkpoint: truncated optimizer state");
    if (m) *m = std::move(mm);
    if (v) *v = std::move(vv);
  }
  std::uint64_t sentinel = 0;
  ckpt::read_pod(f, sentinel);
  if (sentinel != ckpt::kEndSentinel) {
    throw IoError("checkpoint: missing end sentinel (corrupt file)");
  }
  return meta;
}

// ---------------------------------------------------------------------------
// One-writer training driver around a DagNetwork.
class Trainer {
 public:
  Trainer(DagNetwork& net, NoiseSchedule sch, TrainConfig cfg,
          std::string config_json = "{}", std::string checkpoint_dir = "")
      : net_(net),
        sch_(sch),
        cfg_(cfg),
        adam_(net.params().size()),
        grad_(net.params().size(), 0.0),
        config_json_(std::move(config_json)),
        checkpoint_dir_(std::move(checkpoint_dir)) {
    cfg_.validate();
    require_config(cfg_.crop_length % net.config().stride_product() == 0,
                   "train: crop_length must be divisible by the stride product");
  }

  long step_count() const { return step_; }
  const TrainConfig& config() const { return cfg_; }
  const DagNetwork& network() const { return net_; }
  const NoiseSchedule& schedule() const { return sch_; }

  // Labels after this step's conditioning dropout (exposed for tests).
  std::vector<std::optional<int>> dropout_labels(const Batch& batch) const {
    std::vector<std::optional<int>> out(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) {
      auto rng = Prng::stream(cfg_.seed, stream::kCfgDropout,
                              static_cast<std::uint64_t>(step_), i);
      out[i] = batch[i].label;
      if (rng.uniform() < cfg_.cfg_dropout_prob) out[i] = std::nullopt;
    }
    return out;
  }

  // One optimization step; returns the batch loss. Throws TrainError after
  // writing an emergency checkpoint if the loss diverges.
  real train_step(const Batch& batch) {
    require_domain(!batch.empty(), "train_step: empty batch");
    const auto labels = dropout_labels(batch);
    std::fill(grad_.begin(), grad_.end(), 0.0);
    const real B = static_cast<real>(batch.size());
    real total = 0.0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
      const Example& ex = batch[i];
      auto rng = Prng::stream(cfg_.seed, stream::kTrainNoise,
                              static_cast<std::uint64_t>(step_), i);
      const real t = rng.uniform();
      const real sigma = sch_.sigma_at(t);
      const std::size_t L = ex.wave.size();
      std::vector<real> z(L), xt(L);
      rng.fill_normal(z);
      for (std::size_t j = 0; j < L; ++j) xt[j] = ex.wave[j] + sigma * z[j];
      net_.forward(ws_, xt, labels[i], sigma);
      const std::vector<real>& S = ws_.y.v;
      if (!all_finite(S)) {
        emergency_checkpoint();
        throw TrainError("train_step " + std::to_string(step_) +
                         ": non-finite forward pass at sigma " +
                         std::to_string(sigma));
      }
      real acc = 0.0;
      std::vector<real> dY(L);
      const real scale = sigma / (static_cast<real>(L) * B);
      for (std::size_t j = 0; j < L; ++j) {
        const real r = sigma * S[j] + z[j];
        acc += r * r;
        dY[j] = scale * r;
      }
      total += 0.5 * acc / static_cast<real>(L);
      net_.backward(ws_, dY, grad_.data());
    }
    const real loss = total / B;
    if (!std::isfinite(loss) || loss > cfg_.divergence_threshold) {
      emergency_checkpoint();
      throw TrainError("train_step " + std::to_string(step_) +
                       ": loss diverged (" + std::to_string(loss) + ")");
    }
    adam_.step(net_.params(), grad_, cfg_.learning_rate);
    ++step_;
    return loss;
  }

  void save(const std::string& path) const {
    CheckpointMeta meta;
    meta.step = static_cast<std::uint64_t>(step_);
    meta.seed = cfg_.seed;
    meta.adam_t = adam_.t();
    meta.config_json = config_json_;
    save_checkpoint(path, meta, net_.params(), &adam_.m(), &adam_.v());
  }

  void load(const std::string& path) {
    std::vector<real> m, v;
    CheckpointMeta meta = load_checkpoint(path, net_.params(), &m, &v);
    step_ = static_cast<long>(meta.step);
    if (meta.has_adam) {
      adam_.restore(meta.adam_t, std::move(m), std::move(v));
    }
  }

 private:
  void emergency_checkpoint() {
    if (checkpoint_dir_.empty()) return;
    std::error_code ec;
    std::filesystem::create_directories(checkpoint_dir_, ec);
    try {
      save(checkpoint_dir_ + "/emergency.ckpt");
    } catch (const IoError&) {
      // A failed emergency dump must not mask the original training error.
    }
  }

  DagNetwork& net_;
  NoiseSchedule sch_;
  TrainConfig cfg_;
  Adam adam_;
  std::vector<real> grad_;
  DagNetwork::Workspace ws_;
  long step_ = 0;
  std::string config_json_;
  std::string checkpoint_dir_;
};

// Append one row to the training log, writing the header on first use.
inline void append_train_log(const std::string& path, long step, real train_loss,
                             std::optional<real> val_loss, real wall_seconds) {
  const bool fresh = !std::filesystem::exists(path);
  std::ofstream f(path, std::ios::app);
  if (!f) throw IoError("train log: cannot open " + path);
  if (fresh) f << "step,train_loss,val_loss,wall_time\n";
  f << step << ',' << train_loss << ',';
  if (val_loss) f << *val_loss;
  f << ',' << wall_seconds << '\n';
}

}  // namespace dag
