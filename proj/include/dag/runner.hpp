#pragma once
// Training orchestration shared by the command-line driver and end-to-end
// tests: in-memory example pools, per-step batch assembly from seeded
// streams, and the stepped loop with periodic validation, CSV logging, and
// checkpoints.

#include <chrono>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "dag/core.hpp"
#include "dag/dataset.hpp"
#include "dag/training.hpp"

namespace dag {

inline std::vector<Example> load_examples(const LabeledDataset& ds,
                                          const std::vector<std::size_t>& idx) {
  std::vector<Example> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) {
    Example ex;
    ex.wave = load_clip(ds, i);
    ex.label = ds.index[i].label;
    out.push_back(std::move(ex));
  }
  return out;
}

// Batch for one step: examples drawn with replacement from the pool and
// cropped to the training length, both through step-keyed streams so a
// resumed run descends the identical data order.
inline Batch assemble_batch(const std::vector<Example>& pool,
                            const TrainConfig& cfg, long step) {
  require_domain(!pool.empty(), "assemble_batch: empty example pool");
  Batch b(static_cast<std::size_t>(cfg.batch_size));
  for (std::size_t i = 0; i < b.size(); ++i) {
    auto pick = Prng::stream(cfg.seed, stream::kDataOrder,
                             static_cast<std::uint64_t>(step), i);
    const auto j = static_cast<std::size_t>(
        pick.uniform_below(static_cast<std::uint64_t>(pool.size())));
    auto crop_rng = Prng::stream(cfg.seed, stream::kCrop,
                                 static_cast<std::uint64_t>(step), i);
    b[i].wave = random_crop(pool[j].wave,
                            static_cast<std::size_t>(cfg.crop_length), crop_rng);
    b[i].label = pool[j].label;
  }
  return b;
}

// Validation crops are fixed once (deterministic leading window) so the
// validation loss is comparable across steps and runs.
inline Batch validation_batch(const std::vector<Example>& pool,
                              const TrainConfig& cfg) {
  Batch b;
  b.reserve(pool.size());
  for (const Example& ex : pool) {
    Example e;
    e.wave.assign(static_cast<std::size_t>(cfg.crop_length), 0.0);
    const std::size_t n =
        std::min(ex.wave.size(), static_cast<std::size_t>(cfg.crop_length));
    std::copy(ex.wave.begin(), ex.wave.begin() + static_cast<std::ptrdiff_t>(n),
              e.wave.begin());
    e.label = ex.label;
    b.push_back(std::move(e));
  }
  return b;
}

struct TrainResult {
  long steps = 0;
  real final_train_loss = 0.0;
  std::optional<real> final_val_loss;
};

inline TrainResult run_training(Trainer& tr, const std::vector<Example>& pool,
                                const std::vector<Example>& val_pool,
                                const std::string& log_path,
                                const std::string& checkpoint_dir,
                                std::ostream* console = nullptr) {
  const TrainConfig& cfg = tr.config();
  const Batch val = validation_batch(val_pool, cfg);
  if (!checkpoint_dir.empty()) {
    std::filesystem::create_directories(checkpoint_dir);
  }
  const auto t0 = std::chrono::steady_clock::now();
  TrainResult res;
  while (tr.step_count() < cfg.max_steps) {
    const Batch b = assemble_batch(pool, cfg, tr.step_count());
    res.final_train_loss = tr.train_step(b);
    const long step = tr.step_count();
    const bool last = step >= cfg.max_steps;

    std::optional<real> val_loss;
    if (!val.empty() && (step % cfg.val_interval == 0 || last)) {
      val_loss =
          validation_loss(tr.network(), val, tr.schedule(), cfg.seed);
      res.final_val_loss = val_loss;
    }
    if (step % cfg.log_interval == 0 || last) {
      const real wall =
          std::chrono::duration<real>(std::chrono::steady_clock::now() - t0)
              .count();
      if (!log_path.empty()) {
        append_train_log(log_path, step, res.final_train_loss, val_loss, wall);
      }
      if (console) {
        (*console) << "step " << step << " loss " << res.final_train_loss;
        if (val_loss) (*console) << " val " << *val_loss;
        (*console) << " wall " << wall << "s\n";
      }
    }
    if (!checkpoint_dir.empty() &&
        (step % cfg.checkpoint_interval == 0 || last)) {
      tr.save(checkpoint_dir + "/latest.ckpt");
    }
  }
  res.steps = tr.step_count();
  return res;
}

}  // namespace dag
