#pragma once
// Run configuration: every schedule / network / training / sampler knob in
// one flat, namespaced key-value document, serialized as JSON with dotted
// keys ("network.strides", "train.learning_rate", ...). Parsing starts from
// defaults (or a named preset) and overlays the given keys; unknown keys are
// configuration errors so typos cannot silently fall back to defaults.

#include <json.hpp>

#include <fstream>
#include <string>
#include <vector>

#include "dag/core.hpp"
#include "dag/network.hpp"
#include "dag/sampler.hpp"
#include "dag/training.hpp"

namespace dag {

struct RunConfig {
  std::string preset;  // "", "dag48", "dag22", or "toy"
  real sigma_min = 1e-3;
  real sigma_max = 1.0;
  DagConfig network;
  TrainConfig train;
  SamplerConfig sampler;
  std::string data_root;
  real val_fraction = 0.1;

  void validate() const {
    require_config(std::isfinite(sigma_min) && sigma_min > 0.0 &&
                       sigma_min < sigma_max,
                   "config: need 0 < schedule.sigma_min < schedule.sigma_max");
    network.validate();
    train.validate();
    require_config(val_fraction >= 0.0 && val_fraction < 1.0,
                   "config: data.val_fraction must lie in [0, 1)");
    try {
      sampler.validate();
    } catch (const DomainError& e) {
      throw ConfigError(e.what());
    }
    require_config(train.crop_length % network.stride_product() == 0,
                   "config: train.crop_length must be divisible by the stride "
                   "product " +
                       std::to_string(network.stride_product()));
  }
};

inline RunConfig preset_config(const std::string& name) {
  RunConfig rc;
  rc.preset = name;
  if (name == "dag48") {
    rc.network = DagConfig::dag48(rc.network.vocab_size);
    rc.train.crop_length = 48000;
  } else if (name == "dag22") {
    rc.network = DagConfig::dag22(rc.network.vocab_size);
    rc.train.crop_length = 22140;  // pad_to_admissible(22050, 180)
  } else if (name == "toy") {
    rc.network.sample_rate = 4000;
    rc.network.strides = {2, 2, 4};
    rc.network.widths = {8, 16, 32};
    rc.network.vocab_size = 2;
    rc.network.sigma_embed_dim = 32;
    rc.network.sigma_hidden = 48;
    rc.network.fourier_features = 16;
    rc.network.gru_hidden = 32;
    rc.network.gru_layers = 1;
    rc.train.crop_length = 1008;
    rc.train.batch_size = 8;
    // 2e-3 diverges on toy-scale corpora after ~2k steps; 1e-3 is stable.
    rc.train.learning_rate = 1e-3;
    rc.train.max_steps = 8000;
  } else if (!name.empty()) {
    throw ConfigError("config: unknown preset '" + name + "'");
  }
  return rc;
}

inline nlohmann::json to_json(const RunConfig& rc) {
  nlohmann::json j;
  j["preset"] = rc.preset;
  j["schedule.sigma_min"] = rc.sigma_min;
  j["schedule.sigma_max"] = rc.sigma_max;
  j["network.sample_rate"] = rc.network.sample_rate;
  j["network.strides"] = rc.network.strides;
  j["network.widths"] = rc.network.widths;
  j["network.vocab_size"] = rc.network.vocab_size;
  j["network.label_embed_factor"] = rc.network.label_embed_factor;
  j["network.sigma_embed_dim"] = rc.network.sigma_embed_dim;
  j["network.sigma_hidden"] = rc.network.sigma_hidden;
  j["network.fourier_features"] = rc.network.fourier_features;
  j["network.fourier_scale"] = rc.network.fourier_scale;
  j["network.gru_hidden"] = rc.network.gru_hidden;
  j["network.gru_layers"] = rc.network.gru_layers;
  j["network.recurrent_bottleneck"] = rc.network.recurrent_bottleneck;
  j["network.leaky_slope"] = rc.network.leaky_slope;
  j["train.batch_size"] = rc.train.batch_size;
  j["train.learning_rate"] = rc.train.learning_rate;
  j["train.cfg_dropout_prob"] = rc.train.cfg_dropout_prob;
  j["train.max_steps"] = rc.train.max_steps;
  j["train.seed"] = rc.train.seed;
  j["train.crop_length"] = rc.train.crop_length;
  j["train.divergence_threshold"] = rc.train.divergence_threshold;
  j["train.val_interval"] = rc.train.val_interval;
  j["train.checkpoint_interval"] = rc.train.checkpoint_interval;
  j["train.log_interval"] = rc.train.log_interval;
  j["sampler.steps"] = rc.sampler.steps;
  j["sampler.alpha"] = rc.sampler.alpha;
  j["sampler.gamma"] = rc.sampler.gamma;
  j["sampler.seed"] = rc.sampler.seed;
  j["sampler.threshold_enabled"] = rc.sampler.threshold_enabled;
  j["data.root"] = rc.data_root;
  j["data.val_fraction"] = rc.val_fraction;
  return j;
}

inline RunConfig from_json(const nlohmann::json& j) {
  RunConfig rc;
  if (j.contains("preset") && j.at("preset").is_string()) {
    rc = preset_config(j.at("preset").get<std::string>());
  }
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "preset") {
      } else if (key == "schedule.sigma_min") {
        rc.sigma_min = value.get<real>();
      } else if (key == "schedule.sigma_max") {
        rc.sigma_max = value.get<real>();
      } else if (key == "network.sample_rate") {
        rc.network.sample_rate = value.get<int>();
      } else if (key == "network.strides") {
        rc.network.strides = value.get<std::vector<int>>();
      } else if (key == "network.widths") {
        rc.network.widths = value.get<std::vector<int>>();
      } else if (key == "network.vocab_size") {
        rc.network.vocab_size = value.get<int>();
      } else if (key == "network.label_embed_factor") {
        rc.network.label_embed_factor = value.get<int>();
      } else if (key == "network.sigma_embed_dim") {
        rc.network.sigma_embed_dim = value.get<int>();
      } else if (key == "network.sigma_hidden") {
        rc.network.sigma_hidden = value.get<int>();
      } else if (key == "network.fourier_features") {
        rc.network.fourier_features = value.get<int>();
      } else if (key == "network.fourier_scale") {
        rc.network.fourier_scale = value.get<real>();
      } else if (key == "network.gru_hidden") {
        rc.network.gru_hidden = value.get<int>();
      } else if (key == "network.gru_layers") {
        rc.network.gru_layers = value.get<int>();
      } else if (key == "network.recurrent_bottleneck") {
        rc.network.recurrent_bottleneck = value.get<bool>();
      } else if (key == "network.leaky_slope") {
        rc.network.leaky_slope = value.get<real>();
      } else if (key == "train.batch_size") {
        rc.train.batch_size = value.get<int>();
      } else if (key == "train.learning_rate") {
        rc.train.learning_rate = value.get<real>();
      } else if (key == "train.cfg_dropout_prob") {
        rc.train.cfg_dropout_prob = value.get<real>();
      } else if (key == "train.max_steps") {
        rc.train.max_steps = value.get<long>();
      } else if (key == "train.seed") {
        rc.train.seed = value.get<std::uint64_t>();
      } else if (key == "train.crop_length") {
        rc.train.crop_length = value.get<int>();
      } else if (key == "train.divergence_threshold") {
        rc.train.divergence_threshold = value.get<real>();
      } else if (key == "train.val_interval") {
        rc.train.val_interval = value.get<int>();
      } else if (key == "train.checkpoint_interval") {
        rc.train.checkpoint_interval = value.get<int>();
      } else if (key == "train.log_interval") {
        rc.train.log_interval = value.get<int>();
      } else if (key == "sampler.steps") {
        rc.sampler.steps = value.get<int>();
      } else if (key == "sampler.alpha") {
        rc.sampler.alpha = value.get<real>();
      } else if (key == "sampler.gamma") {
        rc.sampler.gamma = value.get<real>();
      } else if (key == "sampler.seed") {
        rc.sampler.seed = value.get<std::uint64_t>();
      } else if (key == "sampler.threshold_enabled") {
        rc.sampler.threshold_enabled = value.get<bool>();
      } else if (key == "data.root") {
        rc.data_root = value.get<std::string>();
      } else if (key == "data.val_fraction") {
        rc.val_fraction = value.get<real>();
      } else {
        throw ConfigError("config: unknown key '" + key + "'");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: malformed value: ") + e.what());
  }
  return rc;
}

inline void save_config(const std::string& path, const RunConfig& rc) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("config: cannot open for write " + path);
  f << to_json(rc).dump(2) << "\n";
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("config: cannot open " + path);
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: parse failure in ") + path + ": " +
                      e.what());
  }
  return from_json(j);
}

}  // namespace dag
