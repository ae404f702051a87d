#pragma once
// Shared helpers for the test suites: miniature network configurations that
// keep finite-difference sweeps and training loops fast.

#include "dag/network.hpp"

namespace testsup {

inline dag::DagConfig tiny_config(int vocab = 2, bool recurrent = true) {
  dag::DagConfig c;
  c.sample_rate = 100;
  c.strides = {2, 2};
  c.widths = {3, 4};
  c.vocab_size = vocab;
  c.label_embed_factor = 2;
  c.sigma_embed_dim = 5;
  c.sigma_hidden = 6;
  c.fourier_features = 3;
  c.fourier_scale = 2.0;
  c.gru_hidden = 3;
  c.gru_layers = 2;
  c.recurrent_bottleneck = recurrent;
  return c;
}

}  // namespace testsup
