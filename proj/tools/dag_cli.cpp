// Command-line driver: train / sample / style-transfer / evaluate / embed /
// sweep. All verbs share the RunConfig document; flags override config keys
// and DAG_DATA_ROOT overrides the dataset root.

#include <CLI11.hpp>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "dag/audio.hpp"
#include "dag/config.hpp"
#include "dag/core.hpp"
#include "dag/dataset.hpp"
#include "dag/metrics.hpp"
#include "dag/network.hpp"
#include "dag/runner.hpp"
#include "dag/sampler.hpp"
#include "dag/schedule.hpp"
#include "dag/training.hpp"

namespace fs = std::filesystem;
using dag::real;

namespace {

std::string resolve_data_root(const std::string& flag_value,
                              const std::string& config_value) {
  if (!flag_value.empty()) return flag_value;
  if (const char* env = std::getenv("DAG_DATA_ROOT"); env && *env) return env;
  return config_value;
}

struct LoadedCheckpoint {
  dag::RunConfig config;
  std::unique_ptr<dag::DagNetwork> net;
  long step = 0;
};

LoadedCheckpoint load_net(const std::string& ckpt_path) {
  LoadedCheckpoint out;
  const dag::CheckpointMeta meta = dag::read_checkpoint_meta(ckpt_path);
  out.config = dag::from_json(nlohmann::json::parse(meta.config_json));
  out.net = std::make_unique<dag::DagNetwork>(out.config.network);
  dag::load_checkpoint(ckpt_path, out.net->params(), nullptr, nullptr);
  out.step = static_cast<long>(meta.step);
  return out;
}

int resolve_label(const std::string& text, const dag::RunConfig& rc,
                  const std::string& data_root) {
  if (text.empty()) return 0;
  try {
    const int id = std::stoi(text);
    dag::require_domain(id >= 0 && id < rc.network.vocab_size,
                        "label id out of range [0, " +
                            std::to_string(rc.network.vocab_size) + ")");
    return id;
  } catch (const std::invalid_argument&) {
    // Fall through to name lookup against the dataset vocabulary.
  }
  if (data_root.empty()) {
    throw dag::ConfigError(
        "label '" + text +
        "' is not an id and no data root is available for name lookup");
  }
  const dag::LabeledDataset ds = dag::ingest(data_root, rc.network.sample_rate);
  return ds.label_of(text);
}

// Embeddings for a path that may be a columnar file or a label-tree of WAVs.
dag::EmbeddingSet embeddings_for(const std::string& path, int rate,
                                 std::vector<real>* centroids = nullptr,
                                 std::vector<int>* labels = nullptr) {
  if (fs::is_regular_file(path)) {
    return dag::read_embeddings(path);
  }
  const dag::LabeledDataset ds = dag::ingest(path, rate);
  dag::require_domain(!ds.index.empty(), "no clips under " + path);
  dag::ToyFrontEnd fe(rate);
  std::vector<std::vector<real>> clips;
  clips.reserve(ds.index.size());
  for (std::size_t i = 0; i < ds.index.size(); ++i) {
    clips.push_back(dag::load_clip(ds, i));
    if (centroids) {
      centroids->push_back(dag::spectral_centroid(clips.back(), rate));
    }
    if (labels) labels->push_back(ds.index[i].label);
  }
  return dag::embed_audio(clips, rate, fe, path);
}

// Two-moment per-class model over log spectral centroid; emits Gaussian
// log-likelihood logits. Training-free stand-in for a pre-trained classifier.
struct CentroidClassifier {
  std::vector<real> mean, var;

  static CentroidClassifier fit(const std::vector<real>& centroids,
                                const std::vector<int>& labels, int classes) {
    dag::require_domain(classes >= 2, "classifier: need >= 2 classes");
    CentroidClassifier c;
    c.mean.assign(static_cast<std::size_t>(classes), 0.0);
    c.var.assign(static_cast<std::size_t>(classes), 0.0);
    std::vector<std::size_t> n(static_cast<std::size_t>(classes), 0);
    for (std::size_t i = 0; i < centroids.size(); ++i) {
      const auto k = static_cast<std::size_t>(labels[i]);
      c.mean[k] += std::log(centroids[i] + 1.0);
      ++n[k];
    }
    for (std::size_t k = 0; k < c.mean.size(); ++k) {
      dag::require_domain(n[k] >= 2, "classifier: class " + std::to_string(k) +
                                         " needs >= 2 reference clips");
      c.mean[k] /= static_cast<real>(n[k]);
    }
    for (std::size_t i = 0; i < centroids.size(); ++i) {
      const auto k = static_cast<std::size_t>(labels[i]);
      const real d = std::log(centroids[i] + 1.0) - c.mean[k];
      c.var[k] += d * d;
    }
    for (std::size_t k = 0; k < c.var.size(); ++k) {
      c.var[k] = std::max(c.var[k] / static_cast<real>(n[k] - 1), 1e-6);
    }
    return c;
  }

  dag::LogitMatrix logits(const std::vector<real>& centroids) const {
    dag::LogitMatrix lm;
    lm.logits.resize(static_cast<Eigen::Index>(centroids.size()),
                     static_cast<Eigen::Index>(mean.size()));
    for (std::size_t i = 0; i < centroids.size(); ++i) {
      const real x = std::log(centroids[i] + 1.0);
      for (std::size_t k = 0; k < mean.size(); ++k) {
        const real d = x - mean[k];
        lm.logits(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) =
            -0.5 * d * d / var[k] - 0.5 * std::log(var[k]);
      }
    }
    return lm;
  }
};

std::vector<real> parse_list(const std::string& text) {
  std::vector<real> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(std::stod(item));
  }
  dag::require_domain(!out.empty(), "empty value list '" + text + "'");
  return out;
}

void write_svg_plot(const std::string& path, const std::string& x_name,
                    const std::vector<real>& xs,
                    const std::vector<std::pair<std::string, std::vector<real>>>& series) {
  const int W = 640, H = 420, ML = 70, MR = 20, MT = 30, MB = 50;
  real ymin = 0.0, ymax = 1e-9, xmin = xs.front(), xmax = xs.back();
  for (const auto& [name, ys] : series) {
    for (real y : ys) ymax = std::max(ymax, y);
  }
  if (xmax == xmin) xmax = xmin + 1.0;
  auto px = [&](real x) {
    return ML + (x - xmin) / (xmax - xmin) * (W - ML - MR);
  };
  auto py = [&](real y) {
    return H - MB - (y - ymin) / (ymax - ymin) * (H - MT - MB);
  };
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw dag::IoError("plot: cannot open " + path);
  f << "<svg xmlns='http://www.w3.org/2000/svg' width='" << W << "' height='"
    << H << "'>\n<rect width='100%' height='100%' fill='white'/>\n";
  f << "<line x1='" << ML << "' y1='" << (H - MB) << "' x2='" << (W - MR)
    << "' y2='" << (H - MB) << "' stroke='black'/>\n";
  f << "<line x1='" << ML << "' y1='" << MT << "' x2='" << ML << "' y2='"
    << (H - MB) << "' stroke='black'/>\n";
  f << "<text x='" << (W / 2) << "' y='" << (H - 12)
    << "' text-anchor='middle' font-size='14'>" << x_name << "</text>\n";
  const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd"};
  int si = 0;
  for (const auto& [name, ys] : series) {
    f << "<polyline fill='none' stroke='" << colors[si % 4]
      << "' stroke-width='2' points='";
    for (std::size_t i = 0; i < xs.size(); ++i) {
      f << px(xs[i]) << ',' << py(ys[i]) << ' ';
    }
    f << "'/>\n<text x='" << (W - MR - 120) << "' y='" << (MT + 18 * si)
      << "' fill='" << colors[si % 4] << "' font-size='13'>" << name
      << "</text>\n";
    ++si;
  }
  f << "</svg>\n";
}

int cmd_train(const std::string& config_path, const std::string& preset,
              const std::string& data_root_flag, const std::string& out_dir,
              std::optional<long> max_steps, std::optional<std::uint64_t> seed,
              bool resume) {
  dag::RunConfig rc =
      config_path.empty() ? dag::preset_config(preset) : dag::load_config(config_path);
  rc.data_root = resolve_data_root(data_root_flag, rc.data_root);
  if (max_steps) rc.train.max_steps = *max_steps;
  if (seed) rc.train.seed = *seed;
  dag::require_config(!rc.data_root.empty(),
                      "train: no data root (flag, DAG_DATA_ROOT, or config)");

  dag::LabeledDataset ds = dag::ingest(rc.data_root, rc.network.sample_rate);
  dag::require_config(!ds.index.empty(), "train: dataset is empty");
  rc.network.vocab_size = static_cast<int>(ds.vocabulary.size());
  rc.validate();

  fs::create_directories(out_dir);
  dag::save_config(out_dir + "/config.json", rc);

  const auto [train_idx, val_idx] = dag::split(ds, rc.val_fraction, rc.train.seed);
  std::cout << "dataset: " << ds.index.size() << " clips, "
            << ds.vocabulary.size() << " labels, " << train_idx.size()
            << " train / " << val_idx.size() << " val\n";
  const std::vector<dag::Example> pool = dag::load_examples(ds, train_idx);
  const std::vector<dag::Example> val_pool = dag::load_examples(ds, val_idx);

  dag::DagNetwork net(rc.network);
  net.init_params(rc.train.seed);
  dag::NoiseSchedule sch(rc.sigma_min, rc.sigma_max);
  const std::string ckpt_dir = out_dir + "/ckpt";
  dag::Trainer tr(net, sch, rc.train, dag::to_json(rc).dump(), ckpt_dir);
  if (resume && fs::exists(ckpt_dir + "/latest.ckpt")) {
    tr.load(ckpt_dir + "/latest.ckpt");
    std::cout << "resumed from step " << tr.step_count() << "\n";
  }
  std::cout << "network: " << net.param_count() << " parameters\n";
  const dag::TrainResult res = dag::run_training(
      tr, pool, val_pool, out_dir + "/train.csv", ckpt_dir, &std::cout);
  std::cout << "finished at step " << res.steps << ", train loss "
            << res.final_train_loss;
  if (res.final_val_loss) std::cout << ", val loss " << *res.final_val_loss;
  std::cout << "\n";
  return 0;
}

int cmd_sample(const std::string& ckpt, const std::string& label_text,
               const std::string& out_path, int count, real seconds,
               long length_flag, std::optional<real> gamma,
               std::optional<real> alpha, std::optional<int> steps,
               std::optional<std::uint64_t> seed, bool no_threshold,
               const std::string& trace_path, const std::string& data_root,
               const std::string& style_input) {
  LoadedCheckpoint lc = load_net(ckpt);
  dag::SamplerConfig scfg = lc.config.sampler;
  if (gamma) scfg.gamma = *gamma;
  if (alpha) scfg.alpha = *alpha;
  if (steps) scfg.steps = *steps;
  if (seed) scfg.seed = *seed;
  scfg.threshold_enabled = !no_threshold;
  const int label = resolve_label(label_text, lc.config, data_root);
  const int rate = lc.config.network.sample_rate;
  dag::NoiseSchedule sch(lc.config.sigma_min, lc.config.sigma_max);

  std::optional<std::vector<real>> style;
  std::size_t length = 0;
  if (!style_input.empty()) {
    dag::AudioClip y = dag::read_wav(style_input);
    std::vector<real> wave = std::move(y.samples);
    if (y.sample_rate != rate) wave = dag::resample(wave, rate, y.sample_rate);
    dag::normalize_peak(wave);
    wave.resize(dag::pad_to_admissible(
                    wave.size(),
                    static_cast<std::size_t>(lc.config.network.stride_product())),
                0.0);
    length = wave.size();
    style = std::move(wave);
  } else {
    const auto requested =
        length_flag > 0
            ? static_cast<std::size_t>(length_flag)
            : static_cast<std::size_t>(std::llround(seconds * rate));
    dag::require_domain(requested > 0, "sample: zero output length");
    length = dag::pad_to_admissible(
        requested, static_cast<std::size_t>(lc.config.network.stride_product()));
  }

  for (int k = 0; k < count; ++k) {
    std::vector<dag::StepTrace> trace;
    std::vector<real> x =
        style ? dag::style_transfer(*lc.net, *style, label, sch, scfg,
                                    static_cast<std::uint64_t>(k),
                                    trace_path.empty() ? nullptr : &trace)
              : dag::sample(*lc.net, label, length, sch, scfg,
                            static_cast<std::uint64_t>(k),
                            trace_path.empty() ? nullptr : &trace);
    std::string path = out_path;
    if (count > 1) {
      std::ostringstream os;
      const auto dot = out_path.rfind(".wav");
      os << out_path.substr(0, dot) << "_" << std::setw(3) << std::setfill('0')
         << k << ".wav";
      path = os.str();
    }
    dag::write_wav(path, x, rate);
    if (!trace_path.empty()) {
      dag::write_trace_csv(count > 1 ? trace_path + "." + std::to_string(k)
                                     : trace_path,
                           trace);
    }
    std::cout << "wrote " << path << " (" << x.size() << " samples at " << rate
              << " Hz)\n";
  }
  return 0;
}

int cmd_evaluate(const std::string& reference, const std::string& evaluated,
                 const std::string& logits_path, int rate,
                 const std::string& report_path) {
  std::vector<real> ref_centroids, eval_centroids;
  std::vector<int> ref_labels;
  const dag::EmbeddingSet ref =
      embeddings_for(reference, rate, &ref_centroids, &ref_labels);
  const dag::EmbeddingSet ev = embeddings_for(evaluated, rate, &eval_centroids);
  const real fd = dag::frechet_distance(ref, ev);

  std::optional<real> ls;
  if (!logits_path.empty()) {
    ls = dag::logit_score(dag::read_logits(logits_path));
  } else if (!ref_labels.empty() && !eval_centroids.empty()) {
    const int classes =
        1 + *std::max_element(ref_labels.begin(), ref_labels.end());
    if (classes >= 2) {
      const auto clf = CentroidClassifier::fit(ref_centroids, ref_labels, classes);
      ls = dag::logit_score(clf.logits(eval_centroids));
    }
  }

  std::cout << "fd " << fd << "\n";
  if (ls) {
    std::cout << "ls " << *ls << "\n";
  } else {
    std::cout << "ls n/a (no logits file and no labeled reference tree)\n";
  }
  if (!report_path.empty()) {
    std::ofstream f(report_path, std::ios::trunc);
    if (!f) throw dag::IoError("evaluate: cannot open " + report_path);
    f << "metric,value\nfd," << fd << "\nls,";
    if (ls) f << *ls;
    f << "\nn_ref," << ref.count() << "\nn_eval," << ev.count() << "\n";
  }
  return 0;
}

int cmd_embed(const std::string& input, const std::string& out_path, int rate) {
  const dag::EmbeddingSet set = embeddings_for(input, rate);
  dag::write_embeddings(out_path, set);
  std::cout << "wrote " << out_path << " (" << set.count() << " x " << set.dim()
            << ")\n";
  return 0;
}

int cmd_sweep(const std::string& ckpt, const std::string& reference,
              const std::string& gammas, const std::string& alphas,
              const std::string& steps_list, int count, real seconds,
              std::uint64_t seed, const std::string& out_csv,
              const std::string& plot_path) {
  LoadedCheckpoint lc = load_net(ckpt);
  const int rate = lc.config.network.sample_rate;
  std::vector<real> ref_centroids;
  std::vector<int> ref_labels;
  const dag::EmbeddingSet ref =
      embeddings_for(reference, rate, &ref_centroids, &ref_labels);
  const int classes =
      ref_labels.empty()
          ? 0
          : 1 + *std::max_element(ref_labels.begin(), ref_labels.end());
  std::optional<CentroidClassifier> clf;
  if (classes >= 2) {
    clf = CentroidClassifier::fit(ref_centroids, ref_labels, classes);
  }

  dag::NoiseSchedule sch(lc.config.sigma_min, lc.config.sigma_max);
  const std::size_t length = dag::pad_to_admissible(
      static_cast<std::size_t>(std::llround(seconds * rate)),
      static_cast<std::size_t>(lc.config.network.stride_product()));
  dag::ToyFrontEnd fe(rate);

  std::ofstream csv(out_csv, std::ios::trunc);
  if (!csv) throw dag::IoError("sweep: cannot open " + out_csv);
  csv << "gamma,alpha,steps,fd,ls,wall_seconds\n";

  std::vector<real> xs;
  std::vector<real> fd_series, ls_series;
  for (real g : parse_list(gammas)) {
    for (real a : parse_list(alphas)) {
      for (real n : parse_list(steps_list)) {
        dag::SamplerConfig scfg = lc.config.sampler;
        scfg.gamma = g;
        scfg.alpha = a;
        scfg.steps = static_cast<int>(n);
        scfg.seed = seed;
        const auto t0 = std::chrono::steady_clock::now();
        std::vector<std::vector<real>> clips;
        std::vector<real> centroids;
        clips.reserve(static_cast<std::size_t>(count));
        for (int k = 0; k < count; ++k) {
          const int label = lc.config.network.vocab_size > 0
                                ? k % lc.config.network.vocab_size
                                : 0;
          clips.push_back(dag::sample(*lc.net, label, length, sch, scfg,
                                      static_cast<std::uint64_t>(k)));
          centroids.push_back(dag::spectral_centroid(clips.back(), rate));
        }
        const real wall =
            std::chrono::duration<real>(std::chrono::steady_clock::now() - t0)
                .count();
        const dag::EmbeddingSet gen = dag::embed_audio(clips, rate, fe, "sweep");
        const real fd = dag::frechet_distance(ref, gen);
        std::optional<real> ls;
        if (clf) ls = dag::logit_score(clf->logits(centroids));
        csv << g << ',' << a << ',' << n << ',' << fd << ',';
        if (ls) csv << *ls;
        csv << ',' << wall << '\n';
        std::cout << "gamma " << g << " alpha " << a << " steps " << n << ": fd "
                  << fd;
        if (ls) std::cout << " ls " << *ls;
        std::cout << " (" << wall << "s)\n";
        xs.push_back(static_cast<real>(xs.size()));
        fd_series.push_back(fd);
        ls_series.push_back(ls ? *ls : 0.0);
      }
    }
  }
  if (!plot_path.empty() && !xs.empty()) {
    write_svg_plot(plot_path, "grid point", xs,
                   {{"fd", fd_series}, {"ls", ls_series}});
    std::cout << "wrote " << plot_path << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"label-conditioned diffusion audio generator"};
  app.require_subcommand(1);

  // train
  std::string t_config, t_preset = "toy", t_root, t_out = "run";
  long t_steps = -1;
  std::int64_t t_seed = -1;
  bool t_resume = false;
  auto* train = app.add_subcommand("train", "train a model on a label tree");
  train->add_option("--config", t_config, "run config JSON");
  train->add_option("--preset", t_preset, "dag48|dag22|toy");
  train->add_option("--data-root", t_root, "dataset root (label subdirs)");
  train->add_option("--out", t_out, "output run directory");
  train->add_option("--max-steps", t_steps, "override train.max_steps");
  train->add_option("--seed", t_seed, "override train.seed");
  train->add_flag("--resume", t_resume, "resume from <out>/ckpt/latest.ckpt");

  // sample / style-transfer
  std::string s_ckpt, s_label, s_out = "sample.wav", s_trace, s_root, s_style;
  int s_count = 1, s_steps = -1;
  real s_seconds = 1.0, s_gamma = -1.0, s_alpha = -1.0;
  long s_length = -1;
  std::int64_t s_seed = -1;
  bool s_nothr = false;
  auto add_sampling_flags = [&](CLI::App* c) {
    c->add_option("--checkpoint", s_ckpt, "trained checkpoint")->required();
    c->add_option("--label", s_label, "class id or name");
    c->add_option("--out", s_out, "output WAV path");
    c->add_option("--count", s_count, "number of samples");
    c->add_option("--seconds", s_seconds, "duration in seconds");
    c->add_option("--length", s_length, "duration in samples (overrides)");
    c->add_option("--gamma", s_gamma, "guidance weight");
    c->add_option("--alpha", s_alpha, "step-size exponent");
    c->add_option("--steps", s_steps, "noise levels");
    c->add_option("--seed", s_seed, "sampler seed");
    c->add_option("--trace", s_trace, "per-step trace CSV");
    c->add_option("--data-root", s_root, "dataset root for label names");
    c->add_flag("--no-threshold", s_nothr, "disable dynamic thresholding");
  };
  auto* sample = app.add_subcommand("sample", "generate audio");
  add_sampling_flags(sample);
  auto* style = app.add_subcommand("style-transfer",
                                   "regenerate a reference clip under a label");
  add_sampling_flags(style);
  style->add_option("--input", s_style, "reference WAV")->required();

  // evaluate
  std::string e_ref, e_eval, e_logits, e_report;
  int e_rate = 48000;
  auto* evaluate = app.add_subcommand("evaluate", "FD/LS between two sets");
  evaluate->add_option("--reference", e_ref, "label tree or embedding file")
      ->required();
  evaluate->add_option("--evaluated", e_eval, "label tree or embedding file")
      ->required();
  evaluate->add_option("--logits", e_logits, "columnar logits file for LS");
  evaluate->add_option("--rate", e_rate, "sample rate for directory inputs");
  evaluate->add_option("--out", e_report, "report CSV path");

  // embed
  std::string m_input, m_out = "embeddings.bin";
  int m_rate = 48000;
  auto* embed = app.add_subcommand("embed", "write columnar embeddings");
  embed->add_option("--input", m_input, "label tree or flat WAV directory")
      ->required();
  embed->add_option("--out", m_out, "output file");
  embed->add_option("--rate", m_rate, "sample rate");

  // sweep
  std::string w_ckpt, w_ref, w_gammas = "0,1,2,4", w_alphas = "2",
              w_steps = "50,100,200", w_csv = "sweep.csv", w_plot;
  int w_count = 32;
  real w_seconds = 1.0;
  std::uint64_t w_seed = 0;
  auto* sweep = app.add_subcommand("sweep", "grid over sampler settings");
  sweep->add_option("--checkpoint", w_ckpt)->required();
  sweep->add_option("--reference", w_ref, "label tree or embedding file")
      ->required();
  sweep->add_option("--gamma", w_gammas, "comma list");
  sweep->add_option("--alpha", w_alphas, "comma list");
  sweep->add_option("--steps", w_steps, "comma list");
  sweep->add_option("--count", w_count, "samples per grid point");
  sweep->add_option("--seconds", w_seconds, "sample duration");
  sweep->add_option("--seed", w_seed, "sampler seed");
  sweep->add_option("--out", w_csv, "CSV path");
  sweep->add_option("--plot", w_plot, "SVG plot path");

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed()) {
      return cmd_train(t_config, t_preset, t_root, t_out,
                       t_steps >= 0 ? std::optional<long>(t_steps) : std::nullopt,
                       t_seed >= 0 ? std::optional<std::uint64_t>(
                                         static_cast<std::uint64_t>(t_seed))
                                   : std::nullopt,
                       t_resume);
    }
    if (sample->parsed() || style->parsed()) {
      return cmd_sample(
          s_ckpt, s_label, s_out, s_count, s_seconds, s_length,
          s_gamma >= 0.0 ? std::optional<real>(s_gamma) : std::nullopt,
          s_alpha >= 0.0 ? std::optional<real>(s_alpha) : std::nullopt,
          s_steps > 0 ? std::optional<int>(s_steps) : std::nullopt,
          s_seed >= 0 ? std::optional<std::uint64_t>(
                            static_cast<std::uint64_t>(s_seed))
                      : std::nullopt,
          s_nothr, s_trace, s_root, style->parsed() ? s_style : "");
    }
    if (evaluate->parsed()) {
      return cmd_evaluate(e_ref, e_eval, e_logits, e_rate, e_report);
    }
    if (embed->parsed()) {
      return cmd_embed(m_input, m_out, m_rate);
    }
    if (sweep->parsed()) {
      return cmd_sweep(w_ckpt, w_ref, w_gammas, w_alphas, w_steps, w_count,
                       w_seconds, w_seed, w_csv, w_plot);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
