#pragma once
// Folder-per-label dataset ingestion. The vocabulary is the sorted list of
// subdirectory names; the index lists every decodable WAV under them. Clips
// decode lazily: mono downmix, rational resample to the target rate, then
// per-clip peak normalization.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <string>
#include <utility>
#include <vector>

#include "dag/audio.hpp"
#include "dag/core.hpp"
#include "dag/dsp.hpp"

namespace dag {

struct ClipEntry {
  std::string path;
  int label = 0;
  int native_rate = 0;
  std::size_t native_frames = 0;

  // Length after rational resampling to `target_rate`: ceil(n * p / q).
  std::size_t frames_at(int target_rate) const {
    if (target_rate == native_rate) return native_frames;
    const auto num = native_frames * static_cast<std::size_t>(target_rate);
    return (num + static_cast<std::size_t>(native_rate) - 1) /
           static_cast<std::size_t>(native_rate);
  }
};

struct LabeledDataset {
  std::string root;
  int sample_rate = 0;  // target rate
  std::vector<std::string> vocabulary;
  std::vector<ClipEntry> index;

  int label_of(const std::string& name) const {
    for (std::size_t i = 0; i < vocabulary.size(); ++i) {
      if (vocabulary[i] == name) return static_cast<int>(i);
    }
    throw DomainError("dataset: unknown label '" + name + "'");
  }
};

inline LabeledDataset ingest(const std::string& root, int target_rate,
                             std::ostream& log = std::cerr) {
  namespace fs = std::filesystem;
  require_domain(target_rate > 0, "ingest: target rate must be positive");
  if (!fs::is_directory(root)) {
    throw ConfigError("ingest: not a directory: " + root);
  }
  LabeledDataset ds;
  ds.root = root;
  ds.sample_rate = target_rate;

  std::vector<std::string> labels;
  for (const auto& e : fs::directory_iterator(root)) {
    if (e.is_directory()) labels.push_back(e.path().filename().string());
  }
  std::sort(labels.begin(), labels.end());
  if (labels.empty()) {
    throw ConfigError("ingest: no label subdirectories under " + root);
  }
  ds.vocabulary = labels;

  for (std::size_t li = 0; li < labels.size(); ++li) {
    std::vector<std::string> files;
    for (const auto& e : fs::directory_iterator(fs::path(root) / labels[li])) {
      if (e.is_regular_file()) files.push_back(e.path().string());
    }
    std::sort(files.begin(), files.end());
    std::size_t kept = 0;
    for (const std::string& f : files) {
      ClipEntry entry;
      entry.path = f;
      entry.label = static_cast<int>(li);
      try {
        entry.native_frames = wav_frames(f, &entry.native_rate);
      } catch (const IoError& err) {
        log << "ingest: skipping undecodable file " << f << " (" << err.what()
            << ")\n";
        continue;
      }
      if (entry.native_frames == 0) {
        log << "ingest: skipping empty file " << f << "\n";
        continue;
      }
      ds.index.push_back(std::move(entry));
      ++kept;
    }
    if (kept == 0) {
      log << "ingest: label directory '" << labels[li] << "' has no usable clips\n";
    }
  }
  return ds;
}

// Decode + downmix + resample + peak-normalize one indexed clip.
inline std::vector<real> load_clip(const LabeledDataset& ds, std::size_t i) {
  require_domain(i < ds.index.size(), "load_clip: index out of range");
  const ClipEntry& e = ds.index[i];
  AudioClip clip = read_wav(e.path);
  std::vector<real> x = std::move(clip.samples);
  if (clip.sample_rate != ds.sample_rate) {
    x = resample(x, ds.sample_rate, clip.sample_rate);
  }
  normalize_peak(x);
  return x;
}

// Stratified file-level split: within each label the order is shuffled by a
// label-keyed stream and round(n * val_fraction) files go to validation.
inline std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split(
    const LabeledDataset& ds, real val_fraction, std::uint64_t seed) {
  require_domain(val_fraction >= 0.0 && val_fraction < 1.0,
                 "split: val_fraction must lie in [0, 1)");
  std::vector<std::size_t> train, val;
  for (std::size_t li = 0; li < ds.vocabulary.size(); ++li) {
    std::vector<std::size_t> mine;
    for (std::size_t i = 0; i < ds.index.size(); ++i) {
      if (ds.index[i].label == static_cast<int>(li)) mine.push_back(i);
    }
    if (mine.empty()) continue;
    auto rng = Prng::stream(seed, stream::kSplit, li, 0);
    rng.shuffle(mine);
    const auto n_val = static_cast<std::size_t>(
        std::llround(val_fraction * static_cast<real>(mine.size())));
    for (std::size_t k = 0; k < mine.size(); ++k) {
      (k < n_val ? val : train).push_back(mine[k]);
    }
  }
  std::sort(train.begin(), train.end());
  std::sort(val.begin(), val.end());
  return {std::move(train), std::move(val)};
}

// Smallest multiple of stride_product that fits `length`.
inline std::size_t pad_to_admissible(std::size_t length,
                                     std::size_t stride_product) {
  require_domain(length >= 1 && stride_product >= 1,
                 "pad_to_admissible: inputs must be >= 1");
  return ((length + stride_product - 1) / stride_product) * stride_product;
}

// Fixed-length training crop: uniform start when the clip is long enough,
// zero-padding at the tail otherwise.
inline std::vector<real> random_crop(const std::vector<real>& wave,
                                     std::size_t crop, Prng& rng) {
  require_domain(crop >= 1, "random_crop: crop must be >= 1");
  std::vector<real> out(crop, 0.0);
  if (wave.size() <= crop) {
    std::copy(wave.begin(), wave.end(), out.begin());
    if (wave.size() < crop) return out;
    return out;
  }
  const std::uint64_t start =
      rng.uniform_below(static_cast<std::uint64_t>(wave.size() - crop + 1));
  std::copy(wave.begin() + static_cast<std::ptrdiff_t>(start),
            wave.begin() + static_cast<std::ptrdiff_t>(start + crop),
            out.begin());
  return out;
}

}  // namespace dag
