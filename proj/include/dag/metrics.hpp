#pragma once
// Evaluation metrics: Fréchet distance between Gaussian moment fits of
// embedding sets, FD = |mu_r - mu_e|^2 + Tr(S_r + S_e - 2 (S_r S_e)^(1/2)),
// and the logit score LS = exp(mean_i KL(softmax(logits_i) || marginal)).
// The embedding front-end is pluggable; a training-free log-mel embedder
// (per-band mean and std, d = 2 * bands) covers desk-scale evaluation, and a
// columnar file adapter ingests embeddings computed by external encoders.

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "dag/core.hpp"
#include "dag/dsp.hpp"

namespace dag {

struct EmbeddingSet {
  Eigen::MatrixXd embeddings;  // n x d
  std::string source_tag;

  std::size_t count() const { return static_cast<std::size_t>(embeddings.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(embeddings.cols()); }
};

struct GaussianStats {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;
  bool rank_deficient = false;  // n < d + 1 at fit time
};

struct LogitMatrix {
  Eigen::MatrixXd logits;  // n x C
};

inline GaussianStats fit_gaussian(const EmbeddingSet& set) {
  const auto n = set.embeddings.rows();
  const auto d = set.embeddings.cols();
  require_domain(n >= 2, "fit_gaussian: need at least 2 embeddings");
  require_domain(set.embeddings.allFinite(), "fit_gaussian: non-finite embeddings");
  GaussianStats out;
  out.mean = set.embeddings.colwise().mean();
  Eigen::MatrixXd centered = set.embeddings.rowwise() - out.mean.transpose();
  out.covariance = (centered.transpose() * centered) / static_cast<real>(n - 1);
  out.rank_deficient = n < d + 1;
  return out;
}

// Tr((A B)^(1/2)) through the symmetric form Tr((A^(1/2) B A^(1/2))^(1/2)),
// clamping negative eigenvalues introduced by round-off.
inline real matrix_sqrt_product_trace(const Eigen::MatrixXd& A,
                                      const Eigen::MatrixXd& B) {
  require_domain(A.rows() == A.cols() && B.rows() == B.cols() &&
                     A.rows() == B.rows(),
                 "matrix_sqrt_product: shape mismatch");
  const real scale_a = std::max(1.0, A.cwiseAbs().maxCoeff());
  const real scale_b = std::max(1.0, B.cwiseAbs().maxCoeff());
  require_domain((A - A.transpose()).cwiseAbs().maxCoeff() <= 1e-8 * scale_a,
                 "matrix_sqrt_product: A not symmetric");
  require_domain((B - B.transpose()).cwiseAbs().maxCoeff() <= 1e-8 * scale_b,
                 "matrix_sqrt_product: B not symmetric");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ea(0.5 * (A + A.transpose()));
  Eigen::VectorXd ev = ea.eigenvalues().cwiseMax(0.0);
  Eigen::MatrixXd root_a = ea.eigenvectors() *
                           ev.cwiseSqrt().asDiagonal() *
                           ea.eigenvectors().transpose();
  Eigen::MatrixXd M = root_a * (0.5 * (B + B.transpose())) * root_a;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> em(0.5 * (M + M.transpose()));
  return em.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
}

inline real frechet_distance(const GaussianStats& ref, const GaussianStats& eval) {
  require_domain(ref.mean.size() == eval.mean.size() &&
                     ref.covariance.rows() == eval.covariance.rows(),
                 "frechet_distance: dimension mismatch");
  require_domain(ref.mean.allFinite() && eval.mean.allFinite() &&
                     ref.covariance.allFinite() && eval.covariance.allFinite(),
                 "frechet_distance: non-finite stats");
  const auto d = ref.covariance.rows();
  const Eigen::MatrixXd eye = 1e-10 * Eigen::MatrixXd::Identity(d, d);
  const Eigen::MatrixXd a = ref.covariance + eye;
  const Eigen::MatrixXd b = eval.covariance + eye;
  const real mean_term = (ref.mean - eval.mean).squaredNorm();
  const real fd =
      mean_term + a.trace() + b.trace() - 2.0 * matrix_sqrt_product_trace(a, b);
  return std::max(fd, 0.0);
}

inline real frechet_distance(const EmbeddingSet& ref, const EmbeddingSet& eval) {
  return frechet_distance(fit_gaussian(ref), fit_gaussian(eval));
}

// exp of the mutual-information estimate; softmax is applied to each row,
// and the result is clamped into its analytic range [1, C].
inline real logit_score(const LogitMatrix& lm) {
  const auto n = lm.logits.rows();
  const auto C = lm.logits.cols();
  require_domain(n >= 1, "logit_score: need at least one row");
  require_domain(C >= 2, "logit_score: need at least two classes");
  require_domain(lm.logits.allFinite(), "logit_score: non-finite logits");
  Eigen::MatrixXd p(n, C);
  for (Eigen::Index i = 0; i < n; ++i) {
    const real m = lm.logits.row(i).maxCoeff();
    Eigen::ArrayXd e = (lm.logits.row(i).array() - m).exp();
    p.row(i) = (e / e.sum()).matrix();
  }
  const Eigen::VectorXd marginal = p.colwise().mean();
  real mean_kl = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    real kl = 0.0;
    for (Eigen::Index c = 0; c < C; ++c) {
      const real pic = p(i, c);
      if (pic > 0.0) kl += pic * std::log(pic / marginal(c));
    }
    mean_kl += kl;
  }
  mean_kl /= static_cast<real>(n);
  const real ls = std::exp(mean_kl);
  return std::min(std::max(ls, 1.0), static_cast<real>(C));
}

// Embedding front-ends map a fixed-rate waveform to one d-vector per clip.
class FrontEnd {
 public:
  virtual ~FrontEnd() = default;
  virtual int sample_rate() const = 0;
  virtual int dim() const = 0;
  virtual std::vector<real> embed(std::span<const real> wave) const = 0;
};

// Training-free log-mel embedder: per-band time mean and std over 25 ms /
// 10 ms frames, d = 2 * bands.
class ToyFrontEnd final : public FrontEnd {
 public:
  explicit ToyFrontEnd(int sample_rate, int bands = 64)
      : rate_(sample_rate), bands_(bands) {
    require_domain(sample_rate > 0 && bands >= 1, "ToyFrontEnd: bad config");
  }
  int sample_rate() const override { return rate_; }
  int dim() const override { return 2 * bands_; }
  std::vector<real> embed(std::span<const real> wave) const override {
    const auto frames = log_mel_frames(wave, rate_, bands_);
    const auto T = static_cast<real>(frames.size());
    std::vector<real> out(static_cast<std::size_t>(2 * bands_), 0.0);
    for (const auto& row : frames) {
      for (int b = 0; b < bands_; ++b) out[static_cast<std::size_t>(b)] += row[static_cast<std::size_t>(b)];
    }
    for (int b = 0; b < bands_; ++b) out[static_cast<std::size_t>(b)] /= T;
    for (const auto& row : frames) {
      for (int b = 0; b < bands_; ++b) {
        const real dvi = row[static_cast<std::size_t>(b)] - out[static_cast<std::size_t>(b)];
        out[static_cast<std::size_t>(bands_ + b)] += dvi * dvi;
      }
    }
    for (int b = 0; b < bands_; ++b) {
      out[static_cast<std::size_t>(bands_ + b)] =
          std::sqrt(out[static_cast<std::size_t>(bands_ + b)] / T);
    }
    return out;
  }

 private:
  int rate_;
  int bands_;
};

inline EmbeddingSet embed_audio(const std::vector<std::vector<real>>& clips,
                                int clip_rate, const FrontEnd& fe,
                                const std::string& tag = "front_end") {
  require_domain(clip_rate == fe.sample_rate(),
                 "embed_audio: clip rate " + std::to_string(clip_rate) +
                     " does not match front-end rate " +
                     std::to_string(fe.sample_rate()));
  EmbeddingSet out;
  out.source_tag = tag;
  out.embeddings.resize(static_cast<Eigen::Index>(clips.size()), fe.dim());
  for (std::size_t i = 0; i < clips.size(); ++i) {
    const std::vector<real> e = fe.embed(clips[i]);
    for (int j = 0; j < fe.dim(); ++j) {
      out.embeddings(static_cast<Eigen::Index>(i), j) = e[static_cast<std::size_t>(j)];
    }
  }
  return out;
}

// Columnar embedding file: u32 d, u32 n, then n*d little-endian float32
// values row-major. The same container carries logit matrices (d = C).
inline void write_embeddings(const std::string& path, const EmbeddingSet& set) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("embeddings: cannot open for write " + path);
  const auto d = static_cast<std::uint32_t>(set.dim());
  const auto n = static_cast<std::uint32_t>(set.count());
  f.write(reinterpret_cast<const char*>(&d), 4);
  f.write(reinterpret_cast<const char*>(&n), 4);
  for (std::uint32_t i = 0; i < n; ++i) {
    for (std::uint32_t j = 0; j < d; ++j) {
      const auto v = static_cast<float>(set.embeddings(i, j));
      f.write(reinterpret_cast<const char*>(&v), 4);
    }
  }
  if (!f) throw IoError("embeddings: write failed for " + path);
}

inline EmbeddingSet read_embeddings(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("embeddings: cannot open " + path);
  std::uint32_t d = 0, n = 0;
  f.read(reinterpret_cast<char*>(&d), 4);
  f.read(reinterpret_cast<char*>(&n), 4);
  if (!f || d == 0) throw IoError("embeddings: malformed header in " + path);
  EmbeddingSet out;
  out.source_tag = path;
  out.embeddings.resize(n, d);
  for (std::uint32_t i = 0; i < n; ++i) {
    for (std::uint32_t j = 0; j < d; ++j) {
      float v = 0.0f;
      f.read(reinterpret_cast<char*>(&v), 4);
      out.embeddings(i, j) = static_cast<real>(v);
    }
  }
  if (!f) throw IoError("embeddings: truncated payload in " + path);
  return out;
}

inline LogitMatrix read_logits(const std::string& path) {
  const EmbeddingSet raw = read_embeddings(path);
  return LogitMatrix{raw.embeddings};
}

}  // namespace dag
