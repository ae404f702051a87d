#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Eigenvalues>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <vector>

#include "dag/core.hpp"
#include "dag/metrics.hpp"

using namespace dag;

namespace {

EmbeddingSet random_set(int n, int d, std::uint64_t seed) {
  auto rng = Prng::stream(seed, stream::kParamInit, 3, 3);
  EmbeddingSet s;
  s.embeddings.resize(n, d);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < d; ++j) s.embeddings(i, j) = rng.normal();
  }
  return s;
}

// Reference FD using the dense eigendecomposition of the (generally
// non-symmetric) product Sr * Se.
real naive_fd(const GaussianStats& r, const GaussianStats& e) {
  const auto d = r.covariance.rows();
  const Eigen::MatrixXd eye = 1e-10 * Eigen::MatrixXd::Identity(d, d);
  const Eigen::MatrixXd a = r.covariance + eye;
  const Eigen::MatrixXd b = e.covariance + eye;
  Eigen::EigenSolver<Eigen::MatrixXd> es(a * b);
  real tr_sqrt = 0.0;
  for (Eigen::Index i = 0; i < d; ++i) {
    tr_sqrt += std::sqrt(std::max(es.eigenvalues()(i).real(), 0.0));
  }
  return (r.mean - e.mean).squaredNorm() + a.trace() + b.trace() - 2.0 * tr_sqrt;
}

}  // namespace

TEST_CASE("gaussian moment fitting") {
  SECTION("two points in the plane") {
    EmbeddingSet s;
    s.embeddings.resize(2, 2);
    s.embeddings << 0.0, 0.0, 2.0, 0.0;
    GaussianStats g = fit_gaussian(s);
    REQUIRE(g.mean(0) == 1.0);
    REQUIRE(g.mean(1) == 0.0);
    REQUIRE(g.covariance(0, 0) == 2.0);  // unbiased: ((-1)^2 + 1^2) / (2-1)
    REQUIRE(g.covariance(0, 1) == 0.0);
    REQUIRE(g.covariance(1, 1) == 0.0);
    REQUIRE(g.rank_deficient);  // n = 2 < d + 1 = 3
  }

  SECTION("identical points have zero covariance") {
    EmbeddingSet s;
    s.embeddings.resize(4, 3);
    for (int i = 0; i < 4; ++i) s.embeddings.row(i) << 1.0, -2.0, 0.5;
    GaussianStats g = fit_gaussian(s);
    REQUIRE(g.covariance.cwiseAbs().maxCoeff() == 0.0);
    REQUIRE_FALSE(g.rank_deficient);
  }

  SECTION("a single embedding is rejected") {
    EmbeddingSet s;
    s.embeddings.resize(1, 2);
    s.embeddings << 1.0, 2.0;
    REQUIRE_THROWS_AS(fit_gaussian(s), DomainError);
  }
}

TEST_CASE("matrix square-root product trace") {
  SECTION("identity pair") {
    Eigen::MatrixXd I = Eigen::MatrixXd::Identity(3, 3);
    REQUIRE_THAT(matrix_sqrt_product_trace(I, I),
                 Catch::Matchers::WithinAbs(3.0, 1e-12));
  }
  SECTION("diagonal closed form") {
    Eigen::MatrixXd a = Eigen::Vector2d(4.0, 1.0).asDiagonal();
    Eigen::MatrixXd b = Eigen::Vector2d(1.0, 4.0).asDiagonal();
    REQUIRE_THAT(matrix_sqrt_product_trace(a, b),
                 Catch::Matchers::WithinAbs(4.0, 1e-12));
  }
  SECTION("zero matrix") {
    Eigen::MatrixXd z = Eigen::MatrixXd::Zero(4, 4);
    Eigen::MatrixXd I = Eigen::MatrixXd::Identity(4, 4);
    REQUIRE(matrix_sqrt_product_trace(z, I) == 0.0);
  }
  SECTION("asymmetry is rejected") {
    Eigen::MatrixXd a = Eigen::MatrixXd::Identity(2, 2);
    a(0, 1) = 0.5;
    REQUIRE_THROWS_AS(
        matrix_sqrt_product_trace(a, Eigen::MatrixXd::Identity(2, 2)),
        DomainError);
  }
}

TEST_CASE("frechet distance identities") {
  SECTION("identical stats give zero") {
    EmbeddingSet s = random_set(24, 4, 17);
    GaussianStats g = fit_gaussian(s);
    REQUIRE(frechet_distance(g, g) <= 1e-6);
  }

  SECTION("self distance of a full-rank set is zero") {
    EmbeddingSet s = random_set(40, 6, 18);
    REQUIRE(frechet_distance(s, s) <= 1e-6);
  }

  SECTION("symmetry") {
    GaussianStats a = fit_gaussian(random_set(30, 5, 19));
    GaussianStats b = fit_gaussian(random_set(25, 5, 20));
    REQUIRE(std::abs(frechet_distance(a, b) - frechet_distance(b, a)) < 1e-8);
  }

  SECTION("one-dimensional closed forms") {
    GaussianStats a, b;
    a.mean = Eigen::VectorXd::Zero(1);
    b.mean = Eigen::VectorXd::Ones(1);
    a.covariance = Eigen::MatrixXd::Ones(1, 1);
    b.covariance = Eigen::MatrixXd::Ones(1, 1);
    // (mu0 - mu1)^2 + (sqrt(v0) - sqrt(v1))^2 = 1 + 0
    REQUIRE_THAT(frechet_distance(a, b), Catch::Matchers::WithinAbs(1.0, 1e-9));
    b.mean = Eigen::VectorXd::Zero(1);
    b.covariance(0, 0) = 4.0;
    // 0 + (1 - 2)^2 = 1
    REQUIRE_THAT(frechet_distance(a, b), Catch::Matchers::WithinAbs(1.0, 1e-9));
  }

  SECTION("mean translation adds exactly its squared norm") {
    EmbeddingSet s = random_set(50, 3, 21);
    GaussianStats base = fit_gaussian(s);
    Eigen::Vector3d v(0.7, -1.1, 0.4);
    EmbeddingSet shifted = s;
    shifted.embeddings.rowwise() += v.transpose();
    GaussianStats moved = fit_gaussian(shifted);
    REQUIRE_THAT(frechet_distance(base, moved),
                 Catch::Matchers::WithinAbs(v.squaredNorm(), 1e-8));
  }

  SECTION("matches the brute-force eigendecomposition for small d") {
    for (int d = 1; d <= 3; ++d) {
      GaussianStats a = fit_gaussian(random_set(32, d, 100 + static_cast<std::uint64_t>(d)));
      GaussianStats b = fit_gaussian(random_set(28, d, 200 + static_cast<std::uint64_t>(d)));
      const real got = frechet_distance(a, b);
      const real want = naive_fd(a, b);
      REQUIRE_THAT(got, Catch::Matchers::WithinAbs(want, 1e-6));
    }
  }

  SECTION("dimension mismatch is rejected") {
    GaussianStats a = fit_gaussian(random_set(10, 2, 1));
    GaussianStats b = fit_gaussian(random_set(10, 3, 2));
    REQUIRE_THROWS_AS(frechet_distance(a, b), DomainError);
  }
}

TEST_CASE("logit score") {
  SECTION("identical rows collapse to one") {
    LogitMatrix lm;
    lm.logits.resize(5, 3);
    for (int i = 0; i < 5; ++i) lm.logits.row(i) << 0.3, -1.2, 2.0;
    REQUIRE_THAT(logit_score(lm), Catch::Matchers::WithinAbs(1.0, 1e-12));
  }

  SECTION("bounds hold for arbitrary logits") {
    auto rng = Prng::stream(4, stream::kParamInit, 0, 1);
    LogitMatrix lm;
    lm.logits.resize(50, 4);
    for (int i = 0; i < 50; ++i) {
      for (int c = 0; c < 4; ++c) lm.logits(i, c) = 3.0 * rng.normal();
    }
    const real ls = logit_score(lm);
    REQUIRE(ls >= 1.0);
    REQUIRE(ls <= 4.0);
  }

  SECTION("sharp one-hot coverage approaches the class count") {
    const int C = 4;
    real prev = 0.0;
    for (real M : {1.0, 5.0, 20.0}) {
      LogitMatrix lm;
      lm.logits = Eigen::MatrixXd::Zero(C, C);
      for (int i = 0; i < C; ++i) lm.logits(i, i) = M;
      const real ls = logit_score(lm);
      REQUIRE(ls > prev);
      prev = ls;
    }
    REQUIRE(prev > 3.99);
  }

  SECTION("per-row shifts leave the score unchanged") {
    auto rng = Prng::stream(9, stream::kParamInit, 0, 2);
    LogitMatrix lm;
    lm.logits.resize(20, 5);
    for (int i = 0; i < 20; ++i) {
      for (int c = 0; c < 5; ++c) lm.logits(i, c) = rng.normal();
    }
    LogitMatrix shifted = lm;
    for (int i = 0; i < 20; ++i) {
      shifted.logits.row(i).array() += 10.0 * rng.normal();
    }
    REQUIRE_THAT(logit_score(shifted),
                 Catch::Matchers::WithinAbs(logit_score(lm), 1e-10));
  }

  SECTION("degenerate shapes and values are rejected") {
    LogitMatrix lm;
    lm.logits.resize(3, 1);
    lm.logits.setZero();
    REQUIRE_THROWS_AS(logit_score(lm), DomainError);
    lm.logits.resize(0, 3);
    REQUIRE_THROWS_AS(logit_score(lm), DomainError);
    lm.logits.resize(2, 3);
    lm.logits.setZero();
    lm.logits(1, 2) = std::numeric_limits<real>::quiet_NaN();
    REQUIRE_THROWS_AS(logit_score(lm), DomainError);
  }
}

TEST_CASE("toy spectral front end separates timbres") {
  const int rate = 4000;
  ToyFrontEnd fe(rate);
  REQUIRE(fe.dim() == 128);

  std::vector<real> tone(4000);
  for (std::size_t i = 0; i < tone.size(); ++i) {
    tone[i] = 0.8 * std::sin(2.0 * std::numbers::pi_v<real> * 440.0 *
                             static_cast<real>(i) / rate);
  }
  auto rng = Prng::stream(2, stream::kParamInit, 4, 4);
  std::vector<real> noise(4000);
  for (real& v : noise) v = 0.5 * rng.normal();

  const std::vector<real> et = fe.embed(tone);
  const std::vector<real> en = fe.embed(noise);
  real dist = 0.0;
  for (std::size_t i = 0; i < et.size(); ++i) {
    dist += (et[i] - en[i]) * (et[i] - en[i]);
  }
  REQUIRE(std::sqrt(dist) > 1.0);

  SECTION("embedding the same clip twice is bit-identical") {
    REQUIRE(fe.embed(tone) == et);
  }

  SECTION("rate mismatch is rejected") {
    std::vector<std::vector<real>> clips = {tone};
    REQUIRE_THROWS_AS(embed_audio(clips, 8000, fe), DomainError);
    EmbeddingSet s = embed_audio(clips, rate, fe, "toy");
    REQUIRE(s.count() == 1);
    REQUIRE(s.dim() == 128);
    REQUIRE(s.source_tag == "toy");
  }
}

TEST_CASE("embedding files round-trip through the columnar format") {
  const std::string path = "emb_test_tmp.bin";
  EmbeddingSet s = random_set(7, 5, 77);
  s.source_tag = "unit";
  write_embeddings(path, s);
  EmbeddingSet r = read_embeddings(path);
  REQUIRE(r.count() == 7);
  REQUIRE(r.dim() == 5);
  for (int i = 0; i < 7; ++i) {
    for (int j = 0; j < 5; ++j) {
      REQUIRE(r.embeddings(i, j) ==
              static_cast<real>(static_cast<float>(s.embeddings(i, j))));
    }
  }
  std::remove(path.c_str());

  SECTION("wide external embeddings load with their declared dimension") {
    EmbeddingSet wide = random_set(3, 512, 78);
    write_embeddings(path, wide);
    REQUIRE(read_embeddings(path).dim() == 512);
    std::remove(path.c_str());
  }

  SECTION("logit matrices share the container") {
    EmbeddingSet lg = random_set(6, 3, 79);
    write_embeddings(path, lg);
    LogitMatrix lm = read_logits(path);
    REQUIRE(lm.logits.rows() == 6);
    REQUIRE(lm.logits.cols() == 3);
    std::remove(path.c_str());
  }

  SECTION("missing and truncated files are io errors") {
    REQUIRE_THROWS_AS(read_embeddings("no_such_embeddings.bin"), IoError);
    std::ofstream f(path, std::ios::binary);
    const std::uint32_t d = 8, n = 100;
    f.write(reinterpret_cast<const char*>(&d), 4);
    f.write(reinterpret_cast<const char*>(&n), 4);
    const float v = 1.0f;
    f.write(reinterpret_cast<const char*>(&v), 4);
    f.close();
    REQUIRE_THROWS_AS(read_embeddings(path), IoError);
    std::remove(path.c_str());
  }
}
