#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <functional>
#include <vector>

#include "dag/core.hpp"
#include "dag/gru.hpp"
#include "dag/layers.hpp"
#include "dag/params.hpp"

namespace {

double rel_err(double a, double b) {
  double scale = std::max({1e-6, std::abs(a), std::abs(b)});
  return std::abs(a - b) / scale;
}

// Central-difference check of every parameter gradient in `arena` plus every
// entry of the extra buffers listed in `inputs`, against a scalar loss.
struct GradCheck {
  dag::ParamArena* arena;
  std::function<double()> loss;                    // recompute loss from scratch
  std::function<void(std::vector<double>&)> grad;  // analytic param grads
  double h = 1e-5;
  double tol = 5e-6;

  void run_params() {
    std::vector<double> G(arena->size(), 0.0);
    grad(G);
    dag::real* P = arena->data();
    for (std::size_t i = 0; i < arena->size(); ++i) {
      const double orig = P[i];
      P[i] = orig + h;
      const double lp = loss();
      P[i] = orig - h;
      const double lm = loss();
      P[i] = orig;
      const double fd = (lp - lm) / (2.0 * h);
      INFO("param index " << i << " fd " << fd << " analytic " << G[i]);
      REQUIRE(rel_err(fd, G[i]) < tol);
    }
  }

  void run_buffer(std::vector<double>& buf, const std::vector<double>& analytic) {
    for (std::size_t i = 0; i < buf.size(); ++i) {
      const double orig = buf[i];
      buf[i] = orig + h;
      const double lp = loss();
      buf[i] = orig - h;
      const double lm = loss();
      buf[i] = orig;
      const double fd = (lp - lm) / (2.0 * h);
      INFO("input index " << i << " fd " << fd << " analytic " << analytic[i]);
      REQUIRE(rel_err(fd, analytic[i]) < tol);
    }
  }
};

dag::FMap random_fmap(int ch, int len, dag::Prng& rng) {
  dag::FMap m;
  m.resize(ch, len);
  rng.fill_normal(m.v);
  return m;
}

double probe_loss(const dag::FMap& y, const dag::FMap& probe) {
  double s = 0.0;
  for (std::size_t i = 0; i < y.v.size(); ++i) s += y.v[i] * probe.v[i];
  return s;
}

}  // namespace

TEST_CASE("conv1d gradients match finite differences", "[layers][grad]") {
  auto cfg = GENERATE(std::tuple<int, int, int, int, int, int>{3, 4, 3, 1, 2, 20},
                      std::tuple<int, int, int, int, int, int>{2, 5, 8, 4, 1, 24},
                      std::tuple<int, int, int, int, int, int>{1, 3, 1, 1, 1, 9});
  auto [in, out, k, stride, dil, T] = cfg;

  dag::ParamArena arena;
  dag::Conv1d conv(arena, "c", in, out, k, stride, dil);
  arena.finalize();
  auto rng = dag::Prng::stream(1, dag::stream::kParamInit);
  conv.init(arena.data(), rng);

  dag::FMap x = random_fmap(in, T, rng);
  dag::FMap y;
  conv.forward(arena.data(), x, y);
  dag::FMap probe = random_fmap(out, y.len, rng);

  GradCheck gc{&arena,
               [&] {
                 dag::FMap yy;
                 conv.forward(arena.data(), x, yy);
                 return probe_loss(yy, probe);
               },
               [&](std::vector<double>& G) {
                 dag::FMap dx;
                 dx.resize(in, T);
                 conv.backward(arena.data(), G.data(), x, probe, &dx);
               }};
  gc.run_params();

  std::vector<double> G(arena.size(), 0.0);
  dag::FMap dx;
  dx.resize(in, T);
  conv.backward(arena.data(), G.data(), x, probe, &dx);
  gc.run_buffer(x.v, dx.v);
}

TEST_CASE("transposed conv gradients match finite differences", "[layers][grad]") {
  dag::ParamArena arena;
  dag::ConvTranspose1d conv(arena, "ct", 4, 3, 6, 3);
  arena.finalize();
  auto rng = dag::Prng::stream(2, dag::stream::kParamInit);
  conv.init(arena.data(), rng);

  const int T = 7;
  REQUIRE(conv.out_len(T) == 21);
  dag::FMap x = random_fmap(4, T, rng);
  dag::FMap y;
  conv.forward(arena.data(), x, y);
  REQUIRE(y.len == 21);
  dag::FMap probe = random_fmap(3, y.len, rng);

  GradCheck gc{&arena,
               [&] {
                 dag::FMap yy;
                 conv.forward(arena.data(), x, yy);
                 return probe_loss(yy, probe);
               },
               [&](std::vector<double>& G) {
                 dag::FMap dx;
                 dx.resize(4, T);
                 conv.backward(arena.data(), G.data(), x, probe, &dx);
               }};
  gc.run_params();

  std::vector<double> G(arena.size(), 0.0);
  dag::FMap dx;
  dx.resize(4, T);
  conv.backward(arena.data(), G.data(), x, probe, &dx);
  gc.run_buffer(x.v, dx.v);
}

TEST_CASE("linear gradients match finite differences", "[layers][grad]") {
  dag::ParamArena arena;
  dag::Linear lin(arena, "l", 5, 3);
  arena.finalize();
  auto rng = dag::Prng::stream(3, dag::stream::kParamInit);
  lin.init(arena.data(), rng);

  const int T = 4;
  std::vector<double> X(5 * T), probe(3 * T);
  rng.fill_normal(X);
  rng.fill_normal(probe);

  auto loss = [&] {
    std::vector<double> Y(3 * T);
    lin.forward_mat(arena.data(), X.data(), T, Y.data());
    double s = 0.0;
    for (int i = 0; i < 3 * T; ++i) s += Y[i] * probe[i];
    return s;
  };
  GradCheck gc{&arena, loss, [&](std::vector<double>& G) {
                 std::vector<double> dX(5 * T, 0.0);
                 lin.backward_mat(arena.data(), G.data(), X.data(), T,
                                  probe.data(), dX.data());
               }};
  gc.run_params();

  std::vector<double> G(arena.size(), 0.0), dX(5 * T, 0.0);
  lin.backward_mat(arena.data(), G.data(), X.data(), T, probe.data(), dX.data());
  gc.run_buffer(X, dX);

  // Vector path agrees with the one-row matrix path up to summation order.
  std::vector<double> y1(3), y2(3);
  lin.forward_vec(arena.data(), X.data(), y1.data());
  lin.forward_mat(arena.data(), X.data(), 1, y2.data());
  for (int i = 0; i < 3; ++i) {
    REQUIRE_THAT(y1[i], Catch::Matchers::WithinRel(y2[i], 1e-13));
  }
}

TEST_CASE("film gradients match finite differences", "[layers][grad]") {
  dag::ParamArena arena;
  dag::Film film(arena, "f", 6, 4);
  arena.finalize();
  auto rng = dag::Prng::stream(4, dag::stream::kParamInit);
  film.init(arena.data(), rng);

  const int T = 9;
  dag::FMap x = random_fmap(4, T, rng);
  std::vector<double> cond(6);
  rng.fill_normal(cond);
  dag::FMap probe = random_fmap(4, T, rng);

  auto loss = [&] {
    dag::FMap y;
    dag::Film::Cache c;
    film.forward(arena.data(), cond.data(), x, y, c);
    return probe_loss(y, probe);
  };
  auto grad = [&](std::vector<double>& G) {
    dag::FMap y, dx;
    dag::Film::Cache c;
    film.forward(arena.data(), cond.data(), x, y, c);
    dx.resize(4, T);
    std::vector<double> dcond(6, 0.0);
    film.backward(arena.data(), G.data(), cond.data(), x, c, probe, dx,
                  dcond.data());
  };
  GradCheck gc{&arena, loss, grad};
  gc.run_params();

  dag::FMap y, dx;
  dag::Film::Cache c;
  std::vector<double> G(arena.size(), 0.0), dcond(6, 0.0);
  film.forward(arena.data(), cond.data(), x, y, c);
  dx.resize(4, T);
  film.backward(arena.data(), G.data(), cond.data(), x, c, probe, dx,
                dcond.data());
  gc.run_buffer(x.v, dx.v);
  gc.run_buffer(cond, dcond);
}

TEST_CASE("film at initialization is near-identity", "[layers]") {
  dag::ParamArena arena;
  dag::Film film(arena, "f", 8, 3);
  arena.finalize();
  auto rng = dag::Prng::stream(5, dag::stream::kParamInit);
  film.init(arena.data(), rng);

  dag::FMap x = random_fmap(3, 7, rng);
  std::vector<double> zero_cond(8, 0.0);
  dag::FMap y;
  dag::Film::Cache c;
  film.forward(arena.data(), zero_cond.data(), x, y, c);
  // With a zero conditioning vector, scale == 1 and shift == 0 exactly.
  REQUIRE(y.v == x.v);
}

TEST_CASE("leaky relu backward uses the output sign", "[layers]") {
  std::vector<double> x = {-2.0, -0.5, 0.0, 0.5, 2.0};
  std::vector<double> y = x;
  dag::leaky_forward(std::span<double>(y), 0.2);
  REQUIRE(y[0] == -0.4);
  REQUIRE(y[4] == 2.0);
  std::vector<double> dy = {1.0, 1.0, 1.0, 1.0, 1.0};
  dag::leaky_backward(std::span<const double>(y), std::span<double>(dy), 0.2);
  REQUIRE(dy[0] == 0.2);
  REQUIRE(dy[1] == 0.2);
  REQUIRE(dy[3] == 1.0);
}

TEST_CASE("resamplers are exact adjoints", "[layers]") {
  auto rng = dag::Prng::stream(6, dag::stream::kParamInit);
  const int C = 3, T = 24, f = 4;

  SECTION("mean pool") {
    dag::FMap x = random_fmap(C, T, rng);
    dag::FMap y;
    dag::pool_down(x, f, y);
    REQUIRE(y.len == T / f);
    dag::FMap u = random_fmap(C, y.len, rng);
    dag::FMap atu;
    atu.resize(C, T);
    dag::pool_down_backward(u, f, atu);
    double lhs = 0.0, rhs = 0.0;
    for (std::size_t i = 0; i < y.v.size(); ++i) lhs += y.v[i] * u.v[i];
    for (std::size_t i = 0; i < x.v.size(); ++i) rhs += x.v[i] * atu.v[i];
    REQUIRE_THAT(lhs, Catch::Matchers::WithinRel(rhs, 1e-12));
  }

  SECTION("linear upsample") {
    dag::FMap x = random_fmap(C, T / f, rng);
    dag::FMap y;
    dag::lerp_up(x, f, y);
    REQUIRE(y.len == T);
    // Anchor frames reproduce the input exactly.
    for (int c = 0; c < C; ++c) {
      for (int u = 0; u < x.len; ++u) {
        REQUIRE(y.row(c)[u * f] == x.row(c)[u]);
      }
    }
    dag::FMap v = random_fmap(C, T, rng);
    dag::FMap atv;
    atv.resize(C, T / f);
    dag::lerp_up_backward(v, f, atv);
    double lhs = 0.0, rhs = 0.0;
    for (std::size_t i = 0; i < y.v.size(); ++i) lhs += y.v[i] * v.v[i];
    for (std::size_t i = 0; i < x.v.size(); ++i) rhs += x.v[i] * atv.v[i];
    REQUIRE_THAT(lhs, Catch::Matchers::WithinRel(rhs, 1e-12));
  }
}

TEST_CASE("gru gradients match finite differences", "[gru][grad]") {
  const bool reverse = GENERATE(false, true);
  dag::ParamArena arena;
  dag::Gru gru(arena, "g", 3, 4);
  arena.finalize();
  auto rng = dag::Prng::stream(7, dag::stream::kParamInit);
  gru.init(arena.data(), rng);

  const int T = 5;
  std::vector<double> X(3 * T), probe(4 * T);
  rng.fill_normal(X);
  rng.fill_normal(probe);

  auto loss = [&] {
    std::vector<double> Y(4 * T);
    gru.forward(arena.data(), X.data(), T, reverse, Y.data(), nullptr);
    double s = 0.0;
    for (int i = 0; i < 4 * T; ++i) s += Y[i] * probe[i];
    return s;
  };
  auto grad = [&](std::vector<double>& G) {
    std::vector<double> Y(4 * T), dX(3 * T, 0.0);
    dag::Gru::Cache c;
    gru.forward(arena.data(), X.data(), T, reverse, Y.data(), &c);
    gru.backward(arena.data(), G.data(), X.data(), T, reverse, c, Y.data(),
                 probe.data(), dX.data());
  };
  GradCheck gc{&arena, loss, grad};
  gc.tol = 1e-5;
  gc.run_params();

  std::vector<double> G(arena.size(), 0.0), Y(4 * T), dX(3 * T, 0.0);
  dag::Gru::Cache c;
  gru.forward(arena.data(), X.data(), T, reverse, Y.data(), &c);
  gru.backward(arena.data(), G.data(), X.data(), T, reverse, c, Y.data(),
               probe.data(), dX.data());
  gc.run_buffer(X, dX);
}

TEST_CASE("stacked bidirectional gru gradients match finite differences",
          "[gru][grad]") {
  dag::ParamArena arena;
  dag::GruStack stack(arena, "s", 3, 4, 2, 3);
  arena.finalize();
  auto rng = dag::Prng::stream(8, dag::stream::kParamInit);
  stack.init(arena.data(), rng);

  const int T = 4;
  std::vector<double> X(3 * T), probe(3 * T);
  rng.fill_normal(X);
  rng.fill_normal(probe);

  auto loss = [&] {
    std::vector<double> Y(3 * T);
    dag::GruStack::Cache c;
    stack.forward(arena.data(), X.data(), T, Y.data(), c);
    double s = 0.0;
    for (int i = 0; i < 3 * T; ++i) s += Y[i] * probe[i];
    return s;
  };
  auto grad = [&](std::vector<double>& G) {
    std::vector<double> Y(3 * T), dX(3 * T, 0.0);
    dag::GruStack::Cache c;
    stack.forward(arena.data(), X.data(), T, Y.data(), c);
    stack.backward(arena.data(), G.data(), X.data(), T, c, probe.data(),
                   dX.data());
  };
  GradCheck gc{&arena, loss, grad};
  gc.tol = 1e-5;
  gc.run_params();

  std::vector<double> G(arena.size(), 0.0), Y(3 * T), dX(3 * T, 0.0);
  dag::GruStack::Cache c;
  stack.forward(arena.data(), X.data(), T, Y.data(), c);
  stack.backward(arena.data(), G.data(), X.data(), T, c, probe.data(), dX.data());
  gc.run_buffer(X, dX);
}

TEST_CASE("gru output depends on both directions", "[gru]") {
  dag::ParamArena arena;
  dag::BiGru bi(arena, "b", 2, 3);
  arena.finalize();
  auto rng = dag::Prng::stream(9, dag::stream::kParamInit);
  bi.init(arena.data(), rng);

  const int T = 6;
  std::vector<double> X(2 * T);
  rng.fill_normal(X);
  std::vector<double> Y(6 * T);
  dag::BiGru::Cache c;
  bi.forward(arena.data(), X.data(), T, Y.data(), c);

  // Perturb the last frame: the forward half of frame 0 must not change,
  // while the backward half must.
  std::vector<double> X2 = X;
  X2[2 * (T - 1)] += 1.0;
  std::vector<double> Y2(6 * T);
  dag::BiGru::Cache c2;
  bi.forward(arena.data(), X2.data(), T, Y2.data(), c2);
  for (int j = 0; j < 3; ++j) REQUIRE(Y[j] == Y2[j]);
  bool changed = false;
  for (int j = 3; j < 6; ++j) changed |= (Y[j] != Y2[j]);
  REQUIRE(changed);
}
