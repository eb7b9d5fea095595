#include <doctest.h>

#include "dualfilter/dual_filter.hpp"
#include "support.hpp"

using namespace dualfilter;
using testing::max_abs;

namespace {

struct Case {
  HmmModel model;
  TokenSequence tokens;
};

Case random_case(Rng& rng, int d, int m, int horizon, double temperature = 1.0) {
  HmmModel model = testing::random_model(rng, d, m, temperature);
  TokenSequence tokens = sample_path(model, horizon, rng()).tokens;
  return {std::move(model), std::move(tokens)};
}

LayerState as_state(const PosteriorTrajectory& trajectory) { return {trajectory.measures}; }

}  // namespace

TEST_CASE("init_rho") {
  Matrix c(2, 3);
  c << 0.2, 0.8, 0.0, 0.6, 0.4, 0.0;
  const HmmModel model(Vector::Constant(2, 0.5), Matrix::Identity(2, 2), c);
  const InitResult init = init_rho(model, TokenSequence{1, 2});
  CHECK(init.degenerate_columns == 1);
  CHECK(init.state.measures(0, 0) == 0.5);
  CHECK(init.state.measures(1, 0) == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(init.state.measures(1, 1) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK(init.state.measures(2, 0) == 0.5);
  CHECK_THROWS_AS(init_rho(model, TokenSequence{3}), Error);
}

TEST_CASE("project_normalize") {
  Vector sigma(3);
  sigma << 0.5, -0.2, 0.5;
  Projection p = project_normalize(sigma);
  CHECK(p.clipped);
  CHECK_FALSE(p.fallback);
  CHECK(p.measure[0] == 0.5);
  CHECK(p.measure[1] == 0.0);

  sigma << -1.0, -2.0, 0.0;
  p = project_normalize(sigma);
  CHECK(p.fallback);
  CHECK(max_abs(p.measure.array() - 1.0 / 3.0) <= 1e-16);

  Rng rng(1);
  for (int i = 0; i < 100; ++i) {
    const Vector once = project_normalize(testing::uniform_vector(rng, 5)).measure;
    const Projection twice = project_normalize(once);
    CHECK_FALSE(twice.clipped);
    CHECK(max_abs(twice.measure - once) <= 1e-15);
  }
}

TEST_CASE("filter posteriors are a fixed point of the layer map") {
  Rng rng(2);
  for (int i = 0; i < 20; ++i) {
    const Case cs = random_case(rng, 2 + i % 7, 1 + i % 4, 5 + 3 * i);
    const LayerState pi = as_state(forward_filter(cs.model, cs.tokens));
    const LayerMapResult out = layer_map(cs.model, cs.tokens, pi);
    CHECK(max_abs(out.rho_plus.measures - pi.measures) <= 1e-12);
    CHECK(out.projection_fallbacks == 0);
  }
}

TEST_CASE("one layer is exact at t = 1 from any start") {
  Rng rng(3);
  for (int i = 0; i < 20; ++i) {
    const Case cs = random_case(rng, 4, 2, 6);
    LayerState rho{Matrix(7, 4)};
    rho.measures.row(0) = cs.model.prior().transpose();
    for (int t = 1; t <= 6; ++t) rho.measures.row(t) = testing::random_probability(rng, 4).transpose();
    const LayerMapResult out = layer_map(cs.model, cs.tokens, rho);
    const Matrix pi = forward_filter(cs.model, cs.tokens).measures;
    CHECK(max_abs(out.rho_plus.measures.row(1) - pi.row(1)) <= 1e-13);
  }
}

TEST_CASE("T layers recover the filter exactly") {
  Rng rng(4);
  for (int i = 0; i < 10; ++i) {
    const Case cs = random_case(rng, 5, 3, 8);
    const IterateResult it = iterate(cs.model, cs.tokens, 8);
    CHECK(it.layers.size() == 9);
    CHECK(max_abs(it.final_state.measures - forward_filter(cs.model, cs.tokens).measures) <= 1e-12);
  }
}

TEST_CASE("single state model") {
  Matrix c(1, 2);
  c << 0.3, 0.7;
  const HmmModel model(Vector::Ones(1), Matrix::Ones(1, 1), c);
  const TokenSequence tokens{0, 1, 1};
  const IterateResult it = iterate(model, tokens, 2);
  CHECK(max_abs(it.final_state.measures.array() - 1.0) <= 1e-15);
  const SingleShotResult ss = single_shot(model, tokens);
  CHECK(max_abs(ss.state.measures.array() - 1.0) <= 1e-15);
}

TEST_CASE("iterate diagnostics") {
  Rng rng(5);
  const Case cs = random_case(rng, 6, 2, 10);
  const PredictionSequence reference =
      predict_trajectory(forward_filter(cs.model, cs.tokens), cs.model);
  const IterateResult it = iterate(cs.model, cs.tokens, 3, std::nullopt, &reference);
  REQUIRE(it.layers.size() == 4);
  for (const LayerDiagnostics& layer : it.layers) {
    CHECK(layer.errors.size() == 10);
    CHECK(layer.control_max_abs.size() == 10);
  }
  CHECK(it.last_pass.controls.rows() == 10);
  CHECK(it.layers[0].errors.mean() > it.layers[3].errors.mean());
  // Each layer makes one more time index exact.
  for (int l = 1; l <= 3; ++l) {
    CHECK(it.layers[l].errors.head(l).maxCoeff() <= 1e-13);
  }
}

TEST_CASE("single_shot matches the forward filter") {
  Rng rng(6);
  for (int i = 0; i < 20; ++i) {
    const Case cs = random_case(rng, 2 + i % 9, 1 + i % 5, 4 + 2 * i);
    const SingleShotResult ss = single_shot(cs.model, cs.tokens, {Execution::serial, true});
    CHECK(max_abs(ss.state.measures - forward_filter(cs.model, cs.tokens).measures) <= 1e-12);
    REQUIRE(ss.all_controls.size() == cs.tokens.size());
    CHECK(max_abs(ss.all_controls.back() - ss.final_controls) == 0.0);
    CHECK(ss.all_controls[0].rows() == 1);
  }
}

TEST_CASE("final single-shot controls represent pi_T") {
  Rng rng(7);
  const Case cs = random_case(rng, 5, 2, 9);
  const SingleShotResult ss = single_shot(cs.model, cs.tokens);
  const PosteriorTrajectory pi = forward_filter(cs.model, cs.tokens);
  // Re-run the last pass from the single-shot state: its partial sums give pi_T.
  const LayerMapResult last = layer_map(cs.model, cs.tokens, ss.state);
  CHECK(max_abs(last.pass.controls - ss.final_controls) <= 1e-12);
  CHECK(max_abs(last.pass.partial_sums.row(8) - pi.measures.row(9)) <= 1e-12);
}

TEST_CASE("layer_map_apply agrees with the matrix pass") {
  Rng rng(8);
  for (int i = 0; i < 10; ++i) {
    const Case cs = random_case(rng, 6, 3, 7);
    const LayerState rho = init_rho(cs.model, cs.tokens).state;
    const LayerMapResult full = layer_map(cs.model, cs.tokens, rho);
    const Vector f = testing::uniform_vector(rng, 6);
    const FunctionPass single = layer_map_apply(cs.model, cs.tokens, rho, f);
    for (int t = 0; t <= 7; ++t) {
      CHECK(max_abs(single.dual_functions.row(t).transpose() - full.pass.dual_functions[t] * f) <= 1e-13);
    }
    CHECK(max_abs(single.controls - full.pass.controls * f) <= 1e-13);
    CHECK(std::abs(single.estimate - full.pass.partial_sums.row(6).dot(f)) <= 1e-13);
  }
}

TEST_CASE("serial and parallel kernels agree") {
  Rng rng(9);
  const Case cs = random_case(rng, 40, 6, 30);
  const IterateResult a = iterate(cs.model, cs.tokens, 3, std::nullopt, nullptr, Execution::serial);
  const IterateResult b = iterate(cs.model, cs.tokens, 3, std::nullopt, nullptr, Execution::parallel);
  CHECK(max_abs(a.final_state.measures - b.final_state.measures) <= 1e-12);
  const SingleShotResult c = single_shot(cs.model, cs.tokens, {Execution::serial});
  const SingleShotResult e = single_shot(cs.model, cs.tokens, {Execution::parallel});
  CHECK(max_abs(c.state.measures - e.state.measures) <= 1e-12);
  CHECK(max_abs(c.final_controls - e.final_controls) <= 1e-12);
}

TEST_CASE("recovery modes agree on well-conditioned problems") {
  Rng rng(10);
  for (int i = 0; i < 10; ++i) {
    const Case cs = random_case(rng, 3, 2, 4);
    const IterateResult a = iterate(cs.model, cs.tokens, 2, std::nullopt, nullptr,
                                    Execution::serial, Recovery::recurrence);
    const IterateResult b = iterate(cs.model, cs.tokens, 2, std::nullopt, nullptr,
                                    Execution::serial, Recovery::solve);
    CHECK(max_abs(a.final_state.measures - b.final_state.measures) <= 1e-8);
  }
}

TEST_CASE("determinism and sensitivity to the token order") {
  Rng rng(11);
  const Case cs = random_case(rng, 8, 3, 12);
  const SingleShotResult a = single_shot(cs.model, cs.tokens);
  const SingleShotResult b = single_shot(cs.model, cs.tokens);
  CHECK(max_abs(a.state.measures - b.state.measures) == 0.0);
  TokenSequence swapped = cs.tokens;
  std::size_t i = 0;
  while (i + 1 < swapped.size() && swapped[i] == swapped[i + 1]) ++i;
  REQUIRE(i + 1 < swapped.size());
  std::swap(swapped[i], swapped[i + 1]);
  const SingleShotResult c = single_shot(cs.model, swapped);
  CHECK(max_abs(a.state.measures.bottomRows(1) - c.state.measures.bottomRows(1)) > 1e-6);
}

TEST_CASE("predict_all, error_metric and error_trace") {
  Matrix c(2, 2);
  c << 0.9, 0.1, 0.2, 0.8;
  const HmmModel model(Vector::Constant(2, 0.5), Matrix::Identity(2, 2), c);
  LayerState rho{Matrix(3, 2)};
  rho.measures << 0.5, 0.5, 1.0, 0.0, 0.25, 0.75;
  const PredictionSequence p = predict_all(rho, model);
  REQUIRE(p.rows.rows() == 2);
  CHECK(p.rows(0, 0) == doctest::Approx(0.9));
  CHECK(p.rows(1, 0) == doctest::Approx(0.375));
  CHECK(p.rows(1, 1) == doctest::Approx(0.625));

  Vector x(3), y(3);
  x << 0.2, 0.3, 0.5;
  y << 0.25, 0.35, 0.4;
  CHECK(error_metric(x, y) == doctest::Approx(0.1));

  PredictionSequence with_p0{Matrix(3, 2)};
  with_p0.rows << 0.55, 0.45, 0.9, 0.1, 0.4, 0.6;
  const Vector eps = error_trace(p, with_p0);
  REQUIRE(eps.size() == 2);
  CHECK(eps[0] == doctest::Approx(0.0));
  CHECK(eps[1] == doctest::Approx(0.025));
  PredictionSequence without_p0{with_p0.rows.bottomRows(2)};
  CHECK(max_abs(error_trace(p, without_p0) - eps) == 0.0);
}

TEST_CASE("control_trace") {
  Matrix u(2, 3);
  u << 1.0, -3.0, 0.5, 0.0, 4.0, -3.0;
  const ControlTrace m = control_trace(u, ControlReduction::max_abs);
  CHECK(m.values[0] == 3.0);
  CHECK(m.values[1] == 4.0);
  const ControlTrace n = control_trace(u, ControlReduction::norm);
  CHECK(n.values[1] == doctest::Approx(5.0));
  CHECK(max_abs(control_trace(u, ControlReduction::rows).rows - u) == 0.0);
}

TEST_CASE("top_k") {
  Vector p(5);
  p << 0.1, 0.3, 0.2, 0.3, 0.1;
  const auto top = top_k(p, 3);
  REQUIRE(top.size() == 3);
  CHECK(top[0].first == 1);
  CHECK(top[1].first == 3);
  CHECK(top[2].first == 2);
  CHECK(top_k(p, 10).size() == 5);
  CHECK(top_k(p, 5)[3].first == 0);
}
