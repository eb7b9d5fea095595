#include <doctest.h>

#include "dualfilter/experiments.hpp"
#include "dualfilter/forward_filter.hpp"
#include "support.hpp"

using namespace dualfilter;
using testing::max_abs;

TEST_CASE("forward_step with deterministic emissions") {
  const HmmModel model(Vector::Constant(2, 0.5), Matrix::Identity(2, 2), Matrix::Identity(2, 2));
  const Measure next = forward_step(Measure::uniform(2), model, 1);
  CHECK(next[0] == 0.0);
  CHECK(next[1] == 1.0);
}

TEST_CASE("forward_step with a constant likelihood only propagates") {
  Rng rng(3);
  const Matrix a = random_stochastic_matrix(4, 4, 1.0, rng);
  Matrix c(4, 3);
  c.col(0).setConstant(0.2);
  c.col(1).setConstant(0.3);
  c.col(2).setConstant(0.5);
  const HmmModel model(Vector::Constant(4, 0.25), a, c);
  const Vector pi = testing::random_probability(rng, 4);
  const Measure next = forward_step(Measure(pi), model, 2);
  CHECK(max_abs(next.weights() - a.transpose() * pi) <= 1e-15);
}

TEST_CASE("forward_step raises ImpossibleObservation") {
  Matrix c(2, 2);
  c << 1, 0, 0.5, 0.5;
  const HmmModel model(Vector::Unit(2, 0), Matrix::Identity(2, 2), c);
  CHECK_THROWS_AS(forward_step(Measure::point_mass(2, 0), model, 1), Error);
  try {
    const TokenSequence tokens{0, 0, 1};
    forward_filter(model, tokens);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ImpossibleObservation);
    REQUIRE(e.time_index().has_value());
    CHECK(*e.time_index() == 3);
  }
}

TEST_CASE("forward_filter of an empty sequence is the prior") {
  Rng rng(1);
  const HmmModel model = testing::random_model(rng, 3, 2);
  const PosteriorTrajectory post = forward_filter(model, TokenSequence{});
  CHECK(post.horizon() == 0);
  CHECK(max_abs(post.measures.row(0).transpose() - model.prior()) == 0.0);
}

TEST_CASE("forward_filter matches a brute-force Bayes posterior") {
  for (int seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    const HmmModel model = testing::random_model(rng, 3, 1);
    const TokenSequence tokens = sample_path(model, 3, seed).tokens;
    const PosteriorTrajectory post = forward_filter(model, tokens);
    CHECK(max_abs(post.measures - testing::brute_force_posteriors(model, tokens)) <= 1e-12);
    CHECK(max_abs(post.measures.rowwise().sum().array() - 1.0) <= 1e-12);
  }
}

TEST_CASE("forward_step is invariant to scaling the likelihood column") {
  Rng rng(5);
  const HmmModel model = testing::random_model(rng, 5, 3);
  const Vector pi = testing::random_probability(rng, 5);
  for (Token z = 0; z < 4; ++z) {
    const Vector scaled = 7.3 * model.emission().col(z);
    Vector manual = model.transition().transpose() * pi.cwiseProduct(scaled);
    manual /= manual.sum();
    CHECK(max_abs(forward_step(Measure(pi), model, z).weights() - manual) <= 1e-15);
  }
}

TEST_CASE("posterior concentrates under the deterministic circulant chain") {
  ExperimentConfig config = preset("nanogpt-char");
  const HmmModel model = experiment_model(config, 1.0);
  const TokenSequence tokens = sample_path(model, config.horizon, 0).tokens;
  const PosteriorTrajectory post = forward_filter(model, tokens);
  CHECK(post.measures.row(config.horizon).maxCoeff() > 0.99);
}

TEST_CASE("predict") {
  Rng rng(8);
  const HmmModel model = testing::random_model(rng, 4, 3);
  const Vector p = predict(Measure::point_mass(4, 2), model);
  CHECK(max_abs(p - model.emission().row(2).transpose()) == 0.0);

  Matrix c(3, 3);
  for (int x = 0; x < 3; ++x) c.row(x) << 0.1, 0.6, 0.3;
  const HmmModel same_rows(Vector::Constant(3, 1.0 / 3), Matrix::Identity(3, 3), c);
  CHECK(max_abs(predict(Measure::uniform(3), same_rows) - c.row(0).transpose()) <= 1e-15);

  const TokenSequence tokens = sample_path(model, 6, 1).tokens;
  const PredictionSequence pred = predict_trajectory(forward_filter(model, tokens), model);
  CHECK(pred.rows.rows() == 7);
  CHECK(max_abs(pred.rows.rowwise().sum().array() - 1.0) <= 1e-12);
}
