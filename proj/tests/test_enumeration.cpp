#include <doctest.h>

#include <cmath>

#include "dualfilter/enumeration.hpp"
#include "support.hpp"

using namespace dualfilter;
using testing::max_abs;

TEST_CASE("joint law of a single-state model") {
  Matrix c(1, 3);
  c << 0.2, 0.5, 0.3;
  const HmmModel model(Vector::Ones(1), Matrix::Ones(1, 1), c);
  const JointLaw law = enumerate_joint_law(model, 3);
  CHECK(law.num_state_paths() == 1);
  for (std::size_t k = 0; k < law.num_token_paths(); ++k) {
    double expected = 1.0;
    for (int t = 1; t <= 3; ++t) expected *= c(0, law.token_at(k, t));
    CHECK(law.at(k, 0) == doctest::Approx(expected).epsilon(1e-15));
  }
}

TEST_CASE("joint law normalization and prior marginal") {
  Rng rng(1);
  for (int i = 0; i < 10; ++i) {
    const HmmModel model = testing::random_model(rng, 3, 2);
    const JointLaw law = enumerate_joint_law(model, 3);
    double total = 0.0;
    Vector x0 = Vector::Zero(3);
    for (std::size_t k = 0; k < law.num_token_paths(); ++k) {
      for (std::size_t s = 0; s < law.num_state_paths(); ++s) {
        total += law.at(k, s);
        x0[law.state_at(s, 0)] += law.at(k, s);
      }
    }
    CHECK(std::abs(total - 1.0) <= 1e-12);
    CHECK(max_abs(x0 - model.prior()) <= 1e-14);
  }
}

TEST_CASE("exact_posterior") {
  Rng rng(2);
  const HmmModel single(Vector::Ones(1), Matrix::Ones(1, 1), random_stochastic_matrix(1, 3, 1.0, 2));
  const TokenSequence tokens{2, 0, 1};
  const PosteriorTrajectory p1 = exact_posterior(single, tokens);
  CHECK(max_abs(p1.measures.array() - 1.0) <= 1e-15);

  for (int i = 0; i < 20; ++i) {
    const HmmModel model = testing::random_model(rng, 2 + i % 3, 1 + i % 2);
    const TokenSequence path = sample_path(model, 1 + i % 4, i).tokens;
    const PosteriorTrajectory exact = exact_posterior(model, path);
    CHECK(max_abs(exact.measures.row(0).transpose() - model.prior()) <= 1e-14);
    CHECK(max_abs(exact.measures - testing::brute_force_posteriors(model, path)) <= 1e-12);
  }
}

TEST_CASE("exact_posterior rejects zero-probability prefixes") {
  Matrix c(2, 2);
  c << 1, 0, 1, 0;
  const HmmModel model(Vector::Constant(2, 0.5), Matrix::Identity(2, 2), c);
  try {
    exact_posterior(model, TokenSequence{0, 1});
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ZeroProbabilityPrefix);
  }
}

TEST_CASE("exact_mmse") {
  Rng rng(3);
  const HmmModel model = testing::random_model(rng, 3, 2);
  CHECK(exact_mmse(model, TerminalTable::deterministic(Vector::Constant(3, 4.0), 3, 3)) <= 1e-15);

  // Uninformative emissions: the posterior is the time-T marginal.
  Matrix a(2, 2);
  a << 0.8, 0.2, 0.2, 0.8;
  const HmmModel flat(Vector::Constant(2, 0.5), a, Matrix::Constant(2, 2, 0.5));
  Vector f(2);
  f << 1.0, -3.0;
  Vector marginal = flat.prior();
  for (int t = 0; t < 3; ++t) marginal = a.transpose() * marginal;
  const double mean = marginal.dot(f);
  const double variance = marginal.dot(f.cwiseAbs2()) - mean * mean;
  CHECK(exact_mmse(flat, TerminalTable::deterministic(f, 2, 3)) ==
        doctest::Approx(variance).epsilon(1e-13));
}

TEST_CASE("tower property and conditional-expectation optimality") {
  Rng rng(4);
  for (int i = 0; i < 5; ++i) {
    const HmmModel model = testing::random_model(rng, 3, 1 + i % 2);
    const int horizon = 3;
    const JointLaw law = enumerate_joint_law(model, horizon);
    const ExactPosterior table = exact_posterior_table(law);
    const Vector f = testing::uniform_vector(rng, 3);

    double e_pi = 0.0, e_f = 0.0;
    Vector estimate(law.num_token_paths());
    for (std::size_t k = 0; k < law.num_token_paths(); ++k) {
      estimate[k] = table.posterior(horizon, k).dot(f);
      e_pi += table.prefix_mass(horizon, k) * estimate[k];
      for (std::size_t s = 0; s < law.num_state_paths(); ++s) {
        e_f += law.at(k, s) * f[law.state_at(s, horizon)];
      }
    }
    CHECK(std::abs(e_pi - e_f) <= 1e-12);

    const double mmse = exact_mmse(model, TerminalTable::deterministic(f, model.vocab_size(), horizon));
    for (int trial = 0; trial < 20; ++trial) {
      const Vector other = estimate + 0.3 * testing::uniform_vector(rng, estimate.size());
      double mse = 0.0;
      for (std::size_t k = 0; k < law.num_token_paths(); ++k) {
        for (std::size_t s = 0; s < law.num_state_paths(); ++s) {
          const double err = f[law.state_at(s, horizon)] - other[k];
          mse += law.at(k, s) * err * err;
        }
      }
      CHECK(mmse <= mse + 1e-14);
    }
  }
}
