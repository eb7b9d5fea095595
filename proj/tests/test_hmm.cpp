#include <doctest.h>

#include "dualfilter/hmm.hpp"
#include "support.hpp"

using namespace dualfilter;
using testing::max_abs;

namespace {

RawModel raw_identity() {
  RawModel raw;
  raw.d = 2;
  raw.m = 1;
  raw.prior = {0.5, 0.5};
  raw.transition = {{1, 0}, {0, 1}};
  raw.emission = {{1, 0}, {0, 1}};
  return raw;
}

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no error thrown");
  return ErrorCode::InvalidArgument;
}

}  // namespace

TEST_CASE("validate_model accepts the identity model") {
  const ValidatedModel v = validate_model(raw_identity());
  CHECK(v.warnings == 0);
  CHECK(v.model.num_states() == 2);
  CHECK(v.model.vocab_size() == 2);
  CHECK(v.model.m() == 1);
}

TEST_CASE("validate_model renormalizes small row-sum deviations") {
  RawModel raw = raw_identity();
  raw.transition[0] = {0.5, 0.5 + 1e-10};
  const ValidatedModel v = validate_model(raw);
  CHECK(v.warnings == 1);
  CHECK(v.model.transition().row(0).sum() == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("validate_model errors") {
  RawModel negative = raw_identity();
  negative.emission[1] = {-0.01, 1.01};
  CHECK(code_of([&] { validate_model(negative); }) == ErrorCode::NegativeEntry);

  RawModel bad_sum = raw_identity();
  bad_sum.transition[1] = {0.2, 0.7};
  CHECK(code_of([&] { validate_model(bad_sum); }) == ErrorCode::RowSumError);

  RawModel bad_shape = raw_identity();
  bad_shape.emission = {{1, 0}};
  CHECK(code_of([&] { validate_model(bad_shape); }) == ErrorCode::DimensionMismatch);

  RawModel bad_prior = raw_identity();
  bad_prior.prior = {0.5, 0.6};
  CHECK(code_of([&] { validate_model(bad_prior); }) == ErrorCode::RowSumError);
}

TEST_CASE("sample_path degenerate chain") {
  Matrix c(2, 2);
  c << 1, 0, 0.5, 0.5;
  const HmmModel model(Vector::Unit(2, 0), Matrix::Identity(2, 2), c);
  const SamplePath path = sample_path(model, 20, 3);
  CHECK(path.states.size() == 21);
  CHECK(path.tokens.size() == 20);
  for (int x : path.states) CHECK(x == 0);
  for (Token z : path.tokens) CHECK(z == 0);
}

TEST_CASE("sample_path is deterministic given the seed") {
  Rng rng(11);
  const HmmModel model = testing::random_model(rng, 5, 3);
  const SamplePath a = sample_path(model, 50, 99);
  const SamplePath b = sample_path(model, 50, 99);
  CHECK(a.states == b.states);
  CHECK(a.tokens == b.tokens);
  CHECK(a.seed == 99);
  const SamplePath c = sample_path(model, 50, 100);
  CHECK((c.tokens != a.tokens || c.states != a.states));
}

TEST_CASE("sampled token and transition frequencies match the model rows") {
  // One-step samples from a point-mass prior: Z_1 ~ C(x,.), X_1 ~ A(x,.).
  Matrix a(3, 3);
  a << 0.2, 0.5, 0.3, 0.1, 0.1, 0.8, 0.6, 0.2, 0.2;
  Matrix c(3, 3);
  c << 0.7, 0.2, 0.1, 0.3, 0.3, 0.4, 0.25, 0.25, 0.5;
  const HmmModel model(Vector::Unit(3, 1), a, c);
  const int n = 100000;
  Vector token_counts = Vector::Zero(3);
  Vector state_counts = Vector::Zero(3);
  for (int i = 0; i < n; ++i) {
    const SamplePath p = sample_path(model, 1, 1000 + i);
    token_counts[p.tokens[0]] += 1;
    state_counts[p.states[1]] += 1;
  }
  for (int k = 0; k < 3; ++k) {
    const double pz = c(1, k);
    const double px = a(1, k);
    CHECK(std::abs(token_counts[k] / n - pz) <= 3 * std::sqrt(pz * (1 - pz) / n));
    CHECK(std::abs(state_counts[k] / n - px) <= 3 * std::sqrt(px * (1 - px) / n));
  }
}

TEST_CASE("random_stochastic_matrix") {
  const Matrix flat = random_stochastic_matrix(4, 6, 1e9, 5);
  CHECK(max_abs(flat.array() - 1.0 / 6.0) <= 1e-6);

  const Matrix m = random_stochastic_matrix(20, 7, 0.3, 5);
  CHECK(max_abs(m.rowwise().sum().array() - 1.0) <= 1e-12);
  CHECK((m.array() > 0.0).all());
  CHECK(m == random_stochastic_matrix(20, 7, 0.3, 5));
  CHECK(m != random_stochastic_matrix(20, 7, 0.3, 6));
}

TEST_CASE("circulant_permutation") {
  Matrix expected(3, 3);
  expected << 0, 1, 0, 0, 0, 1, 1, 0, 0;
  CHECK(circulant_permutation(3) == expected);
  CHECK(circulant_permutation(1) == Matrix::Ones(1, 1));
  const Matrix p = circulant_permutation(7);
  Matrix power = Matrix::Identity(7, 7);
  for (int i = 0; i < 7; ++i) power = power * p;
  CHECK(power == Matrix::Identity(7, 7));
}

TEST_CASE("homotopy_transition") {
  const Matrix a_stoch = random_stochastic_matrix(6, 6, 1.0, 2);
  CHECK(homotopy_transition(1.0, a_stoch) == circulant_permutation(6));
  CHECK(homotopy_transition(0.0, a_stoch) == a_stoch);

  const Matrix half = Matrix::Constant(2, 2, 0.5);
  Matrix expected(2, 2);
  expected << 0.25, 0.75, 0.75, 0.25;
  CHECK(max_abs(homotopy_transition(0.5, half) - expected) == 0.0);

  CHECK(code_of([&] { homotopy_transition(1.5, a_stoch); }) == ErrorCode::AlphaOutOfRange);
  CHECK(code_of([&] { homotopy_transition(-0.1, a_stoch); }) == ErrorCode::AlphaOutOfRange);

  Rng rng(4);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (int i = 0; i < 100; ++i) {
    const Matrix h = homotopy_transition(unif(rng), a_stoch);
    CHECK(max_abs(h.rowwise().sum().array() - 1.0) <= 1e-12);
    CHECK((h.array() >= 0.0).all());
  }
}

TEST_CASE("second_eigenvalue_magnitude") {
  const Spectrum circ = second_eigenvalue_magnitude(circulant_permutation(8));
  CHECK(circ.lambda2_mag == doctest::Approx(1.0).epsilon(1e-12));
  for (const auto& ev : circ.eigenvalues) CHECK(std::abs(ev) == doctest::Approx(1.0).epsilon(1e-12));

  const Spectrum id = second_eigenvalue_magnitude(Matrix::Identity(4, 4));
  CHECK(id.lambda2_mag == doctest::Approx(1.0));

  Matrix diag(2, 2);
  diag << 1, 0, 0, 0.5;
  CHECK(second_eigenvalue_magnitude(diag).lambda2_mag == doctest::Approx(0.5).epsilon(1e-14));

  for (int seed = 0; seed < 10; ++seed) {
    const Spectrum s = second_eigenvalue_magnitude(random_stochastic_matrix(30, 30, 1.0, seed));
    CHECK(std::abs(s.eigenvalues.front()) == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(s.lambda2_mag < 1.0);
    for (std::size_t i = 1; i < s.eigenvalues.size(); ++i) {
      CHECK(std::abs(s.eigenvalues[i]) <= std::abs(s.eigenvalues[i - 1]) + 1e-12);
    }
  }
}

TEST_CASE("alpha_for_lambda2") {
  const Matrix a_stoch = random_stochastic_matrix(40, 40, 1.0, 8);
  const double alpha = alpha_for_lambda2(a_stoch, 0.5);
  CHECK(second_eigenvalue_magnitude(homotopy_transition(alpha, a_stoch)).lambda2_mag ==
        doctest::Approx(0.5).epsilon(1e-8));
  CHECK(code_of([&] { alpha_for_lambda2(a_stoch, 0.0); }) == ErrorCode::InvalidArgument);
  CHECK(code_of([&] { alpha_for_lambda2(a_stoch, 1.5); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("Measure") {
  const Measure m(Vector::Constant(4, 2.0));
  CHECK(m.weights().sum() == doctest::Approx(1.0));
  CHECK(Measure::uniform(5)[2] == doctest::Approx(0.2));
  CHECK(Measure::point_mass(3, 1)[1] == 1.0);
  CHECK(code_of([] { Measure(Vector::Constant(2, -1.0)); }) == ErrorCode::NegativeEntry);
}
