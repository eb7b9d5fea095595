#pragma once

// Hidden Markov model HMM(mu, A, C): representation, validation, sampling,
// and the random / structured generators used by the experiments.

#include <complex>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "dualfilter/error.hpp"

namespace dualfilter {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using RowVector = Eigen::RowVectorXd;

// Observation alphabet index in {0, ..., m}.
using Token = int;
using TokenSequence = std::vector<Token>;

// Named generator so that every seeded output is reproducible bit for bit.
using Rng = std::mt19937_64;

inline constexpr double kRowSumTolerance = 1e-9;
inline constexpr double kNegativeTolerance = 1e-12;
// Row sums closer to one than this are accepted as they are.
inline constexpr double kRoundoffTolerance = 1e-12;

// Probability vector over the state space.  Construction validates and
// renormalizes so that the weights sum to 1 within 1e-12.
class Measure {
 public:
  explicit Measure(Vector weights);

  static Measure uniform(int d);
  static Measure point_mass(int d, int x);

  int size() const { return static_cast<int>(weights_.size()); }
  const Vector& weights() const { return weights_; }
  double operator[](int x) const { return weights_[x]; }
  // rho(f) = sum_x rho(x) f(x)
  double integrate(const Vector& f) const { return weights_.dot(f); }

 private:
  Vector weights_;
};

// Unconstrained d-vector (output of the layer map before projection).
using SignedMeasure = Vector;

struct ModelMeta {
  std::optional<std::uint64_t> seed;
  std::optional<double> alpha;
  std::optional<double> temperature;             // emission sampling
  std::optional<double> transition_temperature;  // random part of A
};

// Unvalidated model data as read from disk.
struct RawModel {
  int d = 0;
  int m = 0;
  std::vector<double> prior;
  std::vector<std::vector<double>> transition;
  std::vector<std::vector<double>> emission;
  ModelMeta meta;
};

class HmmModel {
 public:
  // Validates and renormalizes (see validate_model); throws on violation.
  HmmModel(Vector prior, Matrix transition, Matrix emission,
           ModelMeta meta = {});

  int num_states() const { return static_cast<int>(prior_.size()); }
  int vocab_size() const { return static_cast<int>(emission_.cols()); }
  // m in the lattice notation: vocab_size - 1.
  int m() const { return vocab_size() - 1; }

  const Vector& prior() const { return prior_; }
  const Matrix& transition() const { return transition_; }
  const Matrix& emission() const { return emission_; }
  const ModelMeta& meta() const { return meta_; }
  // Number of rows that were renormalized during validation.
  int renormalized_rows() const { return renormalized_rows_; }

  Measure prior_measure() const { return Measure(prior_); }

  void check_token(Token z) const;
  void check_tokens(std::span<const Token> tokens) const;

 private:
  Vector prior_;
  Matrix transition_;
  Matrix emission_;
  ModelMeta meta_;
  int renormalized_rows_ = 0;
};

struct ValidatedModel {
  HmmModel model;
  int warnings = 0;
};

// Rows off by more than roundoff but within 1e-9 of summing to one are
// renormalized and counted as warnings.  Entries below -1e-12 raise NegativeEntry.
ValidatedModel validate_model(const RawModel& raw);

struct SamplePath {
  std::vector<int> states;  // X_0 .. X_T
  TokenSequence tokens;     // Z_1 .. Z_T
  std::uint64_t seed = 0;
};

SamplePath sample_path(const HmmModel& model, int horizon, std::uint64_t seed);

// Each row is softmax(randn(cols) / temperature).
Matrix random_stochastic_matrix(int rows, int cols, double temperature,
                                std::uint64_t seed);
Matrix random_stochastic_matrix(int rows, int cols, double temperature,
                                Rng& rng);

// A(x, x') = 1 iff x' = x + 1 mod d.
Matrix circulant_permutation(int d);

// alpha * circulant_permutation(d) + (1 - alpha) * a_stoch.
Matrix homotopy_transition(double alpha, const Matrix& a_stoch);

struct Spectrum {
  double lambda2_mag = 0.0;
  // Sorted by magnitude descending, ties by real part descending.
  std::vector<std::complex<double>> eigenvalues;
};

Spectrum second_eigenvalue_magnitude(const Matrix& a);

// Solves |lambda2(homotopy_transition(alpha, a_stoch))| = target by
// bisection on alpha in [0, 1].  Assumes the magnitude increases with alpha;
// throws InvalidArgument when the target lies below |lambda2(a_stoch)|.
double alpha_for_lambda2(const Matrix& a_stoch, double target,
                         double tolerance = 1e-10);

}  // namespace dualfilter
