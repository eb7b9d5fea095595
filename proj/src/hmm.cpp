#include "dualfilter/hmm.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <Eigen/Eigenvalues>

namespace dualfilter {

namespace {

// Checks a stochastic vector and renormalizes in place.  Returns true when
// renormalization changed the entries.
bool check_stochastic(Eigen::Ref<Vector> v, const std::string& what) {
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (!std::isfinite(v[i])) {
      throw Error(ErrorCode::NegativeEntry, what + " has a non-finite entry");
    }
    if (v[i] < -kNegativeTolerance) {
      throw Error(ErrorCode::NegativeEntry,
                  what + " has entry " + std::to_string(v[i]));
    }
  }
  v = v.cwiseMax(0.0);
  const double sum = v.sum();
  if (std::abs(sum - 1.0) > kRowSumTolerance) {
    throw Error(ErrorCode::RowSumError,
                what + " sums to " + std::to_string(sum));
  }
  if (std::abs(sum - 1.0) <= kRoundoffTolerance) return false;
  v /= sum;
  return true;
}

int check_rows(Matrix& mat, const std::string& name) {
  int renormalized = 0;
  for (Eigen::Index r = 0; r < mat.rows(); ++r) {
    Vector row = mat.row(r).transpose();
    if (check_stochastic(row, name + " row " + std::to_string(r))) {
      ++renormalized;
    }
    mat.row(r) = row.transpose();
  }
  return renormalized;
}

}  // namespace

Measure::Measure(Vector weights) : weights_(std::move(weights)) {
  if (weights_.size() == 0) {
    throw Error(ErrorCode::DimensionMismatch, "empty measure");
  }
  for (Eigen::Index i = 0; i < weights_.size(); ++i) {
    if (!std::isfinite(weights_[i]) || weights_[i] < -kNegativeTolerance) {
      throw Error(ErrorCode::NegativeEntry, "measure entry " + std::to_string(i));
    }
  }
  weights_ = weights_.cwiseMax(0.0);
  const double sum = weights_.sum();
  if (!(sum > 0.0)) {
    throw Error(ErrorCode::RowSumError, "measure has zero mass");
  }
  weights_ /= sum;
}

Measure Measure::uniform(int d) { return Measure(Vector::Constant(d, 1.0 / d)); }

Measure Measure::point_mass(int d, int x) {
  Vector w = Vector::Zero(d);
  w[x] = 1.0;
  return Measure(std::move(w));
}

HmmModel::HmmModel(Vector prior, Matrix transition, Matrix emission,
                   ModelMeta meta)
    : prior_(std::move(prior)),
      transition_(std::move(transition)),
      emission_(std::move(emission)),
      meta_(meta) {
  const auto d = prior_.size();
  if (d < 1) throw Error(ErrorCode::DimensionMismatch, "d must be >= 1");
  if (transition_.rows() != d || transition_.cols() != d) {
    throw Error(ErrorCode::DimensionMismatch, "transition must be d x d");
  }
  if (emission_.rows() != d || emission_.cols() < 2) {
    throw Error(ErrorCode::DimensionMismatch,
                "emission must be d x (m+1) with m >= 1");
  }
  if (check_stochastic(prior_, "prior")) ++renormalized_rows_;
  renormalized_rows_ += check_rows(transition_, "transition");
  renormalized_rows_ += check_rows(emission_, "emission");
}

void HmmModel::check_token(Token z) const {
  if (z < 0 || z >= vocab_size()) {
    throw Error(ErrorCode::TokenOutOfRange,
                "token " + std::to_string(z) + " outside vocabulary of size " +
                    std::to_string(vocab_size()));
  }
}

void HmmModel::check_tokens(std::span<const Token> tokens) const {
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    if (tokens[t] < 0 || tokens[t] >= vocab_size()) {
      throw Error(ErrorCode::TokenOutOfRange,
                  "token " + std::to_string(tokens[t]) + " outside vocabulary",
                  t + 1);
    }
  }
}

ValidatedModel validate_model(const RawModel& raw) {
  const int d = raw.d;
  const int m = raw.m;
  if (d < 1 || m < 1) {
    throw Error(ErrorCode::DimensionMismatch, "need d >= 1 and m >= 1");
  }
  if (static_cast<int>(raw.prior.size()) != d ||
      static_cast<int>(raw.transition.size()) != d ||
      static_cast<int>(raw.emission.size()) != d) {
    throw Error(ErrorCode::DimensionMismatch, "prior/transition/emission rows != d");
  }
  Vector prior = Eigen::Map<const Vector>(raw.prior.data(), d);
  Matrix a(d, d);
  Matrix c(d, m + 1);
  for (int x = 0; x < d; ++x) {
    if (static_cast<int>(raw.transition[x].size()) != d) {
      throw Error(ErrorCode::DimensionMismatch,
                  "transition row " + std::to_string(x) + " has wrong length");
    }
    if (static_cast<int>(raw.emission[x].size()) != m + 1) {
      throw Error(ErrorCode::DimensionMismatch,
                  "emission row " + std::to_string(x) + " has wrong length");
    }
    for (int y = 0; y < d; ++y) a(x, y) = raw.transition[x][y];
    for (int z = 0; z <= m; ++z) c(x, z) = raw.emission[x][z];
  }
  HmmModel model(std::move(prior), std::move(a), std::move(c), raw.meta);
  const int warnings = model.renormalized_rows();
  return ValidatedModel{std::move(model), warnings};
}

namespace {

template <typename Row>
int draw(const Row& probs, std::uniform_real_distribution<double>& unif,
         Rng& rng) {
  const double u = unif(rng);
  double acc = 0.0;
  const int n = static_cast<int>(probs.size());
  for (int i = 0; i < n; ++i) {
    acc += probs[i];
    if (u < acc) return i;
  }
  // Round-off: fall back to the last index with positive mass.
  for (int i = n - 1; i >= 0; --i) {
    if (probs[i] > 0.0) return i;
  }
  return n - 1;
}

}  // namespace

SamplePath sample_path(const HmmModel& model, int horizon, std::uint64_t seed) {
  if (horizon < 1) {
    throw Error(ErrorCode::InvalidArgument, "horizon must be >= 1");
  }
  Rng rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  SamplePath path;
  path.seed = seed;
  path.states.reserve(horizon + 1);
  path.tokens.reserve(horizon);
  int x = draw(model.prior(), unif, rng);
  path.states.push_back(x);
  for (int t = 0; t < horizon; ++t) {
    path.tokens.push_back(draw(model.emission().row(x), unif, rng));
    x = draw(model.transition().row(x), unif, rng);
    path.states.push_back(x);
  }
  return path;
}

Matrix random_stochastic_matrix(int rows, int cols, double temperature,
                                Rng& rng) {
  if (rows < 1 || cols < 1) {
    throw Error(ErrorCode::DimensionMismatch, "rows and cols must be >= 1");
  }
  if (!(temperature > 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "temperature must be positive");
  }
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix out(rows, cols);
  Vector logits(cols);
  for (int r = 0; r < rows; ++r) {
    for (int k = 0; k < cols; ++k) logits[k] = normal(rng) / temperature;
    const double top = logits.maxCoeff();
    Vector w = (logits.array() - top).exp().matrix();
    out.row(r) = (w / w.sum()).transpose();
  }
  return out;
}

Matrix random_stochastic_matrix(int rows, int cols, double temperature,
                                std::uint64_t seed) {
  Rng rng(seed);
  return random_stochastic_matrix(rows, cols, temperature, rng);
}

Matrix circulant_permutation(int d) {
  if (d < 1) throw Error(ErrorCode::DimensionMismatch, "d must be >= 1");
  Matrix a = Matrix::Zero(d, d);
  for (int x = 0; x < d; ++x) a(x, (x + 1) % d) = 1.0;
  return a;
}

Matrix homotopy_transition(double alpha, const Matrix& a_stoch) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw Error(ErrorCode::AlphaOutOfRange,
                "alpha = " + std::to_string(alpha) + " not in [0, 1]");
  }
  if (a_stoch.rows() != a_stoch.cols()) {
    throw Error(ErrorCode::DimensionMismatch, "a_stoch must be square");
  }
  const int d = static_cast<int>(a_stoch.rows());
  if (alpha == 1.0) return circulant_permutation(d);
  if (alpha == 0.0) return a_stoch;
  return alpha * circulant_permutation(d) + (1.0 - alpha) * a_stoch;
}

Spectrum second_eigenvalue_magnitude(const Matrix& a) {
  if (a.rows() != a.cols() || a.rows() == 0) {
    throw Error(ErrorCode::DimensionMismatch, "matrix must be square");
  }
  Eigen::EigenSolver<Matrix> solver(a, /*computeEigenvectors=*/false);
  if (solver.info() != Eigen::Success) {
    throw Error(ErrorCode::EigenFailure, "QR iteration did not converge");
  }
  Spectrum out;
  const auto& ev = solver.eigenvalues();
  out.eigenvalues.assign(ev.data(), ev.data() + ev.size());
  // Magnitudes are compared after rounding to 12 significant digits so that
  // round-off does not reorder eigenvalues of equal modulus.
  auto key = [](const std::complex<double>& z) {
    const double r = std::abs(z);
    if (r == 0.0) return 0.0;
    const double scale = std::pow(10.0, 11 - std::floor(std::log10(r)));
    return std::round(r * scale) / scale;
  };
  std::stable_sort(out.eigenvalues.begin(), out.eigenvalues.end(),
                   [&](const auto& lhs, const auto& rhs) {
                     const double kl = key(lhs);
                     const double kr = key(rhs);
                     if (kl != kr) return kl > kr;
                     if (lhs.real() != rhs.real()) return lhs.real() > rhs.real();
                     return lhs.imag() > rhs.imag();
                   });
  out.lambda2_mag =
      out.eigenvalues.size() > 1 ? std::abs(out.eigenvalues[1]) : 0.0;
  return out;
}

double alpha_for_lambda2(const Matrix& a_stoch, double target,
                         double tolerance) {
  if (!(target >= 0.0 && target <= 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "target |lambda2| must be in [0, 1]");
  }
  auto mag = [&](double alpha) {
    return second_eigenvalue_magnitude(homotopy_transition(alpha, a_stoch))
        .lambda2_mag;
  };
  double lo = 0.0;
  double hi = 1.0;
  const double at_zero = mag(lo);
  if (at_zero > target + tolerance) {
    throw Error(ErrorCode::InvalidArgument,
                "target |lambda2| below that of the random part (" +
                    std::to_string(at_zero) + ")");
  }
  if (at_zero >= target) return lo;
  while (hi - lo > tolerance) {
    const double mid = 0.5 * (lo + hi);
    (mag(mid) < target ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace dualfilter
