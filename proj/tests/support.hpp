#pragma once

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "dualfilter/hmm.hpp"

namespace testing {

using namespace dualfilter;

inline HmmModel random_model(Rng& rng, int d, int m, double temperature = 1.0) {
  const Vector prior = random_stochastic_matrix(1, d, temperature, rng).row(0).transpose();
  const Matrix a = random_stochastic_matrix(d, d, temperature, rng);
  const Matrix c = random_stochastic_matrix(d, m + 1, temperature, rng);
  return HmmModel(prior, a, c);
}

inline Vector uniform_vector(Rng& rng, int n, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Vector v(n);
  for (int i = 0; i < n; ++i) v[i] = u(rng);
  return v;
}

inline Vector random_probability(Rng& rng, int n) {
  Vector v = uniform_vector(rng, n, 0.05, 1.0);
  return v / v.sum();
}

inline double max_abs(const Matrix& m) { return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff(); }

// Brute-force Bayes posterior written independently of the library: sums
// mu(x0) prod A prod C over all state paths.
inline Matrix brute_force_posteriors(const HmmModel& model, const TokenSequence& tokens) {
  const int d = model.num_states();
  const int horizon = static_cast<int>(tokens.size());
  Matrix out(horizon + 1, d);
  for (int t = 0; t <= horizon; ++t) {
    Vector joint = Vector::Zero(d);
    std::vector<int> path(t + 1, 0);
    std::function<void(int, double)> walk = [&](int s, double w) {
      if (s == t) {
        joint[path[s]] += w;
        return;
      }
      for (int y = 0; y < d; ++y) {
        path[s + 1] = y;
        walk(s + 1, w * model.emission()(path[s], tokens[s]) * model.transition()(path[s], y));
      }
    };
    for (int x = 0; x < d; ++x) {
      path[0] = x;
      walk(0, model.prior()[x]);
    }
    out.row(t) = joint.transpose() / joint.sum();
  }
  return out;
}

inline double golden_section(const std::function<double(double)>& f, double lo, double hi,
                             double tol = 1e-12) {
  const double r = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = lo, b = hi;
  double c = b - r * (b - a), d = a + r * (b - a);
  double fc = f(c), fd = f(d);
  while (b - a > tol) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - r * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + r * (b - a);
      fd = f(d);
    }
  }
  return 0.5 * (a + b);
}

// Golden-section bracketing followed by parabolic steps through points a
// distance h apart, so flat minima are located well below sqrt(eps).
inline double line_minimize(const std::function<double(double)>& f, double lo, double hi,
                            double h = 1.0) {
  double x = golden_section(f, lo, hi, 1e-6);
  for (int i = 0; i < 3; ++i) {
    const double fm = f(x - h), f0 = f(x), fp = f(x + h);
    const double curvature = fp - 2.0 * f0 + fm;
    if (!(curvature > 0.0)) break;
    x -= 0.5 * h * (fp - fm) / curvature;
  }
  return x;
}

}  // namespace testing
