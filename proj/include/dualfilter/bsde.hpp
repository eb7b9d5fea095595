#pragma once

// Exact, enumeration-based treatment of the backward stochastic difference
// equation
//
//   Y_t(x) = (A Y_{t+1})(x) + c(x)^T (U_t + V_t(x)) - V_t(x)^T e(Z_{t+1}),
//   Y_T    = F,
//
// its control cost J_T(U; F), the induced estimator
// S_T = mu(Y_0) - sum_t U_{t-1}^T e(Z_t), and the optimal closed loop.
//
// Every Z-adapted quantity is stored as a table over token prefixes, indexed
// base (m+1) with z_1 most significant (see JointLaw).

#include <cstdint>
#include <vector>

#include "dualfilter/enumeration.hpp"
#include "dualfilter/token_geometry.hpp"

namespace dualfilter {

// U_t for every prefix of length t: values[t] has (m+1)^t rows and m columns.
struct AdaptedControl {
  int vocab_size = 0;
  std::vector<Matrix> values;

  int horizon() const { return static_cast<int>(values.size()); }
  Vector at(int t, std::size_t prefix) const {
    return values[t].row(prefix).transpose();
  }

  static AdaptedControl zeros(int vocab, int horizon);
  // i.i.d. uniform entries on [-scale, scale].
  static AdaptedControl random(int vocab, int horizon, double scale, Rng& rng);
};

struct BsdeSolution {
  // y[t] is (m+1)^t x d, t = 0..T; y[T] is the terminal table.
  std::vector<Matrix> y;
  // v[t][prefix] is m x d (column x is V_t(x)), t = 0..T-1.
  std::vector<std::vector<Matrix>> v;
};

BsdeSolution bsde_solve(const HmmModel& model, const AdaptedControl& controls,
                        const TerminalTable& terminal);

// max over t, prefixes, x and continuation tokens of the equation residual.
double bsde_residual(const HmmModel& model, const AdaptedControl& controls,
                     const BsdeSolution& solution);

struct CostBreakdown {
  double total = 0.0;             // J_T(U; F)
  double initial_variance = 0.0;  // var(Y_0(X_0))
  double running = 0.0;           // E sum_t l(Y_{t+1}, V_t, U_t; X_t)
  double mse = 0.0;               // E |F(X_T) - S_T|^2
  double mmse = 0.0;              // E |F(X_T) - pi_T(F)|^2, filter posterior
};

CostBreakdown cost_J(const HmmModel& model, const AdaptedControl& controls,
                     const TerminalTable& terminal);

// E |F(X_T) - (c0 - sum_t U_{t-1}^T e(Z_t))|^2 for an arbitrary constant c0.
double estimator_mse(const HmmModel& model, const AdaptedControl& controls,
                     const TerminalTable& terminal, double c0);

// Filter posteriors on every prefix, by forward steps from the parent prefix.
struct PosteriorTrie {
  int vocab_size = 0;
  std::vector<Matrix> pi;               // pi[t] is (m+1)^t x d
  std::vector<std::vector<double>> mass;  // P(Z_{1..t} = prefix)
  std::vector<std::vector<std::uint8_t>> reachable;
};

PosteriorTrie posterior_trie(const HmmModel& model, int horizon);

struct OptimalSolution {
  AdaptedControl controls;
  BsdeSolution solution;
  PosteriorTrie posterior;
  std::size_t skipped_prefixes = 0;  // zero-probability prefixes (U set to 0)
};

// Closed loop U_t = phi(Y_t, V_t; pi_t) with pi_t the filter posterior.
OptimalSolution solve_optimal(const HmmModel& model,
                              const TerminalTable& terminal);

// E sum_t <U_t - U_t^fb, U_t - U_t^fb>_{p_t}, where U_t^fb is the feedback
// control phi evaluated along the solution driven by U itself.
double control_excess(const HmmModel& model, const AdaptedControl& controls,
                      const TerminalTable& terminal);

struct RepresentationReport {
  double max_deviation = 0.0;
  std::size_t checked_prefixes = 0;
  std::size_t skipped_prefixes = 0;
};

// max |pi_t(Y_t^opt) - (mu(Y_0^opt) - sum_{s<=t} U_{s-1}^opt e(z_s))| over
// positive-probability prefixes.
RepresentationReport representation_check(const HmmModel& model,
                                          const TerminalTable& terminal);

}  // namespace dualfilter
