#pragma once

// Brute-force Bayes oracle: exact joint law of (state path, token path) and
// the posteriors / MMSE obtained by summing it.  Deliberately independent of
// the filter recursion.

#include <cstddef>
#include <span>
#include <vector>

#include "dualfilter/forward_filter.hpp"
#include "dualfilter/hmm.hpp"

namespace dualfilter {

// Hard cap on d^(T+1) * (m+1)^T mass points.
inline constexpr std::size_t kEnumerationLimit = 10'000'000;

// Token paths are indexed base (m+1) with z_1 most significant, so the index
// of the length-t prefix of path k is k / (m+1)^(T-t).  State paths are
// indexed base d with x_0 most significant.
struct JointLaw {
  int num_states = 0;
  int vocab_size = 0;
  int horizon = 0;
  std::vector<double> mass;  // [token_path * num_state_paths() + state_path]

  std::size_t num_state_paths() const;
  std::size_t num_token_paths() const;
  int state_at(std::size_t state_path, int t) const;
  Token token_at(std::size_t token_path, int t) const;  // t in 1..T
  std::size_t prefix_of(std::size_t token_path, int t) const;
  double at(std::size_t token_path, std::size_t state_path) const {
    return mass[token_path * num_state_paths() + state_path];
  }
};

// Number of length-t prefixes over an alphabet of size vocab.
std::size_t prefix_count(int vocab, int t);

// Throws TooLarge when d^(T+1) (m+1)^T exceeds kEnumerationLimit.
void check_enumeration_size(int d, int vocab, int horizon);

JointLaw enumerate_joint_law(const HmmModel& model, int horizon);

// Exact conditional laws for every token prefix, from joint-law sums.
struct ExactPosterior {
  int vocab_size = 0;
  int horizon = 0;
  // joint[t](prefix, x) = P(X_t = x, Z_{1..t} = prefix)
  std::vector<Matrix> joint;

  double prefix_mass(int t, std::size_t prefix) const {
    return joint[t].row(prefix).sum();
  }
  // Throws ZeroProbabilityPrefix.
  Vector posterior(int t, std::size_t prefix) const;
};

ExactPosterior exact_posterior_table(const JointLaw& law);

// Exact pi_0..pi_T for one observed sequence.
PosteriorTrajectory exact_posterior(const HmmModel& model,
                                    std::span<const Token> tokens);

// Terminal condition F(x) that may depend on the whole token path:
// values(k, x) for token path k (indexed as in JointLaw).
struct TerminalTable {
  int vocab_size = 0;
  int horizon = 0;
  Matrix values;

  // Same f for every token path.
  static TerminalTable deterministic(const Vector& f, int vocab, int horizon);
  // F(x) = C(x, z*): the next-token prediction target.
  static TerminalTable emission_column(const HmmModel& model, Token z,
                                       int horizon);
};

// E |F(X_T) - pi_T(F)|^2 with pi_T from joint-law sums.
double exact_mmse(const HmmModel& model, const TerminalTable& terminal);

}  // namespace dualfilter
