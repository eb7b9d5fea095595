#pragma once

// Lattice encoding of tokens, the decomposition of functions on the
// vocabulary, and the conditional moment operators c, R and Gamma.

#include <vector>

#include "dualfilter/hmm.hpp"

namespace dualfilter {

// e(i) = i-th basis vector of R^m for i = 1..m, e(0) = -(1, ..., 1).
Vector encode(Token z, int m);

// u^T e(z) without materializing e(z).
double dot_encoded(const Vector& u, Token z);

// Any s : {0..m} -> R splits uniquely as s(z) = mean + tilde^T e(z).
struct Decomposition {
  double mean = 0.0;
  Vector tilde;  // length m

  double reconstruct(Token z) const { return mean + dot_encoded(tilde, z); }
};

// s has length m+1, indexed by token.
Decomposition decompose(const Vector& s);

struct MomentOperators {
  // Column x is c(x) with c(x)_i = C(x,i) - C(x,0).
  Matrix c;
  // R(x) = diag(c(x)) + C(x,0)(I + 11^T) - c(x)c(x)^T, one m x m per state.
  std::vector<Matrix> r;
  // C(x,0), kept for R(x) + c(x)c(x)^T = diag(c(x)) + C(x,0)(I + 11^T).
  Vector c0;

  int num_states() const { return static_cast<int>(c.cols()); }
  int m() const { return static_cast<int>(c.rows()); }

  // rho(R) = sum_x rho(x) R(x)
  Matrix averaged_r(const Vector& rho) const;
};

MomentOperators build_moments(const HmmModel& model);

// (Gamma f)(x) = sum_y A(x,y) f(y)^2 - (sum_y A(x,y) f(y))^2
Vector gamma_apply(const Matrix& a, const Vector& f);

// Variance of ((-1^T u), u) under q, a probability vector over {0..m}.
double variance_bracket(const Vector& u, const Vector& q);

// c(x) = 2 C(x,z) - 1: the +/-1 reduction of the observation z.
Vector binary_reduce(const HmmModel& model, Token z);

}  // namespace dualfilter
