#pragma once

// Optimal control formula phi for the dual (control) problem, its binary
// specialization used by the dual filter, and the one-step closed form.

#include "dualfilter/hmm.hpp"
#include "dualfilter/token_geometry.hpp"

namespace dualfilter {

// Guard on 1 - rho(c)^2 (binary) and the pseudo-inverse floor (general m).
inline constexpr double kControlSingularity = 1e-12;

// Moore-Penrose pseudo-inverse; singular values below
// max(1e-12 * sigma_max, 1e-12) are treated as zero.
Matrix pseudo_inverse(const Matrix& m);

// Optimal control for general m.  `pre_control` is the part of the dual
// function that does not depend on the control, y(x) = g(x) + c(x)^T (u +
// v(x)); columns of `v` are v(x).  Returns the u solving the stationarity
// condition rho((c - rho(c)) y) + rho(R) u + rho(R v) = 0.
Vector phi_general(const Vector& pre_control, const Matrix& v,
                   const Vector& rho, const MomentOperators& moments);

// Same stationarity condition evaluated at the closed-loop dual function y:
// u = -rho(R)^+ (rho((c - rho(c)) y) + rho(R v)).
Vector phi_feedback(const Vector& y, const Matrix& v, const Vector& rho,
                    const MomentOperators& moments);

// Binary (m = 1) control for a +/-1 reduced observation with c(x) in
// [-1, 1]; returns 0 when |1 - rho(c)^2| <= 1e-12.
double optimal_control_binary(const Vector& rho, const Vector& g,
                              const Vector& v, const Vector& c);

// Columnwise version with v = 0: entry j is the control for terminal
// function g.col(j).  Linear in g: u = w^T g.
RowVector optimal_control_binary(const Vector& rho, const Matrix& g,
                                 const Vector& c);

// The weight vector w with optimal_control_binary(rho, g, 0, c) = w^T g.
Vector binary_control_weights(const Vector& rho, const Vector& c);

// One-step (T = 1), m = 1 optimal control for terminal condition F with
// F = f_plus when Z_1 = 1 and F = f_minus when Z_1 = 0.
double corollary5_closed_form(const HmmModel& model, const Vector& f_plus,
                              const Vector& f_minus);

}  // namespace dualfilter
