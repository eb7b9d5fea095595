#pragma once

// Classical nonlinear filter (forward algorithm).  Serves as ground truth for
// everything the dual filter computes.

#include <span>

#include "dualfilter/hmm.hpp"

namespace dualfilter {

// Normalizers at or below this value are treated as a zero-probability event.
inline constexpr double kImpossibleThreshold = 1e-300;

// Row t holds pi_t for t = 0..T (row 0 is the prior).
struct PosteriorTrajectory {
  Matrix measures;

  int horizon() const { return static_cast<int>(measures.rows()) - 1; }
  Measure at(int t) const { return Measure(measures.row(t).transpose()); }
};

// Row t holds p_t = pi_t(C) for t = 0..T.  Row 0 is the prediction of Z_1
// under the prior.
struct PredictionSequence {
  Matrix rows;
};

// pi'(x') = sum_x pi(x) C(x,z) A(x,x') / sum_x pi(x) C(x,z)
Measure forward_step(const Measure& pi, const HmmModel& model, Token z);

PosteriorTrajectory forward_filter(const HmmModel& model,
                                   std::span<const Token> tokens);

// p(z) = sum_x pi(x) C(x,z)
Vector predict(const Measure& pi, const HmmModel& model);

PredictionSequence predict_trajectory(const PosteriorTrajectory& trajectory,
                                      const HmmModel& model);

}  // namespace dualfilter
