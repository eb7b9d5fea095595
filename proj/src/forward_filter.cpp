#include "dualfilter/forward_filter.hpp"

namespace dualfilter {

namespace {

// Unnormalized update; throws when z has zero likelihood under pi.
Vector update(const Vector& pi, const HmmModel& model, Token z) {
  const Vector weighted = pi.cwiseProduct(model.emission().col(z));
  const double normalizer = weighted.sum();
  if (!(normalizer > kImpossibleThreshold)) {
    throw Error(ErrorCode::ImpossibleObservation,
                "token " + std::to_string(z) + " has zero likelihood");
  }
  return model.transition().transpose() * (weighted / normalizer);
}

}  // namespace

Measure forward_step(const Measure& pi, const HmmModel& model, Token z) {
  model.check_token(z);
  if (pi.size() != model.num_states()) {
    throw Error(ErrorCode::DimensionMismatch, "measure size != d");
  }
  return Measure(update(pi.weights(), model, z));
}

PosteriorTrajectory forward_filter(const HmmModel& model,
                                   std::span<const Token> tokens) {
  model.check_tokens(tokens);
  const int horizon = static_cast<int>(tokens.size());
  PosteriorTrajectory out;
  out.measures.resize(horizon + 1, model.num_states());
  Vector pi = model.prior();
  out.measures.row(0) = pi.transpose();
  for (int t = 1; t <= horizon; ++t) {
    try {
      pi = update(pi, model, tokens[t - 1]);
    } catch (const Error& e) {
      throw Error(e.code(), "forward filter", static_cast<std::size_t>(t));
    }
    // Renormalize to keep long paths on the simplex.
    pi /= pi.sum();
    out.measures.row(t) = pi.transpose();
  }
  return out;
}

Vector predict(const Measure& pi, const HmmModel& model) {
  if (pi.size() != model.num_states()) {
    throw Error(ErrorCode::DimensionMismatch, "measure size != d");
  }
  return model.emission().transpose() * pi.weights();
}

PredictionSequence predict_trajectory(const PosteriorTrajectory& trajectory,
                                      const HmmModel& model) {
  return PredictionSequence{trajectory.measures * model.emission()};
}

}  // namespace dualfilter
