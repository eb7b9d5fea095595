#include "dualfilter/enumeration.hpp"

#include <string>

namespace dualfilter {

std::size_t prefix_count(int vocab, int t) {
  std::size_t n = 1;
  for (int i = 0; i < t; ++i) n *= static_cast<std::size_t>(vocab);
  return n;
}

void check_enumeration_size(int d, int vocab, int horizon) {
  if (horizon < 0) throw Error(ErrorCode::InvalidArgument, "negative horizon");
  // Multiply with an early exit so the product cannot overflow.
  double points = d;
  for (int t = 0; t < horizon; ++t) {
    points *= static_cast<double>(d) * vocab;
    if (points > static_cast<double>(kEnumerationLimit)) break;
  }
  if (points > static_cast<double>(kEnumerationLimit)) {
    throw Error(ErrorCode::TooLarge,
                "enumeration of d=" + std::to_string(d) + ", vocab=" +
                    std::to_string(vocab) + ", T=" + std::to_string(horizon) +
                    " exceeds 1e7 mass points");
  }
}

std::size_t JointLaw::num_state_paths() const {
  return prefix_count(num_states, horizon + 1);
}

std::size_t JointLaw::num_token_paths() const {
  return prefix_count(vocab_size, horizon);
}

int JointLaw::state_at(std::size_t state_path, int t) const {
  const std::size_t below = prefix_count(num_states, horizon - t);
  return static_cast<int>((state_path / below) % num_states);
}

Token JointLaw::token_at(std::size_t token_path, int t) const {
  const std::size_t below = prefix_count(vocab_size, horizon - t);
  return static_cast<Token>((token_path / below) % vocab_size);
}

std::size_t JointLaw::prefix_of(std::size_t token_path, int t) const {
  return token_path / prefix_count(vocab_size, horizon - t);
}

JointLaw enumerate_joint_law(const HmmModel& model, int horizon) {
  const int d = model.num_states();
  const int vocab = model.vocab_size();
  check_enumeration_size(d, vocab, horizon);
  JointLaw law;
  law.num_states = d;
  law.vocab_size = vocab;
  law.horizon = horizon;
  const std::size_t n_states = law.num_state_paths();
  const std::size_t n_tokens = law.num_token_paths();
  law.mass.assign(n_states * n_tokens, 0.0);

  const Matrix& a = model.transition();
  const Matrix& c = model.emission();
  std::vector<int> xs(horizon + 1);
  std::vector<Token> zs(horizon + 1);
  for (std::size_t k = 0; k < n_tokens; ++k) {
    for (int t = 1; t <= horizon; ++t) zs[t] = law.token_at(k, t);
    for (std::size_t s = 0; s < n_states; ++s) {
      for (int t = 0; t <= horizon; ++t) xs[t] = law.state_at(s, t);
      double w = model.prior()[xs[0]];
      for (int t = 0; t < horizon && w != 0.0; ++t) {
        w *= a(xs[t], xs[t + 1]) * c(xs[t], zs[t + 1]);
      }
      law.mass[k * n_states + s] = w;
    }
  }
  return law;
}

Vector ExactPosterior::posterior(int t, std::size_t prefix) const {
  const double total = prefix_mass(t, prefix);
  if (!(total > 0.0)) {
    throw Error(ErrorCode::ZeroProbabilityPrefix, "prefix has zero probability",
                static_cast<std::size_t>(t));
  }
  return joint[t].row(prefix).transpose() / total;
}

ExactPosterior exact_posterior_table(const JointLaw& law) {
  ExactPosterior out;
  out.vocab_size = law.vocab_size;
  out.horizon = law.horizon;
  for (int t = 0; t <= law.horizon; ++t) {
    out.joint.push_back(
        Matrix::Zero(prefix_count(law.vocab_size, t), law.num_states));
  }
  const std::size_t n_states = law.num_state_paths();
  for (std::size_t k = 0; k < law.num_token_paths(); ++k) {
    for (std::size_t s = 0; s < n_states; ++s) {
      const double w = law.at(k, s);
      if (w == 0.0) continue;
      for (int t = 0; t <= law.horizon; ++t) {
        out.joint[t](law.prefix_of(k, t), law.state_at(s, t)) += w;
      }
    }
  }
  return out;
}

PosteriorTrajectory exact_posterior(const HmmModel& model,
                                    std::span<const Token> tokens) {
  model.check_tokens(tokens);
  const int horizon = static_cast<int>(tokens.size());
  const ExactPosterior table =
      exact_posterior_table(enumerate_joint_law(model, horizon));
  PosteriorTrajectory out;
  out.measures.resize(horizon + 1, model.num_states());
  std::size_t prefix = 0;
  for (int t = 0; t <= horizon; ++t) {
    if (t > 0) prefix = prefix * model.vocab_size() + tokens[t - 1];
    out.measures.row(t) = table.posterior(t, prefix).transpose();
  }
  return out;
}

TerminalTable TerminalTable::deterministic(const Vector& f, int vocab,
                                           int horizon) {
  TerminalTable out;
  out.vocab_size = vocab;
  out.horizon = horizon;
  out.values = f.transpose().replicate(prefix_count(vocab, horizon), 1);
  return out;
}

TerminalTable TerminalTable::emission_column(const HmmModel& model, Token z,
                                             int horizon) {
  model.check_token(z);
  return deterministic(model.emission().col(z), model.vocab_size(), horizon);
}

double exact_mmse(const HmmModel& model, const TerminalTable& terminal) {
  const JointLaw law = enumerate_joint_law(model, terminal.horizon);
  if (terminal.vocab_size != law.vocab_size ||
      terminal.values.rows() != static_cast<Eigen::Index>(law.num_token_paths()) ||
      terminal.values.cols() != model.num_states()) {
    throw Error(ErrorCode::DimensionMismatch, "terminal table shape");
  }
  const ExactPosterior table = exact_posterior_table(law);
  const int horizon = law.horizon;
  double mmse = 0.0;
  for (std::size_t k = 0; k < law.num_token_paths(); ++k) {
    const double mass = table.prefix_mass(horizon, k);
    if (!(mass > 0.0)) continue;
    const Vector f = terminal.values.row(k).transpose();
    const double estimate = table.posterior(horizon, k).dot(f);
    for (std::size_t s = 0; s < law.num_state_paths(); ++s) {
      const double w = law.at(k, s);
      if (w == 0.0) continue;
      const double err = f[law.state_at(s, horizon)] - estimate;
      mmse += w * err * err;
    }
  }
  return mmse;
}

}  // namespace dualfilter
