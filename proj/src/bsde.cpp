#include "dualfilter/bsde.hpp"

#include <algorithm>
#include <cmath>

#include "dualfilter/dual_control.hpp"
#include "dualfilter/forward_filter.hpp"

namespace dualfilter {

AdaptedControl AdaptedControl::zeros(int vocab, int horizon) {
  AdaptedControl out;
  out.vocab_size = vocab;
  for (int t = 0; t < horizon; ++t) {
    out.values.push_back(Matrix::Zero(prefix_count(vocab, t), vocab - 1));
  }
  return out;
}

AdaptedControl AdaptedControl::random(int vocab, int horizon, double scale,
                                      Rng& rng) {
  std::uniform_real_distribution<double> unif(-scale, scale);
  AdaptedControl out = zeros(vocab, horizon);
  for (auto& table : out.values) {
    for (Eigen::Index i = 0; i < table.size(); ++i) table.data()[i] = unif(rng);
  }
  return out;
}

namespace {

void check_terminal(const HmmModel& model, const TerminalTable& terminal) {
  if (terminal.vocab_size != model.vocab_size() ||
      terminal.values.cols() != model.num_states() ||
      terminal.values.rows() !=
          static_cast<Eigen::Index>(prefix_count(terminal.vocab_size, terminal.horizon))) {
    throw Error(ErrorCode::DimensionMismatch, "terminal table shape");
  }
}

void check_controls(const HmmModel& model, const AdaptedControl& controls,
                    int horizon) {
  if (controls.vocab_size != model.vocab_size() || controls.horizon() != horizon) {
    throw Error(ErrorCode::DimensionMismatch, "control table shape");
  }
  for (int t = 0; t < horizon; ++t) {
    if (controls.values[t].rows() !=
            static_cast<Eigen::Index>(prefix_count(model.vocab_size(), t)) ||
        controls.values[t].cols() != model.m()) {
      throw Error(ErrorCode::DimensionMismatch, "control table shape at t");
    }
  }
}

struct StepParts {
  Vector pre_control;  // g(x): mean part of z -> (A Y_{t+1})(x; z)
  Matrix v;            // m x d
};

// Decomposes z -> (A Y_{t+1})(x) for every x, given the children rows of one
// prefix (vocab x d).
StepParts split_children(const Matrix& a, const Eigen::Ref<const Matrix>& children) {
  const Matrix ay = a * children.transpose();  // d x vocab
  StepParts out;
  const auto d = ay.rows();
  const auto m = ay.cols() - 1;
  out.pre_control.resize(d);
  out.v.resize(m, d);
  for (Eigen::Index x = 0; x < d; ++x) {
    const Decomposition parts = decompose(ay.row(x).transpose());
    out.pre_control[x] = parts.mean;
    out.v.col(x) = parts.tilde;
  }
  return out;
}

Vector closed_loop(const StepParts& parts, const Vector& u,
                   const MomentOperators& moments) {
  Vector y = parts.pre_control;
  for (Eigen::Index x = 0; x < y.size(); ++x) {
    y[x] += moments.c.col(x).dot(u + parts.v.col(x));
  }
  return y;
}

// Backward sweep; `choose` returns U_t for (t, prefix, parts).
template <typename Choose>
BsdeSolution sweep(const HmmModel& model, const MomentOperators& moments,
                   const TerminalTable& terminal, Choose&& choose) {
  const int horizon = terminal.horizon;
  const int vocab = model.vocab_size();
  BsdeSolution sol;
  sol.y.resize(horizon + 1);
  sol.v.resize(horizon);
  sol.y[horizon] = terminal.values;
  for (int t = horizon - 1; t >= 0; --t) {
    const std::size_t n = prefix_count(vocab, t);
    sol.y[t].resize(n, model.num_states());
    sol.v[t].resize(n);
    for (std::size_t p = 0; p < n; ++p) {
      StepParts parts = split_children(
          model.transition(), sol.y[t + 1].middleRows(p * vocab, vocab));
      const Vector u = choose(t, p, parts);
      sol.y[t].row(p) = closed_loop(parts, u, moments).transpose();
      sol.v[t][p] = std::move(parts.v);
    }
  }
  return sol;
}

}  // namespace

BsdeSolution bsde_solve(const HmmModel& model, const AdaptedControl& controls,
                        const TerminalTable& terminal) {
  check_enumeration_size(model.num_states(), model.vocab_size(), terminal.horizon);
  check_terminal(model, terminal);
  check_controls(model, controls, terminal.horizon);
  const MomentOperators moments = build_moments(model);
  return sweep(model, moments, terminal,
               [&](int t, std::size_t p, const StepParts&) {
                 return controls.at(t, p);
               });
}

double bsde_residual(const HmmModel& model, const AdaptedControl& controls,
                     const BsdeSolution& solution) {
  const MomentOperators moments = build_moments(model);
  const int vocab = model.vocab_size();
  const int horizon = static_cast<int>(solution.v.size());
  double worst = 0.0;
  for (int t = 0; t < horizon; ++t) {
    for (std::size_t p = 0; p < solution.v[t].size(); ++p) {
      const Vector u = controls.at(t, p);
      const Matrix& v = solution.v[t][p];
      for (Token z = 0; z < vocab; ++z) {
        const Vector ay = model.transition() *
                          solution.y[t + 1].row(p * vocab + z).transpose();
        for (int x = 0; x < model.num_states(); ++x) {
          const double rhs = ay[x] + moments.c.col(x).dot(u + v.col(x)) -
                             dot_encoded(v.col(x), z);
          worst = std::max(worst, std::abs(solution.y[t](p, x) - rhs));
        }
      }
    }
  }
  return worst;
}

PosteriorTrie posterior_trie(const HmmModel& model, int horizon) {
  const int vocab = model.vocab_size();
  const int d = model.num_states();
  PosteriorTrie trie;
  trie.vocab_size = vocab;
  trie.pi.push_back(model.prior().transpose());
  trie.mass.push_back({1.0});
  trie.reachable.push_back({1});
  for (int t = 1; t <= horizon; ++t) {
    const std::size_t n = prefix_count(vocab, t);
    Matrix pi = Matrix::Zero(n, d);
    std::vector<double> mass(n, 0.0);
    std::vector<std::uint8_t> reachable(n, 0);
    for (std::size_t parent = 0; parent < n / vocab; ++parent) {
      if (!trie.reachable[t - 1][parent]) continue;
      const Measure prior(trie.pi[t - 1].row(parent).transpose());
      const Vector p = predict(prior, model);
      for (Token z = 0; z < vocab; ++z) {
        const std::size_t child = parent * vocab + z;
        try {
          pi.row(child) = forward_step(prior, model, z).weights().transpose();
        } catch (const Error& e) {
          if (e.code() != ErrorCode::ImpossibleObservation) throw;
          continue;
        }
        mass[child] = trie.mass[t - 1][parent] * p[z];
        reachable[child] = 1;
      }
    }
    trie.pi.push_back(std::move(pi));
    trie.mass.push_back(std::move(mass));
    trie.reachable.push_back(std::move(reachable));
  }
  return trie;
}

namespace {

// Per-path estimator S_T for every token path.
Vector estimator_values(const JointLaw& law, const AdaptedControl& controls,
                        double c0) {
  Vector s(law.num_token_paths());
  for (std::size_t k = 0; k < law.num_token_paths(); ++k) {
    double value = c0;
    for (int t = 1; t <= law.horizon; ++t) {
      value -= dot_encoded(controls.at(t - 1, law.prefix_of(k, t - 1)),
                           law.token_at(k, t));
    }
    s[k] = value;
  }
  return s;
}

double path_mse(const JointLaw& law, const TerminalTable& terminal,
                const Vector& estimator) {
  double mse = 0.0;
  for (std::size_t k = 0; k < law.num_token_paths(); ++k) {
    for (std::size_t s = 0; s < law.num_state_paths(); ++s) {
      const double w = law.at(k, s);
      if (w == 0.0) continue;
      const double err =
          terminal.values(k, law.state_at(s, law.horizon)) - estimator[k];
      mse += w * err * err;
    }
  }
  return mse;
}

}  // namespace

CostBreakdown cost_J(const HmmModel& model, const AdaptedControl& controls,
                     const TerminalTable& terminal) {
  const BsdeSolution sol = bsde_solve(model, controls, terminal);
  const JointLaw law = enumerate_joint_law(model, terminal.horizon);
  const MomentOperators moments = build_moments(model);
  const int horizon = terminal.horizon;
  const int d = model.num_states();
  const Vector& mu = model.prior();

  CostBreakdown out;
  const Vector y0 = sol.y[0].row(0).transpose();
  const double mean_y0 = mu.dot(y0);
  out.initial_variance = mu.dot(y0.cwiseAbs2()) - mean_y0 * mean_y0;

  // gamma[t+1](prefix_{t+1}, x) = (Gamma Y_{t+1})(x)
  // quad[t](prefix_t, x) = (U_t + V_t(x))^T R(x) (U_t + V_t(x))
  std::vector<Matrix> gamma(horizon + 1);
  std::vector<Matrix> quad(horizon);
  for (int t = 1; t <= horizon; ++t) {
    gamma[t].resize(sol.y[t].rows(), d);
    for (Eigen::Index p = 0; p < sol.y[t].rows(); ++p) {
      gamma[t].row(p) =
          gamma_apply(model.transition(), sol.y[t].row(p).transpose()).transpose();
    }
  }
  for (int t = 0; t < horizon; ++t) {
    quad[t].resize(sol.y[t].rows(), d);
    for (Eigen::Index p = 0; p < sol.y[t].rows(); ++p) {
      const Vector u = controls.at(t, p);
      for (int x = 0; x < d; ++x) {
        const Vector w = u + sol.v[t][p].col(x);
        quad[t](p, x) = w.dot(moments.r[x] * w);
      }
    }
  }

  for (std::size_t k = 0; k < law.num_token_paths(); ++k) {
    for (std::size_t s = 0; s < law.num_state_paths(); ++s) {
      const double w = law.at(k, s);
      if (w == 0.0) continue;
      double path_cost = 0.0;
      for (int t = 0; t < horizon; ++t) {
        const int x = law.state_at(s, t);
        path_cost += gamma[t + 1](law.prefix_of(k, t + 1), x) +
                     quad[t](law.prefix_of(k, t), x);
      }
      out.running += w * path_cost;
    }
  }
  out.total = out.initial_variance + out.running;
  out.mse = path_mse(law, terminal, estimator_values(law, controls, mean_y0));

  // MMSE against the filter posterior at time T.
  const PosteriorTrie trie = posterior_trie(model, horizon);
  for (std::size_t k = 0; k < law.num_token_paths(); ++k) {
    if (!trie.reachable[horizon][k]) continue;
    const Vector f = terminal.values.row(k).transpose();
    const double estimate = trie.pi[horizon].row(k).dot(f);
    for (std::size_t s = 0; s < law.num_state_paths(); ++s) {
      const double w = law.at(k, s);
      if (w == 0.0) continue;
      const double err = f[law.state_at(s, horizon)] - estimate;
      out.mmse += w * err * err;
    }
  }
  return out;
}

double estimator_mse(const HmmModel& model, const AdaptedControl& controls,
                     const TerminalTable& terminal, double c0) {
  check_terminal(model, terminal);
  check_controls(model, controls, terminal.horizon);
  const JointLaw law = enumerate_joint_law(model, terminal.horizon);
  return path_mse(law, terminal, estimator_values(law, controls, c0));
}

OptimalSolution solve_optimal(const HmmModel& model,
                              const TerminalTable& terminal) {
  check_enumeration_size(model.num_states(), model.vocab_size(), terminal.horizon);
  check_terminal(model, terminal);
  const MomentOperators moments = build_moments(model);
  OptimalSolution out;
  out.posterior = posterior_trie(model, terminal.horizon);
  out.controls = AdaptedControl::zeros(model.vocab_size(), terminal.horizon);
  out.solution = sweep(
      model, moments, terminal,
      [&](int t, std::size_t p, const StepParts& parts) -> Vector {
        if (!out.posterior.reachable[t][p]) {
          ++out.skipped_prefixes;
          return Vector::Zero(model.m());
        }
        const Vector u =
            phi_general(parts.pre_control, parts.v,
                        out.posterior.pi[t].row(p).transpose(), moments);
        out.controls.values[t].row(p) = u.transpose();
        return u;
      });
  return out;
}

double control_excess(const HmmModel& model, const AdaptedControl& controls,
                      const TerminalTable& terminal) {
  check_enumeration_size(model.num_states(), model.vocab_size(), terminal.horizon);
  check_terminal(model, terminal);
  check_controls(model, controls, terminal.horizon);
  const MomentOperators moments = build_moments(model);
  const PosteriorTrie trie = posterior_trie(model, terminal.horizon);
  double excess = 0.0;
  sweep(model, moments, terminal,
        [&](int t, std::size_t p, const StepParts& parts) -> Vector {
          const Vector u = controls.at(t, p);
          if (!trie.reachable[t][p]) return u;
          const Vector rho = trie.pi[t].row(p).transpose();
          const Vector feedback =
              phi_general(parts.pre_control, parts.v, rho, moments);
          const Vector q = model.emission().transpose() * rho;
          excess += trie.mass[t][p] * variance_bracket(u - feedback, q);
          return u;
        });
  return excess;
}

RepresentationReport representation_check(const HmmModel& model,
                                          const TerminalTable& terminal) {
  const OptimalSolution opt = solve_optimal(model, terminal);
  const int vocab = model.vocab_size();
  RepresentationReport report;
  const double base = model.prior().dot(opt.solution.y[0].row(0).transpose());
  // partial[t][prefix] = mu(Y_0) - sum_{s<=t} U_{s-1}^T e(z_s)
  std::vector<double> partial{base};
  for (int t = 1; t <= terminal.horizon; ++t) {
    std::vector<double> next(prefix_count(vocab, t));
    for (std::size_t p = 0; p < next.size(); ++p) {
      const std::size_t parent = p / vocab;
      const Token z = static_cast<Token>(p % vocab);
      next[p] = partial[parent] - dot_encoded(opt.controls.at(t - 1, parent), z);
      if (!opt.posterior.reachable[t][p] || !(opt.posterior.mass[t][p] > 0.0)) {
        ++report.skipped_prefixes;
        continue;
      }
      const double lhs =
          opt.posterior.pi[t].row(p).dot(opt.solution.y[t].row(p));
      report.max_deviation = std::max(report.max_deviation, std::abs(lhs - next[p]));
      ++report.checked_prefixes;
    }
    partial = std::move(next);
  }
  return report;
}

}  // namespace dualfilter
