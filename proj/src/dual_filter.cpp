#include "dualfilter/dual_filter.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include <omp.h>

#include <Eigen/LU>
#include <Eigen/QR>

#include "dualfilter/dual_control.hpp"
#include "dualfilter/token_geometry.hpp"

namespace dualfilter {

InitResult init_rho(const HmmModel& model, std::span<const Token> tokens) {
  model.check_tokens(tokens);
  const int horizon = static_cast<int>(tokens.size());
  const int d = model.num_states();
  InitResult out;
  out.state.measures.resize(horizon + 1, d);
  out.state.measures.row(0) = model.prior().transpose();
  for (int t = 1; t <= horizon; ++t) {
    const auto column = model.emission().col(tokens[t - 1]);
    const double total = column.sum();
    if (total > kProjectionFloor) {
      out.state.measures.row(t) = column.transpose() / total;
    } else {
      out.state.measures.row(t).setConstant(1.0 / d);
      ++out.degenerate_columns;
    }
  }
  return out;
}

Projection project_normalize(const SignedMeasure& sigma) {
  Projection out;
  out.measure = sigma.cwiseMax(0.0);
  out.clipped = (sigma.array() < 0.0).any();
  const double total = out.measure.sum();
  if (!(total > kProjectionFloor) || !std::isfinite(total)) {
    out.measure.setConstant(1.0 / static_cast<double>(sigma.size()));
    out.fallback = true;
    return out;
  }
  out.measure /= total;
  return out;
}

namespace {

std::vector<Vector> reduced_observations(const HmmModel& model,
                                         std::span<const Token> tokens) {
  std::vector<Vector> c;
  c.reserve(tokens.size());
  for (Token z : tokens) c.push_back(binary_reduce(model, z));
  return c;
}

// Backward recursion on a block of dual-function columns:
//   g = A f,  u = w_t^T g,  f <- g + c_t u,  for t = horizon .. 1.
// weights[t-1] and reduced[t-1] belong to time t.  After each step
// `store(t - 1, f)` receives y_{t-1}; controls row t-1 receives u_{t-1}.
template <typename Store>
void backward_columns(const Matrix& a, std::span<const Vector> reduced,
                      std::span<const Vector> weights, int horizon,
                      Eigen::Ref<Matrix> f, Eigen::Ref<Matrix> controls,
                      Store&& store) {
  Matrix g(f.rows(), f.cols());
  for (int t = horizon; t >= 1; --t) {
    g.noalias() = a * f;
    const RowVector u = weights[t - 1].transpose() * g;
    f = g;
    f.noalias() += reduced[t - 1] * u;
    controls.row(t - 1) = u;
    store(t - 1, f);
  }
}

// Column ranges for the parallel kernels: one contiguous block per thread.
std::vector<std::pair<int, int>> column_blocks(int d, Execution execution) {
  const int threads = execution == Execution::parallel ? omp_get_max_threads() : 1;
  const int blocks = std::max(1, std::min(threads, d));
  std::vector<std::pair<int, int>> out;
  const int base = d / blocks;
  const int extra = d % blocks;
  int start = 0;
  for (int b = 0; b < blocks; ++b) {
    const int width = base + (b < extra ? 1 : 0);
    out.emplace_back(start, width);
    start += width;
  }
  return out;
}

struct Recovered {
  Vector measure;
  bool least_squares = false;
};

// Solves rho y = s for the row vector rho.
Recovered recover(const Matrix& y, const RowVector& s, std::size_t t) {
  Recovered out;
  const Matrix yt = y.transpose();
  Eigen::PartialPivLU<Matrix> lu(yt);
  if (lu.rcond() >= kRecoveryRcond) {
    out.measure = lu.solve(s.transpose());
  } else {
    out.least_squares = true;
    out.measure = Eigen::CompleteOrthogonalDecomposition<Matrix>(yt).solve(
        s.transpose());
  }
  if (!out.measure.allFinite()) {
    throw Error(ErrorCode::SolveFailure,
                "recovery solve produced non-finite values (rcond " +
                    std::to_string(lu.rcond()) + ")",
                t);
  }
  return out;
}

}  // namespace

LayerMapResult layer_map(const HmmModel& model, std::span<const Token> tokens,
                         const LayerState& rho, const LayerMapOptions& options) {
  model.check_tokens(tokens);
  const int horizon = static_cast<int>(tokens.size());
  const int d = model.num_states();
  if (rho.horizon() != horizon || rho.num_states() != d) {
    throw Error(ErrorCode::DimensionMismatch, "layer state shape != (T+1) x d");
  }

  const std::vector<Vector> reduced = reduced_observations(model, tokens);
  std::vector<Vector> weights;
  weights.reserve(horizon);
  for (int t = 1; t <= horizon; ++t) {
    weights.push_back(
        binary_control_weights(rho.measures.row(t - 1).transpose(), reduced[t - 1]));
  }

  LayerMapResult out;
  DualPass& pass = out.pass;
  pass.dual_functions.assign(horizon + 1, Matrix());
  pass.dual_functions[horizon] = Matrix::Identity(d, d);
  for (int t = 0; t < horizon; ++t) pass.dual_functions[t].resize(d, d);
  pass.controls.resize(horizon, d);

  const auto blocks = column_blocks(d, options.execution);
#pragma omp parallel for schedule(static) if (blocks.size() > 1)
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    const auto [start, width] = blocks[b];
    Matrix f = Matrix::Identity(d, d).middleCols(start, width);
    Matrix controls(horizon, width);
    backward_columns(model.transition(), reduced, weights, horizon, f, controls,
                     [&](int t, const Matrix& y) {
                       pass.dual_functions[t].middleCols(start, width) = y;
                     });
    pass.controls.middleCols(start, width) = controls;
  }

  // s_t = rho_0 y_0 - sum_{s<t} u_s
  pass.partial_sums.resize(horizon, d);
  RowVector s = rho.measures.row(0) * pass.dual_functions[0];
  for (int t = 1; t <= horizon; ++t) {
    s -= pass.controls.row(t - 1);
    pass.partial_sums.row(t - 1) = s;
  }

  out.rho_plus.measures.resize(horizon + 1, d);
  out.rho_plus.measures.row(0) = rho.measures.row(0);
  int least_squares = 0;
  int clips = 0;
  int fallbacks = 0;
  if (options.recovery == Recovery::recurrence) {
    RowVector q = rho.measures.row(0);
    for (int t = 1; t <= horizon; ++t) {
      const double qc = q.dot(reduced[t - 1]);
      q = (q + (qc - 1.0) * weights[t - 1].transpose()) * model.transition();
      if (!q.allFinite()) {
        throw Error(ErrorCode::SolveFailure, "recovery recurrence diverged",
                    static_cast<std::size_t>(t));
      }
      const Projection proj = project_normalize(q.transpose());
      out.rho_plus.measures.row(t) = proj.measure.transpose();
      clips += proj.clipped ? 1 : 0;
      fallbacks += proj.fallback ? 1 : 0;
    }
    out.projection_clips = clips;
    out.projection_fallbacks = fallbacks;
    if (!options.keep_dual_functions) pass.dual_functions.clear();
    return out;
  }
  const bool parallel = options.execution == Execution::parallel;
#pragma omp parallel for schedule(dynamic) reduction(+ : least_squares, clips, fallbacks) if (parallel)
  for (int t = 1; t <= horizon; ++t) {
    const Recovered rec = recover(pass.dual_functions[t], pass.partial_sums.row(t - 1),
                                 static_cast<std::size_t>(t));
    const Projection proj = project_normalize(rec.measure);
    out.rho_plus.measures.row(t) = proj.measure.transpose();
    least_squares += rec.least_squares ? 1 : 0;
    clips += proj.clipped ? 1 : 0;
    fallbacks += proj.fallback ? 1 : 0;
  }
  out.least_squares_solves = least_squares;
  out.projection_clips = clips;
  out.projection_fallbacks = fallbacks;
  if (!options.keep_dual_functions) pass.dual_functions.clear();
  return out;
}

FunctionPass layer_map_apply(const HmmModel& model, std::span<const Token> tokens,
                             const LayerState& rho, const Vector& f) {
  model.check_tokens(tokens);
  const int horizon = static_cast<int>(tokens.size());
  const int d = model.num_states();
  if (rho.horizon() != horizon || rho.num_states() != d || f.size() != d) {
    throw Error(ErrorCode::DimensionMismatch, "layer state or f has wrong shape");
  }
  FunctionPass out;
  out.dual_functions.resize(horizon + 1, d);
  out.controls.resize(horizon);
  Vector y = f;
  out.dual_functions.row(horizon) = y.transpose();
  for (int t = horizon; t >= 1; --t) {
    const Vector c = binary_reduce(model, tokens[t - 1]);
    const Vector g = model.transition() * y;
    const double u = optimal_control_binary(rho.measures.row(t - 1).transpose(), g,
                                            Vector::Zero(d), c);
    y = g + c * u;
    out.controls[t - 1] = u;
    out.dual_functions.row(t - 1) = y.transpose();
  }
  out.estimate = rho.measures.row(0).dot(y) - out.controls.sum();
  return out;
}

PredictionSequence predict_all(const LayerState& rho, const HmmModel& model) {
  const int horizon = rho.horizon();
  return PredictionSequence{rho.measures.bottomRows(horizon) * model.emission()};
}

double error_metric(const Vector& p_prime, const Vector& p) {
  if (p_prime.size() != p.size()) {
    throw Error(ErrorCode::LengthMismatch, "prediction vectors differ in length");
  }
  if (p.size() == 0) return 0.0;
  return (p_prime - p).cwiseAbs().maxCoeff();
}

Vector error_trace(const PredictionSequence& dual,
                   const PredictionSequence& reference) {
  const auto horizon = dual.rows.rows();
  const auto offset = reference.rows.rows() - horizon;
  if (offset != 0 && offset != 1) {
    throw Error(ErrorCode::LengthMismatch, "reference has wrong number of rows");
  }
  Vector out(horizon);
  for (Eigen::Index t = 0; t < horizon; ++t) {
    out[t] = error_metric(dual.rows.row(t).transpose(),
                          reference.rows.row(t + offset).transpose());
  }
  return out;
}

namespace {

LayerDiagnostics diagnose(const LayerState& state, const HmmModel& model,
                          const PredictionSequence* reference) {
  LayerDiagnostics diag;
  if (reference != nullptr) {
    diag.errors = error_trace(predict_all(state, model), *reference);
  }
  diag.control_max_abs = Vector::Zero(state.horizon());
  return diag;
}

}  // namespace

IterateResult iterate(const HmmModel& model, std::span<const Token> tokens,
                      int layers, const std::optional<LayerState>& rho0,
                      const PredictionSequence* reference, Execution execution,
                      Recovery recovery) {
  if (layers < 1) throw Error(ErrorCode::InvalidArgument, "layers must be >= 1");
  IterateResult out;
  out.final_state = rho0 ? *rho0 : init_rho(model, tokens).state;
  out.layers.push_back(diagnose(out.final_state, model, reference));
  LayerMapOptions options;
  options.execution = execution;
  options.recovery = recovery;
  options.keep_dual_functions = false;
  for (int layer = 1; layer <= layers; ++layer) {
    LayerMapResult result;
    try {
      result = layer_map(model, tokens, out.final_state, options);
    } catch (const Error& e) {
      throw Error(e.code(), std::string(e.what()) + " in layer " + std::to_string(layer),
                  e.time_index());
    }
    out.final_state = std::move(result.rho_plus);
    LayerDiagnostics diag = diagnose(out.final_state, model, reference);
    diag.control_max_abs = control_trace(result.pass.controls, ControlReduction::max_abs).values;
    diag.least_squares_solves = result.least_squares_solves;
    diag.projection_clips = result.projection_clips;
    diag.projection_fallbacks = result.projection_fallbacks;
    out.layers.push_back(std::move(diag));
    out.last_pass = std::move(result.pass);
  }
  return out;
}

SingleShotResult single_shot(const HmmModel& model, std::span<const Token> tokens,
                             const SingleShotOptions& options) {
  model.check_tokens(tokens);
  const int horizon = static_cast<int>(tokens.size());
  const int d = model.num_states();
  const std::vector<Vector> reduced = reduced_observations(model, tokens);
  const auto blocks = column_blocks(d, options.execution);

  SingleShotResult out;
  out.state.measures.resize(horizon + 1, d);
  out.state.measures.row(0) = model.prior().transpose();
  std::vector<Vector> weights;
  weights.reserve(horizon);

  for (int t = 1; t <= horizon; ++t) {
    // The control at time t-1 uses the measure recovered by the previous pass.
    weights.push_back(
        binary_control_weights(out.state.measures.row(t - 1).transpose(), reduced[t - 1]));
    RowVector s(d);
    Matrix controls(t, d);
#pragma omp parallel for schedule(static) if (blocks.size() > 1)
    for (std::size_t b = 0; b < blocks.size(); ++b) {
      const auto [start, width] = blocks[b];
      Matrix f = Matrix::Identity(d, d).middleCols(start, width);
      Matrix block_controls(t, width);
      backward_columns(model.transition(), reduced, weights, t, f, block_controls,
                       [](int, const Matrix&) {});
      controls.middleCols(start, width) = block_controls;
      s.segment(start, width) =
          model.prior().transpose() * f - block_controls.colwise().sum();
    }
    const Projection proj = project_normalize(s.transpose());
    out.state.measures.row(t) = proj.measure.transpose();
    out.projection_clips += proj.clipped ? 1 : 0;
    out.projection_fallbacks += proj.fallback ? 1 : 0;
    if (options.keep_all_controls) out.all_controls.push_back(controls);
    if (t == horizon) out.final_controls = std::move(controls);
  }
  if (horizon == 0) out.final_controls.resize(0, d);
  return out;
}

ControlTrace control_trace(const Matrix& controls, ControlReduction reduction) {
  ControlTrace out;
  out.rows = controls;
  out.values.resize(controls.rows());
  for (Eigen::Index t = 0; t < controls.rows(); ++t) {
    out.values[t] = reduction == ControlReduction::norm
                        ? controls.row(t).norm()
                        : (controls.cols() > 0 ? controls.row(t).cwiseAbs().maxCoeff() : 0.0);
  }
  return out;
}

std::vector<std::pair<Token, double>> top_k(const Vector& p, int k) {
  std::vector<Token> order(p.size());
  std::iota(order.begin(), order.end(), 0);
  const auto keep = std::min<std::size_t>(std::max(k, 0), order.size());
  std::partial_sort(order.begin(), order.begin() + keep, order.end(),
                    [&](Token a, Token b) {
                      if (p[a] != p[b]) return p[a] > p[b];
                      return a < b;
                    });
  std::vector<std::pair<Token, double>> out;
  out.reserve(keep);
  for (std::size_t i = 0; i < keep; ++i) out.emplace_back(order[i], p[order[i]]);
  return out;
}

}  // namespace dualfilter
