#pragma once

// Dual filter: the layer map on trajectories of measures defined by a
// deterministic backward difference equation, its iterative and single-shot
// solvers, projection onto the simplex, prediction and diagnostics.
//
// Each observation z_t is reduced to the binary event "Z_t = z_t" with
// c_t = 2 C(:, z_t) - 1.  Dual functions are carried as d x d matrices whose
// column x has terminal condition 1{state = x}, so one backward pass yields
// every coordinate of the recovered measure.
//
// Kernels come in two flavours: Execution::serial is the reference loop and
// Execution::parallel splits the columns of the dual functions (and the
// independent recovery solves) across OpenMP threads.  Both produce the same
// numbers up to floating-point reassociation.

#include <cstddef>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "dualfilter/forward_filter.hpp"
#include "dualfilter/hmm.hpp"

namespace dualfilter {

enum class Execution { serial, parallel };

// Clipped mass at or below this value falls back to the uniform measure.
inline constexpr double kProjectionFloor = 1e-300;
// Reciprocal condition estimate below which recovery switches to
// minimum-norm least squares.
inline constexpr double kRecoveryRcond = 1e-12;

// rho_0 .. rho_T, one measure per row; rho_0 is the prior.
struct LayerState {
  Matrix measures;

  int horizon() const { return static_cast<int>(measures.rows()) - 1; }
  int num_states() const { return static_cast<int>(measures.cols()); }
};

struct InitResult {
  LayerState state;
  int degenerate_columns = 0;  // C(:, z_t) with no mass; uniform used instead
};

// rho_0 = mu, rho_t = C(:, z_t) / sum_x C(x, z_t).
InitResult init_rho(const HmmModel& model, std::span<const Token> tokens);

struct Projection {
  Vector measure;
  bool clipped = false;   // some entry was negative
  bool fallback = false;  // nothing positive left; uniform returned
};

// max(sigma, 0) normalized to unit mass.
Projection project_normalize(const SignedMeasure& sigma);

struct DualPass {
  // y[t] for t = 0..T (y[T] = I); empty when not retained.
  std::vector<Matrix> dual_functions;
  // Row t is u_t (length d), t = 0..T-1.
  Matrix controls;
  // Row t-1 is s_t = rho_0 y_0 - sum_{s<t} u_s, t = 1..T.
  Matrix partial_sums;
};

// How rho_t^+ is recovered from s_t = rho_t^+ y_t.
//   recurrence: s_t = q_t y_t holds for the row vectors
//               q_0 = rho_0,  q_t = (q_{t-1} + (q_{t-1} c_t - 1) w_t^T) A,
//               so q_t is the solution whenever y_t is invertible.  Stable
//               even when y_t is numerically singular.
//   solve:      LU on y_t^T, minimum-norm least squares below kRecoveryRcond.
enum class Recovery { recurrence, solve };

struct LayerMapOptions {
  Execution execution = Execution::serial;
  Recovery recovery = Recovery::recurrence;
  bool keep_dual_functions = true;
};

struct LayerMapResult {
  LayerState rho_plus;
  DualPass pass;
  int least_squares_solves = 0;
  int projection_clips = 0;
  int projection_fallbacks = 0;
};

// One application of the layer map.  Uses rho_0 .. rho_{T-1}.
LayerMapResult layer_map(const HmmModel& model, std::span<const Token> tokens,
                         const LayerState& rho, const LayerMapOptions& options = {});

// Single-terminal-function variant of the backward pass (O(d^2 T)):
// estimate = rho_0(y_0) - sum_t u_t approximates pi_T(f).
struct FunctionPass {
  Matrix dual_functions;  // row t is y_t, t = 0..T
  Vector controls;        // u_0 .. u_{T-1}
  double estimate = 0.0;
};

FunctionPass layer_map_apply(const HmmModel& model, std::span<const Token> tokens,
                             const LayerState& rho, const Vector& f);

struct LayerDiagnostics {
  Vector errors;           // eps_t for t = 1..T (empty without reference)
  Vector control_max_abs;  // max_x |u_{t-1}(x)| for t = 1..T
  int least_squares_solves = 0;
  int projection_clips = 0;
  int projection_fallbacks = 0;
};

struct IterateResult {
  LayerState final_state;
  // Entry 0 describes the initial state, entry l the output of layer l.
  std::vector<LayerDiagnostics> layers;
  DualPass last_pass;
};

IterateResult iterate(const HmmModel& model, std::span<const Token> tokens,
                      int layers, const std::optional<LayerState>& rho0 = {},
                      const PredictionSequence* reference = nullptr,
                      Execution execution = Execution::serial,
                      Recovery recovery = Recovery::recurrence);

struct SingleShotOptions {
  Execution execution = Execution::serial;
  // Keep the control rows of every pass, not only the last one.
  bool keep_all_controls = false;
};

struct SingleShotResult {
  LayerState state;
  // Controls of pass t = T: row tau-1 is u_{tau-1}.  These are the weights of
  // the representation of pi_T.
  Matrix final_controls;
  // Optional: all_controls[t-1] holds the t x d controls of pass t.
  std::vector<Matrix> all_controls;
  int projection_clips = 0;
  int projection_fallbacks = 0;
};

SingleShotResult single_shot(const HmmModel& model, std::span<const Token> tokens,
                             const SingleShotOptions& options = {});

// Rows p_1 .. p_T with p_t = rho_t C.
PredictionSequence predict_all(const LayerState& rho, const HmmModel& model);

// max_z |p'(z) - p(z)|
double error_metric(const Vector& p_prime, const Vector& p);

// eps_t between prediction rows 1..T of `dual` (T rows) and `reference`
// (T+1 rows including p_0, or T rows).
Vector error_trace(const PredictionSequence& dual,
                   const PredictionSequence& reference);

enum class ControlReduction { rows, max_abs, norm };

struct ControlTrace {
  Matrix rows;    // raw control rows, one per time
  Vector values;  // reduction per time (max_abs or norm; max_abs for rows)
};

ControlTrace control_trace(const Matrix& controls, ControlReduction reduction);

// Largest k entries of p, ties by lower token index.
std::vector<std::pair<Token, double>> top_k(const Vector& p, int k);

}  // namespace dualfilter
