#pragma once

// Experiment harness: random models on a homotopy between a circulant
// permutation and a random stochastic transition matrix, sampled token paths,
// forward-filter reference and dual-filter predictions, control traces.
// No file I/O happens here; see the CLI for report writing.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dualfilter/dual_filter.hpp"

namespace dualfilter {

enum class FilterMode { single_shot, iterative };

const char* to_string(FilterMode mode);
FilterMode parse_mode(const std::string& text);

struct ExperimentConfig {
  std::string name = "custom";
  int d = 8;
  int m = 3;
  int horizon = 16;
  std::vector<double> alphas{1.0};
  // When set, the single alpha is chosen so that |lambda2(A)| hits this value.
  std::optional<double> lambda2_target;
  double transition_temperature = 1.0;
  double emission_temperature = 1.0;
  std::uint64_t model_seed = 0;
  std::vector<std::uint64_t> seeds{0};
  FilterMode mode = FilterMode::single_shot;
  int layers = 6;
  int topk = 10;
  // Times t in 1..T with top-k tables; empty means {1, T/2, T}.
  std::vector<int> selected_times;
  Execution execution = Execution::parallel;
};

// "nanogpt-char": d=384, m=65, T=256, alpha=1, 6 layers, emission
//                 temperature 0.25.
// "lambda2-0.3":  same model family, alpha tuned to |lambda2| = 0.3,
//                 ten path seeds.
ExperimentConfig preset(const std::string& name);
std::vector<std::string> preset_names();

// Throws InvalidArgument / AlphaOutOfRange.
void validate(const ExperimentConfig& config);

// Effective list of selected times.
std::vector<int> selected_times(const ExperimentConfig& config);

struct TopKRow {
  int t = 0;
  int rank = 0;
  Token reference_token = 0;
  double reference_prob = 0.0;
  Token dual_token = 0;
  double dual_prob = 0.0;
};

struct PathResult {
  std::uint64_t seed = 0;
  TokenSequence tokens;
  PredictionSequence reference;  // T+1 rows, p_0 .. p_T
  PredictionSequence dual;       // T rows, p_1 .. p_T
  Matrix errors;                 // one row per layer (L+1 iterative, 1 single-shot)
  Matrix controls;               // T x d, row t is u_t
  Vector control_max_abs;        // length T
  Vector control_norm;           // length T
  std::vector<TopKRow> topk;
  int projection_clips = 0;
  int projection_fallbacks = 0;
};

struct Envelope {
  Vector min;
  Vector max;
  Matrix traces;  // one row per seed
};

// Per-time min and max across the rows of traces (at least two rows).
Envelope control_envelope(const Matrix& traces);

struct AlphaRun {
  double alpha = 1.0;
  double lambda2 = 0.0;
  std::vector<PathResult> paths;
  std::optional<Envelope> envelope;  // present with two or more seeds
};

struct ExperimentReport {
  ExperimentConfig config;
  std::vector<AlphaRun> runs;
};

// The random model for one alpha: uniform prior, homotopy transition,
// random emission, both random matrices drawn from model_seed.
HmmModel experiment_model(const ExperimentConfig& config, double alpha);

// Random stochastic part of the transition matrix for config.model_seed.
Matrix experiment_stochastic_part(const ExperimentConfig& config);

PathResult run_path(const ExperimentConfig& config, const HmmModel& model,
                    std::uint64_t seed);

ExperimentReport run_experiment(const ExperimentConfig& config);

struct SpectrumRow {
  double alpha = 0.0;
  double lambda2 = 0.0;
};

std::vector<SpectrumRow> spectrum_sweep(const Matrix& a_stoch,
                                        const std::vector<double>& alphas);

}  // namespace dualfilter
