#include "dualfilter/experiments.hpp"

#include <algorithm>
#include <cmath>

#include "dualfilter/forward_filter.hpp"

namespace dualfilter {

const char* to_string(FilterMode mode) {
  return mode == FilterMode::single_shot ? "single-shot" : "iterative";
}

FilterMode parse_mode(const std::string& text) {
  if (text == "single-shot") return FilterMode::single_shot;
  if (text == "iterative") return FilterMode::iterative;
  throw Error(ErrorCode::InvalidArgument, "unknown mode '" + text + "'");
}

ExperimentConfig preset(const std::string& name) {
  ExperimentConfig config;
  config.name = name;
  config.d = 384;
  config.m = 65;
  config.horizon = 256;
  config.layers = 6;
  config.emission_temperature = 0.25;
  if (name == "nanogpt-char") {
    config.alphas = {1.0};
    config.mode = FilterMode::iterative;
  } else if (name == "lambda2-0.3") {
    config.lambda2_target = 0.3;
    config.mode = FilterMode::single_shot;
    config.seeds.clear();
    for (std::uint64_t s = 0; s < 10; ++s) config.seeds.push_back(s);
  } else {
    throw Error(ErrorCode::InvalidArgument, "unknown preset '" + name + "'");
  }
  return config;
}

std::vector<std::string> preset_names() { return {"nanogpt-char", "lambda2-0.3"}; }

void validate(const ExperimentConfig& config) {
  if (config.d < 1 || config.m < 1 || config.horizon < 1) {
    throw Error(ErrorCode::InvalidArgument, "d, m and T must be >= 1");
  }
  if (!(config.transition_temperature > 0.0) || !(config.emission_temperature > 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "temperatures must be positive");
  }
  if (config.alphas.empty() && !config.lambda2_target) {
    throw Error(ErrorCode::InvalidArgument, "no alpha given");
  }
  for (double a : config.alphas) {
    if (!(a >= 0.0 && a <= 1.0)) {
      throw Error(ErrorCode::AlphaOutOfRange, "alpha must lie in [0, 1]");
    }
  }
  if (config.lambda2_target &&
      !(*config.lambda2_target >= 0.0 && *config.lambda2_target <= 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "lambda2 target must lie in [0, 1]");
  }
  if (config.seeds.empty()) throw Error(ErrorCode::InvalidArgument, "no seeds given");
  if (config.layers < 1) throw Error(ErrorCode::InvalidArgument, "layers must be >= 1");
  if (config.topk < 1) throw Error(ErrorCode::InvalidArgument, "topk must be >= 1");
  for (int t : config.selected_times) {
    if (t < 1 || t > config.horizon) {
      throw Error(ErrorCode::InvalidArgument, "selected time outside 1..T");
    }
  }
}

std::vector<int> selected_times(const ExperimentConfig& config) {
  if (!config.selected_times.empty()) return config.selected_times;
  std::vector<int> out{1, std::max(1, config.horizon / 2), config.horizon};
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

Envelope control_envelope(const Matrix& traces) {
  if (traces.rows() < 2) {
    throw Error(ErrorCode::InvalidArgument, "envelope needs at least two traces");
  }
  Envelope out;
  out.traces = traces;
  out.min = traces.colwise().minCoeff().transpose();
  out.max = traces.colwise().maxCoeff().transpose();
  return out;
}

Matrix experiment_stochastic_part(const ExperimentConfig& config) {
  Rng rng(config.model_seed);
  return random_stochastic_matrix(config.d, config.d, config.transition_temperature, rng);
}

HmmModel experiment_model(const ExperimentConfig& config, double alpha) {
  Rng rng(config.model_seed);
  const Matrix a_stoch =
      random_stochastic_matrix(config.d, config.d, config.transition_temperature, rng);
  const Matrix emission =
      random_stochastic_matrix(config.d, config.m + 1, config.emission_temperature, rng);
  ModelMeta meta;
  meta.seed = config.model_seed;
  meta.alpha = alpha;
  meta.temperature = config.emission_temperature;
  meta.transition_temperature = config.transition_temperature;
  return HmmModel(Vector::Constant(config.d, 1.0 / config.d),
                  homotopy_transition(alpha, a_stoch), emission, meta);
}

PathResult run_path(const ExperimentConfig& config, const HmmModel& model,
                    std::uint64_t seed) {
  PathResult out;
  out.seed = seed;
  out.tokens = sample_path(model, config.horizon, seed).tokens;
  out.reference = predict_trajectory(forward_filter(model, out.tokens), model);

  LayerState state;
  if (config.mode == FilterMode::single_shot) {
    SingleShotOptions options;
    options.execution = config.execution;
    SingleShotResult result = single_shot(model, out.tokens, options);
    state = std::move(result.state);
    out.controls = std::move(result.final_controls);
    out.projection_clips = result.projection_clips;
    out.projection_fallbacks = result.projection_fallbacks;
    out.dual = predict_all(state, model);
    out.errors = error_trace(out.dual, out.reference).transpose();
  } else {
    IterateResult result = iterate(model, out.tokens, config.layers, {}, &out.reference,
                                   config.execution);
    out.errors.resize(static_cast<Eigen::Index>(result.layers.size()), config.horizon);
    for (std::size_t l = 0; l < result.layers.size(); ++l) {
      out.errors.row(static_cast<Eigen::Index>(l)) = result.layers[l].errors.transpose();
      out.projection_clips += result.layers[l].projection_clips;
      out.projection_fallbacks += result.layers[l].projection_fallbacks;
    }
    state = std::move(result.final_state);
    out.controls = std::move(result.last_pass.controls);
    out.dual = predict_all(state, model);
  }
  out.control_max_abs = control_trace(out.controls, ControlReduction::max_abs).values;
  out.control_norm = control_trace(out.controls, ControlReduction::norm).values;

  for (int t : selected_times(config)) {
    const auto ref = top_k(out.reference.rows.row(t).transpose(), config.topk);
    const auto dual = top_k(out.dual.rows.row(t - 1).transpose(), config.topk);
    for (std::size_t r = 0; r < ref.size(); ++r) {
      out.topk.push_back(TopKRow{t, static_cast<int>(r) + 1, ref[r].first, ref[r].second,
                                 dual[r].first, dual[r].second});
    }
  }
  return out;
}

ExperimentReport run_experiment(const ExperimentConfig& config) {
  validate(config);
  ExperimentReport report;
  report.config = config;
  std::vector<double> alphas = config.alphas;
  if (config.lambda2_target) {
    alphas = {alpha_for_lambda2(experiment_stochastic_part(config), *config.lambda2_target)};
    report.config.alphas = alphas;
  }
  for (double alpha : alphas) {
    const HmmModel model = experiment_model(config, alpha);
    AlphaRun run;
    run.alpha = alpha;
    run.lambda2 = second_eigenvalue_magnitude(model.transition()).lambda2_mag;
    for (std::uint64_t seed : config.seeds) {
      run.paths.push_back(run_path(config, model, seed));
    }
    if (run.paths.size() >= 2) {
      Matrix traces(static_cast<Eigen::Index>(run.paths.size()), config.horizon);
      for (std::size_t i = 0; i < run.paths.size(); ++i) {
        traces.row(static_cast<Eigen::Index>(i)) = run.paths[i].control_max_abs.transpose();
      }
      run.envelope = control_envelope(traces);
    }
    report.runs.push_back(std::move(run));
  }
  return report;
}

std::vector<SpectrumRow> spectrum_sweep(const Matrix& a_stoch,
                                        const std::vector<double>& alphas) {
  std::vector<SpectrumRow> out;
  out.reserve(alphas.size());
  for (double alpha : alphas) {
    out.push_back({alpha, second_eigenvalue_magnitude(homotopy_transition(alpha, a_stoch))
                              .lambda2_mag});
  }
  return out;
}

}  // namespace dualfilter
