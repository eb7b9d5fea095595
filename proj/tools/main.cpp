#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dualfilter/bsde.hpp"
#include "dualfilter/dual_filter.hpp"
#include "dualfilter/enumeration.hpp"
#include "dualfilter/experiments.hpp"
#include "dualfilter/forward_filter.hpp"
#include "io.hpp"

using namespace dualfilter;
namespace fs = std::filesystem;

namespace {

constexpr int kExitValidation = 1;
constexpr int kExitNumerical = 2;

fs::path out_or_default(const std::string& out, const std::string& leaf = {}) {
  if (!out.empty()) return out;
  return leaf.empty() ? io::default_output_dir() : io::default_output_dir() / leaf;
}

Execution parse_execution(const std::string& text) {
  if (text == "serial") return Execution::serial;
  if (text == "parallel") return Execution::parallel;
  throw Error(ErrorCode::InvalidArgument, "unknown execution '" + text + "'");
}

Recovery parse_recovery(const std::string& text) {
  if (text == "recurrence") return Recovery::recurrence;
  if (text == "solve") return Recovery::solve;
  throw Error(ErrorCode::InvalidArgument, "unknown recovery '" + text + "'");
}

HmmModel load(const std::string& path) {
  ValidatedModel v = io::load_model(path);
  if (v.warnings > 0) {
    std::fprintf(stderr, "warning: %d rows renormalized in %s\n", v.warnings, path.c_str());
  }
  return std::move(v.model);
}

// ---------------------------------------------------------------- gen-model

struct GenModelArgs {
  int d = 8;
  int m = 3;
  double alpha = 1.0;
  double lambda2 = -1.0;
  double temperature = 1.0;
  double transition_temperature = 1.0;
  std::uint64_t seed = 0;
  std::string out;
};

int gen_model(const GenModelArgs& a) {
  ExperimentConfig config;
  config.d = a.d;
  config.m = a.m;
  config.alphas = {a.alpha};
  config.emission_temperature = a.temperature;
  config.transition_temperature = a.transition_temperature;
  config.model_seed = a.seed;
  validate(config);
  double alpha = a.alpha;
  if (a.lambda2 >= 0.0) alpha = alpha_for_lambda2(experiment_stochastic_part(config), a.lambda2);
  const HmmModel model = experiment_model(config, alpha);
  const fs::path path = out_or_default(a.out, "model.json");
  if (path.has_parent_path()) io::ensure_dir(path.parent_path());
  io::write_model(path, model);
  std::printf("wrote %s (d=%d m=%d alpha=%.17g)\n", path.c_str(), a.d, a.m, alpha);
  return 0;
}

// ---------------------------------------------------------------- sample

struct SampleArgs {
  std::string model;
  int horizon = 16;
  std::uint64_t seed = 0;
  std::string out;
  std::string states;
};

int sample(const SampleArgs& a) {
  if (a.horizon < 0) throw Error(ErrorCode::InvalidArgument, "T must be >= 0");
  const HmmModel model = load(a.model);
  const SamplePath path = sample_path(model, a.horizon, a.seed);
  const fs::path out = out_or_default(a.out, "tokens.txt");
  if (out.has_parent_path()) io::ensure_dir(out.parent_path());
  io::write_tokens(out, path.tokens);
  if (!a.states.empty()) {
    io::write_tokens(a.states, TokenSequence(path.states.begin(), path.states.end()));
  }
  std::printf("wrote %s (T=%d seed=%llu)\n", out.c_str(), a.horizon,
              static_cast<unsigned long long>(a.seed));
  return 0;
}

// ---------------------------------------------------------------- filter

struct FilterArgs {
  std::string model;
  std::string tokens;
  std::string out;
  std::uint64_t seed = 0;
};

int filter(const FilterArgs& a) {
  const HmmModel model = load(a.model);
  const TokenSequence tokens = io::read_tokens(a.tokens);
  const PosteriorTrajectory post = forward_filter(model, tokens);
  const fs::path dir = out_or_default(a.out, "filter");
  io::ensure_dir(dir);
  std::vector<std::string> header{"t"};
  for (int x = 0; x < model.num_states(); ++x) header.push_back("pi" + std::to_string(x));
  io::CsvWriter csv(dir / "posteriors.csv", header);
  for (Eigen::Index t = 0; t < post.measures.rows(); ++t) {
    csv.cell(static_cast<long long>(t));
    for (int x = 0; x < model.num_states(); ++x) csv.cell(post.measures(t, x));
    csv.end_row();
  }
  io::write_predictions(dir / "predictions.csv", predict_trajectory(post, model), 0);
  std::printf("wrote %s/{posteriors,predictions}.csv (T=%zu)\n", dir.c_str(), tokens.size());
  return 0;
}

// ---------------------------------------------------------------- dual-filter

struct DualFilterArgs {
  std::string mode = "single-shot";
  int layers = 6;
  std::string model;
  std::string tokens;
  std::string out;
  int topk = 10;
  std::vector<int> times;
  std::string execution = "parallel";
  std::string recovery = "recurrence";
  std::uint64_t seed = 0;
};

int dual_filter_cmd(const DualFilterArgs& a) {
  const HmmModel model = load(a.model);
  const TokenSequence tokens = io::read_tokens(a.tokens);
  model.check_tokens(tokens);
  const FilterMode mode = parse_mode(a.mode);
  const Execution execution = parse_execution(a.execution);
  const Recovery recovery = parse_recovery(a.recovery);
  if (a.layers < 1) throw Error(ErrorCode::InvalidArgument, "layers must be >= 1");
  if (a.topk < 1) throw Error(ErrorCode::InvalidArgument, "topk must be >= 1");
  const int horizon = static_cast<int>(tokens.size());
  for (int t : a.times) {
    if (t < 1 || t > horizon) throw Error(ErrorCode::InvalidArgument, "selected time outside 1..T");
  }

  const PredictionSequence reference =
      predict_trajectory(forward_filter(model, tokens), model);
  LayerState state;
  Matrix errors;
  Matrix controls;
  if (mode == FilterMode::single_shot) {
    SingleShotOptions options;
    options.execution = execution;
    SingleShotResult result = single_shot(model, tokens, options);
    state = std::move(result.state);
    controls = std::move(result.final_controls);
    errors = error_trace(predict_all(state, model), reference).transpose();
  } else {
    IterateResult result = iterate(model, tokens, a.layers, {}, &reference, execution, recovery);
    errors.resize(static_cast<Eigen::Index>(result.layers.size()), horizon);
    for (std::size_t l = 0; l < result.layers.size(); ++l) {
      errors.row(static_cast<Eigen::Index>(l)) = result.layers[l].errors.transpose();
    }
    state = std::move(result.final_state);
    controls = std::move(result.last_pass.controls);
  }
  const PredictionSequence dual = predict_all(state, model);

  std::vector<int> times = a.times;
  if (times.empty() && horizon > 0) {
    times = {1, std::max(1, horizon / 2), horizon};
    times.erase(std::unique(times.begin(), times.end()), times.end());
  }
  std::vector<TopKRow> rows;
  for (int t : times) {
    const auto ref = top_k(reference.rows.row(t).transpose(), a.topk);
    const auto ours = top_k(dual.rows.row(t - 1).transpose(), a.topk);
    for (std::size_t r = 0; r < ref.size(); ++r) {
      rows.push_back({t, static_cast<int>(r) + 1, ref[r].first, ref[r].second, ours[r].first,
                      ours[r].second});
    }
  }

  const fs::path dir = out_or_default(a.out, "dual-filter");
  io::ensure_dir(dir);
  io::write_predictions(dir / "predictions.csv", dual, 1);
  io::write_errors(dir / "errors.csv", errors);
  io::write_controls(dir / "controls.csv", controls);
  io::write_topk(dir / "topk.csv", rows);
  std::printf("mode=%s T=%d max eps (last layer) = %.3e\n", to_string(mode), horizon,
              errors.cols() > 0 ? errors.bottomRows(1).maxCoeff() : 0.0);
  std::printf("wrote %s/{predictions,errors,controls,topk}.csv\n", dir.c_str());
  return 0;
}

// ---------------------------------------------------------------- verify

struct VerifyArgs {
  int instances = 20;
  std::uint64_t seed = 0;
};

HmmModel random_small_model(Rng& rng, int d, int m) {
  const Vector prior = random_stochastic_matrix(1, d, 1.0, rng).row(0).transpose();
  const Matrix a = random_stochastic_matrix(d, d, 1.0, rng);
  const Matrix c = random_stochastic_matrix(d, m + 1, 1.0, rng);
  return HmmModel(prior, a, c);
}

int verify(const VerifyArgs& a) {
  if (a.instances < 1) throw Error(ErrorCode::InvalidArgument, "instances must be >= 1");
  struct Check {
    const char* name;
    double tolerance;
    double worst = 0.0;
  };
  std::vector<Check> checks{{"forward filter = enumeration", 1e-12},
                            {"duality: J = MSE", 1e-12},
                            {"optimal J = MMSE", 1e-10},
                            {"value decomposition", 1e-10},
                            {"representation of pi_t(Y_t)", 1e-10},
                            {"layer map fixed point", 1e-10},
                            {"single-shot = forward filter", 1e-8}};
  Rng rng(a.seed);
  std::uniform_int_distribution<int> pick_d(2, 4);
  std::uniform_int_distribution<int> pick_m(1, 2);
  std::uniform_int_distribution<int> pick_t(1, 4);
  for (int i = 0; i < a.instances; ++i) {
    const int d = pick_d(rng);
    const int m = pick_m(rng);
    const int horizon = pick_t(rng);
    const HmmModel model = random_small_model(rng, d, m);
    const std::uint64_t path_seed = rng();
    const TokenSequence tokens = sample_path(model, horizon, path_seed).tokens;

    const PosteriorTrajectory forward = forward_filter(model, tokens);
    const PosteriorTrajectory exact = exact_posterior(model, tokens);
    checks[0].worst = std::max(checks[0].worst,
                               (forward.measures - exact.measures).cwiseAbs().maxCoeff());

    Vector f(d);
    for (int x = 0; x < d; ++x) f[x] = std::uniform_real_distribution<double>(-1, 1)(rng);
    const TerminalTable terminal = TerminalTable::deterministic(f, m + 1, horizon);
    const AdaptedControl controls = AdaptedControl::random(m + 1, horizon, 1.0, rng);
    const CostBreakdown cost = cost_J(model, controls, terminal);
    checks[1].worst = std::max(checks[1].worst, std::abs(cost.total - cost.mse));
    const double mmse = exact_mmse(model, terminal);
    const OptimalSolution opt = solve_optimal(model, terminal);
    checks[2].worst =
        std::max(checks[2].worst, std::abs(cost_J(model, opt.controls, terminal).total - mmse));
    checks[3].worst = std::max(
        checks[3].worst,
        std::abs((cost.total - mmse) - control_excess(model, controls, terminal)));
    checks[4].worst =
        std::max(checks[4].worst, representation_check(model, terminal).max_deviation);

    const LayerMapResult fixed = layer_map(model, tokens, LayerState{forward.measures});
    checks[5].worst = std::max(
        checks[5].worst, (fixed.rho_plus.measures - forward.measures).cwiseAbs().maxCoeff());
    const SingleShotResult shot = single_shot(model, tokens);
    checks[6].worst = std::max(
        checks[6].worst,
        error_trace(predict_all(shot.state, model), predict_trajectory(forward, model))
            .maxCoeff());
  }
  bool ok = true;
  for (const Check& c : checks) {
    const bool pass = c.worst <= c.tolerance;
    ok = ok && pass;
    std::printf("%-4s %-32s worst %.3e (tol %.0e)\n", pass ? "PASS" : "FAIL", c.name, c.worst,
                c.tolerance);
  }
  return ok ? 0 : kExitNumerical;
}

// ---------------------------------------------------------------- spectrum

struct SpectrumArgs {
  std::string model;
  int d = 384;
  double transition_temperature = 1.0;
  std::vector<double> alphas;
  int steps = 11;
  std::uint64_t seed = 0;
  std::string out;
};

int spectrum(const SpectrumArgs& a) {
  const fs::path dir = out_or_default(a.out, "spectrum");
  io::ensure_dir(dir);
  if (!a.model.empty()) {
    const HmmModel model = load(a.model);
    const Spectrum s = second_eigenvalue_magnitude(model.transition());
    io::CsvWriter csv(dir / "eigenvalues.csv", {"index", "real", "imag", "abs"});
    for (std::size_t i = 0; i < s.eigenvalues.size(); ++i) {
      csv.cell(static_cast<long long>(i)).cell(s.eigenvalues[i].real())
          .cell(s.eigenvalues[i].imag()).cell(std::abs(s.eigenvalues[i]));
      csv.end_row();
    }
    std::printf("|lambda2| = %.17g\nwrote %s/eigenvalues.csv\n", s.lambda2_mag, dir.c_str());
    return 0;
  }
  std::vector<double> alphas = a.alphas;
  if (alphas.empty()) {
    if (a.steps < 2) throw Error(ErrorCode::InvalidArgument, "steps must be >= 2");
    for (int i = 0; i < a.steps; ++i) alphas.push_back(static_cast<double>(i) / (a.steps - 1));
  }
  ExperimentConfig config;
  config.d = a.d;
  config.transition_temperature = a.transition_temperature;
  config.model_seed = a.seed;
  config.alphas = alphas;
  validate(config);
  const auto rows = spectrum_sweep(experiment_stochastic_part(config), alphas);
  io::CsvWriter csv(dir / "spectrum.csv", {"alpha", "lambda2"});
  for (const SpectrumRow& r : rows) {
    csv.cell(r.alpha).cell(r.lambda2);
    csv.end_row();
    std::printf("alpha %-8.4g |lambda2| %.12f\n", r.alpha, r.lambda2);
  }
  std::printf("wrote %s/spectrum.csv\n", dir.c_str());
  return 0;
}

// ---------------------------------------------------------------- experiment

struct ExperimentArgs {
  std::string preset;
  std::string config;
  std::string out;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dual-filter inference for hidden Markov models"};
  app.require_subcommand(1);

  GenModelArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-model", "Generate a random homotopy model");
  gen_cmd->add_option("--d", gen.d, "Number of states");
  gen_cmd->add_option("--m", gen.m, "Largest token index (vocabulary m+1)");
  gen_cmd->add_option("--alpha", gen.alpha, "Homotopy weight of the circulant permutation");
  gen_cmd->add_option("--lambda2", gen.lambda2, "Choose alpha so that |lambda2| equals this");
  gen_cmd->add_option("--temperature", gen.temperature, "Emission sampling temperature");
  gen_cmd->add_option("--transition-temperature", gen.transition_temperature,
                      "Temperature of the random transition part");
  gen_cmd->add_option("--seed", gen.seed, "Model seed");
  gen_cmd->add_option("--out", gen.out, "Output JSON path");

  SampleArgs smp;
  auto* sample_cmd = app.add_subcommand("sample", "Sample a token path from a model");
  sample_cmd->add_option("--model", smp.model, "Model JSON")->required();
  sample_cmd->add_option("--T", smp.horizon, "Number of tokens");
  sample_cmd->add_option("--seed", smp.seed, "Path seed");
  sample_cmd->add_option("--out", smp.out, "Token file");
  sample_cmd->add_option("--states", smp.states, "Optional file for X_0..X_T");

  FilterArgs flt;
  auto* filter_cmd = app.add_subcommand("filter", "Run the forward filter");
  filter_cmd->add_option("--model", flt.model, "Model JSON")->required();
  filter_cmd->add_option("--tokens", flt.tokens, "Token file")->required();
  filter_cmd->add_option("--out", flt.out, "Output directory");
  filter_cmd->add_option("--seed", flt.seed, "Unused; accepted for uniformity");

  DualFilterArgs dfl;
  auto* dual_cmd = app.add_subcommand("dual-filter", "Run the dual filter");
  dual_cmd->add_option("--mode", dfl.mode, "single-shot or iterative")
      ->check(CLI::IsMember({"single-shot", "iterative"}));
  dual_cmd->add_option("--layers", dfl.layers, "Layers for the iterative mode");
  dual_cmd->add_option("--model", dfl.model, "Model JSON")->required();
  dual_cmd->add_option("--tokens", dfl.tokens, "Token file")->required();
  dual_cmd->add_option("--out", dfl.out, "Output directory");
  dual_cmd->add_option("--topk", dfl.topk, "Entries per top-k table");
  dual_cmd->add_option("--times", dfl.times, "Times with top-k tables");
  dual_cmd->add_option("--exec", dfl.execution, "serial or parallel")
      ->check(CLI::IsMember({"serial", "parallel"}));
  dual_cmd->add_option("--recovery", dfl.recovery, "recurrence or solve")
      ->check(CLI::IsMember({"recurrence", "solve"}));
  dual_cmd->add_option("--seed", dfl.seed, "Unused; accepted for uniformity");

  VerifyArgs ver;
  auto* verify_cmd = app.add_subcommand("verify", "Check the duality identities on random models");
  verify_cmd->add_option("--instances", ver.instances, "Number of random instances");
  verify_cmd->add_option("--seed", ver.seed, "Seed");

  SpectrumArgs spc;
  auto* spectrum_cmd = app.add_subcommand("spectrum", "|lambda2| of a model or an alpha sweep");
  spectrum_cmd->add_option("--model", spc.model, "Model JSON (eigenvalues of its A)");
  spectrum_cmd->add_option("--d", spc.d, "Number of states for the sweep");
  spectrum_cmd->add_option("--transition-temperature", spc.transition_temperature,
                           "Temperature of the random transition part");
  spectrum_cmd->add_option("--alphas", spc.alphas, "Alpha values");
  spectrum_cmd->add_option("--steps", spc.steps, "Evenly spaced alphas in [0, 1]");
  spectrum_cmd->add_option("--seed", spc.seed, "Model seed");
  spectrum_cmd->add_option("--out", spc.out, "Output directory");

  ExperimentArgs exa;
  ExperimentConfig over;
  std::string mode_text;
  std::string exec_text = "parallel";
  auto* exp_cmd = app.add_subcommand("experiment", "Run an experiment and write a report");
  exp_cmd->add_option("--preset", exa.preset, "nanogpt-char or lambda2-0.3");
  exp_cmd->add_option("--config", exa.config, "JSON config file (flags override it)");
  exp_cmd->add_option("--out", exa.out, "Report directory");
  auto* o_d = exp_cmd->add_option("--d", over.d, "Number of states");
  auto* o_m = exp_cmd->add_option("--m", over.m, "Largest token index");
  auto* o_t = exp_cmd->add_option("--T", over.horizon, "Horizon");
  auto* o_alpha = exp_cmd->add_option("--alpha", over.alphas, "Alpha value(s)");
  double lambda2 = 0.0;
  auto* o_l2 = exp_cmd->add_option("--lambda2", lambda2, "Target |lambda2|");
  auto* o_temp = exp_cmd->add_option("--temperature", over.emission_temperature,
                                     "Emission sampling temperature");
  auto* o_ttemp = exp_cmd->add_option("--transition-temperature", over.transition_temperature,
                                      "Temperature of the random transition part");
  auto* o_seed = exp_cmd->add_option("--seed", over.model_seed, "Model seed");
  auto* o_seeds = exp_cmd->add_option("--seeds", over.seeds, "Path seeds");
  auto* o_mode = exp_cmd->add_option("--mode", mode_text, "single-shot or iterative")
                     ->check(CLI::IsMember({"single-shot", "iterative"}));
  auto* o_layers = exp_cmd->add_option("--layers", over.layers, "Layers (iterative)");
  auto* o_topk = exp_cmd->add_option("--topk", over.topk, "Entries per top-k table");
  auto* o_times = exp_cmd->add_option("--times", over.selected_times, "Times with top-k tables");
  exp_cmd->add_option("--exec", exec_text, "serial or parallel")
      ->check(CLI::IsMember({"serial", "parallel"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitValidation;
  }

  try {
    if (*gen_cmd) return gen_model(gen);
    if (*sample_cmd) return sample(smp);
    if (*filter_cmd) return filter(flt);
    if (*dual_cmd) return dual_filter_cmd(dfl);
    if (*verify_cmd) return verify(ver);
    if (*spectrum_cmd) return spectrum(spc);
    if (*exp_cmd) {
      ExperimentConfig config;
      if (!exa.preset.empty()) config = preset(exa.preset);
      if (!exa.config.empty()) config = io::merge_config_json(exa.config, config);
      if (*o_d) config.d = over.d;
      if (*o_m) config.m = over.m;
      if (*o_t) config.horizon = over.horizon;
      if (*o_alpha) {
        config.alphas = over.alphas;
        config.lambda2_target.reset();
      }
      if (*o_l2) config.lambda2_target = lambda2;
      if (*o_temp) config.emission_temperature = over.emission_temperature;
      if (*o_ttemp) config.transition_temperature = over.transition_temperature;
      if (*o_seed) config.model_seed = over.model_seed;
      if (*o_seeds) config.seeds = over.seeds;
      if (*o_mode) config.mode = parse_mode(mode_text);
      if (*o_layers) config.layers = over.layers;
      if (*o_topk) config.topk = over.topk;
      if (*o_times) config.selected_times = over.selected_times;
      config.execution = parse_execution(exec_text);
      const ExperimentReport report = run_experiment(config);
      const fs::path dir = out_or_default(exa.out, config.name);
      const auto files = io::write_report(dir, report);
      for (const AlphaRun& run : report.runs) {
        for (const PathResult& p : run.paths) {
          std::printf("alpha %.6f |lambda2| %.6f seed %llu: mean eps first %.3e last %.3e\n",
                      run.alpha, run.lambda2, static_cast<unsigned long long>(p.seed),
                      p.errors.row(0).mean(), p.errors.bottomRows(1).mean());
        }
      }
      std::printf("wrote %zu files to %s\n", files.size(), dir.c_str());
      return 0;
    }
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return is_numerical(e.code()) ? kExitNumerical : kExitValidation;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitValidation;
  }
  return 0;
}
