#include "io.hpp"

#include <cinttypes>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace dualfilter::io {

using nlohmann::json;

namespace {

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::InvalidArgument, "cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, path.string() + ": " + e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::InvalidArgument, "cannot write " + path.string());
  out << text;
}

json matrix_json(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace

RawModel read_raw_model(const fs::path& path) {
  const json j = read_json(path);
  RawModel raw;
  try {
    raw.d = j.at("d").get<int>();
    raw.m = j.at("m").get<int>();
    raw.prior = j.at("prior").get<std::vector<double>>();
    raw.transition = j.at("transition").get<std::vector<std::vector<double>>>();
    raw.emission = j.at("emission").get<std::vector<std::vector<double>>>();
    if (j.contains("meta")) {
      const json& meta = j.at("meta");
      if (meta.contains("seed") && !meta["seed"].is_null())
        raw.meta.seed = meta["seed"].get<std::uint64_t>();
      if (meta.contains("alpha") && !meta["alpha"].is_null())
        raw.meta.alpha = meta["alpha"].get<double>();
      if (meta.contains("temperature") && !meta["temperature"].is_null())
        raw.meta.temperature = meta["temperature"].get<double>();
      if (meta.contains("transition_temperature") && !meta["transition_temperature"].is_null())
        raw.meta.transition_temperature = meta["transition_temperature"].get<double>();
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, path.string() + ": " + e.what());
  }
  return raw;
}

ValidatedModel load_model(const fs::path& path) { return validate_model(read_raw_model(path)); }

void write_model(const fs::path& path, const HmmModel& model) {
  json j;
  j["d"] = model.num_states();
  j["m"] = model.m();
  j["prior"] = std::vector<double>(model.prior().data(),
                                   model.prior().data() + model.prior().size());
  j["transition"] = matrix_json(model.transition());
  j["emission"] = matrix_json(model.emission());
  json meta = json::object();
  const ModelMeta& m = model.meta();
  meta["seed"] = m.seed ? json(*m.seed) : json(nullptr);
  meta["alpha"] = m.alpha ? json(*m.alpha) : json(nullptr);
  meta["temperature"] = m.temperature ? json(*m.temperature) : json(nullptr);
  if (m.transition_temperature) meta["transition_temperature"] = *m.transition_temperature;
  j["meta"] = std::move(meta);
  write_text(path, j.dump(1) + "\n");
}

TokenSequence read_tokens(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::InvalidArgument, "cannot open " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  const std::string text = buffer.str();
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && text[first] == '[') {
    try {
      return json::parse(text).get<TokenSequence>();
    } catch (const json::exception& e) {
      throw Error(ErrorCode::InvalidArgument, path.string() + ": " + e.what());
    }
  }
  TokenSequence tokens;
  std::istringstream lines(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(lines, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream fields(line);
    long long value = 0;
    std::string rest;
    if (!(fields >> value) || (fields >> rest)) {
      throw Error(ErrorCode::InvalidArgument,
                  path.string() + ":" + std::to_string(lineno) + ": not an integer");
    }
    tokens.push_back(static_cast<Token>(value));
  }
  return tokens;
}

void write_tokens(const fs::path& path, const TokenSequence& tokens) {
  std::string text;
  for (Token z : tokens) text += std::to_string(z) + "\n";
  write_text(path, text);
}

std::string format_double(double value) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", value);
  return buf;
}

CsvWriter::CsvWriter(const fs::path& path, const std::vector<std::string>& header)
    : file_(std::fopen(path.c_str(), "wb")), path_(path) {
  if (file_ == nullptr) throw Error(ErrorCode::InvalidArgument, "cannot write " + path.string());
  for (const auto& name : header) cell(name);
  end_row();
}

CsvWriter::~CsvWriter() {
  if (file_ != nullptr) std::fclose(file_);
}

CsvWriter& CsvWriter::cell(double value) { return cell(format_double(value)); }

CsvWriter& CsvWriter::cell(long long value) { return cell(std::to_string(value)); }

CsvWriter& CsvWriter::cell(const std::string& value) {
  if (!first_) std::fputc(',', file_);
  std::fputs(value.c_str(), file_);
  first_ = false;
  return *this;
}

void CsvWriter::end_row() {
  std::fputc('\n', file_);
  first_ = true;
}

fs::path default_output_dir() {
  const char* env = std::getenv("DUALFILTER_OUT_DIR");
  return env != nullptr && *env != '\0' ? fs::path(env) : fs::path("out");
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::InvalidArgument, "cannot create " + dir.string() + ": " + ec.message());
}

void write_predictions(const fs::path& path, const PredictionSequence& rows, int first_t) {
  std::vector<std::string> header{"t"};
  for (Eigen::Index z = 0; z < rows.rows.cols(); ++z) header.push_back("p" + std::to_string(z));
  CsvWriter csv(path, header);
  for (Eigen::Index t = 0; t < rows.rows.rows(); ++t) {
    csv.cell(static_cast<long long>(t + first_t));
    for (Eigen::Index z = 0; z < rows.rows.cols(); ++z) csv.cell(rows.rows(t, z));
    csv.end_row();
  }
}

void write_errors(const fs::path& path, const Matrix& errors) {
  std::vector<std::string> header{"layer"};
  for (Eigen::Index t = 1; t <= errors.cols(); ++t) header.push_back("eps" + std::to_string(t));
  CsvWriter csv(path, header);
  for (Eigen::Index l = 0; l < errors.rows(); ++l) {
    csv.cell(static_cast<long long>(l));
    for (Eigen::Index t = 0; t < errors.cols(); ++t) csv.cell(errors(l, t));
    csv.end_row();
  }
}

void write_controls(const fs::path& path, const Matrix& controls) {
  const ControlTrace max_abs = control_trace(controls, ControlReduction::max_abs);
  const ControlTrace norm = control_trace(controls, ControlReduction::norm);
  std::vector<std::string> header{"t", "max_abs", "norm"};
  for (Eigen::Index x = 0; x < controls.cols(); ++x) header.push_back("u" + std::to_string(x));
  CsvWriter csv(path, header);
  for (Eigen::Index t = 0; t < controls.rows(); ++t) {
    csv.cell(static_cast<long long>(t)).cell(max_abs.values[t]).cell(norm.values[t]);
    for (Eigen::Index x = 0; x < controls.cols(); ++x) csv.cell(controls(t, x));
    csv.end_row();
  }
}

void write_topk(const fs::path& path, const std::vector<TopKRow>& rows) {
  CsvWriter csv(path, {"t", "rank", "reference_token", "reference_prob", "dual_token",
                       "dual_prob"});
  for (const TopKRow& r : rows) {
    csv.cell(r.t).cell(r.rank).cell(r.reference_token).cell(r.reference_prob)
        .cell(r.dual_token).cell(r.dual_prob);
    csv.end_row();
  }
}

std::string config_json(const ExperimentConfig& config, int indent) {
  json j;
  j["name"] = config.name;
  j["d"] = config.d;
  j["m"] = config.m;
  j["T"] = config.horizon;
  j["alphas"] = config.alphas;
  j["lambda2"] = config.lambda2_target ? json(*config.lambda2_target) : json(nullptr);
  j["transition_temperature"] = config.transition_temperature;
  j["emission_temperature"] = config.emission_temperature;
  j["model_seed"] = config.model_seed;
  j["seeds"] = config.seeds;
  j["mode"] = to_string(config.mode);
  j["layers"] = config.layers;
  j["topk"] = config.topk;
  j["selected_times"] = config.selected_times;
  return j.dump(indent);
}

ExperimentConfig merge_config_json(const fs::path& path, ExperimentConfig base) {
  const json j = read_json(path);
  try {
    if (j.contains("preset")) base = preset(j["preset"].get<std::string>());
    if (j.contains("name")) base.name = j["name"].get<std::string>();
    if (j.contains("d")) base.d = j["d"].get<int>();
    if (j.contains("m")) base.m = j["m"].get<int>();
    if (j.contains("T")) base.horizon = j["T"].get<int>();
    if (j.contains("alpha")) {
      base.alphas = j["alpha"].is_array() ? j["alpha"].get<std::vector<double>>()
                                           : std::vector<double>{j["alpha"].get<double>()};
    }
    if (j.contains("alphas")) base.alphas = j["alphas"].get<std::vector<double>>();
    if (j.contains("lambda2")) {
      base.lambda2_target = j["lambda2"].is_null() ? std::nullopt
                                                   : std::optional(j["lambda2"].get<double>());
    }
    if (j.contains("temperature")) base.emission_temperature = j["temperature"].get<double>();
    if (j.contains("emission_temperature"))
      base.emission_temperature = j["emission_temperature"].get<double>();
    if (j.contains("transition_temperature"))
      base.transition_temperature = j["transition_temperature"].get<double>();
    if (j.contains("model_seed")) base.model_seed = j["model_seed"].get<std::uint64_t>();
    if (j.contains("seeds")) base.seeds = j["seeds"].get<std::vector<std::uint64_t>>();
    if (j.contains("mode")) base.mode = parse_mode(j["mode"].get<std::string>());
    if (j.contains("layers")) base.layers = j["layers"].get<int>();
    if (j.contains("topk")) base.topk = j["topk"].get<int>();
    if (j.contains("selected_times")) base.selected_times = j["selected_times"].get<std::vector<int>>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, path.string() + ": " + e.what());
  }
  return base;
}

std::vector<std::string> write_report(const fs::path& dir, const ExperimentReport& report) {
  ensure_dir(dir);
  std::vector<std::string> files;
  write_text(dir / "config.json", config_json(report.config) + "\n");
  files.push_back("config.json");

  {
    CsvWriter csv(dir / "spectrum.csv", {"alpha", "lambda2"});
    for (const AlphaRun& run : report.runs) {
      csv.cell(run.alpha).cell(run.lambda2);
      csv.end_row();
    }
  }
  files.push_back("spectrum.csv");

  json runs = json::array();
  for (std::size_t a = 0; a < report.runs.size(); ++a) {
    const AlphaRun& run = report.runs[a];
    const std::string alpha_dir = "alpha_" + std::to_string(a);
    json run_json;
    run_json["alpha"] = run.alpha;
    run_json["lambda2"] = run.lambda2;
    json paths = json::array();
    for (const PathResult& path : run.paths) {
      const std::string sub = alpha_dir + "/seed_" + std::to_string(path.seed);
      ensure_dir(dir / sub);
      write_tokens(dir / sub / "tokens.txt", path.tokens);
      write_predictions(dir / sub / "reference.csv", path.reference, 0);
      write_predictions(dir / sub / "predictions.csv", path.dual, 1);
      write_errors(dir / sub / "errors.csv", path.errors);
      write_controls(dir / sub / "controls.csv", path.controls);
      write_topk(dir / sub / "topk.csv", path.topk);
      for (const char* name : {"tokens.txt", "reference.csv", "predictions.csv", "errors.csv",
                               "controls.csv", "topk.csv"}) {
        files.push_back(sub + "/" + name);
      }
      json p;
      p["seed"] = path.seed;
      p["max_error_last_layer"] = path.errors.rows() > 0 ? path.errors.bottomRows(1).maxCoeff() : 0.0;
      p["mean_error_by_layer"] = json::array();
      for (Eigen::Index l = 0; l < path.errors.rows(); ++l)
        p["mean_error_by_layer"].push_back(path.errors.row(l).mean());
      p["projection_clips"] = path.projection_clips;
      p["projection_fallbacks"] = path.projection_fallbacks;
      paths.push_back(std::move(p));
    }
    run_json["paths"] = std::move(paths);
    if (run.envelope) {
      std::vector<std::string> header{"t", "min", "max"};
      for (const PathResult& path : run.paths) header.push_back("seed" + std::to_string(path.seed));
      CsvWriter csv(dir / alpha_dir / "envelope.csv", header);
      const Envelope& env = *run.envelope;
      for (Eigen::Index t = 0; t < env.min.size(); ++t) {
        csv.cell(static_cast<long long>(t)).cell(env.min[t]).cell(env.max[t]);
        for (Eigen::Index s = 0; s < env.traces.rows(); ++s) csv.cell(env.traces(s, t));
        csv.end_row();
      }
      files.push_back(alpha_dir + "/envelope.csv");
    }
    runs.push_back(std::move(run_json));
  }

  json manifest;
  manifest["config"] = json::parse(config_json(report.config));
  manifest["runs"] = std::move(runs);
  manifest["files"] = files;
  write_text(dir / "manifest.json", manifest.dump(2) + "\n");
  files.push_back("manifest.json");
  return files;
}

}  // namespace dualfilter::io
