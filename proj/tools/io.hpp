#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "dualfilter/experiments.hpp"
#include "dualfilter/hmm.hpp"

namespace dualfilter::io {

namespace fs = std::filesystem;

// {"d", "m", "prior", "transition", "emission", "meta": {seed, alpha, temperature}}
RawModel read_raw_model(const fs::path& path);
ValidatedModel load_model(const fs::path& path);
void write_model(const fs::path& path, const HmmModel& model);

// One integer per line, or a JSON array.
TokenSequence read_tokens(const fs::path& path);
void write_tokens(const fs::path& path, const TokenSequence& tokens);

std::string format_double(double value);

class CsvWriter {
 public:
  CsvWriter(const fs::path& path, const std::vector<std::string>& header);
  ~CsvWriter();
  CsvWriter(const CsvWriter&) = delete;
  CsvWriter& operator=(const CsvWriter&) = delete;

  CsvWriter& cell(double value);
  CsvWriter& cell(long long value);
  CsvWriter& cell(int value) { return cell(static_cast<long long>(value)); }
  CsvWriter& cell(std::uint64_t value) { return cell(static_cast<long long>(value)); }
  CsvWriter& cell(const std::string& value);
  void end_row();

 private:
  std::FILE* file_;
  fs::path path_;
  bool first_ = true;
};

fs::path default_output_dir();
void ensure_dir(const fs::path& dir);

// p_1 .. p_T, one row per time.
void write_predictions(const fs::path& path, const PredictionSequence& rows, int first_t);
// Layer rows of eps_t.
void write_errors(const fs::path& path, const Matrix& errors);
// Raw control rows with max-abs and norm reductions.
void write_controls(const fs::path& path, const Matrix& controls);
void write_topk(const fs::path& path, const std::vector<TopKRow>& rows);

// Writes every file of the report plus manifest.json; returns the file list
// relative to dir.
std::vector<std::string> write_report(const fs::path& dir, const ExperimentReport& report);

std::string config_json(const ExperimentConfig& config, int indent = 2);
// Fields present in the JSON override the ones in base.
ExperimentConfig merge_config_json(const fs::path& path, ExperimentConfig base);

}  // namespace dualfilter::io
