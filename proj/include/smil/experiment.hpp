#pragma once

// One experiment end to end: mask the train split at eta, train a method,
// evaluate both test patterns, and describe everything in a RunReport.

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "smil/dataset.hpp"
#include "smil/evaluation.hpp"
#include "smil/trainer.hpp"

namespace smil::exp {

struct ExperimentConfig {
  train::TrainConfig train;
  std::string variant = "none";       // ablation tag
  std::size_t eval_samples = 0;       // 0: deterministic evaluation
  std::string data;                   // prepared dataset directory
};

/// `key = value` lines, `#` comments. Unknown keys and bad values throw
/// Error "bad-config".
void apply_setting(ExperimentConfig& config, const std::string& key, const std::string& value);
ExperimentConfig parse_config(const std::string& text, ExperimentConfig base = {});
ExperimentConfig load_config(const std::filesystem::path& path, ExperimentConfig base = {});
/// Every setting, in a fixed order, as (key, value) strings.
std::vector<std::pair<std::string, std::string>> config_entries(const ExperimentConfig& config);

/// Shortest text that parses back to the same double.
std::string format_double(double v);

/// Ordered `key: value` lines.
class RunReport {
 public:
  void set(const std::string& key, const std::string& value);
  void set(const std::string& key, double value) { set(key, format_double(value)); }
  std::optional<std::string> get(const std::string& key) const;
  double number(const std::string& key) const;
  const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }

  std::string text() const;
  static RunReport parse(const std::string& text);
  void save(const std::filesystem::path& path) const;
  static RunReport load(const std::filesystem::path& path);

  /// Everything except wall-clock and file locations.
  bool same_results(const RunReport& other) const;

  /// The `config.*` entries as a config.
  ExperimentConfig config() const;

 private:
  std::vector<std::pair<std::string, std::string>> entries_;
};

struct RunResult {
  train::TrainState state;
  eval::MetricSet full;
  eval::MetricSet image_only;
  RunReport report;
};

/// Masks `train` at config.train.eta with the run seed, trains, evaluates.
RunResult run_experiment(const data::MaskedDataset& train, const data::MaskedDataset& validation,
                         const ExperimentConfig& config);

inline const std::vector<std::string> kAblations = {"no-kmeans", "no-reg", "fixed-gaussian", "deterministic"};

/// SMIL with one component changed; Error "unknown-ablation-variant".
ExperimentConfig ablation_config(ExperimentConfig base, const std::string& variant);
RunResult run_ablation(const data::MaskedDataset& train, const data::MaskedDataset& validation,
                       const ExperimentConfig& base, const std::string& variant);

/// model.smilw, priors.smilp (when built), history.csv, manifest.tsv and
/// report.txt under `dir`.
void save_run(const std::filesystem::path& dir, const RunResult& run, const data::MaskedDataset& masked_train);

/// `iter,nll,kl_omega,kl_r,total`
void write_history(const std::filesystem::path& path, const std::vector<train::IterationRecord>& history);

/// Rows sorted by (method, eta, seed), then per-group means.
std::string aggregate_reports(std::vector<RunReport> reports);

}  // namespace smil::exp
