#pragma once

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "ppibench/folds.hpp"
#include "ppibench/llmclient.hpp"
#include "ppibench/prompt.hpp"
#include "ppibench/score.hpp"

namespace ppibench::runner {

inline constexpr std::string_view kToolVersion = "0.1.0";

struct ModelSpec {
  std::string name;
  std::size_t context_window = 4096;
  /// Temperatures this model may be run at (the configured cap).
  llm::TemperatureRange temperature_range{0.0, 1.0};
};

struct DatasetSpec {
  std::string name;
  std::string corpus_path;
};

enum class BackendKind { replay, live };
enum class FoldMode { fixed, per_run };
enum class DictionaryScope { corpus, fold };

struct BackendSpec {
  BackendKind kind = BackendKind::replay;
  llm::CorruptionParams corruption;
  /// False when the config leaves the replay seed to be derived from `seed`.
  bool corruption_seed_set = false;
  std::string base_url = "https://api.openai.com/v1";
  std::chrono::seconds timeout{120};
  std::size_t rpm = 60;
  llm::RetryPolicy retry;
};

/// Everything a run needs; loaded from one JSON file. Relative paths are
/// resolved against the file's directory.
struct RunConfig {
  std::vector<DatasetSpec> datasets;
  std::vector<ModelSpec> models;
  std::vector<PromptSetting> settings{kAllSettings.begin(), kAllSettings.end()};
  std::vector<double> temperatures{0.0};
  std::size_t k = 10;
  std::size_t runs = 10;
  std::uint64_t seed = 42;
  FoldMode fold_mode = FoldMode::fixed;
  DictionaryScope dictionary_scope = DictionaryScope::corpus;
  BackendSpec backend;
  std::size_t output_allowance = 30;
  double safety_margin = 0.15;
  /// Empty: the bundled library.
  std::string library_path;
  std::string template_name = "P60_S3";
  MatchConfig match;
  std::string output_root = "runs";
  std::string run_id = "run";
  std::size_t workers = 1;
  bool strict_corpus = true;

  static RunConfig from_json_text(const std::string& text, const std::string& base_dir = ".");
  /// Canonical JSON snapshot (paths as resolved).
  std::string to_json() const;
  /// Pre-flight checks with no side effects. Throws ConfigError.
  void validate() const;

  std::uint64_t fold_seed(std::size_t run) const;
  std::uint64_t schedule_seed() const;
  std::uint64_t replay_seed() const;
  std::string run_dir() const;
};

RunConfig load_config(const std::string& path);

struct RunOptions {
  /// Stop after executing this many items (simulates an interruption).
  std::optional<std::size_t> stop_after;
  /// Replaces the configured backend, e.g. with a fault-injecting double.
  std::function<std::shared_ptr<llm::ChatBackend>(const llm::WorkItem&)> backend_factory;
  /// Clock for backoff and rate limiting; system clock when null.
  llm::Clock* clock = nullptr;
};

struct RunResult {
  std::string run_dir;
  std::vector<AggregateReport> aggregates;
  std::size_t total_items = 0;
  std::size_t executed = 0;
  std::size_t skipped = 0;
  std::size_t failed = 0;
  /// Every item reached a terminal state and the report was written.
  bool complete = false;
};

/// Runs the whole pipeline and writes `<output_root>/<run_id>/`. Items already
/// marked done in the manifest are skipped.
RunResult run_experiment(const RunConfig& cfg, const RunOptions& options = {});

/// Scores a template by running the base setting over every fold of the first
/// dataset (run 1, first model, first temperature) and returning the mean F1.
/// Nothing is written to disk. Live configs need PPIBENCH_API_KEY.
PromptEvaluator make_pipeline_evaluator(const RunConfig& cfg, const RunOptions& options = {});

struct SweepResult {
  std::vector<std::pair<double, RunResult>> per_temperature;
  std::string table_csv;
  std::string table_markdown;
};

inline const std::vector<double> kDefaultTemperatureGrid = {0.0, 0.25, 0.5, 0.75, 1.0};

/// One full evaluation per temperature under `<run_dir>/t<T>/`, plus a
/// score-vs-temperature table in the run directory.
SweepResult sweep_temperature(const RunConfig& cfg, const std::vector<double>& temperatures,
                              const RunOptions& options = {});

/// Configuration snapshot stored in a run directory's manifest.
RunConfig config_from_run_dir(const std::string& run_dir);

/// Rebuilds the aggregates of a finished (or partial) run directory from its
/// per-item score files.
std::vector<AggregateReport> aggregates_from_run_dir(const std::string& run_dir);

// ---------------------------------------------------------------------------
// Reports.

/// 0.86486 -> "86.49%".
std::string format_percent(double value);

std::string render_markdown(const std::vector<AggregateReport>& aggregates, const MatchConfig& match);
std::string render_csv(const std::vector<AggregateReport>& aggregates);
std::string render_aggregates_json(const std::vector<AggregateReport>& aggregates, const MatchConfig& match);

/// Writes report.md, report.csv and aggregates.json into `out_dir`.
void emit_report(const std::vector<AggregateReport>& aggregates, const MatchConfig& match, const std::string& out_dir);

// ---------------------------------------------------------------------------
// Externally produced predictions.

struct ExternalOptions {
  std::string dataset = "external";
  std::string model = "external";
  MatchConfig match;
};

struct ExternalScore {
  AggregateReport report;
  /// Predictions that could not be tied to the corpus, with the reason.
  std::vector<std::string> excluded;
};

/// Scores a JSON-lines predictions file. Lines carry either
/// `{"sentence_id","variant_index","verdict"}` or
/// `{"sentence_id","protein1","protein2"[,"interaction_type"]}`, plus an
/// optional `"run"` (default 1).
ExternalScore score_external(const std::string& predictions_path, const Corpus& corpus, const FoldPlan& plan,
                             const ExternalOptions& options = {});

}  // namespace ppibench::runner
