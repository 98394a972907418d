#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ppibench/corpus.hpp"
#include "ppibench/parse_output.hpp"
#include "ppibench/preprocess.hpp"

namespace ppibench {

enum class NameComparison { normalized, exact };
enum class PairOrientation { unordered, ordered };

/// Matching rule for extraction scoring. Recorded in every report.
struct MatchConfig {
  NameComparison names = NameComparison::normalized;
  PairOrientation orientation = PairOrientation::unordered;
  bool dedupe_predictions = true;
  NormalizeOptions normalize;

  /// One-line description, e.g. "names=normalized; orientation=unordered; ...".
  std::string describe() const;
};

/// Comparison key of one protein name under `cfg`.
std::string match_name(std::string_view name, const MatchConfig& cfg);

struct ScoreTriple {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;

  /// 0/0 is taken as 0 for every ratio.
  static ScoreTriple from_counts(std::size_t tp, std::size_t fp, std::size_t fn);
  static ScoreTriple from_pr(double precision, double recall);

  bool operator==(const ScoreTriple&) const = default;
};

struct MatchCounts {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  /// Predictions naming a sentence outside the evaluated set (counted in fp).
  std::size_t foreign = 0;
  /// Predictions removed as duplicates before matching.
  std::size_t duplicates = 0;

  ScoreTriple triple() const { return ScoreTriple::from_counts(tp, fp, fn); }
};

/// Scores extraction predictions against the gold positives of `gold`. Gold
/// positives are keyed by (sentence_id, name pair) under `cfg`, so two gold
/// pairs with the same names count once. Interaction types are ignored.
MatchCounts match_extractions(const std::vector<ExtractionRecord>& predictions,
                              const std::vector<const Sentence*>& gold, const MatchConfig& cfg = {});

struct ClassificationScores {
  ScoreTriple positive;
  ScoreTriple macro;
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  std::size_t tn = 0;
  /// Gold instances without a verdict (scored as FALSE).
  std::size_t missing = 0;
  /// Verdicts that named no gold instance; excluded.
  std::vector<std::string> excluded;
};

/// Verdicts must carry a resolved variant_index. Missing verdicts count as FALSE;
/// a second verdict for the same instance is ignored.
ClassificationScores score_classification(const std::vector<VerdictRecord>& verdicts,
                                          const std::vector<MaskedInstance>& gold);

/// One (run, fold) cell. `counts` empty marks a failed cell.
struct FoldCell {
  std::size_t run = 1;
  std::size_t fold = 0;
  std::optional<ScoreTriple> triple;
  std::optional<ScoreTriple> macro;
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
};

struct RunSummary {
  std::size_t run = 1;
  ScoreTriple mean;
  std::optional<ScoreTriple> macro_mean;
  /// Counts pooled over the run's folds.
  ScoreTriple pooled;
  std::size_t folds = 0;
  std::size_t failed = 0;
};

struct AggregateKey {
  std::string dataset;
  std::string model;
  std::string setting;
  double temperature = 0.0;
  /// "internal" or "external".
  std::string source = "internal";

  bool operator==(const AggregateKey&) const = default;
};

struct AggregateReport {
  AggregateKey key;
  std::vector<FoldCell> cells;
  std::vector<RunSummary> runs;
  ScoreTriple grand_mean;
  /// Sample standard deviation of the run means (0 with a single run).
  ScoreTriple stddev;
  std::optional<ScoreTriple> macro_grand_mean;
  /// Mean of the per-run pooled (micro) triples.
  ScoreTriple pooled_mean;
  std::size_t failed_cells = 0;
  bool usable = false;
};

/// Fold means per run, then the mean and sample deviation over runs.
AggregateReport aggregate(AggregateKey key, std::vector<FoldCell> cells);

}  // namespace ppibench
