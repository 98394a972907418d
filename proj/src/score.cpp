#include "ppibench/score.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <tuple>

namespace ppibench {

std::string MatchConfig::describe() const {
  std::string s = "names=";
  s += names == NameComparison::normalized ? "normalized" : "exact";
  s += "; orientation=";
  s += orientation == PairOrientation::unordered ? "unordered" : "ordered";
  s += "; scope=per sentence_id; dedupe_predictions=";
  s += dedupe_predictions ? "true" : "false";
  s += "; strip_set='" + normalize.strip_set + "'";
  s += "; true positives=gold positive pairs only; interaction type ignored";
  return s;
}

std::string match_name(std::string_view name, const MatchConfig& cfg) {
  if (cfg.names == NameComparison::exact) return std::string(name);
  if (auto n = normalize_name(name, cfg.normalize)) return *n;
  // Digits-only or empty after normalization: fall back to a lowercase key.
  std::string out;
  for (char c : name) {
    if (c == ' ' || c == '\t') continue;
    out.push_back(c >= 'A' && c <= 'Z' ? static_cast<char>(c - 'A' + 'a') : c);
  }
  return out;
}

ScoreTriple ScoreTriple::from_pr(double precision, double recall) {
  ScoreTriple t;
  t.precision = precision;
  t.recall = recall;
  t.f1 = precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
  return t;
}

ScoreTriple ScoreTriple::from_counts(std::size_t tp, std::size_t fp, std::size_t fn) {
  double p = tp + fp ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
  double r = tp + fn ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
  return from_pr(p, r);
}

namespace {

using PairKey = std::tuple<std::string, std::string, std::string>;

PairKey pair_key(std::string_view sentence_id, std::string_view a, std::string_view b, const MatchConfig& cfg) {
  auto x = match_name(a, cfg);
  auto y = match_name(b, cfg);
  if (cfg.orientation == PairOrientation::unordered && y < x) std::swap(x, y);
  return {std::string(sentence_id), std::move(x), std::move(y)};
}

}  // namespace

MatchCounts match_extractions(const std::vector<ExtractionRecord>& predictions,
                              const std::vector<const Sentence*>& gold, const MatchConfig& cfg) {
  MatchCounts counts;
  std::set<std::string> in_scope;
  std::set<PairKey> positives;
  for (const auto* s : gold) {
    in_scope.insert(s->sentence_id);
    for (const auto& p : s->pairs) {
      if (!p.positive) continue;
      const auto* e1 = s->find_entity(p.e1);
      const auto* e2 = s->find_entity(p.e2);
      if (e1 && e2) positives.insert(pair_key(s->sentence_id, e1->surface, e2->surface, cfg));
    }
  }

  std::set<PairKey> seen;
  std::set<PairKey> matched;
  for (const auto& r : predictions) {
    auto key = pair_key(r.sentence_id, r.protein1, r.protein2, cfg);
    if (cfg.dedupe_predictions && !seen.insert(key).second) {
      ++counts.duplicates;
      continue;
    }
    if (!in_scope.count(r.sentence_id)) {
      ++counts.foreign;
      ++counts.fp;
      continue;
    }
    if (positives.count(key) && matched.insert(key).second) {
      ++counts.tp;
    } else {
      ++counts.fp;
    }
  }
  counts.fn = positives.size() - matched.size();
  return counts;
}

ClassificationScores score_classification(const std::vector<VerdictRecord>& verdicts,
                                          const std::vector<MaskedInstance>& gold) {
  ClassificationScores out;
  std::map<std::pair<std::string, std::size_t>, bool> predicted;
  std::set<std::pair<std::string, std::size_t>> known;
  for (const auto& g : gold) known.insert({g.sentence_id, g.variant_index});

  for (const auto& v : verdicts) {
    if (!v.variant_index) {
      out.excluded.push_back(v.sentence_id + " (unresolved variant)");
      continue;
    }
    std::pair<std::string, std::size_t> key{v.sentence_id, *v.variant_index};
    if (!known.count(key)) {
      out.excluded.push_back(v.sentence_id + "#" + std::to_string(*v.variant_index));
      continue;
    }
    predicted.emplace(std::move(key), v.verdict);
  }

  for (const auto& g : gold) {
    auto it = predicted.find({g.sentence_id, g.variant_index});
    bool pred = false;
    if (it == predicted.end()) {
      ++out.missing;
    } else {
      pred = it->second;
    }
    bool truth = g.pair.positive;
    if (pred && truth) ++out.tp;
    if (pred && !truth) ++out.fp;
    if (!pred && truth) ++out.fn;
    if (!pred && !truth) ++out.tn;
  }

  out.positive = ScoreTriple::from_counts(out.tp, out.fp, out.fn);
  // FALSE as the positive class: its TP is our TN, FP is our FN, FN is our FP.
  auto negative = ScoreTriple::from_counts(out.tn, out.fn, out.fp);
  out.macro.precision = (out.positive.precision + negative.precision) / 2.0;
  out.macro.recall = (out.positive.recall + negative.recall) / 2.0;
  out.macro.f1 = (out.positive.f1 + negative.f1) / 2.0;
  return out;
}

namespace {

ScoreTriple mean_of(const std::vector<ScoreTriple>& xs) {
  ScoreTriple m;
  if (xs.empty()) return m;
  for (const auto& x : xs) {
    m.precision += x.precision;
    m.recall += x.recall;
    m.f1 += x.f1;
  }
  const double n = static_cast<double>(xs.size());
  m.precision /= n;
  m.recall /= n;
  m.f1 /= n;
  return m;
}

ScoreTriple sample_stddev(const std::vector<ScoreTriple>& xs, const ScoreTriple& mean) {
  ScoreTriple s;
  if (xs.size() < 2) return s;
  for (const auto& x : xs) {
    s.precision += (x.precision - mean.precision) * (x.precision - mean.precision);
    s.recall += (x.recall - mean.recall) * (x.recall - mean.recall);
    s.f1 += (x.f1 - mean.f1) * (x.f1 - mean.f1);
  }
  const double d = static_cast<double>(xs.size() - 1);
  s.precision = std::sqrt(s.precision / d);
  s.recall = std::sqrt(s.recall / d);
  s.f1 = std::sqrt(s.f1 / d);
  return s;
}

}  // namespace

AggregateReport aggregate(AggregateKey key, std::vector<FoldCell> cells) {
  AggregateReport report;
  report.key = std::move(key);
  std::sort(cells.begin(), cells.end(), [](const FoldCell& a, const FoldCell& b) {
    return std::tie(a.run, a.fold) < std::tie(b.run, b.fold);
  });
  report.cells = std::move(cells);

  std::map<std::size_t, std::vector<const FoldCell*>> by_run;
  for (const auto& c : report.cells) by_run[c.run].push_back(&c);

  std::vector<ScoreTriple> run_means;
  std::vector<ScoreTriple> run_macros;
  std::vector<ScoreTriple> run_pooled;
  bool all_macro = true;
  for (const auto& [run, run_cells] : by_run) {
    RunSummary summary;
    summary.run = run;
    std::vector<ScoreTriple> triples;
    std::vector<ScoreTriple> macros;
    std::size_t tp = 0, fp = 0, fn = 0;
    for (const auto* c : run_cells) {
      if (!c->triple) {
        ++summary.failed;
        continue;
      }
      triples.push_back(*c->triple);
      if (c->macro) macros.push_back(*c->macro);
      tp += c->tp;
      fp += c->fp;
      fn += c->fn;
    }
    report.failed_cells += summary.failed;
    summary.folds = triples.size();
    if (triples.empty()) {
      report.runs.push_back(summary);
      continue;
    }
    summary.mean = mean_of(triples);
    summary.pooled = ScoreTriple::from_counts(tp, fp, fn);
    if (!macros.empty() && macros.size() == triples.size()) {
      summary.macro_mean = mean_of(macros);
      run_macros.push_back(*summary.macro_mean);
    } else {
      all_macro = false;
    }
    run_means.push_back(summary.mean);
    run_pooled.push_back(summary.pooled);
    report.runs.push_back(summary);
  }

  report.usable = !run_means.empty();
  if (!report.usable) return report;
  report.grand_mean = mean_of(run_means);
  report.stddev = sample_stddev(run_means, report.grand_mean);
  report.pooled_mean = mean_of(run_pooled);
  if (all_macro && !run_macros.empty()) report.macro_grand_mean = mean_of(run_macros);
  return report;
}

}  // namespace ppibench
