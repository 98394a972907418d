// Acceptance checks. Prints one PASS/FAIL/SKIP line per criterion and exits
// non-zero when any criterion fails.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include "ppibench/corpus.hpp"
#include "ppibench/folds.hpp"
#include "ppibench/llmclient.hpp"
#include "ppibench/preprocess.hpp"
#include "ppibench/prompt.hpp"
#include "ppibench/rng.hpp"
#include "ppibench/runner.hpp"
#include "ppibench/score.hpp"
#include "support/golden.hpp"
#include "support/oracle.hpp"
#include "support/synth.hpp"

using namespace ppibench;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  enum Kind { pass, fail, skip } kind = pass;
  std::string detail;
};

Verdict ok(std::string d) { return {Verdict::pass, std::move(d)}; }
Verdict bad(std::string d) { return {Verdict::fail, std::move(d)}; }
Verdict when(bool cond, std::string d) { return {cond ? Verdict::pass : Verdict::fail, std::move(d)}; }

std::string fmt(const char* f, double a, double b = 0, double c = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::map<std::string, std::string> tree(const fs::path& dir) {
  std::map<std::string, std::string> out;
  if (!fs::exists(dir)) return out;
  for (const auto& e : fs::directory_iterator(dir)) out[e.path().filename().string()] = slurp(e.path());
  return out;
}

runner::RunConfig fixture_config(const std::string& tag) {
  auto cfg = runner::load_config(testing::data_path("sample_config.json"));
  cfg.output_root = testing::temp_dir(tag);
  return cfg;
}

// ---------------------------------------------------------------------------

Verdict replay_perfect() {
  auto cfg = fixture_config("acc-perfect");
  cfg.backend.corruption = {};
  cfg.k = 3;
  cfg.runs = 2;
  cfg.settings.assign(kAllSettings.begin(), kAllSettings.end());

  auto corpus = load_corpus_file(cfg.datasets[0].corpus_path).corpus;
  auto stats = corpus_stats(corpus);
  if (corpus.documents().size() < 3 || stats.n_sentences < 10 || stats.n_total_pairs < 15) {
    return bad("fixture corpus is too small");
  }

  const auto start = std::chrono::steady_clock::now();
  auto result = runner::run_experiment(cfg);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (!result.complete) return bad("run did not complete");
  std::size_t triples = 0;
  for (const auto& a : result.aggregates) {
    std::vector<ScoreTriple> reported{a.grand_mean};
    if (a.macro_grand_mean) reported.push_back(*a.macro_grand_mean);
    for (const auto& t : reported) {
      ++triples;
      for (double v : {t.precision, t.recall, t.f1}) {
        if (runner::format_percent(v) != "100.00%") {
          return bad(a.key.model + "/" + a.key.setting + " reports " + runner::format_percent(v));
        }
      }
    }
  }
  if (result.aggregates.size() != cfg.models.size() * 6) return bad("missing aggregates");
  return when(secs < 10.0, std::to_string(triples) + " triples at 100.00%, " + std::to_string(result.total_items) +
                               " items in " + fmt("%.2f s", secs));
}

// ---------------------------------------------------------------------------

/// Gold positives of a sentence grouped by unordered normalized name key.
std::map<std::pair<std::string, std::string>, std::size_t> positive_keys(const Sentence& s, const MatchConfig& cfg) {
  std::map<std::pair<std::string, std::string>, std::size_t> keys;
  for (const auto& p : s.pairs) {
    if (!p.positive) continue;
    auto a = match_name(s.find_entity(p.e1)->surface, cfg);
    auto b = match_name(s.find_entity(p.e2)->surface, cfg);
    if (b < a) std::swap(a, b);
    ++keys[{a, b}];
  }
  return keys;
}

Verdict corruption_statistics() {
  const double p_drop = 0.2;
  const double p_spur = 0.1;
  auto corpus = testing::synth_corpus_with_positives(2024, 240, 80);
  auto stats = corpus_stats(corpus);
  if (stats.n_positive < 200) return bad("synthetic corpus has too few positives");

  auto dir = fs::path(testing::temp_dir("acc-corruption"));
  {
    std::ofstream out(dir / "corpus.jsonl");
    write_corpus(out, corpus);
  }
  runner::RunConfig cfg;
  cfg.datasets = {{"synth", (dir / "corpus.jsonl").string()}};
  cfg.models = {{"replay-model", 8192, {0.0, 1.0}}};
  cfg.settings = {PromptSetting::base_10fold};
  cfg.k = 10;
  cfg.runs = 10;
  cfg.seed = 7;
  cfg.backend.corruption.p_drop = p_drop;
  cfg.backend.corruption.p_spur = p_spur;
  cfg.output_root = (dir / "runs").string();
  cfg.workers = 4;
  auto result = runner::run_experiment(cfg);
  if (!result.complete || result.aggregates.size() != 1) return bad("run did not complete");
  const auto& agg = result.aggregates[0];

  // Exact precision: replay the keyed decisions independently and score with
  // the brute-force matcher.
  const auto dictionaries = build_dictionaries(corpus);
  const auto& names = dictionaries.original.names();
  const auto plan = make_document_folds(corpus, cfg.k, cfg.fold_seed(1));
  double precision_sum = 0.0;
  for (std::size_t run = 1; run <= cfg.runs; ++run) {
    const auto seed = llm::replay_seed_for_run(cfg.replay_seed(), run);
    double fold_sum = 0.0;
    for (std::size_t f = 0; f < cfg.k; ++f) {
      auto sentences = plan.sentences(corpus, f);
      std::vector<ExtractionRecord> preds;
      for (const auto* s : sentences) {
        for (std::size_t i = 0; i < s->pairs.size(); ++i) {
          const auto& p = s->pairs[i];
          if (!p.positive) continue;
          if (rng::keyed_unit(seed, s->sentence_id, i, llm::replay_stream::drop) < p_drop) continue;
          preds.push_back({s->sentence_id, s->find_entity(p.e1)->surface, s->find_entity(p.e2)->surface, ""});
        }
        if (rng::keyed_unit(seed, s->sentence_id, 0, llm::replay_stream::spurious) < p_spur) {
          auto a = rng::keyed_index(seed, s->sentence_id, 0, llm::replay_stream::spurious_first, names.size());
          auto b = rng::keyed_index(seed, s->sentence_id, 0, llm::replay_stream::spurious_second, names.size() - 1);
          if (b >= a) ++b;
          preds.push_back({s->sentence_id, names[a], names[b], ""});
        }
      }
      auto c = testing::brute_force_match(preds, sentences, cfg.match);
      fold_sum += c.tp + c.fp ? static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp) : 0.0;
    }
    precision_sum += fold_sum / static_cast<double>(cfg.k);
  }
  const double oracle_precision = precision_sum / static_cast<double>(cfg.runs);
  const double precision_gap = std::fabs(oracle_precision - agg.grand_mean.precision);

  // Recall expectation: a gold key with m positive pairs survives unless all m
  // rows drop; a dropped key can still be hit by a spurious pair.
  const double n_names = static_cast<double>(names.size());
  std::vector<std::string> name_keys;
  for (const auto& n : names) name_keys.push_back(match_name(n, cfg.match));
  double mean_sum = 0.0;
  double var_sum = 0.0;
  for (std::size_t f = 0; f < cfg.k; ++f) {
    double n_f = 0.0;
    double expected_tp = 0.0;
    double var_tp = 0.0;
    for (const auto* s : plan.sentences(corpus, f)) {
      for (const auto& [key, m] : positive_keys(*s, cfg.match)) {
        double dropped = std::pow(p_drop, static_cast<double>(m));
        double hits = 0.0;
        for (std::size_t a = 0; a < names.size(); ++a) {
          for (std::size_t b = 0; b < names.size(); ++b) {
            if (a == b) continue;
            auto x = name_keys[a];
            auto y = name_keys[b];
            if (y < x) std::swap(x, y);
            if (std::make_pair(x, y) == key) hits += 1.0;
          }
        }
        double q = 1.0 - dropped + dropped * p_spur * hits / (n_names * (n_names - 1.0));
        n_f += 1.0;
        expected_tp += q;
        var_tp += q * (1.0 - q);
      }
    }
    mean_sum += expected_tp / n_f;
    var_sum += var_tp / (n_f * n_f);
  }
  const double k = static_cast<double>(cfg.k);
  const double expected_recall = mean_sum / k;
  const double sigma = std::sqrt(var_sum / (k * k) / static_cast<double>(cfg.runs));
  const double z = (agg.grand_mean.recall - expected_recall) / sigma;

  std::string detail = std::to_string(stats.n_positive) + " positives, R=10: recall " +
                       fmt("%.4f vs expected %.4f (sigma %.4f", agg.grand_mean.recall, expected_recall, sigma) +
                       fmt(", z=%.2f); precision %.12f vs oracle %.12f", z, agg.grand_mean.precision, oracle_precision);
  return when(std::fabs(z) <= 3.0 && precision_gap <= 1e-9, detail);
}

// ---------------------------------------------------------------------------

Verdict scorer_oracle() {
  std::size_t agree = 0;
  const std::size_t trials = 1000;
  for (std::uint64_t seed = 0; seed < trials; ++seed) {
    auto trial = testing::random_match_trial(1000003 * seed + 11);
    auto gold = trial.corpus.sentences();
    auto got = match_extractions(trial.predictions, gold, trial.cfg);
    auto want = testing::brute_force_match(trial.predictions, gold, trial.cfg);
    if (got.tp == want.tp && got.fp == want.fp && got.fn == want.fn) ++agree;
  }
  return when(agree == trials, std::to_string(agree) + "/" + std::to_string(trials) + " trials agree");
}

// ---------------------------------------------------------------------------

Verdict optimizer_equivalence() {
  const std::array<std::size_t, kSectionCount> counts{8, 4, 6, 5, 5, 3, 2};
  VariationLibrary lib;
  std::map<std::string, double> weight;
  std::mt19937_64 gen(31);
  std::uniform_real_distribution<double> w(0.0, 1.0);
  for (std::size_t s = 0; s < kSectionCount; ++s) {
    for (std::size_t v = 0; v < counts[s]; ++v) {
      std::string text = "section " + std::to_string(s + 1) + " variation " + std::to_string(v);
      lib.sections[s].push_back({"v" + std::to_string(v), text});
      weight[text] = w(gen);
    }
  }
  std::size_t calls = 0;
  PromptEvaluator evaluator = [&](const PromptTemplate& t) {
    ++calls;
    double score = 0.0;
    for (const auto& s : t.sections) score += weight.at(s);
    return score;
  };
  auto result = optimize_prompt(lib, evaluator);

  // Per-section argmax with earlier sections fixed at their winners.
  PromptTemplate current = lib.base_template();
  std::vector<PromptTemplate> bests;
  std::array<std::size_t, kSectionCount> winners{};
  for (std::size_t s = 0; s < kSectionCount; ++s) {
    double top = -1.0;
    PromptTemplate best_t = current;
    for (std::size_t v = 0; v < counts[s]; ++v) {
      auto cand = current;
      cand.sections[s] = lib.sections[s][v].text;
      double score = 0.0;
      for (const auto& x : cand.sections) score += weight.at(x);
      if (score > top) {
        top = score;
        winners[s] = v;
        best_t = cand;
      }
    }
    current = best_t;
    bests.push_back(current);
  }
  double final_top = -1.0;
  PromptTemplate final_t;
  for (const auto& b : bests) {
    double score = 0.0;
    for (const auto& x : b.sections) score += weight.at(x);
    if (score > final_top) {
      final_top = score;
      final_t = b;
    }
  }

  // Exhaustive search over every combination.
  double global = -1.0;
  std::size_t combos = 0;
  std::array<std::size_t, kSectionCount> idx{};
  while (true) {
    double score = 0.0;
    for (std::size_t s = 0; s < kSectionCount; ++s) score += weight.at(lib.sections[s][idx[s]].text);
    global = std::max(global, score);
    ++combos;
    std::size_t s = 0;
    while (s < kSectionCount && ++idx[s] == counts[s]) idx[s++] = 0;
    if (s == kSectionCount) break;
  }

  std::size_t expected_audit = kSectionCount;
  for (auto c : counts) expected_audit += c;
  bool same = result.winners == winners && result.final_template == final_t && result.final_score == final_top &&
              std::fabs(result.final_score - global) < 1e-12 && result.audit.size() == expected_audit &&
              calls == expected_audit;
  return when(same, "audit " + std::to_string(result.audit.size()) + " = " + std::to_string(expected_audit) +
                        ", winners match, final equals the best of " + std::to_string(combos) + " combinations");
}

// ---------------------------------------------------------------------------

Verdict parser_golden() {
  auto outcomes = testing::run_parser_golden();
  std::size_t passed = 0;
  std::string first_failure;
  for (const auto& o : outcomes) {
    if (o.passed) {
      ++passed;
    } else if (first_failure.empty()) {
      first_failure = "; first failure: " + o.name + ": " + o.detail;
    }
  }
  return when(outcomes.size() >= 20 && passed == outcomes.size(),
              std::to_string(passed) + "/" + std::to_string(outcomes.size()) + " golden cases" + first_failure);
}

// ---------------------------------------------------------------------------

Verdict normalization() {
  const std::vector<std::pair<std::string, std::optional<std::string>>> vectors = {
      {"sigma(X)", "sigmax"}, {"sigma 28", "sigma28"}, {"PBP4*", "pbp4*"},       {"123", std::nullopt},
      {"  42 ", std::nullopt}, {"Kin C", "kinc"},      {"SpoIIAA-P", "spoiiaa-p"}, {"PhoP~P", "phop~p"}};
  for (const auto& [in, want] : vectors) {
    if (normalize_name(in) != want) return bad("vector '" + in + "' normalizes differently");
  }
  std::mt19937_64 gen(99);
  const std::string alphabet = "aZ09 ()*-~\t_.,σ";
  std::size_t checked = 0;
  for (int i = 0; i < 10000; ++i) {
    std::string s;
    auto len = gen() % 16;
    for (std::size_t j = 0; j < len; ++j) s.push_back(alphabet[gen() % alphabet.size()]);
    auto once = normalize_name(s);
    if (!once) continue;
    ++checked;
    if (normalize_name(*once) != once) return bad("not idempotent on '" + s + "'");
  }
  return ok(std::to_string(vectors.size()) + " vectors; idempotent on 10000 random strings (" +
            std::to_string(checked) + " non-empty)");
}

// ---------------------------------------------------------------------------

Verdict gold_corpora() {
  const char* env = std::getenv("PPIBENCH_GOLD_DIR");
  if (env == nullptr || *env == '\0') return {Verdict::skip, "PPIBENCH_GOLD_DIR not set"};
  struct Target {
    const char* name;
    std::size_t sentences, positive, negative, total;
  };
  const Target targets[] = {{"LLL", 77, 164, 166, 330}, {"IEPA", 486, 335, 482, 817}, {"HPRD50", 145, 163, 270, 433}};
  std::string detail;
  bool any = false;
  for (const auto& t : targets) {
    auto path = fs::path(env) / (std::string(t.name) + ".jsonl");
    if (!fs::exists(path)) {
      detail += std::string(t.name) + " absent; ";
      continue;
    }
    any = true;
    auto corpus = load_corpus_file(path.string(), {false}).corpus;
    auto s = corpus_stats(corpus);
    if (s.n_sentences != t.sentences || s.n_positive != t.positive || s.n_negative != t.negative ||
        s.n_total_pairs != t.total) {
      return bad(std::string(t.name) + " stats " + std::to_string(s.n_sentences) + "/" + std::to_string(s.n_positive) +
                 "/" + std::to_string(s.n_negative) + "/" + std::to_string(s.n_total_pairs));
    }
    detail += std::string(t.name) + " stats match; ";
    if (std::string(t.name) == "LLL") {
      auto d = build_dictionaries(corpus);
      auto o = d.original.stats();
      auto n = d.normalized.stats();
      auto r2 = [](double v) { return std::round(v * 100.0) / 100.0; };
      bool match = o.unique_count == 122 && n.unique_count == 103 && r2(o.avg_len) == 4.92 && r2(n.avg_len) == 4.58 &&
                   o.max_len == 9 && n.max_len == 8 && o.min_len == 3 && n.min_len == 3;
      if (!match) {
        return bad("LLL dictionaries " + std::to_string(o.unique_count) + "/" + std::to_string(n.unique_count) +
                   fmt(", avg %.2f/%.2f", o.avg_len, n.avg_len));
      }
      detail += "LLL dictionaries match; ";
    }
  }
  if (!any) return {Verdict::skip, "no gold corpora in PPIBENCH_GOLD_DIR"};
  return ok(detail);
}

// ---------------------------------------------------------------------------

Verdict determinism() {
  auto run_with = [](const std::string& id, std::size_t workers) {
    auto cfg = fixture_config("acc-determinism-" + id);
    cfg.run_id = "same";
    cfg.workers = workers;
    return runner::run_experiment(cfg);
  };
  auto a = run_with("a", 1);
  auto b = run_with("b", 1);
  auto c = run_with("c", 4);
  std::size_t files = 0;
  for (const auto* other : {&b, &c}) {
    for (const char* sub : {"parsed", "scores"}) {
      auto x = tree(fs::path(a.run_dir) / sub);
      auto y = tree(fs::path(other->run_dir) / sub);
      if (x.empty() || x != y) return bad(std::string(sub) + " differ");
      files += x.size();
    }
    for (const char* f : {"report.md", "report.csv", "aggregates.json"}) {
      if (slurp(fs::path(a.run_dir) / f) != slurp(fs::path(other->run_dir) / f)) return bad(std::string(f) + " differs");
    }
  }
  return ok(std::to_string(files) + " parsed/score files byte-identical across runs and worker counts 1/4");
}

// ---------------------------------------------------------------------------

std::size_t oracle_cost(const ChunkUnit& u, std::size_t allowance) {
  std::size_t bytes = u.sentence_id.size() + 1 + u.text.size() + 1;
  return (bytes + 3) / 4 + allowance;
}

Verdict invariants() {
  std::mt19937_64 gen(500);
  std::size_t folds_checked = 0, partitions_checked = 0, chunks_checked = 0;
  for (std::uint64_t trial = 0; trial < 500; ++trial) {
    testing::SynthOptions o;
    o.documents = 2 + gen() % 30;
    o.max_sentences = 1 + gen() % 5;
    o.max_entities = 2 + gen() % 4;
    o.annotate_rate = 0.5 + 0.5 * static_cast<double>(gen() % 100) / 100.0;
    auto corpus = testing::synth_corpus(trial * 7919 + 3, o);
    const std::size_t k = 2 + gen() % std::min<std::size_t>(9, o.documents - 1);
    auto plan = make_document_folds(corpus, k, gen());

    // Document partition.
    std::vector<std::size_t> fold_docs(k, 0);
    std::set<std::string> seen_docs;
    for (std::size_t f = 0; f < k; ++f) {
      for (const auto* d : plan.documents(corpus, f)) {
        if (!seen_docs.insert(d->doc_id).second) return bad("document in two folds");
        ++fold_docs[f];
      }
      for (const auto* s : plan.sentences(corpus, f)) {
        if (plan.assignment.at(corpus.document_of(s->sentence_id)->doc_id) != f) return bad("sentence straddles folds");
      }
    }
    if (seen_docs.size() != corpus.documents().size()) return bad("document missing from folds");
    auto [lo, hi] = std::minmax_element(fold_docs.begin(), fold_docs.end());
    if (*hi - *lo > 1 || *lo == 0) return bad("unbalanced folds");
    ++folds_checked;

    // Duplicate-free partitions.
    auto instances = instances_for(corpus);
    auto parts = make_duplicate_free_partitions(instances);
    std::map<std::string, std::size_t> per_sentence;
    for (const auto& m : instances) ++per_sentence[m.sentence_id];
    std::size_t max_pairs = 0;
    for (const auto& [_, n] : per_sentence) max_pairs = std::max(max_pairs, n);
    if (parts.partitions.size() != max_pairs) return bad("partition count differs from max pairs per sentence");
    std::vector<int> used(instances.size(), 0);
    for (const auto& part : parts.partitions) {
      std::set<std::string> sids;
      for (auto i : part) {
        ++used[i];
        if (!sids.insert(instances[i].sentence_id).second) return bad("two instances of one sentence in a partition");
      }
    }
    for (int u : used) {
      if (u != 1) return bad("instance not covered exactly once");
    }
    ++partitions_checked;

    // Chunk budget.
    for (std::size_t f = 0; f < k; ++f) {
      std::vector<ChunkUnit> units;
      std::size_t max_cost = 0;
      ChunkBudget budget;
      budget.per_sentence_output_allowance = gen() % 40;
      budget.preamble_tokens = gen() % 200;
      budget.safety_margin = static_cast<double>(gen() % 30) / 100.0;
      for (const auto* s : plan.sentences(corpus, f)) {
        units.push_back({s->sentence_id, s->text});
        max_cost = std::max(max_cost, oracle_cost(units.back(), budget.per_sentence_output_allowance));
      }
      std::size_t window = budget.preamble_tokens + max_cost;
      while (window - static_cast<std::size_t>(std::ceil(window * budget.safety_margin)) <
             budget.preamble_tokens + max_cost) {
        ++window;
      }
      budget.context_window = window + gen() % (3 * max_cost + 1);
      const std::size_t usable =
          budget.context_window - static_cast<std::size_t>(std::ceil(budget.context_window * budget.safety_margin));
      auto chunks = split_fold_by_budget(f, units, budget);
      std::size_t next = 0;
      for (std::size_t c = 0; c < chunks.size(); ++c) {
        std::size_t cost = budget.preamble_tokens;
        for (auto i : chunks[c].unit_indices) {
          if (i != next++) return bad("chunks reorder or skip units");
          cost += oracle_cost(units[i], budget.per_sentence_output_allowance);
        }
        if (cost > usable || cost != chunks[c].est_tokens) return bad("chunk exceeds the budget");
        if (chunks[c].unit_indices.empty()) return bad("empty chunk");
        if (c + 1 < chunks.size() &&
            cost + oracle_cost(units[chunks[c + 1].unit_indices.front()], budget.per_sentence_output_allowance) <=
                usable) {
          return bad("chunk closed early");
        }
        ++chunks_checked;
      }
      if (next != units.size()) return bad("chunks drop units");
    }
  }
  return ok(std::to_string(folds_checked) + " fold plans, " + std::to_string(partitions_checked) + " partitionings, " +
            std::to_string(chunks_checked) + " chunks");
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria = {
      {"replay-perfect pipeline", replay_perfect},
      {"corruption statistics", corruption_statistics},
      {"scorer oracle equivalence", scorer_oracle},
      {"greedy optimizer equivalence", optimizer_equivalence},
      {"parser robustness", parser_golden},
      {"normalization vectors", normalization},
      {"gold corpus statistics", gold_corpora},
      {"determinism", determinism},
      {"fold/partition/chunk invariants", invariants},
  };
  int failures = 0;
  for (const auto& [name, check] : criteria) {
    Verdict v;
    try {
      v = check();
    } catch (const std::exception& e) {
      v = bad(std::string("exception: ") + e.what());
    }
    const char* tag = v.kind == Verdict::pass ? "PASS" : v.kind == Verdict::skip ? "SKIP" : "FAIL";
    if (v.kind == Verdict::fail) ++failures;
    std::printf("%s  %-32s %s\n", tag, name.c_str(), v.detail.c_str());
  }
  std::fflush(stdout);
  return failures == 0 ? 0 : 1;
}
