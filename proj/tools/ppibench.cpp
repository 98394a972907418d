// Command-line front end for the PPI extraction benchmark.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>

#include "ppibench/corpus.hpp"
#include "ppibench/folds.hpp"
#include "ppibench/preprocess.hpp"
#include "ppibench/prompt.hpp"
#include "ppibench/runner.hpp"

namespace fs = std::filesystem;
using namespace ppibench;

namespace {

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> workers;
  std::string backend;
};

runner::RunConfig load_with_overrides(const Globals& g) {
  if (g.config.empty()) throw ConfigError("--config is required");
  auto cfg = runner::load_config(g.config);
  if (g.seed) cfg.seed = *g.seed;
  if (g.workers) cfg.workers = *g.workers;
  if (g.backend == "replay") {
    cfg.backend.kind = runner::BackendKind::replay;
  } else if (g.backend == "live") {
    cfg.backend.kind = runner::BackendKind::live;
  } else if (!g.backend.empty()) {
    throw ConfigError("--backend must be 'replay' or 'live'");
  }
  return cfg;
}

Corpus load_corpus_arg(const std::string& path, bool lenient) {
  LoadOptions options;
  options.strict = !lenient;
  auto loaded = load_corpus_file(path, options);
  for (const auto& w : loaded.warnings) std::cerr << "warning: " << w << "\n";
  return std::move(loaded.corpus);
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

std::string csv_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

/// Evaluator backed by a precomputed `section,variation,score` table. Phase-1
/// calls arrive section by section in variation order; phase-2 calls are
/// identified by the section text of the template.
PromptEvaluator table_evaluator(const VariationLibrary& library, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read score table " + path);
  auto table = std::make_shared<std::map<std::pair<std::size_t, std::size_t>, double>>();
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line.rfind("section", 0) == 0) continue;
    auto fields = split_csv_row(line);
    if (!fields || fields->size() != 3) throw ConfigError(path + ":" + std::to_string(line_no) + ": expected 3 fields");
    std::size_t section = std::stoul((*fields)[0]);
    std::size_t variation = 0;
    if (auto found = library.find(section, (*fields)[1])) {
      variation = *found;
    } else {
      variation = std::stoul((*fields)[1]);
    }
    (*table)[{section, variation}] = std::stod((*fields)[2]);
  }

  auto calls = std::make_shared<std::size_t>(0);
  auto counts = library.counts();
  std::size_t phase1 = 0;
  for (auto c : counts) phase1 += c;
  return [=, &library](const PromptTemplate& tmpl) {
    std::size_t n = (*calls)++;
    std::size_t section = 0;
    std::size_t variation = 0;
    if (n < phase1) {
      while (n >= counts[section]) n -= counts[section++];
      variation = n;
    } else {
      section = n - phase1;
      const auto& options = library.sections[section];
      for (std::size_t j = 0; j < options.size(); ++j) {
        if (options[j].text == tmpl.sections[section]) variation = j;
      }
    }
    auto it = table->find({section + 1, variation});
    if (it == table->end()) {
      throw ConfigError("score table has no entry for section " + std::to_string(section + 1) + ", variation " +
                        std::to_string(variation));
    }
    return it->second;
  };
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Benchmark harness for LLM protein-protein interaction extraction"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config, "Run configuration (JSON)");
  app.add_option("--seed", g.seed, "Override the master seed");
  app.add_option("--workers", g.workers, "Override the worker count");
  app.add_option("--backend", g.backend, "Override the backend kind")->check(CLI::IsMember({"replay", "live"}));

  // ingest
  auto* ingest = app.add_subcommand("ingest", "Validate a corpus and print its statistics");
  std::string corpus_path;
  bool lenient = false;
  std::string ingest_out;
  ingest->add_option("--corpus", corpus_path, "Corpus file (JSON lines)")->required();
  ingest->add_flag("--lenient", lenient, "Ignore unknown fields with a warning");
  ingest->add_option("--out", ingest_out, "Write the canonical form of the corpus here");

  // dict
  auto* dict = app.add_subcommand("dict", "Export the original and normalized protein dictionaries");
  std::string dict_out = ".";
  dict->add_option("--corpus", corpus_path, "Corpus file")->required();
  dict->add_option("--out-dir", dict_out, "Output directory");
  dict->add_flag("--lenient", lenient, "Ignore unknown fields with a warning");

  // folds
  auto* folds = app.add_subcommand("folds", "Write a document-level fold plan and chunk manifest");
  std::size_t k = 10;
  std::uint64_t fold_seed = 42;
  std::string folds_out = "folds.csv";
  std::string chunks_out;
  std::size_t context_window = 4096;
  std::string chunk_setting = "base";
  folds->add_option("--corpus", corpus_path, "Corpus file")->required();
  folds->add_option("-k,--k", k, "Number of folds");
  folds->add_option("--fold-seed", fold_seed, "Shuffle seed");
  folds->add_option("--out", folds_out, "Fold plan CSV");
  folds->add_option("--chunks", chunks_out, "Also write a chunk manifest CSV");
  folds->add_option("--context-window", context_window, "Context window used for chunking");
  folds->add_option("--setting", chunk_setting, "Setting whose preamble is budgeted");

  // prompt optimize
  auto* prompt = app.add_subcommand("prompt", "Prompt utilities");
  prompt->require_subcommand(1);
  auto* optimize = prompt->add_subcommand("optimize", "Greedy section-wise prompt search");
  std::string library_path;
  std::string score_table;
  std::string audit_out = "prompt_audit.csv";
  std::string template_out;
  optimize->add_option("--library", library_path, "Variation library (default: bundled)");
  optimize->add_option("--scores", score_table, "Precomputed section,variation,score table");
  optimize->add_option("--audit", audit_out, "Audit trail CSV");
  optimize->add_option("--template-out", template_out, "Write the selected template here");

  auto* show = prompt->add_subcommand("show", "Print an assembled prompt preamble");
  std::string show_setting = "base";
  std::string show_template = "P60_S3";
  show->add_option("--setting", show_setting, "Setting id");
  show->add_option("--template", show_template, "Named section winner");
  show->add_option("--corpus", corpus_path, "Corpus (needed for dictionary settings)");

  // run
  auto* run = app.add_subcommand("run", "Execute the configured evaluation");
  std::optional<std::size_t> stop_after;
  run->add_option("--stop-after", stop_after, "Stop after this many work items");
  bool validate_only = false;
  run->add_flag("--validate-only", validate_only, "Only run the pre-flight checks");

  // sweep-temp
  auto* sweep = app.add_subcommand("sweep-temp", "Repeat the evaluation over a temperature grid");
  std::vector<double> grid = runner::kDefaultTemperatureGrid;
  sweep->add_option("--grid", grid, "Temperatures")->delimiter(',');

  // score-external
  auto* external = app.add_subcommand("score-external", "Score externally produced predictions");
  std::string predictions;
  std::string plan_path;
  std::string ext_model = "external";
  std::string ext_dataset = "external";
  std::string ext_out = ".";
  external->add_option("--predictions", predictions, "Predictions (JSON lines)")->required();
  external->add_option("--corpus", corpus_path, "Corpus file")->required();
  external->add_option("--folds", plan_path, "Fold plan CSV")->required();
  external->add_option("--model", ext_model, "Row label");
  external->add_option("--dataset", ext_dataset, "Dataset label");
  external->add_option("--out-dir", ext_out, "Report directory");

  // report
  auto* report = app.add_subcommand("report", "Rebuild the report of a run directory");
  std::string run_dir;
  std::string report_out;
  report->add_option("--run-dir", run_dir, "Run directory")->required();
  report->add_option("--out-dir", report_out, "Output directory (default: the run directory)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*ingest) {
      auto corpus = load_corpus_arg(corpus_path, lenient);
      auto stats = corpus_stats(corpus);
      std::cout << "documents: " << corpus.documents().size() << "\n"
                << "sentences: " << stats.n_sentences << "\n"
                << "positive pairs: " << stats.n_positive << "\n"
                << "negative pairs: " << stats.n_negative << "\n"
                << "total pairs: " << stats.n_total_pairs << "\n"
                << "negative/positive: " << (stats.ratio ? csv_number(*stats.ratio) : "n/a") << "\n";
      if (!ingest_out.empty()) write_text(ingest_out, write_corpus_string(corpus));
    } else if (*dict) {
      auto corpus = load_corpus_arg(corpus_path, lenient);
      auto dicts = build_dictionaries(corpus);
      for (const auto* d : {&dicts.original, &dicts.normalized}) {
        std::string stem = d->kind() == DictionaryKind::original ? "dictionary_original" : "dictionary_normalized";
        std::ostringstream list;
        export_dictionary(list, *d);
        write_text(fs::path(dict_out) / (stem + ".txt"), list.str());
        write_text(fs::path(dict_out) / (stem + ".stats.json"), dictionary_stats_json(*d) + "\n");
        auto s = d->stats();
        std::cout << stem << ": " << s.unique_count << " names, avg length " << csv_number(s.avg_len) << "\n";
      }
    } else if (*folds) {
      auto corpus = load_corpus_arg(corpus_path, false);
      auto plan = make_document_folds(corpus, k, fold_seed);
      std::ostringstream csv;
      write_fold_plan(csv, plan, corpus);
      write_text(folds_out, csv.str());
      if (!chunks_out.empty()) {
        auto setting = parse_setting(chunk_setting);
        if (!setting || is_masked(*setting)) throw ConfigError("--setting must be an extraction setting");
        auto dicts = build_dictionaries(corpus);
        const ProteinDictionary* d = !uses_dictionary(*setting) ? nullptr
                                     : *setting == PromptSetting::with_normalized_dictionary ? &dicts.normalized
                                                                                              : &dicts.original;
        ChunkBudget budget;
        budget.context_window = context_window;
        budget.preamble_tokens =
            estimate_tokens(extraction_preamble(*setting, canned_template(default_variation_library(), "P60_S3"), d) + "\n");
        std::vector<FoldChunk> all;
        for (std::size_t f = 0; f < plan.k; ++f) {
          std::vector<ChunkUnit> units;
          for (const auto* s : plan.sentences(corpus, f)) units.push_back({s->sentence_id, s->text});
          auto chunks = split_fold_by_budget(f, units, budget);
          all.insert(all.end(), chunks.begin(), chunks.end());
        }
        std::ostringstream manifest;
        write_chunk_manifest(manifest, all);
        write_text(chunks_out, manifest.str());
      }
      std::cout << "wrote " << folds_out << "\n";
    } else if (*optimize) {
      VariationLibrary library =
          library_path.empty() ? default_variation_library() : load_variation_library_file(library_path);
      PromptEvaluator evaluator;
      if (!score_table.empty()) {
        evaluator = table_evaluator(library, score_table);
      } else {
        evaluator = runner::make_pipeline_evaluator(load_with_overrides(g));
      }
      auto result = optimize_prompt(library, evaluator);
      std::string audit = "phase,section,variation,name,score\n";
      for (const auto& e : result.audit) {
        audit += std::to_string(e.phase) + "," + std::to_string(e.section) + "," + std::to_string(e.variation) + "," +
                 csv_field(library.sections[e.section - 1][e.variation].name) + "," + csv_number(e.score) + "\n";
      }
      write_text(audit_out, audit);
      if (!template_out.empty()) write_text(template_out, result.final_template.render() + "\n");
      std::cout << "evaluations: " << result.audit.size() << "\n"
                << "selected: section " << result.final_section << " winner, score " << csv_number(result.final_score)
                << "\n";
    } else if (*show) {
      auto setting = parse_setting(show_setting);
      if (!setting) throw ConfigError("unknown setting '" + show_setting + "'");
      if (is_masked(*setting)) {
        std::cout << masked_preamble(*setting, MaskedWording::defaults()) << "\n";
      } else {
        std::optional<DictionaryPair> dicts;
        const ProteinDictionary* d = nullptr;
        if (uses_dictionary(*setting)) {
          if (corpus_path.empty()) throw ConfigError("--corpus is required for dictionary settings");
          dicts = build_dictionaries(load_corpus_arg(corpus_path, false));
          d = *setting == PromptSetting::with_normalized_dictionary ? &dicts->normalized : &dicts->original;
        }
        std::cout << extraction_preamble(*setting, canned_template(default_variation_library(), show_template), d)
                  << "\n";
      }
    } else if (*run) {
      auto cfg = load_with_overrides(g);
      cfg.validate();
      if (validate_only) {
        std::cout << "configuration OK\n";
        return 0;
      }
      runner::RunOptions options;
      options.stop_after = stop_after;
      auto result = runner::run_experiment(cfg, options);
      std::cout << "run directory: " << result.run_dir << "\n"
                << "items: " << result.total_items << " (executed " << result.executed << ", skipped "
                << result.skipped << ", failed " << result.failed << ")\n";
      if (!result.complete) {
        std::cout << "incomplete; rerun the same command to resume\n";
        return 3;
      }
      std::cout << "report: " << (fs::path(result.run_dir) / "report.md").string() << "\n";
      return result.failed ? 2 : 0;
    } else if (*sweep) {
      auto cfg = load_with_overrides(g);
      auto result = runner::sweep_temperature(cfg, grid);
      std::cout << result.table_markdown;
    } else if (*external) {
      auto corpus = load_corpus_arg(corpus_path, false);
      std::ifstream plan_in(plan_path);
      if (!plan_in) throw ConfigError("cannot read fold plan " + plan_path);
      auto plan = read_fold_plan(plan_in);
      runner::ExternalOptions options;
      options.model = ext_model;
      options.dataset = ext_dataset;
      auto scored = runner::score_external(predictions, corpus, plan, options);
      for (const auto& e : scored.excluded) std::cerr << "excluded: " << e << "\n";
      runner::emit_report({scored.report}, options.match, ext_out);
      std::cout << runner::render_markdown({scored.report}, options.match);
    } else if (*report) {
      auto cfg = runner::config_from_run_dir(run_dir);
      auto aggregates = runner::aggregates_from_run_dir(run_dir);
      runner::emit_report(aggregates, cfg.match, report_out.empty() ? run_dir : report_out);
      std::cout << runner::render_markdown(aggregates, cfg.match);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
