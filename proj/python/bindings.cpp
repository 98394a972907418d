#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "ppibench/corpus.hpp"
#include "ppibench/folds.hpp"
#include "ppibench/parse_output.hpp"
#include "ppibench/preprocess.hpp"
#include "ppibench/prompt.hpp"
#include "ppibench/runner.hpp"
#include "ppibench/score.hpp"

namespace py = pybind11;
using namespace ppibench;

namespace {

py::dict report_dict(const ParseReport& r) {
  py::list dropped;
  for (const auto& d : r.dropped) dropped.append(py::make_tuple(d.line, d.reason, d.text));
  py::dict out;
  out["total_lines"] = r.total_lines;
  out["recovered"] = r.recovered;
  out["structural"] = r.structural;
  out["dropped"] = dropped;
  out["done_sentinel_seen"] = r.done_sentinel_seen;
  out["stripped_wrappers"] = r.stripped_wrappers;
  return out;
}

py::dict triple_dict(const ScoreTriple& t) {
  py::dict out;
  out["precision"] = t.precision;
  out["recall"] = t.recall;
  out["f1"] = t.f1;
  return out;
}

MatchConfig match_config(const std::string& names, const std::string& orientation, bool dedupe) {
  MatchConfig cfg;
  if (names == "exact") {
    cfg.names = NameComparison::exact;
  } else if (names != "normalized") {
    throw ConfigError("names must be 'normalized' or 'exact'");
  }
  if (orientation == "ordered") {
    cfg.orientation = PairOrientation::ordered;
  } else if (orientation != "unordered") {
    throw ConfigError("orientation must be 'unordered' or 'ordered'");
  }
  cfg.dedupe_predictions = dedupe;
  return cfg;
}

}  // namespace

PYBIND11_MODULE(ppibench, m) {
  m.doc() = "PPI extraction benchmarking harness";
  py::register_exception<Error>(m, "PpibenchError");

  py::class_<Corpus>(m, "Corpus")
      .def("sentence_count", &Corpus::sentence_count)
      .def("document_ids",
           [](const Corpus& c) {
             std::vector<std::string> ids;
             for (const auto& d : c.documents()) ids.push_back(d.doc_id);
             return ids;
           })
      .def("sentence_ids",
           [](const Corpus& c) {
             std::vector<std::string> ids;
             for (const auto* s : c.sentences()) ids.push_back(s->sentence_id);
             return ids;
           })
      .def("text", [](const Corpus& c, const std::string& sid) {
        const auto* s = c.find_sentence(sid);
        if (!s) throw py::key_error(sid);
        return s->text;
      });

  m.def(
      "load_corpus",
      [](const std::string& path, bool strict) { return load_corpus_file(path, {strict}).corpus; }, py::arg("path"),
      py::arg("strict") = true);

  m.def("corpus_stats", [](const Corpus& c) {
    auto s = corpus_stats(c);
    py::dict out;
    out["n_sentences"] = s.n_sentences;
    out["n_positive"] = s.n_positive;
    out["n_negative"] = s.n_negative;
    out["n_total_pairs"] = s.n_total_pairs;
    out["ratio"] = s.ratio ? py::cast(*s.ratio) : py::none();
    return out;
  });

  m.def(
      "normalize_name",
      [](const std::string& raw, const std::string& strip_set) { return normalize_name(raw, {strip_set}); },
      py::arg("raw"), py::arg("strip_set") = "()");

  m.def("dictionaries", [](const Corpus& c) {
    auto d = build_dictionaries(c);
    py::dict out;
    out["original"] = d.original.names();
    out["normalized"] = d.normalized.names();
    return out;
  });

  m.def("masked_instances", [](const Corpus& c) {
    py::list out;
    for (const auto& inst : instances_for(c)) {
      py::dict d;
      d["sentence_id"] = inst.sentence_id;
      d["variant_index"] = inst.variant_index;
      d["masked_text"] = inst.masked_text;
      d["positive"] = inst.pair.positive;
      out.append(d);
    }
    return out;
  });

  m.def(
      "document_folds",
      [](const Corpus& c, std::size_t k, std::uint64_t seed) { return make_document_folds(c, k, seed).assignment; },
      py::arg("corpus"), py::arg("k"), py::arg("seed"));

  m.def("parse_extraction", [](const std::string& text) {
    auto [records, report] = parse_extraction(text);
    py::list rows;
    for (const auto& r : records) rows.append(py::make_tuple(r.sentence_id, r.protein1, r.protein2, r.interaction_type));
    return py::make_tuple(rows, report_dict(report));
  });

  m.def("parse_verdicts", [](const std::string& text) {
    auto [records, report] = parse_verdicts(text);
    py::list rows;
    for (const auto& r : records) rows.append(py::make_tuple(r.sentence_id, r.verdict));
    return py::make_tuple(rows, report_dict(report));
  });

  m.def("parse_single_verdict", [](const std::string& text) {
    auto [verdict, report] = parse_single_verdict(text);
    return py::make_tuple(verdict ? py::cast(*verdict) : py::none(), report_dict(report));
  });

  m.def("score_counts", [](std::size_t tp, std::size_t fp, std::size_t fn) {
    return triple_dict(ScoreTriple::from_counts(tp, fp, fn));
  });

  m.def(
      "match_extractions",
      [](const std::vector<std::tuple<std::string, std::string, std::string>>& predictions, const Corpus& corpus,
         const std::string& names, const std::string& orientation, bool dedupe) {
        std::vector<ExtractionRecord> records;
        for (const auto& [sid, a, b] : predictions) records.push_back({sid, a, b, ""});
        auto c = match_extractions(records, corpus.sentences(), match_config(names, orientation, dedupe));
        py::dict out = triple_dict(c.triple());
        out["tp"] = c.tp;
        out["fp"] = c.fp;
        out["fn"] = c.fn;
        out["foreign"] = c.foreign;
        out["duplicates"] = c.duplicates;
        return out;
      },
      py::arg("predictions"), py::arg("corpus"), py::arg("names") = "normalized", py::arg("orientation") = "unordered",
      py::arg("dedupe") = true);

  m.def(
      "run_experiment",
      [](const std::string& config_path, std::optional<std::size_t> stop_after, std::optional<std::string> output_root) {
        auto cfg = runner::load_config(config_path);
        if (output_root) cfg.output_root = *output_root;
        runner::RunOptions options;
        options.stop_after = stop_after;
        runner::RunResult r;
        {
          py::gil_scoped_release release;
          r = runner::run_experiment(cfg, options);
        }
        py::dict out;
        out["run_dir"] = r.run_dir;
        out["complete"] = r.complete;
        out["total_items"] = r.total_items;
        out["executed"] = r.executed;
        out["skipped"] = r.skipped;
        out["failed"] = r.failed;
        py::list aggs;
        for (const auto& a : r.aggregates) {
          py::dict d;
          d["dataset"] = a.key.dataset;
          d["model"] = a.key.model;
          d["setting"] = a.key.setting;
          d["temperature"] = a.key.temperature;
          d["usable"] = a.usable;
          d["mean"] = triple_dict(a.grand_mean);
          d["stddev"] = triple_dict(a.stddev);
          aggs.append(d);
        }
        out["aggregates"] = aggs;
        return out;
      },
      py::arg("config_path"), py::arg("stop_after") = py::none(), py::arg("output_root") = py::none());

  m.def(
      "optimize_prompt",
      [](const std::function<double(std::vector<std::string>)>& score, std::optional<std::string> library_path) {
        const auto library =
            library_path ? load_variation_library_file(*library_path) : default_variation_library();
        auto result = optimize_prompt(library, [&](const PromptTemplate& t) {
          return score(std::vector<std::string>(t.sections.begin(), t.sections.end()));
        });
        py::dict out;
        out["sections"] = std::vector<std::string>(result.final_template.sections.begin(),
                                                   result.final_template.sections.end());
        out["final_section"] = result.final_section;
        out["final_score"] = result.final_score;
        out["winners"] = std::vector<std::size_t>(result.winners.begin(), result.winners.end());
        out["audit_length"] = result.audit.size();
        return out;
      },
      py::arg("score"), py::arg("library_path") = py::none());

  m.def(
      "variation_counts",
      [](std::optional<std::string> library_path) {
        const auto library =
            library_path ? load_variation_library_file(*library_path) : default_variation_library();
        auto c = library.counts();
        return std::vector<std::size_t>(c.begin(), c.end());
      },
      py::arg("library_path") = py::none());

  m.def("format_percent", &runner::format_percent);
  m.attr("__version__") = std::string(runner::kToolVersion);
}
