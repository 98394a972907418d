#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include <json.hpp>

#include "ppibench/runner.hpp"

namespace ppibench::runner {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

std::string format_percent(double value) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f%%", 100.0 * value);
  return buf;
}

namespace {

std::string fixed2(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string row_label(const AggregateReport& a, bool multi_temperature) {
  auto setting = parse_setting(a.key.setting);
  std::string label = a.key.model + " with " + std::string(setting ? setting_label(*setting) : a.key.setting);
  if (multi_temperature) label += " (T=" + fixed2(a.key.temperature) + ")";
  return label;
}

bool is_max(double v, const std::vector<double>& column) {
  if (column.empty()) return false;
  return v == *std::max_element(column.begin(), column.end());
}

std::string cell(double v, const std::vector<double>& column) {
  auto text = format_percent(v);
  return is_max(v, column) ? "**" + text + "**" : text;
}

}  // namespace

std::string render_markdown(const std::vector<AggregateReport>& aggregates, const MatchConfig& match) {
  std::string out = "# PPI results\n";
  std::vector<std::string> dataset_order;
  for (const auto& a : aggregates) {
    if (std::find(dataset_order.begin(), dataset_order.end(), a.key.dataset) == dataset_order.end()) {
      dataset_order.push_back(a.key.dataset);
    }
  }

  for (const auto& dataset : dataset_order) {
    std::vector<const AggregateReport*> rows;
    for (const auto& a : aggregates) {
      if (a.key.dataset == dataset) rows.push_back(&a);
    }
    std::set<double> temps;
    bool any_macro = false;
    for (const auto* a : rows) {
      temps.insert(a->key.temperature);
      any_macro = any_macro || a->macro_grand_mean.has_value();
    }

    std::array<std::vector<double>, 6> columns;
    for (const auto* a : rows) {
      if (!a->usable) continue;
      columns[0].push_back(a->grand_mean.precision);
      columns[1].push_back(a->grand_mean.recall);
      columns[2].push_back(a->grand_mean.f1);
      if (a->macro_grand_mean) {
        columns[3].push_back(a->macro_grand_mean->precision);
        columns[4].push_back(a->macro_grand_mean->recall);
        columns[5].push_back(a->macro_grand_mean->f1);
      }
    }

    out += "\n## " + dataset + "\n\n";
    out += "| Model | Precision | Recall | F1-Score |";
    if (any_macro) out += " Macro Precision | Macro Recall | Macro F1-Score |";
    out += " Runs | Failed cells |\n";
    out += "|---|---|---|---|";
    if (any_macro) out += "---|---|---|";
    out += "---|---|\n";
    for (const auto* a : rows) {
      out += "| " + row_label(*a, temps.size() > 1) + " |";
      if (a->usable) {
        out += " " + cell(a->grand_mean.precision, columns[0]) + " | " + cell(a->grand_mean.recall, columns[1]) +
               " | " + cell(a->grand_mean.f1, columns[2]) + " |";
      } else {
        out += " n/a | n/a | n/a |";
      }
      if (any_macro) {
        if (a->usable && a->macro_grand_mean) {
          const auto& m = *a->macro_grand_mean;
          out += " " + cell(m.precision, columns[3]) + " | " + cell(m.recall, columns[4]) + " | " +
                 cell(m.f1, columns[5]) + " |";
        } else {
          out += " - | - | - |";
        }
      }
      out += " " + std::to_string(a->runs.size()) + " | " + std::to_string(a->failed_cells) + " |\n";
    }
  }

  out += "\nScores are fold means averaged over runs. Bold marks the best value per column.\n";
  out += "\n## Matching rule\n\n" + match.describe() + "\n";
  return out;
}

std::string render_csv(const std::vector<AggregateReport>& aggregates) {
  std::string out =
      "dataset,model,setting,temperature,source,runs,failed_cells,precision,recall,f1,precision_sd,recall_sd,f1_sd,"
      "pooled_precision,pooled_recall,pooled_f1,macro_precision,macro_recall,macro_f1\n";
  for (const auto& a : aggregates) {
    auto pct = [&](double v) { return a.usable ? fixed2(100.0 * v) : std::string(); };
    out += csv_field(a.key.dataset) + "," + csv_field(a.key.model) + "," + csv_field(a.key.setting) + "," +
           fixed2(a.key.temperature) + "," + a.key.source + "," + std::to_string(a.runs.size()) + "," +
           std::to_string(a.failed_cells) + "," + pct(a.grand_mean.precision) + "," + pct(a.grand_mean.recall) + "," +
           pct(a.grand_mean.f1) + "," + pct(a.stddev.precision) + "," + pct(a.stddev.recall) + "," +
           pct(a.stddev.f1) + "," + pct(a.pooled_mean.precision) + "," + pct(a.pooled_mean.recall) + "," +
           pct(a.pooled_mean.f1) + ",";
    if (a.usable && a.macro_grand_mean) {
      out += pct(a.macro_grand_mean->precision) + "," + pct(a.macro_grand_mean->recall) + "," +
             pct(a.macro_grand_mean->f1);
    } else {
      out += ",,";
    }
    out += "\n";
  }
  return out;
}

namespace {

json triple_json(const ScoreTriple& t) {
  return {{"precision", t.precision}, {"recall", t.recall}, {"f1", t.f1}};
}

}  // namespace

std::string render_aggregates_json(const std::vector<AggregateReport>& aggregates, const MatchConfig& match) {
  json out;
  out["match_config"] = match.describe();
  out["aggregates"] = json::array();
  for (const auto& a : aggregates) {
    json j;
    j["dataset"] = a.key.dataset;
    j["model"] = a.key.model;
    j["setting"] = a.key.setting;
    j["temperature"] = a.key.temperature;
    j["source"] = a.key.source;
    j["usable"] = a.usable;
    j["failed_cells"] = a.failed_cells;
    j["grand_mean"] = triple_json(a.grand_mean);
    j["stddev"] = triple_json(a.stddev);
    j["pooled_mean"] = triple_json(a.pooled_mean);
    j["macro_grand_mean"] = a.macro_grand_mean ? triple_json(*a.macro_grand_mean) : json(nullptr);
    j["runs"] = json::array();
    for (const auto& r : a.runs) {
      j["runs"].push_back({{"run", r.run},
                           {"folds", r.folds},
                           {"failed", r.failed},
                           {"mean", triple_json(r.mean)},
                           {"pooled", triple_json(r.pooled)},
                           {"macro_mean", r.macro_mean ? triple_json(*r.macro_mean) : json(nullptr)}});
    }
    j["cells"] = json::array();
    for (const auto& c : a.cells) {
      j["cells"].push_back({{"run", c.run},
                            {"fold", c.fold},
                            {"scores", c.triple ? triple_json(*c.triple) : json(nullptr)},
                            {"macro", c.macro ? triple_json(*c.macro) : json(nullptr)},
                            {"tp", c.tp},
                            {"fp", c.fp},
                            {"fn", c.fn}});
    }
    out["aggregates"].push_back(std::move(j));
  }
  return out.dump(2) + "\n";
}

void emit_report(const std::vector<AggregateReport>& aggregates, const MatchConfig& match, const std::string& out_dir) {
  fs::create_directories(out_dir);
  auto write = [&](const char* name, const std::string& content) {
    std::ofstream out(fs::path(out_dir) / name, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + (fs::path(out_dir) / name).string());
    out << content;
  };
  write("report.md", render_markdown(aggregates, match));
  write("report.csv", render_csv(aggregates));
  write("aggregates.json", render_aggregates_json(aggregates, match));
}

// ---------------------------------------------------------------------------
// External predictions.

ExternalScore score_external(const std::string& predictions_path, const Corpus& corpus, const FoldPlan& plan,
                             const ExternalOptions& options) {
  std::ifstream in(predictions_path);
  if (!in) throw ConfigError("cannot read predictions " + predictions_path);

  ExternalScore result;
  std::map<std::size_t, std::vector<ExtractionRecord>> extractions;
  std::map<std::size_t, std::vector<VerdictRecord>> verdicts;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ConfigError("predictions line " + std::to_string(line_no) + ": " + e.what());
    }
    auto where = "predictions line " + std::to_string(line_no);
    if (!j.is_object() || !j.contains("sentence_id") || !j["sentence_id"].is_string()) {
      throw ConfigError(where + ": missing sentence_id");
    }
    auto sid = j["sentence_id"].get<std::string>();
    std::size_t run = j.contains("run") ? j["run"].get<std::size_t>() : 1;
    if (!corpus.find_sentence(sid)) {
      result.excluded.push_back(where + ": unknown sentence_id '" + sid + "'");
      continue;
    }
    if (!plan.assignment.count(corpus.document_of(sid)->doc_id)) {
      result.excluded.push_back(where + ": document of '" + sid + "' is not in the fold plan");
      continue;
    }
    if (j.contains("verdict")) {
      VerdictRecord v;
      v.sentence_id = sid;
      if (!j.contains("variant_index") || !j["variant_index"].is_number_unsigned()) {
        result.excluded.push_back(where + ": verdict without variant_index");
        continue;
      }
      v.variant_index = j["variant_index"].get<std::size_t>();
      const auto& raw = j["verdict"];
      if (raw.is_boolean()) {
        v.verdict = raw.get<bool>();
      } else if (raw.is_string() && (raw == "TRUE" || raw == "true" || raw == "True")) {
        v.verdict = true;
      } else if (raw.is_string() && (raw == "FALSE" || raw == "false" || raw == "False")) {
        v.verdict = false;
      } else {
        result.excluded.push_back(where + ": unrecognized verdict");
        continue;
      }
      verdicts[run].push_back(std::move(v));
    } else if (j.contains("protein1") && j.contains("protein2")) {
      ExtractionRecord r;
      r.sentence_id = sid;
      r.protein1 = j["protein1"].get<std::string>();
      r.protein2 = j["protein2"].get<std::string>();
      if (j.contains("interaction_type") && j["interaction_type"].is_string()) {
        r.interaction_type = j["interaction_type"].get<std::string>();
      }
      extractions[run].push_back(std::move(r));
    } else {
      throw ConfigError(where + ": neither a verdict nor an extraction");
    }
  }
  if (!extractions.empty() && !verdicts.empty()) {
    throw ConfigError("predictions mix verdicts and extractions");
  }

  const bool classification = !verdicts.empty();
  std::set<std::size_t> runs;
  for (const auto& [r, _] : extractions) runs.insert(r);
  for (const auto& [r, _] : verdicts) runs.insert(r);
  if (runs.empty()) runs.insert(1);

  std::vector<FoldCell> cells;
  for (auto run : runs) {
    for (std::size_t f = 0; f < plan.k; ++f) {
      auto sentences = plan.sentences(corpus, f);
      std::set<std::string> in_fold;
      for (const auto* s : sentences) in_fold.insert(s->sentence_id);
      FoldCell cell;
      cell.run = run;
      cell.fold = f;
      if (classification) {
        std::vector<VerdictRecord> mine;
        for (const auto& v : verdicts[run]) {
          if (in_fold.count(v.sentence_id)) mine.push_back(v);
        }
        auto scores = score_classification(mine, instances_for(sentences));
        for (const auto& e : scores.excluded) result.excluded.push_back("run " + std::to_string(run) + ": " + e);
        cell.triple = scores.positive;
        cell.macro = scores.macro;
        cell.tp = scores.tp;
        cell.fp = scores.fp;
        cell.fn = scores.fn;
      } else {
        std::vector<ExtractionRecord> mine;
        for (const auto& r : extractions[run]) {
          if (in_fold.count(r.sentence_id)) mine.push_back(r);
        }
        auto counts = match_extractions(mine, sentences, options.match);
        cell.triple = counts.triple();
        cell.tp = counts.tp;
        cell.fp = counts.fp;
        cell.fn = counts.fn;
      }
      cells.push_back(cell);
    }
  }

  AggregateKey key;
  key.dataset = options.dataset;
  key.model = options.model;
  key.setting = classification ? "masked" : "base";
  key.source = "external";
  result.report = aggregate(std::move(key), std::move(cells));
  return result;
}

}  // namespace ppibench::runner
