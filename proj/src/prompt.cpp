#include "ppibench/prompt.hpp"

#include <cmath>
#include <fstream>
#include <future>
#include <istream>
#include <ostream>
#include <sstream>

#include "ppibench/folds.hpp"

namespace ppibench {

namespace {

constexpr std::string_view kDefaultLibraryText =
#include "default_library.inc"
    ;

std::vector<std::string> split_lines(std::string_view text) {
  std::vector<std::string> lines;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string line(text.substr(pos, nl - pos));
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
    pos = nl + 1;
  }
  if (!text.empty() && text.back() == '\n') lines.pop_back();
  return lines;
}

std::string trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t");
  return std::string(s.substr(b, e - b + 1));
}

}  // namespace

std::string PromptTemplate::render() const {
  std::string out;
  for (std::size_t i = 0; i < sections.size(); ++i) {
    if (i) out.push_back('\n');
    out += sections[i];
  }
  return out;
}

void PromptTemplate::validate() const {
  for (std::size_t i = 0; i < sections.size(); ++i) {
    if (sections[i].find_first_not_of(" \t\r\n") == std::string::npos) {
      throw PromptError("prompt section " + std::to_string(i + 1) + " is empty");
    }
  }
}

std::array<std::size_t, kSectionCount> VariationLibrary::counts() const {
  std::array<std::size_t, kSectionCount> out{};
  for (std::size_t i = 0; i < kSectionCount; ++i) out[i] = sections[i].size();
  return out;
}

PromptTemplate VariationLibrary::base_template() const {
  PromptTemplate t;
  for (std::size_t i = 0; i < kSectionCount; ++i) {
    if (sections[i].empty()) throw PromptError("section " + std::to_string(i + 1) + " has no variations");
    t.sections[i] = sections[i].front().text;
  }
  return t;
}

std::optional<std::size_t> VariationLibrary::find(std::size_t section, std::string_view name) const {
  if (section == 0 || section > kSectionCount) return std::nullopt;
  const auto& vars = sections[section - 1];
  for (std::size_t j = 0; j < vars.size(); ++j) {
    if (vars[j].name == name) return j;
  }
  return std::nullopt;
}

VariationLibrary parse_variation_library(std::string_view text) {
  VariationLibrary lib;
  std::array<bool, kSectionCount> seen{};
  int section = -1;
  std::vector<std::string> block;
  std::size_t block_line = 0;

  auto fail = [](std::size_t line, const std::string& msg) -> void {
    throw PromptError("variation library line " + std::to_string(line) + ": " + msg);
  };

  auto flush = [&](std::size_t line) {
    if (section < 0) return;
    while (!block.empty() && trim(block.back()).empty()) block.pop_back();
    std::size_t first = 0;
    while (first < block.size() && trim(block[first]).empty()) ++first;
    Variation v;
    if (first < block.size() && block[first].rfind("@name ", 0) == 0) {
      v.name = trim(std::string_view(block[first]).substr(6));
      ++first;
    }
    for (std::size_t i = first; i < block.size(); ++i) {
      if (!v.text.empty() || i > first) v.text.push_back('\n');
      v.text += block[i];
    }
    if (trim(v.text).empty()) fail(block_line ? block_line : line, "empty variation in section " + std::to_string(section + 1));
    lib.sections[section].push_back(std::move(v));
    block.clear();
  };

  auto lines = split_lines(text);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto& line = lines[i];
    const std::size_t line_no = i + 1;
    auto t = trim(line);
    if (t.rfind("[section", 0) == 0 && t.back() == ']') {
      if (section >= 0) flush(line_no);
      std::istringstream hdr(t.substr(8, t.size() - 9));
      int n = 0;
      if (!(hdr >> n) || n < 1 || n > static_cast<int>(kSectionCount)) fail(line_no, "bad section header '" + t + "'");
      if (seen[n - 1]) fail(line_no, "section " + std::to_string(n) + " declared twice");
      seen[n - 1] = true;
      section = n - 1;
      std::string attr;
      while (hdr >> attr) {
        if (attr.rfind("capacity=", 0) != 0) fail(line_no, "unknown section attribute '" + attr + "'");
        try {
          lib.capacity[section] = std::stoul(attr.substr(9));
        } catch (const std::exception&) {
          fail(line_no, "bad capacity '" + attr + "'");
        }
      }
      block.clear();
      block_line = line_no + 1;
      continue;
    }
    if (section < 0) {
      if (t.empty() || t.front() == '#') continue;
      fail(line_no, "text before the first section header");
    }
    if (t == "---") {
      flush(line_no);
      block_line = line_no + 1;
      continue;
    }
    block.push_back(line);
  }
  flush(lines.size());

  for (std::size_t s = 0; s < kSectionCount; ++s) {
    if (lib.sections[s].empty()) {
      throw PromptError("variation library: section " + std::to_string(s + 1) + " has no variations");
    }
  }
  return lib;
}

VariationLibrary load_variation_library(std::istream& in) {
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_variation_library(buf.str());
}

VariationLibrary load_variation_library_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw PromptError("cannot open variation library '" + path + "'");
  return load_variation_library(in);
}

void write_variation_library(std::ostream& out, const VariationLibrary& library) {
  for (std::size_t s = 0; s < kSectionCount; ++s) {
    if (s) out << '\n';
    out << "[section " << s + 1;
    if (library.capacity[s]) out << " capacity=" << library.capacity[s];
    out << "]\n";
    for (std::size_t j = 0; j < library.sections[s].size(); ++j) {
      const auto& v = library.sections[s][j];
      if (j) out << "---\n";
      if (!v.name.empty()) out << "@name " << v.name << '\n';
      out << v.text << '\n';
    }
  }
}

const VariationLibrary& default_variation_library() {
  static const VariationLibrary lib = parse_variation_library(kDefaultLibraryText);
  return lib;
}

const std::array<std::string_view, kSectionCount>& best_section_prompts() {
  static constexpr std::array<std::string_view, kSectionCount> names = {
      "P127_S1", "P8_S2", "P60_S3", "P10_S4", "P32_S5", "P19_S6", "P5_S7"};
  return names;
}

PromptTemplate canned_template(const VariationLibrary& library, std::string_view name) {
  const auto& best = best_section_prompts();
  std::size_t upto = 0;
  for (std::size_t s = 0; s < kSectionCount; ++s) {
    if (best[s] == name) upto = s + 1;
  }
  if (upto == 0) throw PromptError("unknown canned template '" + std::string(name) + "'");
  PromptTemplate t = library.base_template();
  for (std::size_t s = 1; s <= upto; ++s) {
    auto idx = library.find(s, best[s - 1]);
    if (!idx) throw PromptError("library lacks variation '" + std::string(best[s - 1]) + "'");
    t.sections[s - 1] = library.sections[s - 1][*idx].text;
  }
  return t;
}

std::string_view setting_id(PromptSetting setting) {
  switch (setting) {
    case PromptSetting::base_10fold: return "base";
    case PromptSetting::with_dictionary: return "dictionary";
    case PromptSetting::with_normalized_dictionary: return "normalized_dictionary";
    case PromptSetting::masked_10fold: return "masked";
    case PromptSetting::masked_nfold: return "masked_nfold";
    case PromptSetting::masked_single_sentence: return "masked_single";
  }
  return "unknown";
}

std::optional<PromptSetting> parse_setting(std::string_view id) {
  for (auto s : kAllSettings) {
    if (setting_id(s) == id) return s;
  }
  return std::nullopt;
}

std::string_view setting_label(PromptSetting setting) {
  switch (setting) {
    case PromptSetting::base_10fold: return "base prompt";
    case PromptSetting::with_dictionary: return "protein dictionary";
    case PromptSetting::with_normalized_dictionary: return "normalized protein dictionary";
    case PromptSetting::masked_10fold: return "PROTEIN masking";
    case PromptSetting::masked_nfold: return "PROTEIN masking, no repeated sentence in the same prompt";
    case PromptSetting::masked_single_sentence: return "PROTEIN masking, one sentence at a time";
  }
  return "unknown";
}

bool is_masked(PromptSetting setting) {
  return setting == PromptSetting::masked_10fold || setting == PromptSetting::masked_nfold ||
         setting == PromptSetting::masked_single_sentence;
}

bool uses_dictionary(PromptSetting setting) {
  return setting == PromptSetting::with_dictionary || setting == PromptSetting::with_normalized_dictionary;
}

MaskedWording MaskedWording::defaults() {
  MaskedWording w;
  w.batch =
      "Consider each sentence separately and infer Protein-Protein Interaction for the protein entity pairs "
      "PROTEIN1-PROTEIN2 from the provided sentences. Do not consider any other PROTEIN pairs in the sentence. "
      "In each sentence, original protein or gene names have been substituted with 'PROTEIN1', 'PROTEIN', and "
      "'PROTEIN' placeholders. The placeholders used may represent a variety of proteins or genes, differing "
      "with each sentence.\n"
      "Please, format your results in CSV (comma-separated values) with only two columns: 'Sentence ID' and "
      "'PPI'. Do not include the original sentences or any explanation in the output.\n"
      "Output Column Specifications:\n"
      "'Sentence ID': The unique identifier for each sentence.\n"
      "'PPI': Record your findings as 'TRUE' if there is a demonstrable interaction between PROTEIN1 and "
      "PROTEIN2, and 'FALSE' if there is none.\n"
      "If all sentences have been processed successfully, the last row should only contain the word 'Done'.\n"
      "Each input line contains a 'Sentence ID' and corresponding 'Sentence' that is needed to be analyzed "
      "for finding PPI.\n"
      "Here are the sentences that you need to process:";
  w.single =
      "Infer Protein-Protein Interaction for the protein entity pairs PROTEIN1-PROTEIN2 from the provided "
      "sentence. Do not consider any other PROTEIN pairs in the sentence. Original protein or gene names have "
      "been substituted with 'PROTEIN1', 'PROTEIN', and 'PROTEIN' placeholders.\n"
      "Output Specification: Record your findings as 'TRUE' if there is a demonstrable interaction between "
      "PROTEIN1 and PROTEIN2, and 'FALSE' if there is none.\n"
      "Here is the sentence that you need to process:";
  return w;
}

std::string extraction_preamble(PromptSetting setting, const PromptTemplate& tmpl,
                                const ProteinDictionary* dictionary) {
  if (is_masked(setting)) {
    throw PromptError("setting '" + std::string(setting_id(setting)) + "' takes masked instances");
  }
  tmpl.validate();
  if (!uses_dictionary(setting)) return tmpl.render();
  if (dictionary == nullptr) {
    throw PromptError("setting '" + std::string(setting_id(setting)) + "' requires a protein dictionary");
  }

  // Name list goes between the input description and the final lead-in line.
  std::string line = setting == PromptSetting::with_dictionary
                         ? "Here are the protein names for your reference : [["
                         : "Here are the normalized protein names for your reference : [[";
  for (std::size_t i = 0; i < dictionary->names().size(); ++i) {
    if (i) line.push_back(' ');
    line += "'" + dictionary->names()[i] + "'";
  }
  line += "]]";

  PromptTemplate spliced = tmpl;
  auto& lead_in = spliced.sections[kSectionCount - 1];
  auto last_nl = lead_in.rfind('\n');
  if (last_nl == std::string::npos) {
    lead_in = line + "\n" + lead_in;
  } else {
    lead_in.insert(last_nl + 1, line + "\n");
  }
  return spliced.render();
}

std::string masked_preamble(PromptSetting setting, const MaskedWording& wording) {
  if (!is_masked(setting)) {
    throw PromptError("setting '" + std::string(setting_id(setting)) + "' takes unmasked sentences");
  }
  const auto& text = setting == PromptSetting::masked_single_sentence ? wording.single : wording.batch;
  if (text.find_first_not_of(" \t\r\n") == std::string::npos) throw PromptError("masked prompt wording is empty");
  return text;
}

namespace {

AssembledPrompt finish(PromptSetting setting, std::string preamble,
                       const std::vector<std::pair<std::string_view, std::string_view>>& inputs) {
  AssembledPrompt p;
  p.setting = setting;
  p.text = std::move(preamble);
  for (const auto& [id, text] : inputs) {
    p.text.push_back('\n');
    p.text += input_line(id, text);
    p.sentence_ids.emplace_back(id);
  }
  p.est_tokens = estimate_tokens(p.text);
  return p;
}

}  // namespace

AssembledPrompt assemble_prompt(PromptSetting setting, const PromptTemplate& tmpl,
                                const ProteinDictionary* dictionary,
                                const std::vector<const Sentence*>& sentences) {
  if (sentences.empty()) throw PromptError("no input sentences");
  auto preamble = extraction_preamble(setting, tmpl, dictionary);
  std::vector<std::pair<std::string_view, std::string_view>> inputs;
  for (const auto* s : sentences) inputs.emplace_back(s->sentence_id, s->text);
  return finish(setting, std::move(preamble), inputs);
}

AssembledPrompt assemble_prompt(PromptSetting setting, const MaskedWording& wording,
                                const std::vector<const MaskedInstance*>& instances) {
  if (instances.empty()) throw PromptError("no input instances");
  if (setting == PromptSetting::masked_single_sentence && instances.size() != 1) {
    throw PromptError("single-sentence setting takes exactly one instance, got " +
                      std::to_string(instances.size()));
  }
  auto preamble = masked_preamble(setting, wording);
  std::vector<std::pair<std::string_view, std::string_view>> inputs;
  for (const auto* m : instances) inputs.emplace_back(m->sentence_id, m->masked_text);
  return finish(setting, std::move(preamble), inputs);
}

std::vector<InputLine> parse_input_block(std::string_view prompt) {
  auto lines = split_lines(prompt);
  std::size_t first = lines.size();
  while (first > 0 && lines[first - 1].find('\t') != std::string::npos) --first;
  std::vector<InputLine> out;
  for (std::size_t i = first; i < lines.size(); ++i) {
    auto tab = lines[i].find('\t');
    out.push_back({lines[i].substr(0, tab), lines[i].substr(tab + 1)});
  }
  return out;
}

OptimizationResult optimize_prompt(const VariationLibrary& library, const PromptEvaluator& evaluator,
                                   const OptimizeOptions& options) {
  OptimizationResult result;
  PromptTemplate current = options.initial ? *options.initial : library.base_template();
  current.validate();

  auto evaluate = [&](const PromptTemplate& t, int phase, std::size_t section, std::size_t variation) {
    double score = 0.0;
    try {
      score = evaluator(t);
    } catch (const std::exception& e) {
      throw OptimizationError(std::string("evaluator failed: ") + e.what(), phase, section, variation);
    }
    if (std::isnan(score)) throw OptimizationError("evaluator returned NaN", phase, section, variation);
    return score;
  };

  for (std::size_t s = 0; s < kSectionCount; ++s) {
    const auto& variations = library.sections[s];
    if (variations.empty()) throw PromptError("section " + std::to_string(s + 1) + " has no variations");

    std::vector<PromptTemplate> candidates(variations.size(), current);
    for (std::size_t j = 0; j < variations.size(); ++j) candidates[j].sections[s] = variations[j].text;

    std::vector<double> scores(variations.size());
    if (options.workers <= 1) {
      for (std::size_t j = 0; j < candidates.size(); ++j) scores[j] = evaluate(candidates[j], 1, s + 1, j);
    } else {
      for (std::size_t begin = 0; begin < candidates.size(); begin += options.workers) {
        auto end = std::min(candidates.size(), begin + options.workers);
        std::vector<std::future<double>> pending;
        for (std::size_t j = begin; j < end; ++j) {
          pending.push_back(std::async(std::launch::async, [&, j] { return evaluate(candidates[j], 1, s + 1, j); }));
        }
        for (std::size_t j = begin; j < end; ++j) scores[j] = pending[j - begin].get();
      }
    }

    std::size_t best = 0;
    double highest = -INFINITY;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      result.audit.push_back({1, s + 1, j, scores[j]});
      if (scores[j] > highest) {
        highest = scores[j];
        best = j;
      }
    }
    result.winners[s] = best;
    current = candidates[best];
    result.best_prompts.push_back(current);
  }

  double highest_final = -INFINITY;
  for (std::size_t s = 0; s < result.best_prompts.size(); ++s) {
    double score = evaluate(result.best_prompts[s], 2, s + 1, result.winners[s]);
    result.audit.push_back({2, s + 1, result.winners[s], score});
    if (score > highest_final) {
      highest_final = score;
      result.final_section = s + 1;
      result.final_template = result.best_prompts[s];
    }
  }
  result.final_score = highest_final;
  return result;
}

}  // namespace ppibench
