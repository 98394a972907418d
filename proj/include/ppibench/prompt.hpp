#pragma once

#include <array>
#include <cstddef>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "ppibench/corpus.hpp"
#include "ppibench/error.hpp"
#include "ppibench/preprocess.hpp"

namespace ppibench {

inline constexpr std::size_t kSectionCount = 7;

/// Seven ordered prompt sections: primary instruction, proteins=genes, multiple
/// pairs, output format, column specification, end marker, input lead-in.
struct PromptTemplate {
  std::array<std::string, kSectionCount> sections;

  /// Sections joined by newlines.
  std::string render() const;
  /// Throws PromptError when a section is empty.
  void validate() const;

  bool operator==(const PromptTemplate&) const = default;
};

struct Variation {
  std::string name;
  std::string text;

  bool operator==(const Variation&) const = default;
};

struct VariationLibrary {
  std::array<std::vector<Variation>, kSectionCount> sections;
  /// Declared capacity per section (size of the full variation space); 0 if
  /// undeclared.
  std::array<std::size_t, kSectionCount> capacity{};

  std::array<std::size_t, kSectionCount> counts() const;
  /// Variation 0 of every section.
  PromptTemplate base_template() const;
  std::optional<std::size_t> find(std::size_t section, std::string_view name) const;

  bool operator==(const VariationLibrary&) const = default;
};

/// Parses the sectioned library format: `[section N]` (optionally
/// `[section N capacity=M]`) headers, variants separated by `---` lines, and an
/// optional `@name <label>` first line per variant. Throws PromptError.
VariationLibrary parse_variation_library(std::string_view text);
VariationLibrary load_variation_library(std::istream& in);
VariationLibrary load_variation_library_file(const std::string& path);
void write_variation_library(std::ostream& out, const VariationLibrary& library);

/// The bundled library: foundational text plus the best variation per section.
const VariationLibrary& default_variation_library();

/// Names of the per-section winners shipped in the default library, section 1..7.
const std::array<std::string_view, kSectionCount>& best_section_prompts();

/// Template as it stood when the named section winner was chosen: named winners
/// for sections up to and including its section, variation 0 after it.
/// "P60_S3" is the base prompt. Throws PromptError for unknown names.
PromptTemplate canned_template(const VariationLibrary& library, std::string_view name);

enum class PromptSetting {
  base_10fold,
  with_dictionary,
  with_normalized_dictionary,
  masked_10fold,
  masked_nfold,
  masked_single_sentence,
};

inline constexpr std::array<PromptSetting, 6> kAllSettings = {
    PromptSetting::base_10fold,   PromptSetting::with_dictionary, PromptSetting::with_normalized_dictionary,
    PromptSetting::masked_10fold, PromptSetting::masked_nfold,    PromptSetting::masked_single_sentence};

/// Stable identifier used in configs and file names ("base", "dictionary", ...).
std::string_view setting_id(PromptSetting setting);
std::optional<PromptSetting> parse_setting(std::string_view id);
/// Human-readable row label for reports.
std::string_view setting_label(PromptSetting setting);
bool is_masked(PromptSetting setting);
bool uses_dictionary(PromptSetting setting);

/// Wording for the PROTEIN-masked prompts.
struct MaskedWording {
  std::string batch;
  std::string single;

  static MaskedWording defaults();
};

struct AssembledPrompt {
  PromptSetting setting = PromptSetting::base_10fold;
  std::string text;
  std::vector<std::string> sentence_ids;
  std::size_t est_tokens = 0;
};

/// Everything before the input block for an extraction setting.
std::string extraction_preamble(PromptSetting setting, const PromptTemplate& tmpl,
                                const ProteinDictionary* dictionary);
std::string masked_preamble(PromptSetting setting, const MaskedWording& wording);

/// Extraction settings (base, dictionary, normalized dictionary).
AssembledPrompt assemble_prompt(PromptSetting setting, const PromptTemplate& tmpl,
                                const ProteinDictionary* dictionary,
                                const std::vector<const Sentence*>& sentences);

/// Masked settings. `masked_single_sentence` requires exactly one instance.
AssembledPrompt assemble_prompt(PromptSetting setting, const MaskedWording& wording,
                                const std::vector<const MaskedInstance*>& instances);

struct InputLine {
  std::string sentence_id;
  std::string text;
};

/// Recovers the trailing `sentence_id<TAB>text` lines of a prompt.
std::vector<InputLine> parse_input_block(std::string_view prompt);

// ---------------------------------------------------------------------------
// Greedy section-wise optimization.

using PromptEvaluator = std::function<double(const PromptTemplate&)>;

struct AuditEntry {
  /// 1 = section sweep, 2 = re-evaluation of the per-section winners.
  int phase = 1;
  /// 1-based section number.
  std::size_t section = 0;
  /// 0-based variation index within the section.
  std::size_t variation = 0;
  double score = 0.0;
};

struct OptimizationResult {
  PromptTemplate final_template;
  /// Section whose winner scored best in the re-evaluation (1-based).
  std::size_t final_section = 0;
  double final_score = 0.0;
  std::array<std::size_t, kSectionCount> winners{};
  std::vector<PromptTemplate> best_prompts;
  std::vector<AuditEntry> audit;
};

class OptimizationError : public PromptError {
 public:
  OptimizationError(const std::string& message, int phase, std::size_t section, std::size_t variation)
      : PromptError("phase " + std::to_string(phase) + ", section " + std::to_string(section) +
                    ", variation " + std::to_string(variation) + ": " + message),
        section_(section),
        variation_(variation) {}

  std::size_t section() const noexcept { return section_; }
  std::size_t variation() const noexcept { return variation_; }

 private:
  std::size_t section_;
  std::size_t variation_;
};

struct OptimizeOptions {
  /// Starting template; defaults to the library's base template.
  std::optional<PromptTemplate> initial;
  /// Concurrent evaluations within one section.
  std::size_t workers = 1;
};

/// Sweeps sections 1..7 in order, keeping the first strictly best variation of
/// each and carrying it forward, then re-evaluates the seven winners and returns
/// the best. Evaluates sum(N_i) + 7 prompts.
OptimizationResult optimize_prompt(const VariationLibrary& library, const PromptEvaluator& evaluator,
                                   const OptimizeOptions& options = {});

}  // namespace ppibench
