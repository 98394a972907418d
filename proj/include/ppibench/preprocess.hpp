#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "ppibench/corpus.hpp"

namespace ppibench {

/// Literal placeholders written into masked sentences.
inline constexpr std::string_view kProtein1Token = "PROTEIN1";
inline constexpr std::string_view kProtein2Token = "PROTEIN2";
inline constexpr std::string_view kProteinToken = "PROTEIN";

struct NormalizeOptions {
  /// Characters deleted in addition to whitespace. Hyphens, tildes and
  /// asterisks are kept by default ('spoiiaa-p', 'phop~p', 'pbp4*').
  std::string strip_set = "()";
};

/// Lowercases (ASCII), removes whitespace and `strip_set` characters. Absent when
/// the result is empty or consists only of digits.
std::optional<std::string> normalize_name(std::string_view raw, const NormalizeOptions& options = {});

enum class DictionaryKind { original, normalized };

struct DictionaryStats {
  std::size_t unique_count = 0;
  double avg_len = 0.0;
  std::size_t max_len = 0;
  std::size_t min_len = 0;
};

/// Deduplicated protein-name list. Names keep first-occurrence corpus order,
/// which is the order embedded in dictionary prompts; exports are sorted.
class ProteinDictionary {
 public:
  ProteinDictionary() = default;
  ProteinDictionary(DictionaryKind kind, std::vector<std::string> names);

  DictionaryKind kind() const noexcept { return kind_; }
  const std::vector<std::string>& names() const noexcept { return names_; }
  bool contains(std::string_view name) const { return lookup_.count(std::string(name)) > 0; }
  bool empty() const noexcept { return names_.empty(); }
  /// Lengths are measured in code points.
  DictionaryStats stats() const;

 private:
  DictionaryKind kind_ = DictionaryKind::original;
  std::vector<std::string> names_;
  std::set<std::string> lookup_;
};

struct DictionaryPair {
  ProteinDictionary original;
  ProteinDictionary normalized;
};

/// Builds both dictionaries over the whole corpus.
DictionaryPair build_dictionaries(const Corpus& corpus, const NormalizeOptions& options = {});
/// Builds both dictionaries over the given sentences only (per-fold mode).
DictionaryPair build_dictionaries(const std::vector<const Sentence*>& sentences,
                                  const NormalizeOptions& options = {});

/// One name per line, sorted lexicographically by byte value.
void export_dictionary(std::ostream& out, const ProteinDictionary& dict);
/// Stats sidecar as a JSON object.
std::string dictionary_stats_json(const ProteinDictionary& dict);

struct MaskedInstance {
  std::string sentence_id;
  LabeledPair pair;
  std::string masked_text;
  /// Ordinal of `pair` among its sentence's pairs.
  std::size_t variant_index = 0;

  bool operator==(const MaskedInstance&) const = default;
};

/// Replaces the pair's mentions with PROTEIN1/PROTEIN2 (declared order) and all
/// other mentions with PROTEIN. Throws MaskError on overlapping mentions or when
/// the pair does not belong to the sentence.
MaskedInstance mask_sentence(const Sentence& sentence, const LabeledPair& pair);

/// One masked instance per labeled pair, in corpus order.
std::vector<MaskedInstance> instances_for(const Corpus& corpus);
std::vector<MaskedInstance> instances_for(const std::vector<const Sentence*>& sentences);

}  // namespace ppibench
