#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "ppibench/error.hpp"

namespace ppibench {

/// A protein/gene mention. Offsets count Unicode code points in the sentence
/// text; `char_end` is exclusive.
struct EntityMention {
  std::string id;
  std::string surface;
  std::size_t char_start = 0;
  std::size_t char_end = 0;

  bool operator==(const EntityMention&) const = default;
};

/// Annotated candidate pair. `e1`/`e2` keep the declared order, which decides
/// which mention becomes PROTEIN1 when masking.
struct LabeledPair {
  std::string e1;
  std::string e2;
  bool positive = false;

  bool operator==(const LabeledPair&) const = default;
};

struct Sentence {
  std::string sentence_id;
  std::string text;
  std::vector<EntityMention> entities;
  std::vector<LabeledPair> pairs;

  const EntityMention* find_entity(std::string_view id) const;
  bool operator==(const Sentence&) const = default;
};

struct Document {
  std::string doc_id;
  std::vector<Sentence> sentences;

  bool operator==(const Document&) const = default;
};

/// Immutable gold corpus with a sentence_id index. Safe to share read-only.
class Corpus {
 public:
  Corpus() = default;
  explicit Corpus(std::vector<Document> documents);

  const std::vector<Document>& documents() const noexcept { return documents_; }
  const Sentence* find_sentence(std::string_view sentence_id) const;
  /// Document that owns `sentence_id`, or nullptr.
  const Document* document_of(std::string_view sentence_id) const;
  /// All sentences in corpus order.
  std::vector<const Sentence*> sentences() const;
  std::size_t sentence_count() const noexcept { return index_.size(); }

  bool operator==(const Corpus& other) const { return documents_ == other.documents_; }

 private:
  struct Location {
    std::size_t document;
    std::size_t sentence;
  };

  std::vector<Document> documents_;
  std::unordered_map<std::string, Location> index_;
};

struct LoadOptions {
  /// Reject unknown fields instead of ignoring them with a warning.
  bool strict = true;
};

struct LoadResult {
  Corpus corpus;
  std::vector<std::string> warnings;
};

/// Decodes the line-delimited corpus interchange format (one document object per
/// line). Throws CorpusError naming the offending line and sentence.
LoadResult load_corpus(std::istream& source, const LoadOptions& options = {});
LoadResult load_corpus_file(const std::string& path, const LoadOptions& options = {});
LoadResult load_corpus_string(std::string_view text, const LoadOptions& options = {});

/// Writes the interchange format; `load_corpus(write_corpus(c)) == c`.
void write_corpus(std::ostream& out, const Corpus& corpus);
std::string write_corpus_string(const Corpus& corpus);

struct Violation {
  std::string sentence_id;
  std::string rule;
  std::string detail;
};

/// Every type-invariant violation in `corpus`; empty iff the corpus is valid.
std::vector<Violation> validate_corpus(const Corpus& corpus);

struct CorpusStats {
  std::size_t n_sentences = 0;
  std::size_t n_positive = 0;
  std::size_t n_negative = 0;
  std::size_t n_total_pairs = 0;
  /// negative / positive; absent when there are no positives.
  std::optional<double> ratio;
};

CorpusStats corpus_stats(const Corpus& corpus);

}  // namespace ppibench
