#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace ppibench {

struct ExtractionRecord {
  std::string sentence_id;
  std::string protein1;
  std::string protein2;
  std::string interaction_type;

  bool operator==(const ExtractionRecord&) const = default;
};

struct VerdictRecord {
  std::string sentence_id;
  /// Filled in by the caller once the row is tied to a masked instance.
  std::optional<std::size_t> variant_index;
  bool verdict = false;

  bool operator==(const VerdictRecord&) const = default;
};

struct DroppedLine {
  std::size_t line = 0;  // 1-based
  std::string reason;
  std::string text;
};

/// Line accounting for one response:
/// recovered + dropped.size() + structural == total_lines.
struct ParseReport {
  std::size_t total_lines = 0;
  std::size_t recovered = 0;
  std::vector<DroppedLine> dropped;
  /// Blank lines, header rows, the Done sentinel, fences and stripped prose.
  std::size_t structural = 0;
  bool done_sentinel_seen = false;
  std::vector<std::string> stripped_wrappers;

  bool balanced() const { return recovered + dropped.size() + structural == total_lines; }
};

/// Parses `Sentence ID,Protein 1,Protein 2,Interaction Type` rows. Never throws.
std::pair<std::vector<ExtractionRecord>, ParseReport> parse_extraction(std::string_view text);

/// Parses `Sentence ID,PPI` rows with TRUE/FALSE verdicts. Never throws.
std::pair<std::vector<VerdictRecord>, ParseReport> parse_verdicts(std::string_view text);

/// First standalone TRUE/FALSE token (case-insensitive) in a free-form answer.
std::pair<std::optional<bool>, ParseReport> parse_single_verdict(std::string_view text);

/// Splits one CSV row; double-quoted fields may contain commas and `""` escapes.
/// Fields are trimmed of surrounding spaces. Absent on an unterminated quote.
std::optional<std::vector<std::string>> split_csv_row(std::string_view row);

/// Quotes a field when it contains a comma, quote or leading/trailing space.
std::string csv_field(std::string_view value);

/// Well-formed response body for `records`, terminated by a Done row.
std::string format_extraction_csv(const std::vector<ExtractionRecord>& records, bool with_header = true);
std::string format_verdict_csv(const std::vector<VerdictRecord>& records, bool with_header = true);

}  // namespace ppibench
