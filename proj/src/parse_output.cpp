#include "ppibench/parse_output.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <functional>

namespace ppibench {

namespace {

std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  if (text.empty()) return lines;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    auto line = text.substr(pos, nl - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    pos = nl + 1;
  }
  return lines;
}

std::string_view trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r\f\v");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t\r\f\v");
  return s.substr(b, e - b + 1);
}

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

/// Lowercase alphanumerics only: "'Sentence ID'" -> "sentenceid".
std::string header_key(std::string_view s) {
  std::string out;
  for (unsigned char c : s) {
    if (std::isalnum(c)) out.push_back(static_cast<char>(std::tolower(c)));
  }
  return out;
}

bool is_done_sentinel(std::string_view t) {
  auto strip = [](char c) {
    return c == ' ' || c == '\t' || c == '*' || c == '"' || c == '\'' || c == '`' || c == '.' || c == ',' ||
           c == '!';
  };
  while (!t.empty() && strip(t.front())) t.remove_prefix(1);
  while (!t.empty() && strip(t.back())) t.remove_suffix(1);
  return lower(t) == "done";
}

bool is_fence(std::string_view t) { return t.rfind("```", 0) == 0 || t.rfind("~~~", 0) == 0; }

/// Natural-language line: words separated by spaces, no delimiter characters.
bool looks_like_prose(std::string_view t) {
  if (t.find_first_of(",;|\t") != std::string_view::npos) return false;
  return t.find(' ') != std::string_view::npos;
}

void note_wrapper(ParseReport& report, std::string name) {
  if (std::find(report.stripped_wrappers.begin(), report.stripped_wrappers.end(), name) ==
      report.stripped_wrappers.end()) {
    report.stripped_wrappers.push_back(std::move(name));
  }
}

enum class LineKind { blank, fence, sentinel, header, record, after_sentinel, rejected };

struct Classified {
  LineKind kind = LineKind::rejected;
  std::string reason;
};

/// Shared skeleton: `decode` turns split fields into a record or returns a
/// drop reason. Records are appended to `out`.
template <class Record>
ParseReport scan_rows(std::string_view text, const std::vector<std::string>& header,
                      const std::function<std::optional<Record>(const std::vector<std::string>&, std::string&)>& decode,
                      std::vector<Record>& out) {
  ParseReport report;
  auto lines = split_lines(text);
  report.total_lines = lines.size();

  std::vector<Classified> kinds(lines.size());
  std::vector<std::optional<Record>> records(lines.size());
  bool after_done = false;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    auto t = trim(lines[i]);
    auto& k = kinds[i];
    if (t.empty()) {
      k.kind = LineKind::blank;
      continue;
    }
    if (after_done) {
      k.kind = LineKind::after_sentinel;
      continue;
    }
    if (is_fence(t)) {
      k.kind = LineKind::fence;
      continue;
    }
    if (is_done_sentinel(t)) {
      k.kind = LineKind::sentinel;
      after_done = true;
      continue;
    }
    auto fields = split_csv_row(t);
    if (!fields) {
      k.reason = "unterminated quote";
      continue;
    }
    if (fields->size() == header.size()) {
      bool is_header = true;
      for (std::size_t f = 0; f < header.size() && is_header; ++f) is_header = header_key((*fields)[f]) == header[f];
      if (is_header) {
        k.kind = LineKind::header;
        continue;
      }
    }
    if (fields->size() != header.size()) {
      k.reason = "expected " + std::to_string(header.size()) + " fields, got " + std::to_string(fields->size());
      continue;
    }
    if (std::any_of(fields->begin(), fields->end(), [](const std::string& f) { return trim(f).empty(); })) {
      k.reason = "blank field";
      continue;
    }
    std::string reason;
    records[i] = decode(*fields, reason);
    if (records[i]) {
      k.kind = LineKind::record;
    } else {
      k.reason = reason;
    }
  }

  // Prose is only stripped outside the span of data rows.
  std::size_t first_data = lines.size();
  std::size_t last_data = 0;
  bool any_data = false;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (kinds[i].kind == LineKind::record || kinds[i].kind == LineKind::header) {
      first_data = std::min(first_data, i);
      last_data = i;
      any_data = true;
    }
  }

  for (std::size_t i = 0; i < lines.size(); ++i) {
    auto& k = kinds[i];
    switch (k.kind) {
      case LineKind::blank:
        ++report.structural;
        break;
      case LineKind::fence:
        ++report.structural;
        note_wrapper(report, "code fence");
        break;
      case LineKind::sentinel:
        ++report.structural;
        report.done_sentinel_seen = true;
        break;
      case LineKind::header:
        ++report.structural;
        note_wrapper(report, "header row");
        break;
      case LineKind::record:
        ++report.recovered;
        out.push_back(std::move(*records[i]));
        break;
      case LineKind::after_sentinel:
        report.dropped.push_back({i + 1, "after Done sentinel", std::string(lines[i])});
        break;
      case LineKind::rejected: {
        auto t = trim(lines[i]);
        bool leading = !any_data || i < first_data;
        bool trailing = any_data && i > last_data;
        if ((leading || trailing) && looks_like_prose(t)) {
          ++report.structural;
          note_wrapper(report, leading ? "leading prose" : "trailing prose");
        } else {
          report.dropped.push_back({i + 1, k.reason, std::string(lines[i])});
        }
        break;
      }
    }
  }
  return report;
}

std::optional<bool> verdict_token(std::string_view s) {
  auto t = trim(s);
  while (!t.empty() && (t.front() == '\'' || t.front() == '"' || t.front() == '*')) t.remove_prefix(1);
  while (!t.empty() && (t.back() == '\'' || t.back() == '"' || t.back() == '*' || t.back() == '.')) t.remove_suffix(1);
  auto l = lower(t);
  if (l == "true") return true;
  if (l == "false") return false;
  return std::nullopt;
}

}  // namespace

std::optional<std::vector<std::string>> split_csv_row(std::string_view row) {
  std::vector<std::string> fields;
  std::size_t i = 0;
  const std::size_t n = row.size();
  while (true) {
    while (i < n && (row[i] == ' ' || row[i] == '\t')) ++i;
    std::string field;
    if (i < n && row[i] == '"') {
      ++i;
      bool closed = false;
      while (i < n) {
        if (row[i] == '"') {
          if (i + 1 < n && row[i + 1] == '"') {
            field.push_back('"');
            i += 2;
            continue;
          }
          ++i;
          closed = true;
          break;
        }
        field.push_back(row[i++]);
      }
      if (!closed) return std::nullopt;
      std::size_t tail = i;
      while (i < n && row[i] != ',') ++i;
      auto extra = trim(row.substr(tail, i - tail));
      field.append(extra);
    } else {
      std::size_t start = i;
      while (i < n && row[i] != ',') ++i;
      field = std::string(trim(row.substr(start, i - start)));
    }
    fields.push_back(std::move(field));
    if (i >= n) break;
    ++i;  // comma
  }
  return fields;
}

std::string csv_field(std::string_view value) {
  bool quote = value.find_first_of(",\"\n") != std::string_view::npos ||
               (!value.empty() && (value.front() == ' ' || value.back() == ' '));
  if (!quote) return std::string(value);
  std::string out = "\"";
  for (char c : value) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

std::string format_extraction_csv(const std::vector<ExtractionRecord>& records, bool with_header) {
  std::string out;
  if (with_header) out += "Sentence ID,Protein 1,Protein 2,Interaction Type\n";
  for (const auto& r : records) {
    out += csv_field(r.sentence_id) + "," + csv_field(r.protein1) + "," + csv_field(r.protein2) + "," +
           csv_field(r.interaction_type) + "\n";
  }
  out += "Done";
  return out;
}

std::string format_verdict_csv(const std::vector<VerdictRecord>& records, bool with_header) {
  std::string out;
  if (with_header) out += "Sentence ID,PPI\n";
  for (const auto& r : records) out += csv_field(r.sentence_id) + (r.verdict ? ",TRUE\n" : ",FALSE\n");
  out += "Done";
  return out;
}

std::pair<std::vector<ExtractionRecord>, ParseReport> parse_extraction(std::string_view text) {
  static const std::vector<std::string> header = {"sentenceid", "protein1", "protein2", "interactiontype"};
  std::vector<ExtractionRecord> records;
  auto report = scan_rows<ExtractionRecord>(
      text, header,
      [](const std::vector<std::string>& f, std::string&) -> std::optional<ExtractionRecord> {
        return ExtractionRecord{f[0], f[1], f[2], f[3]};
      },
      records);
  return {std::move(records), std::move(report)};
}

std::pair<std::vector<VerdictRecord>, ParseReport> parse_verdicts(std::string_view text) {
  static const std::vector<std::string> header = {"sentenceid", "ppi"};
  std::vector<VerdictRecord> records;
  auto report = scan_rows<VerdictRecord>(
      text, header,
      [](const std::vector<std::string>& f, std::string& reason) -> std::optional<VerdictRecord> {
        auto v = verdict_token(f[1]);
        if (!v) {
          reason = "unrecognized verdict";
          return std::nullopt;
        }
        return VerdictRecord{f[0], std::nullopt, *v};
      },
      records);
  return {std::move(records), std::move(report)};
}

std::pair<std::optional<bool>, ParseReport> parse_single_verdict(std::string_view text) {
  ParseReport report;
  auto lines = split_lines(text);
  report.total_lines = lines.size();
  std::optional<bool> verdict;
  std::size_t verdict_line = lines.size();

  for (std::size_t i = 0; i < lines.size() && !verdict; ++i) {
    auto line = lines[i];
    std::size_t pos = 0;
    while (pos < line.size() && !verdict) {
      while (pos < line.size() && !std::isalnum(static_cast<unsigned char>(line[pos]))) ++pos;
      std::size_t start = pos;
      while (pos < line.size() && std::isalnum(static_cast<unsigned char>(line[pos]))) ++pos;
      auto word = lower(line.substr(start, pos - start));
      if (word == "true") verdict = true;
      if (word == "false") verdict = false;
    }
    if (verdict) verdict_line = i;
  }

  for (std::size_t i = 0; i < lines.size(); ++i) {
    auto t = trim(lines[i]);
    if (i == verdict_line) {
      ++report.recovered;
    } else if (t.empty()) {
      ++report.structural;
    } else if (is_fence(t)) {
      ++report.structural;
      note_wrapper(report, "code fence");
    } else if (verdict) {
      ++report.structural;
      note_wrapper(report, "surrounding prose");
    } else {
      report.dropped.push_back({i + 1, "no TRUE/FALSE token", std::string(lines[i])});
    }
  }
  return {verdict, std::move(report)};
}

}  // namespace ppibench
