#include "ppibench/preprocess.hpp"

#include <algorithm>
#include <ostream>

#include <json.hpp>

#include "ppibench/utf8.hpp"

namespace ppibench {

namespace {

bool is_ascii_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

}  // namespace

std::optional<std::string> normalize_name(std::string_view raw, const NormalizeOptions& options) {
  std::string out;
  out.reserve(raw.size());
  for (char c : raw) {
    if (is_ascii_space(c)) continue;
    if (options.strip_set.find(c) != std::string::npos) continue;
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    out.push_back(c);
  }
  if (out.empty()) return std::nullopt;
  if (std::all_of(out.begin(), out.end(), [](char c) { return c >= '0' && c <= '9'; })) {
    return std::nullopt;
  }
  return out;
}

ProteinDictionary::ProteinDictionary(DictionaryKind kind, std::vector<std::string> names)
    : kind_(kind) {
  for (auto& n : names) {
    if (lookup_.insert(n).second) names_.push_back(std::move(n));
  }
}

DictionaryStats ProteinDictionary::stats() const {
  DictionaryStats st;
  st.unique_count = names_.size();
  if (names_.empty()) return st;
  std::size_t total = 0;
  st.min_len = static_cast<std::size_t>(-1);
  for (const auto& n : names_) {
    auto len = utf8::length(n);
    total += len;
    st.max_len = std::max(st.max_len, len);
    st.min_len = std::min(st.min_len, len);
  }
  st.avg_len = static_cast<double>(total) / static_cast<double>(names_.size());
  return st;
}

DictionaryPair build_dictionaries(const std::vector<const Sentence*>& sentences,
                                  const NormalizeOptions& options) {
  std::vector<std::string> original;
  std::vector<std::string> normalized;
  for (const auto* s : sentences) {
    for (const auto& e : s->entities) {
      original.push_back(e.surface);
      if (auto n = normalize_name(e.surface, options)) normalized.push_back(std::move(*n));
    }
  }
  return {ProteinDictionary(DictionaryKind::original, std::move(original)),
          ProteinDictionary(DictionaryKind::normalized, std::move(normalized))};
}

DictionaryPair build_dictionaries(const Corpus& corpus, const NormalizeOptions& options) {
  return build_dictionaries(corpus.sentences(), options);
}

void export_dictionary(std::ostream& out, const ProteinDictionary& dict) {
  auto names = dict.names();
  std::sort(names.begin(), names.end());
  for (const auto& n : names) out << n << '\n';
}

std::string dictionary_stats_json(const ProteinDictionary& dict) {
  auto st = dict.stats();
  nlohmann::ordered_json j;
  j["kind"] = dict.kind() == DictionaryKind::original ? "original" : "normalized";
  j["unique_count"] = st.unique_count;
  j["avg_len"] = st.avg_len;
  j["max_len"] = st.max_len;
  j["min_len"] = st.min_len;
  return j.dump(2);
}

MaskedInstance mask_sentence(const Sentence& sentence, const LabeledPair& pair) {
  auto found = std::find_if(sentence.pairs.begin(), sentence.pairs.end(), [&](const LabeledPair& p) {
    return (p.e1 == pair.e1 && p.e2 == pair.e2) || (p.e1 == pair.e2 && p.e2 == pair.e1);
  });
  if (found == sentence.pairs.end()) {
    throw MaskError("pair (" + pair.e1 + ", " + pair.e2 + ") is not annotated in this sentence",
                    sentence.sentence_id);
  }

  struct Span {
    std::size_t begin;
    std::size_t end;
    std::string_view token;
  };
  std::vector<Span> spans;
  bool saw_e1 = false;
  bool saw_e2 = false;
  for (const auto& e : sentence.entities) {
    auto b = utf8::byte_offset(sentence.text, e.char_start);
    auto en = utf8::byte_offset(sentence.text, e.char_end);
    if (!b || !en || *b >= *en) {
      throw MaskError("entity '" + e.id + "' has an invalid span", sentence.sentence_id);
    }
    std::string_view token = kProteinToken;
    if (e.id == pair.e1) {
      token = kProtein1Token;
      saw_e1 = true;
    } else if (e.id == pair.e2) {
      token = kProtein2Token;
      saw_e2 = true;
    }
    spans.push_back({*b, *en, token});
  }
  if (!saw_e1 || !saw_e2) {
    throw MaskError("pair references an entity that is not declared", sentence.sentence_id);
  }

  std::sort(spans.begin(), spans.end(), [](const Span& a, const Span& b) { return a.begin < b.begin; });
  for (std::size_t i = 1; i < spans.size(); ++i) {
    if (spans[i].begin < spans[i - 1].end) {
      throw MaskError("overlapping entity mentions", sentence.sentence_id);
    }
  }

  // Right to left so earlier offsets stay valid.
  std::string text = sentence.text;
  for (auto it = spans.rbegin(); it != spans.rend(); ++it) {
    text.replace(it->begin, it->end - it->begin, it->token);
  }

  return MaskedInstance{sentence.sentence_id, pair, std::move(text),
                        static_cast<std::size_t>(found - sentence.pairs.begin())};
}

std::vector<MaskedInstance> instances_for(const std::vector<const Sentence*>& sentences) {
  std::vector<MaskedInstance> out;
  for (const auto* s : sentences) {
    for (const auto& p : s->pairs) out.push_back(mask_sentence(*s, p));
  }
  return out;
}

std::vector<MaskedInstance> instances_for(const Corpus& corpus) {
  return instances_for(corpus.sentences());
}

}  // namespace ppibench
