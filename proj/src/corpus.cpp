#include "ppibench/corpus.hpp"

#include <fstream>
#include <istream>
#include <set>
#include <sstream>
#include <utility>

#include <json.hpp>

#include "ppibench/utf8.hpp"

namespace ppibench {

using nlohmann::json;

const EntityMention* Sentence::find_entity(std::string_view id) const {
  for (const auto& e : entities) {
    if (e.id == id) return &e;
  }
  return nullptr;
}

Corpus::Corpus(std::vector<Document> documents) : documents_(std::move(documents)) {
  for (std::size_t d = 0; d < documents_.size(); ++d) {
    const auto& sentences = documents_[d].sentences;
    for (std::size_t s = 0; s < sentences.size(); ++s) {
      index_.emplace(sentences[s].sentence_id, Location{d, s});
    }
  }
}

const Sentence* Corpus::find_sentence(std::string_view sentence_id) const {
  auto it = index_.find(std::string(sentence_id));
  if (it == index_.end()) return nullptr;
  return &documents_[it->second.document].sentences[it->second.sentence];
}

const Document* Corpus::document_of(std::string_view sentence_id) const {
  auto it = index_.find(std::string(sentence_id));
  if (it == index_.end()) return nullptr;
  return &documents_[it->second.document];
}

std::vector<const Sentence*> Corpus::sentences() const {
  std::vector<const Sentence*> out;
  out.reserve(index_.size());
  for (const auto& doc : documents_) {
    for (const auto& s : doc.sentences) out.push_back(&s);
  }
  return out;
}

namespace {

struct Decoder {
  std::size_t line;
  bool strict;
  std::vector<std::string>* warnings;

  [[noreturn]] void fail(const std::string& msg, const std::string& sid = {}) const {
    throw CorpusError(msg, line, sid);
  }

  void check_fields(const json& obj, std::initializer_list<std::string_view> allowed,
                    std::string_view where) const {
    if (!obj.is_object()) fail(std::string(where) + " must be an object");
    for (const auto& [key, value] : obj.items()) {
      bool known = false;
      for (auto name : allowed) known = known || key == name;
      if (known) continue;
      std::string msg = "unknown field '" + key + "' in " + std::string(where);
      if (strict) fail(msg);
      warnings->push_back("line " + std::to_string(line) + ": " + msg + " (ignored)");
    }
  }

  const json& require(const json& obj, const char* key, std::string_view where) const {
    auto it = obj.find(key);
    if (it == obj.end()) fail("missing field '" + std::string(key) + "' in " + std::string(where));
    return *it;
  }

  std::string string_field(const json& obj, const char* key, std::string_view where) const {
    const auto& v = require(obj, key, where);
    if (!v.is_string()) fail("field '" + std::string(key) + "' must be a string");
    return v.get<std::string>();
  }

  std::size_t offset_field(const json& obj, const char* key, std::string_view where) const {
    const auto& v = require(obj, key, where);
    if (!v.is_number_unsigned()) {
      fail("field '" + std::string(key) + "' must be a non-negative integer");
    }
    return v.get<std::size_t>();
  }

  const json& array_field(const json& obj, const char* key, std::string_view where) const {
    const auto& v = require(obj, key, where);
    if (!v.is_array()) fail("field '" + std::string(key) + "' must be an array");
    return v;
  }

  Document document(const json& j) const {
    check_fields(j, {"doc_id", "sentences"}, "document");
    Document doc;
    doc.doc_id = string_field(j, "doc_id", "document");
    for (const auto& js : array_field(j, "sentences", "document")) {
      doc.sentences.push_back(sentence(js));
    }
    return doc;
  }

  Sentence sentence(const json& j) const {
    check_fields(j, {"sentence_id", "text", "entities", "pairs"}, "sentence");
    Sentence s;
    s.sentence_id = string_field(j, "sentence_id", "sentence");
    s.text = string_field(j, "text", "sentence");
    for (const auto& je : array_field(j, "entities", "sentence")) {
      check_fields(je, {"id", "surface", "start", "end"}, "entity");
      EntityMention e;
      e.id = string_field(je, "id", "entity");
      e.surface = string_field(je, "surface", "entity");
      e.char_start = offset_field(je, "start", "entity");
      e.char_end = offset_field(je, "end", "entity");
      s.entities.push_back(std::move(e));
    }
    for (const auto& jp : array_field(j, "pairs", "sentence")) {
      check_fields(jp, {"e1", "e2", "positive"}, "pair");
      LabeledPair p;
      p.e1 = string_field(jp, "e1", "pair");
      p.e2 = string_field(jp, "e2", "pair");
      const auto& pos = require(jp, "positive", "pair");
      if (!pos.is_boolean()) fail("field 'positive' must be a boolean", s.sentence_id);
      p.positive = pos.get<bool>();
      s.pairs.push_back(std::move(p));
    }
    return s;
  }
};

void check_sentence(const Document& doc, const Sentence& s, std::vector<Violation>& out) {
  auto add = [&](std::string rule, std::string detail) {
    out.push_back({s.sentence_id, std::move(rule), std::move(detail)});
  };
  if (s.sentence_id.size() <= doc.doc_id.size() + 1 ||
      s.sentence_id.compare(0, doc.doc_id.size(), doc.doc_id) != 0 ||
      s.sentence_id[doc.doc_id.size()] != '.') {
    add("sentence-id-prefix", "sentence_id does not start with '" + doc.doc_id + ".'");
  }

  const std::size_t text_len = utf8::length(s.text);
  std::set<std::string> ids;
  std::set<std::pair<std::size_t, std::size_t>> spans;
  for (const auto& e : s.entities) {
    if (!ids.insert(e.id).second) add("duplicate-entity-id", "entity id '" + e.id + "' repeated");
    if (!(e.char_start < e.char_end && e.char_end <= text_len)) {
      add("offset-range", "entity '" + e.id + "' span [" + std::to_string(e.char_start) + "," +
                              std::to_string(e.char_end) + ") outside text of length " +
                              std::to_string(text_len));
      continue;
    }
    auto b = *utf8::byte_offset(s.text, e.char_start);
    auto en = *utf8::byte_offset(s.text, e.char_end);
    if (s.text.compare(b, en - b, e.surface) != 0) {
      add("offset-mismatch", "entity '" + e.id + "' slice '" + s.text.substr(b, en - b) +
                                 "' != surface '" + e.surface + "'");
    }
    if (!spans.insert({e.char_start, e.char_end}).second) {
      add("duplicate-span", "entity '" + e.id + "' repeats another entity's span");
    }
  }

  std::set<std::pair<std::string, std::string>> seen;
  for (const auto& p : s.pairs) {
    bool dangling = false;
    for (const auto* id : {&p.e1, &p.e2}) {
      if (!ids.count(*id)) {
        add("dangling-entity", "pair references unknown entity '" + *id + "'");
        dangling = true;
      }
    }
    if (dangling) continue;
    if (p.e1 == p.e2) {
      add("self-pair", "pair references entity '" + p.e1 + "' twice");
      continue;
    }
    auto key = p.e1 < p.e2 ? std::pair{p.e1, p.e2} : std::pair{p.e2, p.e1};
    if (!seen.insert(key).second) {
      add("duplicate-pair", "unordered pair (" + p.e1 + ", " + p.e2 + ") repeated");
    }
  }
}

}  // namespace

LoadResult load_corpus(std::istream& source, const LoadOptions& options) {
  LoadResult result;
  std::vector<Document> docs;
  std::set<std::string> sentence_ids;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(source, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    Decoder dec{line_no, options.strict, &result.warnings};
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw CorpusError(std::string("malformed record: ") + e.what(), line_no);
    }
    Document doc = dec.document(j);

    std::vector<Violation> violations;
    for (const auto& s : doc.sentences) {
      if (!sentence_ids.insert(s.sentence_id).second) {
        throw CorpusError("duplicate sentence_id '" + s.sentence_id + "'", line_no, s.sentence_id);
      }
      check_sentence(doc, s, violations);
    }
    if (!violations.empty()) {
      const auto& v = violations.front();
      throw CorpusError(v.rule + " in " + v.sentence_id + ": " + v.detail, line_no, v.sentence_id);
    }
    docs.push_back(std::move(doc));
  }
  result.corpus = Corpus(std::move(docs));
  return result;
}

LoadResult load_corpus_file(const std::string& path, const LoadOptions& options) {
  std::ifstream in(path);
  if (!in) throw CorpusError("cannot open corpus file '" + path + "'");
  return load_corpus(in, options);
}

LoadResult load_corpus_string(std::string_view text, const LoadOptions& options) {
  std::istringstream in{std::string(text)};
  return load_corpus(in, options);
}

void write_corpus(std::ostream& out, const Corpus& corpus) {
  for (const auto& doc : corpus.documents()) {
    json jd = json::object();
    jd["doc_id"] = doc.doc_id;
    jd["sentences"] = json::array();
    for (const auto& s : doc.sentences) {
      json js = json::object();
      js["sentence_id"] = s.sentence_id;
      js["text"] = s.text;
      js["entities"] = json::array();
      for (const auto& e : s.entities) {
        js["entities"].push_back(
            {{"id", e.id}, {"surface", e.surface}, {"start", e.char_start}, {"end", e.char_end}});
      }
      js["pairs"] = json::array();
      for (const auto& p : s.pairs) {
        js["pairs"].push_back({{"e1", p.e1}, {"e2", p.e2}, {"positive", p.positive}});
      }
      jd["sentences"].push_back(std::move(js));
    }
    out << jd.dump() << '\n';
  }
}

std::string write_corpus_string(const Corpus& corpus) {
  std::ostringstream out;
  write_corpus(out, corpus);
  return out.str();
}

std::vector<Violation> validate_corpus(const Corpus& corpus) {
  std::vector<Violation> out;
  std::set<std::string> sentence_ids;
  for (const auto& doc : corpus.documents()) {
    for (const auto& s : doc.sentences) {
      if (!sentence_ids.insert(s.sentence_id).second) {
        out.push_back({s.sentence_id, "duplicate-sentence-id", "sentence_id appears more than once"});
      }
      check_sentence(doc, s, out);
    }
  }
  return out;
}

CorpusStats corpus_stats(const Corpus& corpus) {
  CorpusStats st;
  for (const auto* s : corpus.sentences()) {
    ++st.n_sentences;
    for (const auto& p : s->pairs) {
      if (p.positive) {
        ++st.n_positive;
      } else {
        ++st.n_negative;
      }
    }
  }
  st.n_total_pairs = st.n_positive + st.n_negative;
  if (st.n_positive > 0) {
    st.ratio = static_cast<double>(st.n_negative) / static_cast<double>(st.n_positive);
  }
  return st;
}

}  // namespace ppibench
