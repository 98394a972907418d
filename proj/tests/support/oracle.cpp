#include "oracle.hpp"

#include <algorithm>
#include <random>

#include "ppibench/utf8.hpp"

namespace ppibench::testing {

namespace {

std::string oracle_key(const std::string& name, const MatchConfig& cfg) {
  if (cfg.names == NameComparison::exact) return name;
  std::string out;
  for (char c : name) {
    if (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v') continue;
    if (cfg.normalize.strip_set.find(c) != std::string::npos) continue;
    out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  bool digits = std::all_of(out.begin(), out.end(), [](char c) { return c >= '0' && c <= '9'; });
  if (!out.empty() && !digits) return out;
  out.clear();
  for (char c : name) {
    if (c == ' ' || c == '\t') continue;
    out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  return out;
}

bool same_pair(const std::string& a1, const std::string& a2, const std::string& b1, const std::string& b2,
               const MatchConfig& cfg) {
  if (a1 == b1 && a2 == b2) return true;
  return cfg.orientation == PairOrientation::unordered && a1 == b2 && a2 == b1;
}

struct Entry {
  std::string sid, a, b;
};

}  // namespace

OracleCounts brute_force_match(const std::vector<ExtractionRecord>& predictions,
                               const std::vector<const Sentence*>& gold, const MatchConfig& cfg) {
  std::vector<Entry> golds;
  for (const auto* s : gold) {
    for (const auto& p : s->pairs) {
      if (!p.positive) continue;
      Entry e{s->sentence_id, oracle_key(s->find_entity(p.e1)->surface, cfg),
              oracle_key(s->find_entity(p.e2)->surface, cfg)};
      bool dup = false;
      for (const auto& g : golds) dup = dup || (g.sid == e.sid && same_pair(g.a, g.b, e.a, e.b, cfg));
      if (!dup) golds.push_back(e);
    }
  }
  std::vector<bool> hit(golds.size(), false);
  std::vector<Entry> kept;
  OracleCounts c;
  for (const auto& r : predictions) {
    Entry e{r.sentence_id, oracle_key(r.protein1, cfg), oracle_key(r.protein2, cfg)};
    if (cfg.dedupe_predictions) {
      bool dup = false;
      for (const auto& k : kept) dup = dup || (k.sid == e.sid && same_pair(k.a, k.b, e.a, e.b, cfg));
      if (dup) continue;
      kept.push_back(e);
    }
    bool matched = false;
    for (std::size_t i = 0; i < golds.size() && !matched; ++i) {
      if (!hit[i] && golds[i].sid == e.sid && same_pair(golds[i].a, golds[i].b, e.a, e.b, cfg)) {
        hit[i] = true;
        matched = true;
      }
    }
    matched ? ++c.tp : ++c.fp;
  }
  c.fn = static_cast<std::size_t>(std::count(hit.begin(), hit.end(), false));
  return c;
}

MatchTrial random_match_trial(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto pick = [&](std::size_t n) { return static_cast<std::size_t>(rng() % n); };
  const std::vector<std::string> names = {"KinA", "kinA", "Spo0A", "sigma(A)", "sigmaA", "σB", "PBP4*", "42", "Gene X", "YfiA"};

  MatchTrial t;
  t.cfg.names = pick(2) ? NameComparison::normalized : NameComparison::exact;
  t.cfg.orientation = pick(2) ? PairOrientation::unordered : PairOrientation::ordered;
  t.cfg.dedupe_predictions = pick(4) != 0;

  std::vector<Document> docs;
  std::vector<std::string> sids;
  std::vector<std::vector<std::string>> surfaces;
  for (std::size_t d = 0; d < 1 + pick(3); ++d) {
    Document doc{"T.d" + std::to_string(d), {}};
    for (std::size_t s = 0; s < 1 + pick(3); ++s) {
      Sentence sent;
      sent.sentence_id = doc.doc_id + ".s" + std::to_string(s);
      std::vector<std::string> surf;
      std::size_t n_ent = 2 + pick(3);
      for (std::size_t e = 0; e < n_ent; ++e) {
        std::string name = names[pick(names.size())];
        if (!sent.text.empty()) sent.text += " and ";
        std::size_t start = utf8::length(sent.text);
        sent.text += name;
        sent.entities.push_back({"T" + std::to_string(e + 1), name, start, start + utf8::length(name)});
        surf.push_back(name);
      }
      for (std::size_t a = 0; a < n_ent; ++a) {
        for (std::size_t b = a + 1; b < n_ent; ++b) {
          if (pick(3) == 0) continue;
          sent.pairs.push_back({sent.entities[a].id, sent.entities[b].id, pick(2) == 0});
        }
      }
      sids.push_back(sent.sentence_id);
      surfaces.push_back(surf);
      doc.sentences.push_back(std::move(sent));
    }
    docs.push_back(std::move(doc));
  }
  t.corpus = Corpus(std::move(docs));

  auto vary = [&](std::string s) {
    switch (pick(4)) {
      case 0:
        for (auto& c : s) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
        break;
      case 1:
        s = " " + s + " ";
        break;
      default:
        break;
    }
    return s;
  };
  std::size_t n_pred = pick(12);
  for (std::size_t i = 0; i < n_pred; ++i) {
    if (pick(10) == 0) {
      t.predictions.push_back({"ELSEWHERE.s0", "KinA", "Spo0A", "binds"});
      continue;
    }
    std::size_t s = pick(sids.size());
    const auto& surf = surfaces[s];
    std::string a = pick(5) == 0 ? names[pick(names.size())] : surf[pick(surf.size())];
    std::string b = surf[pick(surf.size())];
    t.predictions.push_back({sids[s], vary(a), vary(b), "interacts"});
    if (pick(4) == 0) t.predictions.push_back(t.predictions.back());
  }
  return t;
}

}  // namespace ppibench::testing
