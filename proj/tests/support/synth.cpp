#include "synth.hpp"

#include <atomic>
#include <filesystem>
#include <random>

#include <unistd.h>

namespace ppibench::testing {

namespace {

const std::vector<std::string> kNames = {
    "KatX",   "EsigmaF", "sigmaB", "SigL",     "RocR",    "rocG",     "phrC",   "sigmaH", "gsiB",   "sigB",
    "ComK",   "ComS",    "GerE",   "sigK",     "cotD",    "SigE",     "FtsZ",   "FlgM",   "sigmaD", "AlsR",
    "tagA",   "tuaA",    "Spo0A",  "spoIIG",   "AbrB",    "sigma(X)", "sigma(A)", "SpoIIAB", "SpoIIAA-P",
    "PhoP~P", "PBP4*",   "YfhP",   "DnaK",     "ClpX",    "CtsR",     "σB",     "σF",     "Kin C",  "sigma 28",
    "ydhD",   "ykuD",    "cwlH",   "sspE",     "bmrUR",   "degR",     "cotB",   "sigW",   "araE",   "kdgR"};

const std::vector<std::string> kFiller = {"binds",   "activates", "represses", "and",      "the",    "requires",
                                          "while",   "promoter",  "of",        "expression", "with", "in vivo",
                                          "whereas", "inhibits",  "controls",  "during",   "weakly", "gene"};

std::size_t draw(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
  return lo + static_cast<std::size_t>(rng() % (hi - lo + 1));
}

double unit(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

std::size_t cp_len(const std::string& s) {
  std::size_t n = 0;
  for (unsigned char c : s) n += (c & 0xC0) != 0x80;
  return n;
}

}  // namespace

Corpus synth_corpus(std::uint64_t seed, const SynthOptions& o) {
  std::mt19937_64 rng(seed);
  std::vector<Document> docs;
  for (std::size_t d = 0; d < o.documents; ++d) {
    Document doc;
    doc.doc_id = o.prefix + ".d" + std::to_string(d);
    const auto n_sent = draw(rng, o.min_sentences, o.max_sentences);
    for (std::size_t s = 0; s < n_sent; ++s) {
      Sentence sent;
      sent.sentence_id = doc.doc_id + ".s" + std::to_string(s);
      const auto n_ent = draw(rng, o.min_entities, o.max_entities);
      std::string text;
      std::size_t cps = 0;
      auto append = [&](const std::string& piece) {
        if (!text.empty()) {
          text += ' ';
          ++cps;
        }
        text += piece;
        cps += cp_len(piece);
      };
      append(kFiller[draw(rng, 0, kFiller.size() - 1)]);
      for (std::size_t e = 0; e < n_ent; ++e) {
        append(kFiller[draw(rng, 0, kFiller.size() - 1)]);
        const auto& name = kNames[draw(rng, 0, kNames.size() - 1)];
        text += ' ';
        ++cps;
        EntityMention m;
        m.id = "T" + std::to_string(e + 1);
        m.surface = name;
        m.char_start = cps;
        text += name;
        cps += cp_len(name);
        m.char_end = cps;
        sent.entities.push_back(m);
      }
      append(".");
      for (std::size_t a = 0; a < n_ent; ++a) {
        for (std::size_t b = a + 1; b < n_ent; ++b) {
          if (unit(rng) >= o.annotate_rate) continue;
          bool positive = unit(rng) < o.positive_rate;
          bool swap = unit(rng) < 0.3;
          auto e1 = sent.entities[swap ? b : a].id;
          auto e2 = sent.entities[swap ? a : b].id;
          sent.pairs.push_back({e1, e2, positive});
        }
      }
      sent.text = std::move(text);
      doc.sentences.push_back(std::move(sent));
    }
    docs.push_back(std::move(doc));
  }
  return Corpus(std::move(docs));
}

Corpus synth_corpus_with_positives(std::uint64_t seed, std::size_t positives, std::size_t documents) {
  SynthOptions o;
  o.documents = documents;
  o.min_sentences = 2;
  o.max_sentences = 6;
  o.positive_rate = 0.6;
  for (std::uint64_t attempt = 0;; ++attempt) {
    auto corpus = synth_corpus(seed + attempt, o);
    if (corpus_stats(corpus).n_positive >= positives) return corpus;
    o.max_sentences += 2;
  }
}

std::string data_path(const std::string& name) { return std::string(PPIBENCH_TEST_DATA_DIR) + "/" + name; }

std::string temp_dir(const std::string& tag) {
  static std::atomic<int> counter{0};
  auto dir = std::filesystem::temp_directory_path() /
             ("ppibench_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir.string();
}

}  // namespace ppibench::testing
