#include <doctest.h>

#include <atomic>
#include <cmath>
#include <random>
#include <sstream>

#include "ppibench/folds.hpp"
#include "ppibench/prompt.hpp"
#include "support/synth.hpp"

using namespace ppibench;

namespace {

VariationLibrary counted_library(const std::array<std::size_t, kSectionCount>& counts) {
  VariationLibrary lib;
  for (std::size_t s = 0; s < kSectionCount; ++s) {
    for (std::size_t j = 0; j < counts[s]; ++j) {
      lib.sections[s].push_back({"P" + std::to_string(j) + "_S" + std::to_string(s + 1),
                                 "s" + std::to_string(s + 1) + "v" + std::to_string(j)});
    }
  }
  return lib;
}

std::size_t variation_of(const PromptTemplate& t, std::size_t s) {
  auto text = t.sections[s];
  return std::stoul(text.substr(text.find('v') + 1));
}

}  // namespace

TEST_CASE("bundled library holds the seven section winners") {
  const auto& lib = default_variation_library();
  for (std::size_t s = 0; s < kSectionCount; ++s) {
    CHECK(lib.sections[s].size() == 2);
    CHECK(lib.find(s + 1, best_section_prompts()[s]) == std::size_t{1});
  }
  std::array<std::size_t, kSectionCount> expected_capacity = {128, 54, 96, 72, 72, 24, 12};
  CHECK(lib.capacity == expected_capacity);
  CHECK(best_section_prompts()[2] == "P60_S3");
}

TEST_CASE("base prompt text") {
  auto t = canned_template(default_variation_library(), "P60_S3");
  auto text = t.render();
  CHECK(text.rfind("Consider each sentence separately and infer every pair of Protein-Protein Interactions", 0) == 0);
  CHECK(text.find("For this task, consider Proteins and Genes as interchangeable terms.") != std::string::npos);
  CHECK(text.find("Provide each pair in a separate row whenever a sentence contains multiple") != std::string::npos);
  CHECK(text.find("Please, format your results in CSV (comma-separated values) format") != std::string::npos);
  const std::string lead_in = "\nHere are the sentences that you need to process:";
  REQUIRE(text.size() > lead_in.size());
  CHECK(text.substr(text.size() - lead_in.size()) == lead_in);
  CHECK_THROWS_AS(canned_template(default_variation_library(), "P999_S9"), PromptError);
}

TEST_CASE("library format round trip and errors") {
  const auto& lib = default_variation_library();
  std::ostringstream out;
  write_variation_library(out, lib);
  CHECK(parse_variation_library(out.str()) == lib);

  std::string six_sections;
  for (int s = 1; s <= 6; ++s) six_sections += "[section " + std::to_string(s) + "]\nx\n";
  CHECK_THROWS_AS(parse_variation_library(six_sections), PromptError);
  CHECK_THROWS_AS(parse_variation_library(six_sections + "[section 7]\n---\nb\n"), PromptError);
  CHECK_THROWS_AS(parse_variation_library(six_sections + "[section 6]\nb\n"), PromptError);
  CHECK_THROWS_AS(parse_variation_library("stray\n" + six_sections + "[section 7]\ny\n"), PromptError);
  CHECK_THROWS_AS(parse_variation_library(six_sections + "[section 8]\ny\n"), PromptError);
  auto ok = parse_variation_library("# comment\n" + six_sections + "[section 7 capacity=3]\ny\n---\n@name Z\nz1\nz2\n");
  CHECK(ok.sections[6].size() == 2);
  CHECK(ok.sections[6][1].name == "Z");
  CHECK(ok.sections[6][1].text == "z1\nz2");
  CHECK(ok.capacity[6] == 3);
}

TEST_CASE("setting identifiers round trip") {
  for (auto s : kAllSettings) {
    CHECK(parse_setting(setting_id(s)) == s);
    CHECK_FALSE(setting_label(s).empty());
  }
  CHECK_FALSE(parse_setting("bogus"));
  CHECK(is_masked(PromptSetting::masked_nfold));
  CHECK_FALSE(is_masked(PromptSetting::with_dictionary));
  CHECK(uses_dictionary(PromptSetting::with_normalized_dictionary));
}

TEST_CASE("dictionary line sits right before the final lead-in") {
  auto t = canned_template(default_variation_library(), "P60_S3");
  ProteinDictionary d(DictionaryKind::original, {"KinC", "sigma(A)"});
  auto text = extraction_preamble(PromptSetting::with_dictionary, t, &d);
  const std::string expected =
      "Here are the protein names for your reference : [['KinC' 'sigma(A)']]\n"
      "Here are the sentences that you need to process:";
  CHECK(text.substr(text.size() - expected.size()) == expected);
  ProteinDictionary n(DictionaryKind::normalized, {"kinc"});
  auto ntext = extraction_preamble(PromptSetting::with_normalized_dictionary, t, &n);
  CHECK(ntext.find("Here are the normalized protein names for your reference : [['kinc']]\n") != std::string::npos);
  CHECK_THROWS_AS(extraction_preamble(PromptSetting::with_dictionary, t, nullptr), PromptError);
  CHECK_THROWS_AS(extraction_preamble(PromptSetting::masked_10fold, t, nullptr), PromptError);
  CHECK(extraction_preamble(PromptSetting::base_10fold, t, nullptr) == t.render());
}

TEST_CASE("assembled prompts end with one tab-separated line per input") {
  auto c = load_corpus_file(testing::data_path("fixture_corpus.jsonl")).corpus;
  auto sentences = c.sentences();
  auto t = canned_template(default_variation_library(), "P60_S3");
  auto p = assemble_prompt(PromptSetting::base_10fold, t, nullptr, sentences);
  CHECK(p.sentence_ids.size() == sentences.size());
  auto lines = parse_input_block(p.text);
  REQUIRE(lines.size() == sentences.size());
  for (std::size_t i = 0; i < lines.size(); ++i) {
    CHECK(lines[i].sentence_id == sentences[i]->sentence_id);
    CHECK(lines[i].text == sentences[i]->text);
  }
  CHECK(p.est_tokens == estimate_tokens(p.text));
  CHECK_THROWS_AS(assemble_prompt(PromptSetting::base_10fold, t, nullptr, {}), PromptError);

  auto inst = instances_for(c);
  std::vector<const MaskedInstance*> two = {&inst[0], &inst[1]};
  auto w = MaskedWording::defaults();
  auto masked = assemble_prompt(PromptSetting::masked_10fold, w, two);
  CHECK(masked.text.rfind(w.batch, 0) == 0);
  CHECK(parse_input_block(masked.text).size() == 2);
  CHECK_THROWS_AS(assemble_prompt(PromptSetting::masked_single_sentence, w, two), PromptError);
  auto single = assemble_prompt(PromptSetting::masked_single_sentence, w, {&inst[0]});
  CHECK(single.text.rfind(w.single, 0) == 0);
  CHECK(single.text.find("Here is the sentence that you need to process:") != std::string::npos);
}

TEST_CASE("optimizer audit has sum(N_i) + 7 entries and follows the greedy rule") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    std::array<std::size_t, kSectionCount> counts{};
    for (auto& c : counts) c = 1 + rng() % 5;
    auto lib = counted_library(counts);
    // Arbitrary deterministic, non-separable score of the whole template.
    auto evaluator = [salt = rng()](const PromptTemplate& t) {
      std::uint64_t h = salt;
      for (const auto& s : t.sections) {
        for (char ch : s) h = (h ^ static_cast<unsigned char>(ch)) * 1099511628211ULL;
      }
      return static_cast<double>(h % 7);  // many ties
    };
    auto result = optimize_prompt(lib, evaluator);

    std::size_t total = 0;
    for (auto c : counts) total += c;
    REQUIRE(result.audit.size() == total + kSectionCount);

    // Independent oracle.
    PromptTemplate current = lib.base_template();
    std::size_t k = 0;
    std::vector<PromptTemplate> bests;
    for (std::size_t s = 0; s < kSectionCount; ++s) {
      std::size_t best = 0;
      double top = -1;
      PromptTemplate best_t = current;
      for (std::size_t j = 0; j < counts[s]; ++j) {
        auto cand = current;
        cand.sections[s] = lib.sections[s][j].text;
        double score = evaluator(cand);
        CHECK(result.audit[k].phase == 1);
        CHECK(result.audit[k].section == s + 1);
        CHECK(result.audit[k].variation == j);
        CHECK(result.audit[k].score == score);
        ++k;
        if (score > top) {
          top = score;
          best = j;
          best_t = cand;
        }
      }
      CHECK(result.winners[s] == best);
      current = best_t;
      bests.push_back(current);
    }
    double top = -1;
    std::size_t final_section = 0;
    for (std::size_t s = 0; s < kSectionCount; ++s) {
      double score = evaluator(bests[s]);
      CHECK(result.audit[k].phase == 2);
      CHECK(result.audit[k].score == score);
      ++k;
      if (score > top) {
        top = score;
        final_section = s + 1;
      }
    }
    CHECK(result.final_section == final_section);
    CHECK(result.final_score == top);
    CHECK(result.final_template == bests[final_section - 1]);
  }
}

TEST_CASE("optimizer with workers gives the same result") {
  auto lib = counted_library({8, 4, 6, 5, 5, 3, 2});
  auto evaluator = [](const PromptTemplate& t) {
    double v = 0;
    for (std::size_t s = 0; s < kSectionCount; ++s) v += std::sin(1.0 + s * 3.0 + variation_of(t, s));
    return v;
  };
  auto serial = optimize_prompt(lib, evaluator);
  OptimizeOptions o;
  o.workers = 4;
  auto parallel = optimize_prompt(lib, evaluator, o);
  CHECK(serial.final_template == parallel.final_template);
  CHECK(serial.audit.size() == parallel.audit.size());
  for (std::size_t i = 0; i < serial.audit.size(); ++i) CHECK(serial.audit[i].score == parallel.audit[i].score);
}

TEST_CASE("optimizer failures name the variation") {
  auto lib = counted_library({3, 3, 3, 3, 3, 3, 3});
  std::atomic<int> calls{0};
  auto throwing = [&](const PromptTemplate&) -> double {
    if (++calls == 5) throw std::runtime_error("endpoint down");
    return 1.0;
  };
  try {
    optimize_prompt(lib, throwing);
    FAIL("expected OptimizationError");
  } catch (const OptimizationError& e) {
    CHECK(e.section() == 2);
    CHECK(e.variation() == 1);
  }
  auto nan = [](const PromptTemplate&) { return std::nan(""); };
  CHECK_THROWS_AS(optimize_prompt(lib, nan), OptimizationError);
}
