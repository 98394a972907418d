#include "ppibench/folds.hpp"

#include <cmath>
#include <istream>
#include <ostream>
#include <unordered_map>

#include "ppibench/rng.hpp"

namespace ppibench {

std::vector<const Document*> FoldPlan::documents(const Corpus& corpus, std::size_t fold) const {
  std::vector<const Document*> out;
  for (const auto& doc : corpus.documents()) {
    auto it = assignment.find(doc.doc_id);
    if (it != assignment.end() && it->second == fold) out.push_back(&doc);
  }
  return out;
}

std::vector<const Sentence*> FoldPlan::sentences(const Corpus& corpus, std::size_t fold) const {
  std::vector<const Sentence*> out;
  for (const auto* doc : documents(corpus, fold)) {
    for (const auto& s : doc->sentences) out.push_back(&s);
  }
  return out;
}

FoldPlan make_document_folds(const Corpus& corpus, std::size_t k, std::uint64_t seed) {
  if (k < 2) throw FoldError("k must be at least 2");
  const auto& docs = corpus.documents();
  if (docs.size() < k) {
    throw FoldError("corpus has " + std::to_string(docs.size()) + " documents, fewer than k=" +
                    std::to_string(k));
  }
  std::vector<std::size_t> order(docs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng::shuffle(order, seed);

  FoldPlan plan;
  plan.k = k;
  for (std::size_t i = 0; i < order.size(); ++i) {
    plan.assignment[docs[order[i]].doc_id] = i % k;
  }
  return plan;
}

void write_fold_plan(std::ostream& out, const FoldPlan& plan, const Corpus& corpus) {
  out << "fold_index,doc_id\n";
  for (std::size_t f = 0; f < plan.k; ++f) {
    for (const auto* doc : plan.documents(corpus, f)) out << f << ',' << doc->doc_id << '\n';
  }
}

FoldPlan read_fold_plan(std::istream& in) {
  FoldPlan plan;
  plan.k = 0;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || (line_no == 1 && line == "fold_index,doc_id")) continue;
    auto comma = line.find(',');
    if (comma == std::string::npos) {
      throw FoldError("fold plan line " + std::to_string(line_no) + ": expected 'fold_index,doc_id'");
    }
    std::size_t fold = 0;
    try {
      std::size_t used = 0;
      fold = std::stoul(line.substr(0, comma), &used);
      if (used != comma) throw std::invalid_argument("trailing characters");
    } catch (const std::exception&) {
      throw FoldError("fold plan line " + std::to_string(line_no) + ": bad fold index");
    }
    auto doc_id = line.substr(comma + 1);
    if (!plan.assignment.emplace(doc_id, fold).second) {
      throw FoldError("fold plan line " + std::to_string(line_no) + ": document '" + doc_id +
                      "' assigned twice");
    }
    plan.k = std::max(plan.k, fold + 1);
  }
  return plan;
}

PartitionPlan make_duplicate_free_partitions(const std::vector<MaskedInstance>& instances) {
  // The lowest partition lacking sentence s is always the number of s-instances
  // placed so far, since they fill partitions 0, 1, 2, ... in order.
  PartitionPlan plan;
  std::unordered_map<std::string, std::size_t> placed;
  for (std::size_t i = 0; i < instances.size(); ++i) {
    auto slot = placed[instances[i].sentence_id]++;
    if (slot >= plan.partitions.size()) plan.partitions.resize(slot + 1);
    plan.partitions[slot].push_back(i);
  }
  return plan;
}

std::size_t estimate_tokens(std::string_view text) { return (text.size() + 3) / 4; }

std::size_t ChunkBudget::usable_tokens() const {
  auto reserve = static_cast<std::size_t>(std::ceil(static_cast<double>(context_window) * safety_margin));
  return reserve >= context_window ? 0 : context_window - reserve;
}

std::size_t ChunkBudget::unit_cost(const ChunkUnit& unit) const {
  return estimator(input_line(unit.sentence_id, unit.text) + "\n") + per_sentence_output_allowance;
}

std::vector<FoldChunk> split_fold_by_budget(std::size_t fold_index, const std::vector<ChunkUnit>& units,
                                            const ChunkBudget& budget) {
  const auto limit = budget.usable_tokens();
  std::vector<FoldChunk> chunks;
  FoldChunk current;
  current.fold_index = fold_index;
  current.est_tokens = budget.preamble_tokens;
  for (std::size_t i = 0; i < units.size(); ++i) {
    const auto cost = budget.unit_cost(units[i]);
    if (budget.preamble_tokens + cost > limit) {
      throw FoldError("sentence '" + units[i].sentence_id + "' needs " +
                      std::to_string(budget.preamble_tokens + cost) + " tokens with the preamble; budget is " +
                      std::to_string(limit));
    }
    if (current.est_tokens + cost > limit) {
      chunks.push_back(std::move(current));
      current = FoldChunk{};
      current.fold_index = fold_index;
      current.chunk_index = chunks.size();
      current.est_tokens = budget.preamble_tokens;
    }
    current.sentence_ids.push_back(units[i].sentence_id);
    current.unit_indices.push_back(i);
    current.est_tokens += cost;
  }
  if (!current.sentence_ids.empty()) chunks.push_back(std::move(current));
  return chunks;
}

void write_chunk_manifest(std::ostream& out, const std::vector<FoldChunk>& chunks) {
  out << "fold_index,chunk_index,sentence_id\n";
  for (const auto& c : chunks) {
    for (const auto& id : c.sentence_ids) out << c.fold_index << ',' << c.chunk_index << ',' << id << '\n';
  }
}

std::string input_line(std::string_view sentence_id, std::string_view text) {
  std::string line;
  line.reserve(sentence_id.size() + 1 + text.size());
  line.append(sentence_id);
  line.push_back('\t');
  for (char c : text) line.push_back(c == '\t' || c == '\n' || c == '\r' ? ' ' : c);
  return line;
}

}  // namespace ppibench
