#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "ppibench/corpus.hpp"
#include "ppibench/preprocess.hpp"

namespace ppibench {

/// Document-level cross-validation plan.
struct FoldPlan {
  std::size_t k = 10;
  std::map<std::string, std::size_t> assignment;  // doc_id -> fold index

  /// Documents of fold `fold`, in corpus order.
  std::vector<const Document*> documents(const Corpus& corpus, std::size_t fold) const;
  /// Sentences of fold `fold`, in corpus order.
  std::vector<const Sentence*> sentences(const Corpus& corpus, std::size_t fold) const;

  bool operator==(const FoldPlan&) const = default;
};

/// Seeded shuffle of the documents, dealt round-robin into `k` folds.
/// Throws FoldError when k < 2 or there are fewer documents than folds.
FoldPlan make_document_folds(const Corpus& corpus, std::size_t k, std::uint64_t seed);

/// `fold_index,doc_id` rows with a header, ordered by fold then corpus order.
void write_fold_plan(std::ostream& out, const FoldPlan& plan, const Corpus& corpus);
FoldPlan read_fold_plan(std::istream& in);

/// Each partition holds indices into the instance list it was built from.
struct PartitionPlan {
  std::vector<std::vector<std::size_t>> partitions;
};

/// Greedy colouring by sentence_id: instance i joins the lowest partition that does
/// not yet hold its sentence. Partition count = max pairs per sentence.
PartitionPlan make_duplicate_free_partitions(const std::vector<MaskedInstance>& instances);

using TokenEstimator = std::function<std::size_t(std::string_view)>;

/// ceil(bytes / 4).
std::size_t estimate_tokens(std::string_view text);

/// One unit of prompt input: a sentence or masked instance line.
struct ChunkUnit {
  std::string sentence_id;
  std::string text;
};

struct ChunkBudget {
  std::size_t preamble_tokens = 0;
  std::size_t per_sentence_output_allowance = 30;
  std::size_t context_window = 4096;
  /// Fraction of the window held back.
  double safety_margin = 0.15;
  TokenEstimator estimator = estimate_tokens;

  std::size_t usable_tokens() const;
  /// Estimated cost of one input unit including its output allowance.
  std::size_t unit_cost(const ChunkUnit& unit) const;
};

struct FoldChunk {
  std::size_t fold_index = 0;
  std::size_t chunk_index = 0;
  std::vector<std::string> sentence_ids;
  /// Positions of the chunk's units in the input list.
  std::vector<std::size_t> unit_indices;
  std::size_t est_tokens = 0;
};

/// Greedy first-fit packing in input order. Throws FoldError when a single unit
/// cannot fit a chunk on its own.
std::vector<FoldChunk> split_fold_by_budget(std::size_t fold_index, const std::vector<ChunkUnit>& units,
                                            const ChunkBudget& budget);

/// `fold_index,chunk_index,sentence_id` rows with a header.
void write_chunk_manifest(std::ostream& out, const std::vector<FoldChunk>& chunks);

/// Input line as it appears in a prompt: `sentence_id<TAB>text`, with tabs and
/// line breaks inside `text` flattened to spaces.
std::string input_line(std::string_view sentence_id, std::string_view text);

}  // namespace ppibench
