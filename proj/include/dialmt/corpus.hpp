#pragma once

#include <string>
#include <vector>

#include "dialmt/rng.hpp"

namespace dialmt {

// Reserved separator joining sentences inside a sub-document. Never produced
// by tokenization of user text: literal occurrences are escaped on ingestion.
inline constexpr const char* kSepToken = "<sep>";
inline constexpr const char* kSepEscToken = "<sep_esc>";

using Tokens = std::vector<std::string>;

struct ParallelDocument {
  std::string doc_id;
  std::vector<Tokens> src_sentences;
  std::vector<Tokens> tgt_sentences;
  int size() const { return static_cast<int>(src_sentences.size()); }
};

struct SubDocumentPair {
  Tokens src;  // sentences joined with the separator
  Tokens tgt;
  int n_sentences = 0;
  std::string doc_id;
  int start = 0;  // index of the first sentence within the document
};

// Reads line-aligned parallel text plus a boundary file (one inclusive
// 0-based "start<TAB>end" range per line, monotone and non-overlapping).
// Literal separator tokens in the text are replaced with kSepEscToken.
std::vector<ParallelDocument> load_parallel_documents(const std::string& src_path,
                                                      const std::string& tgt_path,
                                                      const std::string& boundaries_path);

// Partitions the document into consecutive windows; each window length is
// drawn uniformly from [1, min(n_max, remaining)]. With overlap=true windows
// are sampled independently (random start, random length) instead.
std::vector<SubDocumentPair> sample_subdocuments(const ParallelDocument& doc, int n_max, Rng& rng,
                                                 bool overlap = false);

Tokens join_with_sep(const std::vector<Tokens>& sentences);
std::vector<Tokens> split_by_sep(const Tokens& seq);

}  // namespace dialmt
