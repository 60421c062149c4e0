#pragma once

#include <set>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "dialmt/perturb.hpp"

namespace dialmt {

// Continuation pieces of a split word carry this prefix; "</w>" terminates
// words during merge learning. Both strings are reserved: input text must not
// contain them (the corpus loader never produces them from plain text).
inline constexpr const char* kBpeConnector = "##";
inline constexpr const char* kBpeEndOfWord = "</w>";

// Special token ids shared by every model.
inline constexpr int kPadId = 0;
inline constexpr int kBosId = 1;
inline constexpr int kEosId = 2;
inline constexpr int kUnkId = 3;
inline constexpr int kSepId = 4;
inline const std::vector<std::string>& special_tokens();

struct BpeModel {
  std::vector<std::pair<std::string, std::string>> merges;  // in learned order
  std::unordered_map<std::string, int> vocab;               // piece -> id
  std::vector<std::string> id_to_token;
  std::set<std::string> protected_tokens;  // never split; always contains <sep>
  int max_merges = 30000;

  int vocab_size() const { return static_cast<int>(id_to_token.size()); }
  int token_id(const std::string& piece) const;  // kUnkId when unseen
  const std::string& token(int id) const;
};

// Greedy most-frequent-pair merging over within-word symbol sequences; ties
// broken by lexicographic pair order; stops at max_merges or when no pair
// occurs at least twice. The vocabulary covers every piece the learned model
// produces on the training corpus, ordered by (count desc, piece asc).
BpeModel learn_bpe(const std::vector<Tokens>& corpus, int max_merges);

struct BpeEncoded {
  std::vector<std::string> pieces;
  std::vector<std::pair<int, int>> word_spans;  // (first piece, count) per input token
};

BpeEncoded apply_bpe(const BpeModel& model, const Tokens& words);
Tokens undo_bpe(const std::vector<std::string>& pieces);

// Every subword of a word inherits the word's label.
std::vector<Label> project_labels(const std::vector<Label>& word_labels,
                                  const std::vector<std::pair<int, int>>& word_spans);

std::vector<int> pieces_to_ids(const BpeModel& model, const std::vector<std::string>& pieces);
std::vector<std::string> ids_to_pieces(const BpeModel& model, const std::vector<int>& ids);

// Convenience: segment-free word sequence straight to ids.
std::vector<int> encode_words(const BpeModel& model, const Tokens& words);

void save_bpe(const BpeModel& model, const std::string& merges_path, const std::string& vocab_path);
BpeModel load_bpe(const std::string& merges_path, const std::string& vocab_path);

}  // namespace dialmt
