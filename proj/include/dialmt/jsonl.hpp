#pragma once

#include <string>
#include <vector>

#include "dialmt/corpus.hpp"
#include "dialmt/perturb.hpp"

namespace dialmt {

// Labeled examples: one json object per line with space-joined token fields
// {"src", "src_pert", "labels", "tgt", "edits"}.
void write_labeled_examples(const std::string& path, const std::vector<LabeledExample>& examples);
std::vector<LabeledExample> read_labeled_examples(const std::string& path);

void write_subdocuments(const std::string& path, const std::vector<SubDocumentPair>& pairs);

struct DialogueRecord {
  std::string id;
  std::vector<std::string> sents;
  std::vector<std::string> hyps;  // filled by translation
};

std::vector<DialogueRecord> read_dialogues(const std::string& path);
void write_dialogues(const std::string& path, const std::vector<DialogueRecord>& dialogues);

std::string join_tokens(const Tokens& toks);
Tokens split_tokens(const std::string& s);

}  // namespace dialmt
