#pragma once

#include <map>
#include <string>
#include <vector>

#include "dialmt/corpus.hpp"
#include "dialmt/evalmetrics.hpp"
#include "dialmt/perturb.hpp"

namespace dialmt::test {

// A synthetic dialogue language with token-copy translation through a
// dictionary. Sentences look like [pronoun, verb, noun+, punct]; each
// document sticks to one topic (which picks the noun/verb pools) and one
// speaker pronoun, so dropped pronouns and off-topic typo words are
// recoverable from context.
struct SynthLang {
  PerturbationTables tables;  // pronouns, punctuation, homophones, random pool
  std::map<std::string, std::string> dict;
  std::vector<std::string> pronouns;           // source forms, frequency order
  std::vector<double> pronoun_weights;
  std::vector<std::vector<std::string>> topic_nouns;
  std::vector<std::vector<std::string>> topic_verbs;
  std::vector<std::string> puncts;

  std::string translate_token(const std::string& tok) const;
  Tokens translate(const Tokens& src) const;
};

SynthLang make_synth_lang();

struct SynthCorpusSpec {
  int n_docs = 1000;
  int min_sents = 3, max_sents = 6;
  int min_nouns = 2, max_nouns = 4;
};

std::vector<ParallelDocument> make_documents(const SynthLang& lang, const SynthCorpusSpec& spec,
                                             std::uint64_t seed);

// Writes src/tgt/boundary files for CLI-level runs.
struct CorpusFiles {
  std::string src, tgt, boundaries;
};
CorpusFiles write_corpus_files(const std::vector<ParallelDocument>& docs, const std::string& dir);

void write_table_files(const SynthLang& lang, const std::string& dir, std::string& pronouns_path,
                       std::string& punct_path, std::string& homophones_path);

// Perturbed evaluation set: one dialogue per document, annotations derived
// from the edit records, plus the joined labeled sources for labeling eval.
struct SynthTestSet {
  TestSet ts;
  std::vector<Tokens> pert_docs;                // joined perturbed source tokens
  std::vector<std::vector<Label>> pert_labels;  // aligned word labels
};

SynthTestSet make_testset(const SynthLang& lang, const std::vector<ParallelDocument>& docs,
                          const PerturbationConfig& config, std::uint64_t seed);

}  // namespace dialmt::test
