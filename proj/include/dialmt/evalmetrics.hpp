#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "dialmt/decode.hpp"
#include "dialmt/perturb.hpp"

namespace dialmt {

// BLEU tokenization: case-fold, then split every non-alphanumeric character
// into its own token. Scores are reproducible bit-for-bit within this
// toolkit; identity with external scorers is a non-goal.
std::vector<std::string> bleu_tokenize(const std::string& text);

// Uncased corpus BLEU-4 in [0,100]: geometric mean of modified n-gram
// precisions with exponential brevity penalty; 0 if any precision is 0.
double corpus_bleu(const std::vector<std::string>& hyps, const std::vector<std::string>& refs);

enum class AnnKind { prodrop, pundrop, dialtypo };
AnnKind ann_kind_from_name(const std::string& s);
const char* ann_kind_name(AnnKind k);

struct Annotation {
  AnnKind kind;
  int sentence_index = 0;  // turn index within the dialogue
  int position = 0;        // token index within the (clean) source sentence
  std::string surface;     // the dropped/typo source token
  std::string target_pronoun;  // prodrop only, lowercase target form
};

struct Turn {
  std::string src;  // noisy source sentence
  std::string ref;  // reference translation
  std::vector<Annotation> anns;
};

struct TestDialogue {
  std::string id;
  std::vector<Turn> turns;
};

struct TestSet {
  std::vector<TestDialogue> dialogues;
  std::size_t num_sentences() const;
  std::vector<std::string> all_refs() const;
};

TestSet load_testset(const std::string& path);
void save_testset(const TestSet& ts, const std::string& path);

// BLEU over sentences carrying at least one annotation of the given kind
// (pundrop or dialtypo). Empty subset reports not-applicable.
std::optional<double> phenomenon_bleu(const TestSet& ts, const std::vector<std::string>& hyps,
                                      AnnKind kind);

struct PronounRow {
  std::string pronoun;
  int recovered = 0;
  int total = 0;
};

struct RecoveryResult {
  int recovered = 0;
  int total = 0;
  double accuracy = 0.0;  // exact ratio recovered/total
  std::vector<PronounRow> per_pronoun;  // pronouns with total >= 5 only
};

// A dropped pronoun counts as recovered iff the annotated target pronoun
// appears as a whole token (case-insensitive) in the hypothesis sentence.
RecoveryResult prodrop_recovery(const TestSet& ts, const std::vector<std::string>& hyps);

struct PrfRow {
  long tp = 0, fp = 0, fn = 0;
  std::optional<double> precision, recall, f1;  // empty = not applicable
};

// Token-level precision/recall/F1 for classes 1 (typo), 2 (prodrop),
// 3 (pundrop). Index 0 of the result is class 1.
std::array<PrfRow, 3> labeling_prf(const std::vector<std::vector<Label>>& gold,
                                   const std::vector<std::vector<Label>>& pred);

struct SweepRow {
  std::string context;  // "0", "1", ... or "offline"
  double bleu = 0.0;
  double prodrop_accuracy = 0.0;
};

// Decodes the test set at every context length with the chosen online mode,
// plus one offline reference row.
std::vector<SweepRow> context_sweep(const Translator& t, const TestSet& ts, DecodeMode online_mode,
                                    const std::vector<int>& k_values, int jobs = 1);

void write_sweep_csv(const std::string& path, const std::vector<SweepRow>& rows);

struct MetricsReport {
  double bleu = 0.0;
  std::optional<double> pundrop_bleu, dialtypo_bleu;
  RecoveryResult prodrop;
  std::optional<std::array<PrfRow, 3>> labeling;
};

MetricsReport evaluate_all(const TestSet& ts, const std::vector<std::string>& hyps);
std::string report_to_json(const MetricsReport& r);
std::string report_to_text(const MetricsReport& r);

// Decodes every dialogue of a test set (offline mode), optionally in parallel.
std::vector<std::string> decode_testset_offline(const Translator& t, const TestSet& ts,
                                                int jobs = 1);

}  // namespace dialmt
