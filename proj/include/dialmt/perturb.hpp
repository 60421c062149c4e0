#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "dialmt/corpus.hpp"
#include "dialmt/rng.hpp"

namespace dialmt {

// Per-token class: 0 correct, 1 typo, 2 dropped pronoun, 3 dropped punctuation.
using Label = std::uint8_t;
inline constexpr Label kLabelCorrect = 0;
inline constexpr Label kLabelTypo = 1;
inline constexpr Label kLabelProDrop = 2;
inline constexpr Label kLabelPunDrop = 3;

enum class EditKind { prodrop, pundrop, typo };
const char* edit_kind_name(EditKind k);
EditKind edit_kind_from_name(const std::string& s);

struct EditRecord {
  EditKind kind;
  int position = 0;  // index into the clean sub-document x_d
  std::string original;
  std::optional<std::string> replacement;  // present iff kind == typo
};

struct PerturbationTables {
  std::set<std::string> pronouns;
  std::set<std::string> punctuation;
  std::map<std::string, std::vector<std::string>> homophones;
  // Pool for the random-word typo branch: corpus tokens minus separator and
  // table tokens. Sorted for deterministic draws.
  std::vector<std::string> random_pool;

  bool is_table_token(const std::string& t) const;
};

struct PerturbationConfig {
  double p_drop = 0.30;       // per pronoun / punctuation occurrence
  double p_typo = 0.01;       // per surviving unlabeled token
  double p_homophone = 0.80;  // homophone vs random-word branch
};

// Counters for the empirical-rate report. "sites" are positions where the
// Bernoulli coin was actually drawn; collision skips are listed separately.
struct PerturbStats {
  std::int64_t pronoun_sites = 0, pronoun_dropped = 0, pronoun_skipped = 0;
  std::int64_t punct_sites = 0, punct_dropped = 0, punct_skipped = 0;
  std::int64_t typo_sites = 0, typo_applied = 0;
  std::int64_t typo_entry_sites = 0;  // applied typos whose token has a homophone entry
  std::int64_t homophone_branch = 0, random_branch = 0;
  void merge(const PerturbStats& o);
};

struct PerturbResult {
  Tokens tokens;              // x_d'
  std::vector<Label> labels;  // aligned with tokens
  std::vector<EditRecord> edits;
};

// Applies ProDrop / PunDrop deletions and DialTypo substitutions to a joined
// sub-document. Sentences (separator-delimited) are perturbed independently;
// separators are never edited and always carry label 0.
PerturbResult perturb_subdocument(const Tokens& x, const PerturbationTables& tables,
                                  const PerturbationConfig& config, Rng& rng,
                                  PerturbStats* stats = nullptr);

std::vector<Label> labels_for_clean(const Tokens& x);

// Restores the clean sub-document from the perturbed one plus edit records.
Tokens invert_edits(const Tokens& x_pert, const std::vector<EditRecord>& edits);

// Independent label oracle: reconstructs the perturbed-side labels from the
// (clean, perturbed) pair alone via a match-maximizing alignment constrained
// to the edit model (only table tokens delete; substitutions never introduce
// table tokens).
std::vector<Label> derive_labels_by_alignment(const Tokens& x, const Tokens& x_pert,
                                              const PerturbationTables& tables);

// Whitespace split; within each run, maximal CJK codepoint runs become
// single-codepoint tokens while non-CJK runs stay whole.
Tokens default_segment(std::string_view text);

struct LabeledExample {
  Tokens src;        // x_d
  Tokens src_pert;   // x_d'
  std::vector<Label> labels_clean;  // all zeros, len(src)
  std::vector<Label> labels_pert;   // len(src_pert)
  Tokens tgt;        // y_d
  std::vector<EditRecord> edits;
};

LabeledExample make_labeled_example(const SubDocumentPair& pair, const PerturbationTables& tables,
                                    const PerturbationConfig& config, Rng& rng,
                                    PerturbStats* stats = nullptr);

// One token per line for pronouns/punctuation; "token<TAB>alt1,alt2" for homophones.
PerturbationTables load_tables(const std::string& pronoun_path, const std::string& punct_path,
                               const std::string& homophone_path);

// Checks that every table needed by the configured edit kinds is non-empty.
void validate_tables(const PerturbationTables& tables, const PerturbationConfig& config);

}  // namespace dialmt
