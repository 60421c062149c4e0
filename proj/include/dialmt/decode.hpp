#pragma once

#include <functional>
#include <string>
#include <vector>

#include "dialmt/bpe.hpp"
#include "dialmt/transformer.hpp"

namespace dialmt {

enum class DecodeMode { offline, online_cut, online_fd, pipeline };
DecodeMode decode_mode_from_name(const std::string& s);
const char* decode_mode_name(DecodeMode m);

struct BeamConfig {
  int beam_size = 5;
  double max_len_factor = 2.0;  // max target length = factor * src_len + extra
  int max_len_extra = 10;
  double length_penalty_alpha = 0.0;  // 0 = pure sum of log-probs
};

struct Hypothesis {
  std::vector<int> ids;  // target ids without BOS/EOS
  double score = 0.0;    // sum of log-probs (incl. EOS when emitted)
};

// Length-bounded beam search. With a forced prefix, decoding emits exactly
// that prefix first and continues from it. Ties break toward smaller token
// ids, then lexicographically smaller sequences. Deterministic.
Hypothesis beam_search(const TransformerModel<float>& model, const std::vector<int>& src,
                       const BeamConfig& cfg, const std::vector<int>& forced_prefix = {});

// Plain argmax loop; the oracle for beam_size == 1.
Hypothesis greedy_decode(const TransformerModel<float>& model, const std::vector<int>& src,
                         const BeamConfig& cfg, const std::vector<int>& forced_prefix = {});

struct DialogueSession {
  int context_len = 0;  // k preceding sentences used as context
  std::vector<std::string> src_history;
  std::vector<std::string> tgt_history;
};

// Bundles the pieces needed to translate raw text.
struct Translator {
  const TransformerModel<float>* model = nullptr;
  const BpeModel* src_bpe = nullptr;
  const BpeModel* tgt_bpe = nullptr;
  BeamConfig beam;
};

// Concatenate-the-dialogue decoding; always returns one translation per input
// sentence (missing segments are padded, surplus segments merged into the
// last one).
std::vector<std::string> translate_offline(const Translator& t,
                                           const std::vector<std::string>& sents);

// Re-translates context + current sentence and keeps the last target segment.
std::string translate_online_cut(const Translator& t, DialogueSession& session,
                                 const std::string& new_src);

// Force-decodes the previous k translations (plus a trailing separator) as the
// target prefix and returns the first segment of the newly generated suffix.
std::string translate_online_fd(const Translator& t, DialogueSession& session,
                                const std::string& new_src);

using RepairFn = std::function<std::vector<std::string>(const std::vector<std::string>&)>;

std::vector<std::string> repair_then_translate(const RepairFn& repair, const Translator& mt,
                                               const std::vector<std::string>& sents,
                                               DecodeMode mode, int context_len);

// Model-backed repair: the dialogue is repaired offline through the repair
// model (source-side vocabulary on both ends), then translated.
std::vector<std::string> repair_then_translate(const Translator& repair, const Translator& mt,
                                               const std::vector<std::string>& sents,
                                               DecodeMode mode, int context_len);

// Shared text plumbing.
Tokens sentence_words(const std::string& text);  // segment + separator escaping
std::string words_to_text(const Tokens& words);

}  // namespace dialmt
