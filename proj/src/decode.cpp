#include "dialmt/decode.hpp"

#include <algorithm>
#include <cmath>

#include "dialmt/errors.hpp"
#include "dialmt/log.hpp"

namespace dialmt {

DecodeMode decode_mode_from_name(const std::string& s) {
  if (s == "offline") return DecodeMode::offline;
  if (s == "online-cut" || s == "online_cut") return DecodeMode::online_cut;
  if (s == "online-fd" || s == "online_fd") return DecodeMode::online_fd;
  if (s == "pipeline") return DecodeMode::pipeline;
  raise(Errc::config, "unknown decode mode: " + s);
}

const char* decode_mode_name(DecodeMode m) {
  switch (m) {
    case DecodeMode::offline: return "offline";
    case DecodeMode::online_cut: return "online-cut";
    case DecodeMode::online_fd: return "online-fd";
    case DecodeMode::pipeline: return "pipeline";
  }
  return "?";
}

namespace {

struct BeamHyp {
  std::vector<int> ids;
  double score = 0.0;
  DecodeState<float> state;
  int pending = kBosId;  // next decoder input (last chosen token)
};

int max_target_len(const BeamConfig& cfg, const ModelConfig& mc, int src_len) {
  int m = static_cast<int>(cfg.max_len_factor * src_len) + cfg.max_len_extra;
  return std::min(m, mc.max_positions - 2);
}

double final_key(const Hypothesis& h, double alpha) {
  if (alpha <= 0.0 || h.ids.empty()) return h.score;
  return h.score / std::pow(static_cast<double>(h.ids.size()), alpha);
}

bool better_final(const Hypothesis& a, const Hypothesis& b, double alpha) {
  double ka = final_key(a, alpha), kb = final_key(b, alpha);
  if (ka != kb) return ka > kb;
  return a.ids < b.ids;
}

}  // namespace

Hypothesis beam_search(const TransformerModel<float>& model, const std::vector<int>& src,
                       const BeamConfig& cfg, const std::vector<int>& forced_prefix) {
  if (src.empty()) raise(Errc::input, "empty source");
  if (cfg.beam_size < 1) raise(Errc::config, "beam_size must be >= 1");
  for (int id : forced_prefix)
    if (id == kEosId || id == kBosId || id == kPadId)
      raise(Errc::input, "forced prefix must not contain control tokens");

  auto enc = encode_for_decoding(model, src);
  const int max_len = max_target_len(cfg, model.cfg, static_cast<int>(src.size()));

  BeamHyp root;
  // consume the forced prefix token by token, accumulating its score
  for (int tok : forced_prefix) {
    RowVec<float> lp = decode_step(model, enc, root.state, root.pending);
    root.score += static_cast<double>(lp(tok));
    root.ids.push_back(tok);
    root.pending = tok;
  }

  std::vector<BeamHyp> live{std::move(root)};
  std::vector<Hypothesis> finished;

  while (!live.empty() && static_cast<int>(live.front().ids.size()) < max_len) {
    struct Cand {
      double score;
      int token;
      std::size_t parent;
    };
    std::vector<Cand> cands;
    std::vector<RowVec<float>> lps(live.size());
    for (std::size_t p = 0; p < live.size(); ++p) {
      lps[p] = decode_step(model, enc, live[p].state, live[p].pending);
      for (int tok = 0; tok < model.cfg.tgt_vocab; ++tok) {
        if (tok == kBosId || tok == kPadId) continue;
        cands.push_back({live[p].score + static_cast<double>(lps[p](tok)), tok, p});
      }
    }
    std::stable_sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
      if (a.score != b.score) return a.score > b.score;
      if (a.token != b.token) return a.token < b.token;
      return a.parent < b.parent;
    });

    std::vector<BeamHyp> next;
    for (const Cand& c : cands) {
      if (static_cast<int>(next.size()) + static_cast<int>(finished.size()) >=
          cfg.beam_size)
        break;
      if (c.token == kEosId) {
        Hypothesis h{live[c.parent].ids, c.score};
        finished.push_back(std::move(h));
      } else {
        BeamHyp h;
        h.ids = live[c.parent].ids;
        h.ids.push_back(c.token);
        h.score = c.score;
        h.state = live[c.parent].state;  // detached copy of the cache
        h.pending = c.token;
        next.push_back(std::move(h));
      }
    }
    live = std::move(next);
  }

  for (auto& h : live) finished.push_back(Hypothesis{std::move(h.ids), h.score});
  if (finished.empty()) raise(Errc::input, "beam search produced no hypotheses");
  std::size_t best = 0;
  for (std::size_t i = 1; i < finished.size(); ++i)
    if (better_final(finished[i], finished[best], cfg.length_penalty_alpha)) best = i;
  return finished[best];
}

Hypothesis greedy_decode(const TransformerModel<float>& model, const std::vector<int>& src,
                         const BeamConfig& cfg, const std::vector<int>& forced_prefix) {
  if (src.empty()) raise(Errc::input, "empty source");
  auto enc = encode_for_decoding(model, src);
  const int max_len = max_target_len(cfg, model.cfg, static_cast<int>(src.size()));

  Hypothesis h;
  DecodeState<float> state;
  int pending = kBosId;
  for (int tok : forced_prefix) {
    RowVec<float> lp = decode_step(model, enc, state, pending);
    h.score += static_cast<double>(lp(tok));
    h.ids.push_back(tok);
    pending = tok;
  }
  while (static_cast<int>(h.ids.size()) < max_len) {
    RowVec<float> lp = decode_step(model, enc, state, pending);
    int best = -1;
    float best_lp = 0;
    for (int tok = 0; tok < model.cfg.tgt_vocab; ++tok) {
      if (tok == kBosId || tok == kPadId) continue;
      if (best < 0 || lp(tok) > best_lp) {
        best = tok;
        best_lp = lp(tok);
      }
    }
    h.score += static_cast<double>(best_lp);
    if (best == kEosId) return h;
    h.ids.push_back(best);
    pending = best;
  }
  return h;
}

Tokens sentence_words(const std::string& text) {
  Tokens toks = default_segment(text);
  for (auto& t : toks)
    if (t == kSepToken) t = kSepEscToken;
  return toks;
}

std::string words_to_text(const Tokens& words) {
  std::string out;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i) out += ' ';
    out += words[i];
  }
  return out;
}

namespace {

// target ids -> per-segment detokenized strings
std::vector<std::string> segments_from_ids(const Translator& t, const std::vector<int>& ids) {
  std::vector<std::vector<std::string>> seg_pieces(1);
  for (int id : ids) {
    const std::string& piece = t.tgt_bpe->token(id);
    if (piece == kSepToken)
      seg_pieces.emplace_back();
    else
      seg_pieces.back().push_back(piece);
  }
  std::vector<std::string> out;
  for (auto& pieces : seg_pieces) out.push_back(words_to_text(undo_bpe(pieces)));
  return out;
}

std::vector<int> encode_sentences(const Translator& t, const std::vector<std::string>& sents) {
  std::vector<Tokens> words;
  words.reserve(sents.size());
  for (const auto& s : sents) words.push_back(sentence_words(s));
  return encode_words(*t.src_bpe, join_with_sep(words));
}

}  // namespace

std::vector<std::string> translate_offline(const Translator& t,
                                           const std::vector<std::string>& sents) {
  if (sents.empty()) raise(Errc::input, "empty dialogue");
  Hypothesis hyp = beam_search(*t.model, encode_sentences(t, sents), t.beam);
  std::vector<std::string> segs = segments_from_ids(t, hyp.ids);
  // enforce one translation per input sentence
  if (segs.size() > sents.size()) {
    std::string tail = segs[sents.size() - 1];
    for (std::size_t i = sents.size(); i < segs.size(); ++i) {
      if (!segs[i].empty()) {
        if (!tail.empty()) tail += ' ';
        tail += segs[i];
      }
    }
    segs.resize(sents.size());
    segs.back() = tail;
  } else {
    while (segs.size() < sents.size()) segs.emplace_back();
  }
  return segs;
}

std::string translate_online_cut(const Translator& t, DialogueSession& session,
                                 const std::string& new_src) {
  if (session.src_history.size() != session.tgt_history.size())
    raise(Errc::input, "session histories out of sync");
  int k = std::min<int>(session.context_len, static_cast<int>(session.src_history.size()));
  std::vector<std::string> sents(session.src_history.end() - k, session.src_history.end());
  sents.push_back(new_src);

  Hypothesis hyp = beam_search(*t.model, encode_sentences(t, sents), t.beam);
  std::vector<std::string> segs = segments_from_ids(t, hyp.ids);
  std::string translation = segs.back();

  session.src_history.push_back(new_src);
  session.tgt_history.push_back(translation);
  return translation;
}

std::string translate_online_fd(const Translator& t, DialogueSession& session,
                                const std::string& new_src) {
  if (session.src_history.size() != session.tgt_history.size())
    raise(Errc::input, "session histories out of sync");
  int k = std::min<int>(session.context_len, static_cast<int>(session.src_history.size()));

  std::vector<int> src_ids, prefix;
  while (true) {
    std::vector<std::string> sents(session.src_history.end() - k, session.src_history.end());
    sents.push_back(new_src);
    src_ids = encode_sentences(t, sents);

    prefix.clear();
    if (k > 0) {
      std::vector<Tokens> hist;
      for (auto it = session.tgt_history.end() - k; it != session.tgt_history.end(); ++it)
        hist.push_back(sentence_words(*it));
      prefix = encode_words(*t.tgt_bpe, join_with_sep(hist));
      prefix.push_back(kSepId);
    }

    int max_len = static_cast<int>(t.beam.max_len_factor * src_ids.size()) + t.beam.max_len_extra;
    max_len = std::min(max_len, t.model->cfg.max_positions - 2);
    if (static_cast<int>(prefix.size()) < max_len || k == 0) break;
    --k;  // context too long to force-decode; drop the oldest sentence
    LOG_WARN("online-fd: forced prefix exceeds the length budget, truncating context to " << k);
  }

  Hypothesis hyp = beam_search(*t.model, src_ids, t.beam, prefix);
  std::vector<int> suffix(hyp.ids.begin() + static_cast<long>(prefix.size()), hyp.ids.end());
  std::vector<std::string> segs = segments_from_ids(t, suffix);
  std::string translation = segs.front();

  session.src_history.push_back(new_src);
  session.tgt_history.push_back(translation);
  return translation;
}

std::vector<std::string> repair_then_translate(const RepairFn& repair, const Translator& mt,
                                               const std::vector<std::string>& sents,
                                               DecodeMode mode, int context_len) {
  std::vector<std::string> repaired = repair(sents);
  if (repaired.size() != sents.size())
    raise(Errc::input, "repair stage changed the sentence count");
  switch (mode) {
    case DecodeMode::offline:
    case DecodeMode::pipeline:
      return translate_offline(mt, repaired);
    case DecodeMode::online_cut:
    case DecodeMode::online_fd: {
      DialogueSession session;
      session.context_len = context_len;
      std::vector<std::string> out;
      for (const auto& s : repaired)
        out.push_back(mode == DecodeMode::online_cut ? translate_online_cut(mt, session, s)
                                                     : translate_online_fd(mt, session, s));
      return out;
    }
  }
  raise(Errc::input, "bad decode mode");
}

std::vector<std::string> repair_then_translate(const Translator& repair, const Translator& mt,
                                               const std::vector<std::string>& sents,
                                               DecodeMode mode, int context_len) {
  RepairFn fn = [&repair](const std::vector<std::string>& dialog) {
    return translate_offline(repair, dialog);
  };
  return repair_then_translate(fn, mt, sents, mode, context_len);
}

}  // namespace dialmt
