#include "dialmt/perturb.hpp"

#include <algorithm>
#include <fstream>

#include "dialmt/errors.hpp"
#include "dialmt/utf8.hpp"

namespace dialmt {

const char* edit_kind_name(EditKind k) {
  switch (k) {
    case EditKind::prodrop: return "prodrop";
    case EditKind::pundrop: return "pundrop";
    case EditKind::typo: return "typo";
  }
  return "?";
}

EditKind edit_kind_from_name(const std::string& s) {
  if (s == "prodrop") return EditKind::prodrop;
  if (s == "pundrop") return EditKind::pundrop;
  if (s == "typo") return EditKind::typo;
  raise(Errc::parse, "unknown edit kind: " + s);
}

bool PerturbationTables::is_table_token(const std::string& t) const {
  if (pronouns.count(t) || punctuation.count(t)) return true;
  if (homophones.count(t)) return true;
  for (const auto& [k, alts] : homophones)
    if (std::find(alts.begin(), alts.end(), t) != alts.end()) return true;
  return false;
}

void PerturbStats::merge(const PerturbStats& o) {
  pronoun_sites += o.pronoun_sites;
  pronoun_dropped += o.pronoun_dropped;
  pronoun_skipped += o.pronoun_skipped;
  punct_sites += o.punct_sites;
  punct_dropped += o.punct_dropped;
  punct_skipped += o.punct_skipped;
  typo_sites += o.typo_sites;
  typo_applied += o.typo_applied;
  typo_entry_sites += o.typo_entry_sites;
  homophone_branch += o.homophone_branch;
  random_branch += o.random_branch;
}

namespace {

// State while perturbing one sentence.
struct SentenceEdit {
  const Tokens& toks;
  std::vector<bool> deleted;
  std::vector<Label> labels;

  explicit SentenceEdit(const Tokens& t) : toks(t), deleted(t.size(), false), labels(t.size(), 0) {}

  // Carrier = nearest survivor to the right, else nearest to the left.
  // Returns -1 if the sentence would lose its last token.
  int find_carrier(int pos) const {
    for (int j = pos + 1; j < static_cast<int>(toks.size()); ++j)
      if (!deleted[j]) return j;
    for (int j = pos - 1; j >= 0; --j)
      if (!deleted[j]) return j;
    return -1;
  }
};

void deletion_pass(SentenceEdit& st, const std::set<std::string>& table, Label label, double p_drop,
                   Rng& rng, std::int64_t& sites, std::int64_t& dropped, std::int64_t& skipped) {
  for (int i = 0; i < static_cast<int>(st.toks.size()); ++i) {
    if (st.deleted[i] || !table.count(st.toks[i])) continue;
    ++sites;
    if (!rng.bernoulli(p_drop)) continue;
    // a labeled token must survive to carry its label
    if (st.labels[i] != 0) {
      ++skipped;
      continue;
    }
    int carrier = st.find_carrier(i);
    if (carrier < 0 || st.labels[carrier] != 0) {
      ++skipped;
      continue;
    }
    st.deleted[i] = true;
    st.labels[carrier] = label;
    ++dropped;
  }
}

std::string draw_replacement(const std::vector<std::string>& pool, const std::string& original,
                             Rng& rng) {
  // uniform over pool minus the original token
  auto lo = std::lower_bound(pool.begin(), pool.end(), original);
  bool present = lo != pool.end() && *lo == original;
  std::size_t n = pool.size() - (present ? 1 : 0);
  if (n == 0) raise(Errc::config, "random-word pool has no candidate besides the original token");
  std::size_t k = rng.uniform(n);
  if (present && k >= static_cast<std::size_t>(lo - pool.begin())) ++k;
  return pool[k];
}

}  // namespace

PerturbResult perturb_subdocument(const Tokens& x, const PerturbationTables& tables,
                                  const PerturbationConfig& config, Rng& rng,
                                  PerturbStats* stats) {
  if (config.p_drop < 0 || config.p_drop > 1 || config.p_typo < 0 || config.p_typo > 1 ||
      config.p_homophone < 0 || config.p_homophone > 1)
    raise(Errc::config, "perturbation probabilities must be in [0,1]");

  PerturbStats local;
  PerturbResult out;

  auto sentences = split_by_sep(x);
  int offset = 0;  // position of the current sentence within x
  for (std::size_t s = 0; s < sentences.size(); ++s) {
    const Tokens& sent = sentences[s];
    SentenceEdit st(sent);

    deletion_pass(st, tables.pronouns, kLabelProDrop, config.p_drop, rng, local.pronoun_sites,
                  local.pronoun_dropped, local.pronoun_skipped);
    deletion_pass(st, tables.punctuation, kLabelPunDrop, config.p_drop, rng, local.punct_sites,
                  local.punct_dropped, local.punct_skipped);

    std::vector<std::string> replacement(sent.size());
    for (int i = 0; i < static_cast<int>(sent.size()); ++i) {
      if (st.deleted[i] || st.labels[i] != 0) continue;
      ++local.typo_sites;
      if (!rng.bernoulli(config.p_typo)) continue;
      bool homophone = rng.bernoulli(config.p_homophone);
      auto it = tables.homophones.find(sent[i]);
      if (it != tables.homophones.end()) ++local.typo_entry_sites;
      if (homophone && it != tables.homophones.end()) {
        replacement[i] = it->second[rng.uniform(it->second.size())];
        ++local.homophone_branch;
      } else {
        replacement[i] = draw_replacement(tables.random_pool, sent[i], rng);
        ++local.random_branch;
      }
      st.labels[i] = kLabelTypo;
      ++local.typo_applied;
    }

    // emit perturbed sentence + edits in position order
    for (int i = 0; i < static_cast<int>(sent.size()); ++i) {
      if (st.deleted[i]) {
        EditRecord e;
        e.kind = tables.pronouns.count(sent[i]) ? EditKind::prodrop : EditKind::pundrop;
        e.position = offset + i;
        e.original = sent[i];
        out.edits.push_back(std::move(e));
        continue;
      }
      if (st.labels[i] == kLabelTypo) {
        EditRecord e;
        e.kind = EditKind::typo;
        e.position = offset + i;
        e.original = sent[i];
        e.replacement = replacement[i];
        out.edits.push_back(std::move(e));
        out.tokens.push_back(replacement[i]);
      } else {
        out.tokens.push_back(sent[i]);
      }
      out.labels.push_back(st.labels[i]);
    }

    offset += static_cast<int>(sent.size());
    if (s + 1 < sentences.size()) {
      out.tokens.push_back(kSepToken);
      out.labels.push_back(kLabelCorrect);
      offset += 1;  // the separator itself
    }
  }

  if (stats) stats->merge(local);
  return out;
}

std::vector<Label> labels_for_clean(const Tokens& x) {
  return std::vector<Label>(x.size(), kLabelCorrect);
}

Tokens invert_edits(const Tokens& x_pert, const std::vector<EditRecord>& edits) {
  Tokens out = x_pert;
  std::vector<const EditRecord*> deletions, typos;
  for (const auto& e : edits)
    (e.kind == EditKind::typo ? typos : deletions).push_back(&e);
  std::sort(deletions.begin(), deletions.end(),
            [](const EditRecord* a, const EditRecord* b) { return a->position < b->position; });
  for (const EditRecord* e : deletions) {
    if (e->position < 0 || e->position > static_cast<int>(out.size()))
      raise(Errc::corrupt, "deletion position " + std::to_string(e->position) + " out of range");
    out.insert(out.begin() + e->position, e->original);
  }
  for (const EditRecord* e : typos) {
    if (e->position < 0 || e->position >= static_cast<int>(out.size()))
      raise(Errc::corrupt, "typo position " + std::to_string(e->position) + " out of range");
    if (!e->replacement)
      raise(Errc::corrupt, "typo edit without replacement token");
    if (out[static_cast<std::size_t>(e->position)] != *e->replacement)
      raise(Errc::corrupt, "typo record does not match token at position " +
                               std::to_string(e->position));
    out[static_cast<std::size_t>(e->position)] = e->original;
  }
  return out;
}

namespace {

// Alignment of one sentence pair under the edit model: tokens may be deleted
// only if they belong to a deletion table, and a substitution never produces
// a table token (replacements come from homophone alternatives or the random
// pool). Among legal scripts the match count is maximized. Returns for each
// clean position the aligned perturbed position, or -1 for deletions.
std::vector<int> align_sentence(const Tokens& x, const Tokens& y,
                                const PerturbationTables& tables) {
  const int n = static_cast<int>(x.size());
  const int m = static_cast<int>(y.size());
  if (m > n) raise(Errc::align, "perturbed sentence longer than clean sentence");

  auto deletable = [&](const std::string& t) {
    return tables.pronouns.count(t) > 0 || tables.punctuation.count(t) > 0;
  };
  auto sub_target_ok = [&](const std::string& t) {
    return !deletable(t) && !tables.homophones.count(t);
  };

  const int kNeg = -1 << 28;
  // best[i][j]: max #matches aligning x[0..i) with y[0..j) legally.
  std::vector<std::vector<int>> best(n + 1, std::vector<int>(m + 1, kNeg));
  best[0][0] = 0;
  for (int i = 1; i <= n; ++i) {
    if (deletable(x[i - 1]) && best[i - 1][0] > kNeg / 2) best[i][0] = best[i - 1][0];
    for (int j = 1; j <= std::min(i, m); ++j) {
      int v = kNeg;
      if (best[i - 1][j - 1] > kNeg / 2) {
        if (x[i - 1] == y[j - 1])
          v = best[i - 1][j - 1] + 1;
        else if (sub_target_ok(y[j - 1]))
          v = best[i - 1][j - 1];
      }
      if (deletable(x[i - 1]) && best[i - 1][j] > kNeg / 2)
        v = std::max(v, best[i - 1][j]);
      best[i][j] = v;
    }
  }
  if (best[n][m] <= kNeg / 2)
    raise(Errc::align, "sentences cannot be aligned under the edit model");

  std::vector<int> aligned(n, -1);
  int i = n, j = m;
  while (i > 0) {
    bool eq = j > 0 && x[i - 1] == y[j - 1];
    bool pair_ok = j > 0 && best[i - 1][j - 1] > kNeg / 2 &&
                   best[i][j] == best[i - 1][j - 1] + (eq ? 1 : 0) &&
                   (eq || sub_target_ok(y[j - 1]));
    bool del_ok = deletable(x[i - 1]) && best[i - 1][j] > kNeg / 2 &&
                  best[i][j] == best[i - 1][j];
    if (pair_ok && (eq || !del_ok)) {
      aligned[i - 1] = j - 1;
      --i;
      --j;
    } else if (del_ok) {
      --i;
    } else {
      raise(Errc::align, "sentences cannot be aligned under the edit model");
    }
  }
  if (j != 0) raise(Errc::align, "sentences cannot be aligned under the edit model");
  return aligned;
}

}  // namespace

std::vector<Label> derive_labels_by_alignment(const Tokens& x, const Tokens& x_pert,
                                              const PerturbationTables& tables) {
  auto clean_sents = split_by_sep(x);
  auto pert_sents = split_by_sep(x_pert);
  if (clean_sents.size() != pert_sents.size())
    raise(Errc::align, "separator counts differ between clean and perturbed sequences");

  std::vector<Label> out;
  for (std::size_t s = 0; s < clean_sents.size(); ++s) {
    const Tokens& cx = clean_sents[s];
    const Tokens& px = pert_sents[s];
    auto aligned = align_sentence(cx, px, tables);

    std::vector<Label> labels(px.size(), 0);
    for (int i = 0; i < static_cast<int>(cx.size()); ++i)
      if (aligned[i] >= 0 && cx[i] != px[static_cast<std::size_t>(aligned[i])])
        labels[static_cast<std::size_t>(aligned[i])] = kLabelTypo;

    // deletions: pronoun kind first, then punctuation, each left to right
    for (int pass = 0; pass < 2; ++pass) {
      for (int i = 0; i < static_cast<int>(cx.size()); ++i) {
        if (aligned[i] >= 0) continue;
        bool is_pron = tables.pronouns.count(cx[i]) > 0;
        if ((pass == 0) != is_pron) continue;
        int carrier = -1;
        for (int k = i + 1; k < static_cast<int>(cx.size()); ++k)
          if (aligned[k] >= 0) { carrier = aligned[k]; break; }
        if (carrier < 0)
          for (int k = i - 1; k >= 0; --k)
            if (aligned[k] >= 0) { carrier = aligned[k]; break; }
        if (carrier < 0) raise(Errc::align, "deletion with no surviving carrier token");
        if (labels[static_cast<std::size_t>(carrier)] != 0)
          raise(Errc::align, "two edits target the same carrier token");
        labels[static_cast<std::size_t>(carrier)] = is_pron ? kLabelProDrop : kLabelPunDrop;
      }
    }

    for (Label l : labels) out.push_back(l);
    if (s + 1 < clean_sents.size()) out.push_back(kLabelCorrect);  // separator
  }
  return out;
}

Tokens default_segment(std::string_view text) {
  Tokens out;
  std::string pending;  // current non-CJK run
  auto flush = [&] {
    if (!pending.empty()) {
      out.push_back(pending);
      pending.clear();
    }
  };
  std::size_t i = 0;
  while (i < text.size()) {
    std::size_t start = i;
    char32_t cp = utf8_decode_at(text, i);
    if (cp == U' ' || cp == U'\t' || cp == U'\n' || cp == U'\r') {
      flush();
      continue;
    }
    if (is_cjk(cp)) {
      flush();
      out.emplace_back(text.substr(start, i - start));
    } else {
      pending.append(text.substr(start, i - start));
    }
  }
  flush();
  return out;
}

LabeledExample make_labeled_example(const SubDocumentPair& pair, const PerturbationTables& tables,
                                    const PerturbationConfig& config, Rng& rng,
                                    PerturbStats* stats) {
  LabeledExample ex;
  ex.src = pair.src;
  ex.tgt = pair.tgt;
  ex.labels_clean = labels_for_clean(ex.src);
  auto res = perturb_subdocument(ex.src, tables, config, rng, stats);
  ex.src_pert = std::move(res.tokens);
  ex.labels_pert = std::move(res.labels);
  ex.edits = std::move(res.edits);
  return ex;
}

static std::vector<std::string> read_token_lines(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise(Errc::io, "cannot open " + path);
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) out.push_back(line);
  }
  return out;
}

PerturbationTables load_tables(const std::string& pronoun_path, const std::string& punct_path,
                               const std::string& homophone_path) {
  PerturbationTables t;
  for (auto& tok : read_token_lines(pronoun_path)) t.pronouns.insert(tok);
  for (auto& tok : read_token_lines(punct_path)) t.punctuation.insert(tok);

  std::ifstream in(homophone_path, std::ios::binary);
  if (!in) raise(Errc::io, "cannot open " + homophone_path);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto tab = line.find('\t');
    if (tab == std::string::npos)
      raise(Errc::parse, "homophone table line " + std::to_string(lineno) +
                             ": expected token<TAB>alternatives");
    std::string key = line.substr(0, tab);
    std::vector<std::string> alts;
    std::string rest = line.substr(tab + 1);
    std::size_t pos = 0;
    while (pos <= rest.size()) {
      auto comma = rest.find(',', pos);
      if (comma == std::string::npos) comma = rest.size();
      if (comma > pos) alts.push_back(rest.substr(pos, comma - pos));
      pos = comma + 1;
    }
    if (alts.empty())
      raise(Errc::parse, "homophone table line " + std::to_string(lineno) + ": no alternatives");
    t.homophones[key] = std::move(alts);
  }

  // the three key sets must be pairwise disjoint and never contain the separator
  auto check_sep = [&](const std::string& tok) {
    if (tok == kSepToken)
      raise(Errc::config, "perturbation table contains the separator token");
  };
  for (const auto& p : t.pronouns) {
    check_sep(p);
    if (t.punctuation.count(p) || t.homophones.count(p))
      raise(Errc::config, "table key sets are not disjoint: " + p);
  }
  for (const auto& p : t.punctuation) {
    check_sep(p);
    if (t.homophones.count(p))
      raise(Errc::config, "table key sets are not disjoint: " + p);
  }
  for (const auto& [k, alts] : t.homophones) {
    check_sep(k);
    for (const auto& a : alts) check_sep(a);
  }
  return t;
}

void validate_tables(const PerturbationTables& tables, const PerturbationConfig& config) {
  if (config.p_drop > 0 && tables.pronouns.empty())
    raise(Errc::config, "p_drop > 0 requires a non-empty pronoun table");
  if (config.p_drop > 0 && tables.punctuation.empty())
    raise(Errc::config, "p_drop > 0 requires a non-empty punctuation table");
  if (config.p_typo > 0 && tables.random_pool.empty())
    raise(Errc::config, "p_typo > 0 requires a non-empty random-word pool");
}

}  // namespace dialmt
