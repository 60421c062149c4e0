#include "dialmt/evalmetrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "dialmt/errors.hpp"
#include "dialmt/utf8.hpp"

namespace dialmt {

std::vector<std::string> bleu_tokenize(const std::string& text) {
  std::string lowered = ascii_lower(text);
  std::vector<std::string> out;
  std::string word;
  auto flush = [&] {
    if (!word.empty()) {
      out.push_back(word);
      word.clear();
    }
  };
  std::size_t i = 0;
  while (i < lowered.size()) {
    std::size_t start = i;
    char32_t cp = utf8_decode_at(lowered, i);
    bool space = cp == U' ' || cp == U'\t' || cp == U'\n' || cp == U'\r';
    bool word_char = (cp < 0x80)
                         ? ((cp >= U'a' && cp <= U'z') || (cp >= U'0' && cp <= U'9'))
                         : !is_wide_punct(cp);
    if (space) {
      flush();
    } else if (word_char) {
      word.append(lowered.substr(start, i - start));
    } else {
      flush();
      out.push_back(lowered.substr(start, i - start));
    }
  }
  flush();
  return out;
}

namespace {

using Counts = std::map<std::vector<std::string>, long>;

Counts ngram_counts(const std::vector<std::string>& toks, int n) {
  Counts c;
  if (static_cast<int>(toks.size()) < n) return c;
  for (std::size_t i = 0; i + n <= toks.size(); ++i)
    ++c[std::vector<std::string>(toks.begin() + i, toks.begin() + i + n)];
  return c;
}

}  // namespace

double corpus_bleu(const std::vector<std::string>& hyps, const std::vector<std::string>& refs) {
  if (hyps.size() != refs.size()) raise(Errc::input, "hyp/ref count mismatch");
  long match[4] = {0, 0, 0, 0};
  long total[4] = {0, 0, 0, 0};
  long hyp_len = 0, ref_len = 0;
  for (std::size_t s = 0; s < hyps.size(); ++s) {
    auto h = bleu_tokenize(hyps[s]);
    auto r = bleu_tokenize(refs[s]);
    hyp_len += static_cast<long>(h.size());
    ref_len += static_cast<long>(r.size());
    for (int n = 1; n <= 4; ++n) {
      Counts hc = ngram_counts(h, n);
      Counts rc = ngram_counts(r, n);
      for (const auto& [ng, c] : hc) {
        total[n - 1] += c;
        auto it = rc.find(ng);
        if (it != rc.end()) match[n - 1] += std::min(c, it->second);
      }
    }
  }
  double log_sum = 0;
  for (int n = 0; n < 4; ++n) {
    if (total[n] == 0 || match[n] == 0) return 0.0;
    log_sum += std::log(static_cast<double>(match[n]) / static_cast<double>(total[n]));
  }
  double bp = 1.0;
  if (hyp_len == 0) return 0.0;
  if (hyp_len < ref_len)
    bp = std::exp(1.0 - static_cast<double>(ref_len) / static_cast<double>(hyp_len));
  return 100.0 * bp * std::exp(log_sum / 4.0);
}

AnnKind ann_kind_from_name(const std::string& s) {
  if (s == "prodrop") return AnnKind::prodrop;
  if (s == "pundrop") return AnnKind::pundrop;
  if (s == "dialtypo" || s == "typo") return AnnKind::dialtypo;
  raise(Errc::parse, "unknown annotation kind: " + s);
}

const char* ann_kind_name(AnnKind k) {
  switch (k) {
    case AnnKind::prodrop: return "prodrop";
    case AnnKind::pundrop: return "pundrop";
    case AnnKind::dialtypo: return "dialtypo";
  }
  return "?";
}

std::size_t TestSet::num_sentences() const {
  std::size_t n = 0;
  for (const auto& d : dialogues) n += d.turns.size();
  return n;
}

std::vector<std::string> TestSet::all_refs() const {
  std::vector<std::string> out;
  for (const auto& d : dialogues)
    for (const auto& t : d.turns) out.push_back(t.ref);
  return out;
}

TestSet load_testset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise(Errc::io, "cannot open " + path);
  TestSet ts;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded())
      raise(Errc::parse, "test set line " + std::to_string(lineno) + ": invalid json");
    TestDialogue d;
    d.id = j.contains("id") && j["id"].is_string() ? j["id"].get<std::string>()
                                                   : std::to_string(ts.dialogues.size());
    for (const auto& tj : j.at("turns")) {
      Turn t;
      t.src = tj.at("src").get<std::string>();
      t.ref = tj.at("ref").get<std::string>();
      if (t.ref.empty())
        raise(Errc::parse, "test set line " + std::to_string(lineno) + ": empty reference");
      if (tj.contains("ann")) {
        for (const auto& aj : tj["ann"]) {
          Annotation a;
          a.kind = ann_kind_from_name(aj.at("kind").get<std::string>());
          a.sentence_index = static_cast<int>(d.turns.size());
          a.position = aj.value("pos", 0);
          a.surface = aj.value("surface", std::string());
          if (aj.contains("pron")) a.target_pronoun = ascii_lower(aj["pron"].get<std::string>());
          if (a.kind == AnnKind::prodrop && a.target_pronoun.empty())
            raise(Errc::annotation, "prodrop annotation without target pronoun (line " +
                                        std::to_string(lineno) + ")");
          t.anns.push_back(std::move(a));
        }
      }
      d.turns.push_back(std::move(t));
    }
    ts.dialogues.push_back(std::move(d));
  }
  return ts;
}

void save_testset(const TestSet& ts, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) raise(Errc::io, "cannot write " + path);
  for (const auto& d : ts.dialogues) {
    nlohmann::json j;
    j["id"] = d.id;
    j["turns"] = nlohmann::json::array();
    for (const auto& t : d.turns) {
      nlohmann::json tj;
      tj["src"] = t.src;
      tj["ref"] = t.ref;
      tj["ann"] = nlohmann::json::array();
      for (const auto& a : t.anns) {
        nlohmann::json aj;
        aj["kind"] = ann_kind_name(a.kind);
        aj["pos"] = a.position;
        aj["surface"] = a.surface;
        if (a.kind == AnnKind::prodrop) aj["pron"] = a.target_pronoun;
        tj["ann"].push_back(std::move(aj));
      }
      j["turns"].push_back(std::move(tj));
    }
    out << j.dump() << "\n";
  }
}

std::optional<double> phenomenon_bleu(const TestSet& ts, const std::vector<std::string>& hyps,
                                      AnnKind kind) {
  if (kind == AnnKind::prodrop)
    raise(Errc::input, "phenomenon_bleu covers pundrop/dialtypo; prodrop uses recovery accuracy");
  if (hyps.size() != ts.num_sentences()) raise(Errc::input, "hyp count does not match test set");
  std::vector<std::string> sub_h, sub_r;
  std::size_t idx = 0;
  for (const auto& d : ts.dialogues)
    for (const auto& t : d.turns) {
      bool has = std::any_of(t.anns.begin(), t.anns.end(),
                             [&](const Annotation& a) { return a.kind == kind; });
      if (has) {
        sub_h.push_back(hyps[idx]);
        sub_r.push_back(t.ref);
      }
      ++idx;
    }
  if (sub_h.empty()) return std::nullopt;
  return corpus_bleu(sub_h, sub_r);
}

RecoveryResult prodrop_recovery(const TestSet& ts, const std::vector<std::string>& hyps) {
  if (hyps.size() != ts.num_sentences()) raise(Errc::input, "hyp count does not match test set");
  RecoveryResult res;
  std::map<std::string, std::pair<int, int>> per;  // pronoun -> (recovered, total)
  std::size_t idx = 0;
  for (const auto& d : ts.dialogues)
    for (const auto& t : d.turns) {
      for (const auto& a : t.anns) {
        if (a.kind != AnnKind::prodrop) continue;
        if (a.target_pronoun.empty()) raise(Errc::annotation, "prodrop annotation without pronoun");
        auto toks = bleu_tokenize(hyps[idx]);
        bool hit = std::find(toks.begin(), toks.end(), a.target_pronoun) != toks.end();
        res.total += 1;
        per[a.target_pronoun].second += 1;
        if (hit) {
          res.recovered += 1;
          per[a.target_pronoun].first += 1;
        }
      }
      ++idx;
    }
  res.accuracy = res.total == 0 ? 0.0
                                : static_cast<double>(res.recovered) / static_cast<double>(res.total);
  for (const auto& [p, rc] : per)
    if (rc.second >= 5) res.per_pronoun.push_back(PronounRow{p, rc.first, rc.second});
  return res;
}

std::array<PrfRow, 3> labeling_prf(const std::vector<std::vector<Label>>& gold,
                                   const std::vector<std::vector<Label>>& pred) {
  if (gold.size() != pred.size()) raise(Errc::input, "gold/pred sequence count mismatch");
  std::array<PrfRow, 3> rows{};
  for (std::size_t s = 0; s < gold.size(); ++s) {
    if (gold[s].size() != pred[s].size())
      raise(Errc::input, "gold/pred length mismatch at sequence " + std::to_string(s));
    for (std::size_t i = 0; i < gold[s].size(); ++i) {
      Label g = gold[s][i], p = pred[s][i];
      for (Label c = 1; c <= 3; ++c) {
        PrfRow& r = rows[static_cast<std::size_t>(c - 1)];
        if (g == c && p == c) ++r.tp;
        else if (g != c && p == c) ++r.fp;
        else if (g == c && p != c) ++r.fn;
      }
    }
  }
  for (auto& r : rows) {
    if (r.tp + r.fp + r.fn == 0) continue;  // class absent everywhere: n/a
    if (r.tp + r.fp > 0) r.precision = static_cast<double>(r.tp) / static_cast<double>(r.tp + r.fp);
    if (r.tp + r.fn > 0) r.recall = static_cast<double>(r.tp) / static_cast<double>(r.tp + r.fn);
    if (r.precision && r.recall && (*r.precision + *r.recall) > 0)
      r.f1 = 2.0 * *r.precision * *r.recall / (*r.precision + *r.recall);
    else if (r.precision && r.recall)
      r.f1 = 0.0;
  }
  return rows;
}

std::vector<std::string> decode_testset_offline(const Translator& t, const TestSet& ts, int jobs) {
  std::vector<std::vector<std::string>> per_dialogue(ts.dialogues.size());
  auto work = [&](std::size_t d) {
    std::vector<std::string> sents;
    for (const auto& turn : ts.dialogues[d].turns) sents.push_back(turn.src);
    per_dialogue[d] = translate_offline(t, sents);
  };
  if (jobs <= 1) {
    for (std::size_t d = 0; d < ts.dialogues.size(); ++d) work(d);
  } else {
    std::vector<std::thread> threads;
    std::size_t n = ts.dialogues.size();
    for (int w = 0; w < jobs; ++w)
      threads.emplace_back([&, w] {
        for (std::size_t d = static_cast<std::size_t>(w); d < n; d += static_cast<std::size_t>(jobs))
          work(d);
      });
    for (auto& th : threads) th.join();
  }
  std::vector<std::string> out;
  for (auto& v : per_dialogue)
    for (auto& s : v) out.push_back(std::move(s));
  return out;
}

namespace {

std::vector<std::string> decode_testset_online(const Translator& t, const TestSet& ts,
                                               DecodeMode mode, int k, int jobs) {
  std::vector<std::vector<std::string>> per_dialogue(ts.dialogues.size());
  auto work = [&](std::size_t d) {
    DialogueSession session;
    session.context_len = k;
    for (const auto& turn : ts.dialogues[d].turns) {
      std::string hyp = mode == DecodeMode::online_cut
                            ? translate_online_cut(t, session, turn.src)
                            : translate_online_fd(t, session, turn.src);
      per_dialogue[d].push_back(hyp);
    }
  };
  if (jobs <= 1) {
    for (std::size_t d = 0; d < ts.dialogues.size(); ++d) work(d);
  } else {
    std::vector<std::thread> threads;
    std::size_t n = ts.dialogues.size();
    for (int w = 0; w < jobs; ++w)
      threads.emplace_back([&, w] {
        for (std::size_t d = static_cast<std::size_t>(w); d < n; d += static_cast<std::size_t>(jobs))
          work(d);
      });
    for (auto& th : threads) th.join();
  }
  std::vector<std::string> out;
  for (auto& v : per_dialogue)
    for (auto& s : v) out.push_back(std::move(s));
  return out;
}

}  // namespace

std::vector<SweepRow> context_sweep(const Translator& t, const TestSet& ts, DecodeMode online_mode,
                                    const std::vector<int>& k_values, int jobs) {
  if (online_mode != DecodeMode::online_cut && online_mode != DecodeMode::online_fd)
    raise(Errc::config, "context sweep requires an online decode mode");
  std::vector<std::string> refs = ts.all_refs();
  std::vector<SweepRow> rows;
  for (int k : k_values) {
    if (k < 0) raise(Errc::config, "context length must be >= 0");
    auto hyps = decode_testset_online(t, ts, online_mode, k, jobs);
    SweepRow r;
    r.context = std::to_string(k);
    r.bleu = corpus_bleu(hyps, refs);
    r.prodrop_accuracy = prodrop_recovery(ts, hyps).accuracy;
    rows.push_back(std::move(r));
  }
  auto hyps = decode_testset_offline(t, ts, jobs);
  SweepRow r;
  r.context = "offline";
  r.bleu = corpus_bleu(hyps, refs);
  r.prodrop_accuracy = prodrop_recovery(ts, hyps).accuracy;
  rows.push_back(std::move(r));
  return rows;
}

void write_sweep_csv(const std::string& path, const std::vector<SweepRow>& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) raise(Errc::io, "cannot write " + path);
  out << "context,bleu,prodrop_accuracy\n";
  char buf[128];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%s,%.6f,%.6f\n", r.context.c_str(), r.bleu,
                  r.prodrop_accuracy);
    out << buf;
  }
}

MetricsReport evaluate_all(const TestSet& ts, const std::vector<std::string>& hyps) {
  MetricsReport r;
  r.bleu = corpus_bleu(hyps, ts.all_refs());
  r.pundrop_bleu = phenomenon_bleu(ts, hyps, AnnKind::pundrop);
  r.dialtypo_bleu = phenomenon_bleu(ts, hyps, AnnKind::dialtypo);
  r.prodrop = prodrop_recovery(ts, hyps);
  return r;
}

namespace {

nlohmann::json prf_to_json(const std::array<PrfRow, 3>& rows) {
  static const char* names[] = {"dialtypo", "prodrop", "pundrop"};
  nlohmann::json j;
  for (int c = 0; c < 3; ++c) {
    const PrfRow& r = rows[static_cast<std::size_t>(c)];
    nlohmann::json e;
    e["tp"] = r.tp;
    e["fp"] = r.fp;
    e["fn"] = r.fn;
    e["precision"] = r.precision ? nlohmann::json(*r.precision) : nlohmann::json(nullptr);
    e["recall"] = r.recall ? nlohmann::json(*r.recall) : nlohmann::json(nullptr);
    e["f1"] = r.f1 ? nlohmann::json(*r.f1) : nlohmann::json(nullptr);
    j[names[c]] = std::move(e);
  }
  return j;
}

}  // namespace

std::string report_to_json(const MetricsReport& r) {
  nlohmann::json j;
  j["bleu"] = r.bleu;
  j["phenomenon_bleu"]["pundrop"] =
      r.pundrop_bleu ? nlohmann::json(*r.pundrop_bleu) : nlohmann::json(nullptr);
  j["phenomenon_bleu"]["dialtypo"] =
      r.dialtypo_bleu ? nlohmann::json(*r.dialtypo_bleu) : nlohmann::json(nullptr);
  j["prodrop"]["recovered"] = r.prodrop.recovered;
  j["prodrop"]["total"] = r.prodrop.total;
  j["prodrop"]["accuracy"] = r.prodrop.accuracy;
  j["prodrop"]["per_pronoun"] = nlohmann::json::array();
  for (const auto& p : r.prodrop.per_pronoun) {
    nlohmann::json e;
    e["pron"] = p.pronoun;
    e["recovered"] = p.recovered;
    e["total"] = p.total;
    j["prodrop"]["per_pronoun"].push_back(std::move(e));
  }
  if (r.labeling) j["labeling"] = prf_to_json(*r.labeling);
  return j.dump(2);
}

std::string report_to_text(const MetricsReport& r) {
  std::ostringstream os;
  char buf[160];
  std::snprintf(buf, sizeof(buf), "BLEU            %.2f\n", r.bleu);
  os << buf;
  auto opt_line = [&](const char* name, const std::optional<double>& v) {
    if (v)
      std::snprintf(buf, sizeof(buf), "%s %.2f\n", name, *v);
    else
      std::snprintf(buf, sizeof(buf), "%s n/a\n", name);
    os << buf;
  };
  opt_line("PunDrop BLEU   ", r.pundrop_bleu);
  opt_line("DialTypo BLEU  ", r.dialtypo_bleu);
  std::snprintf(buf, sizeof(buf), "ProDrop recovery %.2f%% (%d/%d)\n", 100.0 * r.prodrop.accuracy,
                r.prodrop.recovered, r.prodrop.total);
  os << buf;
  for (const auto& p : r.prodrop.per_pronoun) {
    std::snprintf(buf, sizeof(buf), "  %-10s %d/%d\n", p.pronoun.c_str(), p.recovered, p.total);
    os << buf;
  }
  if (r.labeling) {
    static const char* names[] = {"DialTypo", "ProDrop", "PunDrop"};
    for (int c = 0; c < 3; ++c) {
      const PrfRow& row = (*r.labeling)[static_cast<std::size_t>(c)];
      if (row.f1)
        std::snprintf(buf, sizeof(buf), "Labeling %-8s P %.3f R %.3f F1 %.3f\n", names[c],
                      row.precision.value_or(0), row.recall.value_or(0), *row.f1);
      else
        std::snprintf(buf, sizeof(buf), "Labeling %-8s n/a\n", names[c]);
      os << buf;
    }
  }
  return os.str();
}

}  // namespace dialmt
