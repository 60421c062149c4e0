#include "dialmt/bpe.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

#include "dialmt/errors.hpp"
#include "dialmt/utf8.hpp"

namespace dialmt {

const std::vector<std::string>& special_tokens() {
  static const std::vector<std::string> toks = {"<pad>", "<bos>", "<eos>", "<unk>", kSepToken};
  return toks;
}

int BpeModel::token_id(const std::string& piece) const {
  auto it = vocab.find(piece);
  return it == vocab.end() ? kUnkId : it->second;
}

const std::string& BpeModel::token(int id) const {
  if (id < 0 || id >= vocab_size()) raise(Errc::input, "token id out of range");
  return id_to_token[static_cast<std::size_t>(id)];
}

namespace {

using Symbols = std::vector<std::string>;

Symbols word_symbols(const std::string& word) {
  Symbols syms = utf8_codepoints(word);
  syms.push_back(kBpeEndOfWord);
  return syms;
}

void apply_merge_inplace(Symbols& syms, const std::pair<std::string, std::string>& merge) {
  std::size_t w = 0;
  for (std::size_t r = 0; r < syms.size(); ++r) {
    if (r + 1 < syms.size() && syms[r] == merge.first && syms[r + 1] == merge.second) {
      syms[w++] = merge.first + merge.second;
      ++r;
    } else {
      if (w != r) syms[w] = std::move(syms[r]);
      ++w;
    }
  }
  syms.resize(w);
}

// Splits one word with the learned merges (greedy by merge rank).
std::vector<std::string> segment_word(const BpeModel& model,
                                      const std::unordered_map<std::string, int>& rank,
                                      const std::string& word) {
  Symbols syms = word_symbols(word);
  while (syms.size() > 1) {
    int best_rank = -1;
    std::size_t best_pos = 0;
    for (std::size_t i = 0; i + 1 < syms.size(); ++i) {
      auto it = rank.find(syms[i] + "\x01" + syms[i + 1]);
      if (it != rank.end() && (best_rank < 0 || it->second < best_rank)) {
        best_rank = it->second;
        best_pos = i;
      }
    }
    if (best_rank < 0) break;
    apply_merge_inplace(syms, model.merges[static_cast<std::size_t>(best_rank)]);
    // apply_merge_inplace merges every occurrence of the pair, matching learning
    (void)best_pos;
  }
  // strip the end-of-word marker and attach connector prefixes
  std::vector<std::string> pieces;
  for (std::size_t i = 0; i < syms.size(); ++i) {
    std::string s = syms[i];
    if (s == kBpeEndOfWord) continue;
    if (i + 1 == syms.size() && s.size() > 4 && s.substr(s.size() - 4) == kBpeEndOfWord)
      s = s.substr(0, s.size() - 4);
    pieces.push_back(pieces.empty() ? s : std::string(kBpeConnector) + s);
  }
  if (pieces.empty()) pieces.push_back("");  // word was empty
  return pieces;
}

std::unordered_map<std::string, int> merge_ranks(const BpeModel& model) {
  std::unordered_map<std::string, int> rank;
  rank.reserve(model.merges.size());
  for (std::size_t i = 0; i < model.merges.size(); ++i)
    rank.emplace(model.merges[i].first + "\x01" + model.merges[i].second, static_cast<int>(i));
  return rank;
}

}  // namespace

BpeModel learn_bpe(const std::vector<Tokens>& corpus, int max_merges) {
  if (max_merges < 0) raise(Errc::input, "max_merges must be >= 0");
  BpeModel model;
  model.max_merges = max_merges;
  model.protected_tokens.insert(kSepToken);

  // word type counts (protected tokens excluded from learning)
  std::map<std::string, long> word_count;
  bool any = false;
  for (const auto& line : corpus) {
    for (const auto& w : line) {
      any = true;
      if (!model.protected_tokens.count(w)) ++word_count[w];
    }
  }
  if (!any) raise(Errc::input, "empty corpus");

  std::vector<std::pair<Symbols, long>> types;
  types.reserve(word_count.size());
  for (const auto& [w, c] : word_count) types.emplace_back(word_symbols(w), c);

  for (int step = 0; step < max_merges; ++step) {
    std::map<std::pair<std::string, std::string>, long> pair_count;
    for (const auto& [syms, c] : types)
      for (std::size_t i = 0; i + 1 < syms.size(); ++i)
        pair_count[{syms[i], syms[i + 1]}] += c;

    // most frequent pair; ties resolved by lexicographic pair order
    std::pair<std::string, std::string> best;
    long best_count = 0;
    for (const auto& [p, c] : pair_count)
      if (c > best_count) {
        best = p;
        best_count = c;
      }
    if (best_count < 2) break;

    model.merges.push_back(best);
    for (auto& [syms, c] : types) apply_merge_inplace(syms, best);
  }

  // vocabulary: specials first, then corpus pieces by (count desc, piece asc)
  auto rank = merge_ranks(model);
  std::map<std::string, long> piece_count;
  for (const auto& [w, c] : word_count)
    for (const auto& p : segment_word(model, rank, w)) piece_count[p] += c;

  std::vector<std::pair<std::string, long>> order(piece_count.begin(), piece_count.end());
  std::sort(order.begin(), order.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  for (const auto& s : special_tokens()) {
    model.vocab.emplace(s, model.vocab_size());
    model.id_to_token.push_back(s);
  }
  for (const auto& [p, c] : order) {
    if (model.vocab.count(p)) continue;
    model.vocab.emplace(p, model.vocab_size());
    model.id_to_token.push_back(p);
  }
  return model;
}

BpeEncoded apply_bpe(const BpeModel& model, const Tokens& words) {
  BpeEncoded out;
  auto rank = merge_ranks(model);
  std::unordered_map<std::string, std::vector<std::string>> cache;
  for (const auto& w : words) {
    int first = static_cast<int>(out.pieces.size());
    if (model.protected_tokens.count(w)) {
      out.pieces.push_back(w);
    } else {
      auto it = cache.find(w);
      if (it == cache.end()) it = cache.emplace(w, segment_word(model, rank, w)).first;
      for (const auto& p : it->second) out.pieces.push_back(p);
    }
    out.word_spans.emplace_back(first, static_cast<int>(out.pieces.size()) - first);
  }
  return out;
}

Tokens undo_bpe(const std::vector<std::string>& pieces) {
  Tokens out;
  const std::string conn = kBpeConnector;
  for (const auto& p : pieces) {
    if (p.size() >= conn.size() && p.compare(0, conn.size(), conn) == 0) {
      if (out.empty())
        raise(Errc::format, "dangling connector at sequence start");
      out.back().append(p.substr(conn.size()));
    } else {
      out.push_back(p);
    }
  }
  return out;
}

std::vector<Label> project_labels(const std::vector<Label>& word_labels,
                                  const std::vector<std::pair<int, int>>& word_spans) {
  if (word_labels.size() != word_spans.size())
    raise(Errc::align, "label/word-span length mismatch");
  int total = 0;
  for (const auto& [first, count] : word_spans) {
    if (first != total) raise(Errc::align, "word spans do not partition the piece sequence");
    total += count;
  }
  std::vector<Label> out(static_cast<std::size_t>(total), 0);
  for (std::size_t w = 0; w < word_spans.size(); ++w)
    for (int k = 0; k < word_spans[w].second; ++k)
      out[static_cast<std::size_t>(word_spans[w].first + k)] = word_labels[w];
  return out;
}

std::vector<int> pieces_to_ids(const BpeModel& model, const std::vector<std::string>& pieces) {
  std::vector<int> ids;
  ids.reserve(pieces.size());
  for (const auto& p : pieces) ids.push_back(model.token_id(p));
  return ids;
}

std::vector<std::string> ids_to_pieces(const BpeModel& model, const std::vector<int>& ids) {
  std::vector<std::string> out;
  out.reserve(ids.size());
  for (int id : ids) out.push_back(model.token(id));
  return out;
}

std::vector<int> encode_words(const BpeModel& model, const Tokens& words) {
  return pieces_to_ids(model, apply_bpe(model, words).pieces);
}

void save_bpe(const BpeModel& model, const std::string& merges_path,
              const std::string& vocab_path) {
  std::ofstream m(merges_path, std::ios::binary);
  if (!m) raise(Errc::io, "cannot write " + merges_path);
  m << "dialmt-bpe v1 max_merges=" << model.max_merges << "\n";
  for (const auto& [a, b] : model.merges) m << a << " " << b << "\n";

  std::ofstream v(vocab_path, std::ios::binary);
  if (!v) raise(Errc::io, "cannot write " + vocab_path);
  for (int i = 0; i < model.vocab_size(); ++i)
    v << model.id_to_token[static_cast<std::size_t>(i)] << "\t" << i << "\n";
}

BpeModel load_bpe(const std::string& merges_path, const std::string& vocab_path) {
  BpeModel model;
  model.protected_tokens.insert(kSepToken);

  std::ifstream m(merges_path, std::ios::binary);
  if (!m) raise(Errc::io, "cannot open " + merges_path);
  std::string line;
  if (!std::getline(m, line) || line.rfind("dialmt-bpe v1", 0) != 0)
    raise(Errc::format, "bad merge file header in " + merges_path);
  auto eq = line.find("max_merges=");
  if (eq == std::string::npos) raise(Errc::format, "merge file header missing max_merges");
  model.max_merges = std::stoi(line.substr(eq + 11));
  while (std::getline(m, line)) {
    if (line.empty()) continue;
    auto sp = line.find(' ');
    if (sp == std::string::npos) raise(Errc::format, "bad merge line: " + line);
    model.merges.emplace_back(line.substr(0, sp), line.substr(sp + 1));
  }
  if (static_cast<int>(model.merges.size()) > model.max_merges)
    raise(Errc::format, "merge file exceeds its declared max_merges");

  std::ifstream v(vocab_path, std::ios::binary);
  if (!v) raise(Errc::io, "cannot open " + vocab_path);
  while (std::getline(v, line)) {
    if (line.empty()) continue;
    auto tab = line.find('\t');
    if (tab == std::string::npos) raise(Errc::format, "bad vocab line: " + line);
    std::string tok = line.substr(0, tab);
    int id = std::stoi(line.substr(tab + 1));
    if (id != model.vocab_size()) raise(Errc::format, "vocab ids must be dense and in order");
    model.vocab.emplace(tok, id);
    model.id_to_token.push_back(tok);
  }
  if (model.vocab_size() < static_cast<int>(special_tokens().size()))
    raise(Errc::format, "vocab file missing special tokens");
  for (std::size_t i = 0; i < special_tokens().size(); ++i)
    if (model.id_to_token[i] != special_tokens()[i])
      raise(Errc::format, "vocab file special tokens out of order");
  return model;
}

}  // namespace dialmt
