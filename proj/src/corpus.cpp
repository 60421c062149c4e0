#include "dialmt/corpus.hpp"

#include <algorithm>
#include <fstream>

#include "dialmt/errors.hpp"
#include "dialmt/perturb.hpp"

namespace dialmt {

static std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise(Errc::io, "cannot open " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

static Tokens tokenize_line(const std::string& line) {
  Tokens toks = default_segment(line);
  for (auto& t : toks)
    if (t == kSepToken) t = kSepEscToken;
  return toks;
}

std::vector<ParallelDocument> load_parallel_documents(const std::string& src_path,
                                                      const std::string& tgt_path,
                                                      const std::string& boundaries_path) {
  auto src_lines = read_lines(src_path);
  auto tgt_lines = read_lines(tgt_path);
  if (src_lines.size() != tgt_lines.size())
    raise(Errc::align, "line count mismatch: " + src_path + " has " +
                           std::to_string(src_lines.size()) + " lines, " + tgt_path + " has " +
                           std::to_string(tgt_lines.size()));

  std::ifstream in(boundaries_path, std::ios::binary);
  if (!in) raise(Errc::io, "cannot open " + boundaries_path);

  std::vector<ParallelDocument> docs;
  std::string line;
  long prev_end = -1;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto tab = line.find('\t');
    if (tab == std::string::npos)
      raise(Errc::parse, "boundary file line " + std::to_string(lineno) + ": expected start<TAB>end");
    long start = 0, end = 0;
    try {
      start = std::stol(line.substr(0, tab));
      end = std::stol(line.substr(tab + 1));
    } catch (const std::exception&) {
      raise(Errc::parse, "boundary file line " + std::to_string(lineno) + ": non-numeric range");
    }
    if (start < 0 || end < start)
      raise(Errc::parse, "boundary file line " + std::to_string(lineno) + ": bad range [" +
                             std::to_string(start) + "," + std::to_string(end) + "]");
    if (start <= prev_end)
      raise(Errc::parse, "boundary file line " + std::to_string(lineno) +
                             ": ranges must be monotone and non-overlapping");
    if (end >= static_cast<long>(src_lines.size()))
      raise(Errc::align, "boundary range [" + std::to_string(start) + "," + std::to_string(end) +
                             "] exceeds corpus length " + std::to_string(src_lines.size()));
    prev_end = end;

    ParallelDocument doc;
    doc.doc_id = "d" + std::to_string(docs.size());
    for (long i = start; i <= end; ++i) {
      doc.src_sentences.push_back(tokenize_line(src_lines[static_cast<std::size_t>(i)]));
      doc.tgt_sentences.push_back(tokenize_line(tgt_lines[static_cast<std::size_t>(i)]));
    }
    docs.push_back(std::move(doc));
  }
  return docs;
}

std::vector<SubDocumentPair> sample_subdocuments(const ParallelDocument& doc, int n_max, Rng& rng,
                                                 bool overlap) {
  if (n_max < 1) raise(Errc::input, "n_max must be >= 1");
  const int m = doc.size();
  std::vector<SubDocumentPair> out;
  auto make_pair = [&](int start, int len) {
    SubDocumentPair p;
    p.n_sentences = len;
    p.doc_id = doc.doc_id;
    p.start = start;
    std::vector<Tokens> s(doc.src_sentences.begin() + start, doc.src_sentences.begin() + start + len);
    std::vector<Tokens> t(doc.tgt_sentences.begin() + start, doc.tgt_sentences.begin() + start + len);
    p.src = join_with_sep(s);
    p.tgt = join_with_sep(t);
    return p;
  };
  if (!overlap) {
    int pos = 0;
    while (pos < m) {
      int remaining = m - pos;
      int len = static_cast<int>(rng.uniform_int(1, std::min(n_max, remaining)));
      out.push_back(make_pair(pos, len));
      pos += len;
    }
  } else {
    // roughly as many windows as the partition would produce
    int count = std::max(1, (2 * m) / (n_max + 1));
    for (int k = 0; k < count; ++k) {
      int start = static_cast<int>(rng.uniform_int(0, m - 1));
      int len = static_cast<int>(rng.uniform_int(1, std::min(n_max, m - start)));
      out.push_back(make_pair(start, len));
    }
  }
  return out;
}

Tokens join_with_sep(const std::vector<Tokens>& sentences) {
  Tokens out;
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    for (const auto& t : sentences[i]) {
      if (t == kSepToken)
        raise(Errc::input, "sentence contains the reserved separator token");
      out.push_back(t);
    }
    if (i + 1 < sentences.size()) out.push_back(kSepToken);
  }
  return out;
}

std::vector<Tokens> split_by_sep(const Tokens& seq) {
  if (seq.empty()) return {};
  std::vector<Tokens> out(1);
  for (const auto& t : seq) {
    if (t == kSepToken)
      out.emplace_back();
    else
      out.back().push_back(t);
  }
  return out;
}

}  // namespace dialmt
