#include "dialmt/jsonl.hpp"

#include <fstream>

#include <json.hpp>

#include "dialmt/errors.hpp"

namespace dialmt {

std::string join_tokens(const Tokens& toks) {
  std::string out;
  for (std::size_t i = 0; i < toks.size(); ++i) {
    if (i) out += ' ';
    out += toks[i];
  }
  return out;
}

Tokens split_tokens(const std::string& s) {
  Tokens out;
  std::size_t pos = 0;
  while (pos < s.size()) {
    auto sp = s.find(' ', pos);
    if (sp == std::string::npos) sp = s.size();
    if (sp > pos) out.push_back(s.substr(pos, sp - pos));
    pos = sp + 1;
  }
  return out;
}

void write_labeled_examples(const std::string& path, const std::vector<LabeledExample>& examples) {
  std::ofstream out(path, std::ios::binary);
  if (!out) raise(Errc::io, "cannot write " + path);
  for (const auto& ex : examples) {
    nlohmann::json j;
    j["src"] = join_tokens(ex.src);
    j["src_pert"] = join_tokens(ex.src_pert);
    j["labels"] = nlohmann::json::array();
    for (Label l : ex.labels_pert) j["labels"].push_back(static_cast<int>(l));
    j["tgt"] = join_tokens(ex.tgt);
    j["edits"] = nlohmann::json::array();
    for (const auto& e : ex.edits) {
      nlohmann::json ej;
      ej["kind"] = edit_kind_name(e.kind);
      ej["pos"] = e.position;
      ej["orig"] = e.original;
      ej["repl"] = e.replacement ? nlohmann::json(*e.replacement) : nlohmann::json(nullptr);
      j["edits"].push_back(std::move(ej));
    }
    out << j.dump() << "\n";
  }
}

std::vector<LabeledExample> read_labeled_examples(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise(Errc::io, "cannot open " + path);
  std::vector<LabeledExample> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded())
      raise(Errc::parse, path + " line " + std::to_string(lineno) + ": invalid json");
    LabeledExample ex;
    ex.src = split_tokens(j.at("src").get<std::string>());
    ex.src_pert = split_tokens(j.at("src_pert").get<std::string>());
    ex.tgt = split_tokens(j.at("tgt").get<std::string>());
    ex.labels_clean = labels_for_clean(ex.src);
    for (const auto& l : j.at("labels")) {
      int v = l.get<int>();
      if (v < 0 || v > 3)
        raise(Errc::parse, path + " line " + std::to_string(lineno) + ": label out of range");
      ex.labels_pert.push_back(static_cast<Label>(v));
    }
    if (ex.labels_pert.size() != ex.src_pert.size())
      raise(Errc::parse, path + " line " + std::to_string(lineno) + ": label length mismatch");
    if (j.contains("edits"))
      for (const auto& ej : j["edits"]) {
        EditRecord e;
        e.kind = edit_kind_from_name(ej.at("kind").get<std::string>());
        e.position = ej.at("pos").get<int>();
        e.original = ej.at("orig").get<std::string>();
        if (ej.contains("repl") && !ej["repl"].is_null())
          e.replacement = ej["repl"].get<std::string>();
        ex.edits.push_back(std::move(e));
      }
    out.push_back(std::move(ex));
  }
  return out;
}

void write_subdocuments(const std::string& path, const std::vector<SubDocumentPair>& pairs) {
  std::ofstream out(path, std::ios::binary);
  if (!out) raise(Errc::io, "cannot write " + path);
  for (const auto& p : pairs) {
    nlohmann::json j;
    j["src"] = join_tokens(p.src);
    j["tgt"] = join_tokens(p.tgt);
    j["n"] = p.n_sentences;
    j["doc"] = p.doc_id;
    j["start"] = p.start;
    out << j.dump() << "\n";
  }
}

std::vector<DialogueRecord> read_dialogues(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise(Errc::io, "cannot open " + path);
  std::vector<DialogueRecord> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded())
      raise(Errc::parse, path + " line " + std::to_string(lineno) + ": invalid json");
    DialogueRecord d;
    d.id = j.contains("id") && j["id"].is_string() ? j["id"].get<std::string>()
                                                   : std::to_string(out.size());
    for (const auto& s : j.at("sents")) d.sents.push_back(s.get<std::string>());
    if (d.sents.empty())
      raise(Errc::parse, path + " line " + std::to_string(lineno) + ": dialogue with no sentences");
    if (j.contains("hyps"))
      for (const auto& h : j["hyps"]) d.hyps.push_back(h.get<std::string>());
    out.push_back(std::move(d));
  }
  return out;
}

void write_dialogues(const std::string& path, const std::vector<DialogueRecord>& dialogues) {
  std::ofstream out(path, std::ios::binary);
  if (!out) raise(Errc::io, "cannot write " + path);
  for (const auto& d : dialogues) {
    nlohmann::json j;
    j["id"] = d.id;
    j["sents"] = d.sents;
    if (!d.hyps.empty()) j["hyps"] = d.hyps;
    out << j.dump() << "\n";
  }
}

}  // namespace dialmt
