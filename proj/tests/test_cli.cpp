#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <fstream>

#include "dialmt/evalmetrics.hpp"
#include "dialmt/jsonl.hpp"
#include "support/synthlang.hpp"
#include "support/testutil.hpp"

using namespace dialmt;
using test::TmpDir;

namespace {

int run(const std::string& args) {
  std::string cmd = std::string(DIALMT_BIN) + " " + args + " >/dev/null 2>/dev/null";
  int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string run_capture(const std::string& args, const std::string& channel = "2>&1") {
  std::string out_path = "/tmp/dialmt_cli_out_" + std::to_string(::getpid());
  std::string cmd = std::string(DIALMT_BIN) + " " + args + " " + channel + " > " + out_path;
  (void)std::system(cmd.c_str());
  std::ifstream in(out_path);
  std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::remove(out_path.c_str());
  return content;
}

struct Fixture {
  TmpDir tmp{"cli"};
  test::SynthLang lang = test::make_synth_lang();
  test::CorpusFiles files;
  std::string pronouns, punct, homophones;

  Fixture() {
    test::SynthCorpusSpec spec;
    spec.n_docs = 120;
    auto docs = test::make_documents(lang, spec, 2024);
    files = test::write_corpus_files(docs, tmp.path("corpus"));
    test::write_table_files(lang, tmp.path("tables"), pronouns, punct, homophones);
  }

  std::string gen_args(const std::string& out, const std::string& extra = "",
                       const std::string& src_override = "") const {
    return "--seed 7 gen-data --src " + (src_override.empty() ? files.src : src_override) +
           " --tgt " + files.tgt + " --boundaries " + files.boundaries + " --pronouns " +
           pronouns + " --punct " + punct + " --homophones " + homophones + " --n-max 3 --out " +
           out + " " + extra;
  }
};

}  // namespace

TEST_CASE("gen-data runs, reports rates, and is seed-deterministic") {
  Fixture fx;
  std::string out1 = fx.tmp.path("ex1.jsonl"), out2 = fx.tmp.path("ex2.jsonl");
  CHECK(run(fx.gen_args(out1, "--report " + fx.tmp.path("rep.json"))) == 0);
  CHECK(run(fx.gen_args(out2)) == 0);
  CHECK(test::read_file(out1) == test::read_file(out2));

  auto rep = test::read_file(fx.tmp.path("rep.json"));
  CHECK(rep.find("\"prodrop\"") != std::string::npos);
  CHECK(rep.find("\"rate\"") != std::string::npos);

  auto examples = read_labeled_examples(out1);
  CHECK(examples.size() > 100);
}

TEST_CASE("gen-data with p-drop 0 reports zero deletions") {
  Fixture fx;
  std::string rep = fx.tmp.path("rep0.json");
  CHECK(run(fx.gen_args(fx.tmp.path("ex0.jsonl"),
                        "--p-drop 0 --p-typo 0 --report " + rep)) == 0);
  auto j = test::read_file(rep);
  CHECK(j.find("\"dropped\": 0") != std::string::npos);
}

TEST_CASE("missing input file produces a machine-parsable error line") {
  Fixture fx;
  std::string args = fx.gen_args(fx.tmp.path("x.jsonl"), "", "/nonexistent.txt");
  std::string err = run_capture(args, "2>&1 1>/dev/null");
  CHECK(err.rfind("error: E_IO:", 0) == 0);
  CHECK(run(args) != 0);
}

TEST_CASE("full cli pipeline: gen-data, learn-bpe, train, translate, evaluate, sweep") {
  Fixture fx;
  std::string examples = fx.tmp.path("ex.jsonl");
  REQUIRE(run(fx.gen_args(examples, "--text-out " + fx.tmp.path("text") + " --subdocs-out " +
                                        fx.tmp.path("subdocs.jsonl"))) == 0);

  REQUIRE(run("learn-bpe --input " + fx.tmp.path("text") + ".src.txt --max-merges 600 --out " +
              fx.tmp.path("src")) == 0);
  REQUIRE(run("learn-bpe --input " + fx.tmp.path("text") + ".tgt.txt --max-merges 600 --out " +
              fx.tmp.path("tgt")) == 0);

  // tiny architecture so the smoke run stays fast
  std::string train_common =
      " --data " + examples + " --src-bpe " + fx.tmp.path("src") + " --tgt-bpe " +
      fx.tmp.path("tgt") + " --enc-layers 1 --dec-layers 1 --d-model 32 --d-ffn 64 --heads 2 "
      "--batch-tokens 500 --warmup 10 --lr 2e-3 --dropout 0 --attn-dropout 0 --max-updates 30";
  REQUIRE(run("--seed 5 train" + train_common + " --mode mtl --out " + fx.tmp.path("mtl.ckpt") +
              " --trace " + fx.tmp.path("trace.csv")) == 0);

  auto trace = test::read_file(fx.tmp.path("trace.csv"));
  CHECK(trace.rfind("update,lambda,L_MT,L_SL,L_total\n", 0) == 0);
  CHECK(std::count(trace.begin(), trace.end(), '\n') == 31);

  // build a small test set + dialogues from held-out synthetic docs
  test::SynthCorpusSpec held;
  held.n_docs = 10;
  auto docs = test::make_documents(fx.lang, held, 333);
  PerturbationConfig pcfg;
  auto synth_ts = test::make_testset(fx.lang, docs, pcfg, 444);
  save_testset(synth_ts.ts, fx.tmp.path("test.jsonl"));
  {
    std::vector<DialogueRecord> dialogues;
    for (const auto& d : synth_ts.ts.dialogues) {
      DialogueRecord r;
      r.id = d.id;
      for (const auto& t : d.turns) r.sents.push_back(t.src);
      dialogues.push_back(std::move(r));
    }
    write_dialogues(fx.tmp.path("dialogues.jsonl"), dialogues);
  }

  std::string tr_common = " --model " + fx.tmp.path("mtl.ckpt") + " --src-bpe " +
                          fx.tmp.path("src") + " --tgt-bpe " + fx.tmp.path("tgt") + " --input " +
                          fx.tmp.path("dialogues.jsonl");
  REQUIRE(run("translate" + tr_common + " --mode offline --beam 2 --out " +
              fx.tmp.path("hyps.jsonl")) == 0);
  auto hyp_dialogues = read_dialogues(fx.tmp.path("hyps.jsonl"));
  REQUIRE(hyp_dialogues.size() == synth_ts.ts.dialogues.size());
  for (std::size_t d = 0; d < hyp_dialogues.size(); ++d)
    CHECK(hyp_dialogues[d].hyps.size() == hyp_dialogues[d].sents.size());

  REQUIRE(run("evaluate --testset " + fx.tmp.path("test.jsonl") + " --hyps " +
              fx.tmp.path("hyps.jsonl") + " --out " + fx.tmp.path("report.json") + " --model " +
              fx.tmp.path("mtl.ckpt") + " --src-bpe " + fx.tmp.path("src") + " --data " +
              examples) == 0);
  auto report = test::read_file(fx.tmp.path("report.json"));
  CHECK(report.find("\"bleu\"") != std::string::npos);
  CHECK(report.find("\"labeling\"") != std::string::npos);

  // online modes + sweep determinism
  REQUIRE(run("translate" + tr_common + " --mode online-fd --context-len 2 --beam 2 --out " +
              fx.tmp.path("hyps_fd.jsonl")) == 0);
  REQUIRE(run("sweep-context --model " + fx.tmp.path("mtl.ckpt") + " --src-bpe " +
              fx.tmp.path("src") + " --tgt-bpe " + fx.tmp.path("tgt") + " --testset " +
              fx.tmp.path("test.jsonl") + " --mode online-cut --k 0,1 --beam 1 --out " +
              fx.tmp.path("sweep1.csv")) == 0);
  REQUIRE(run("sweep-context --model " + fx.tmp.path("mtl.ckpt") + " --src-bpe " +
              fx.tmp.path("src") + " --tgt-bpe " + fx.tmp.path("tgt") + " --testset " +
              fx.tmp.path("test.jsonl") + " --mode online-cut --k 0,1 --beam 1 --out " +
              fx.tmp.path("sweep2.csv")) == 0);
  auto sweep = test::read_file(fx.tmp.path("sweep1.csv"));
  CHECK(sweep == test::read_file(fx.tmp.path("sweep2.csv")));
  CHECK(sweep.rfind("context,bleu,prodrop_accuracy\n", 0) == 0);
  CHECK(std::count(sweep.begin(), sweep.end(), '\n') == 4);  // header + k0 + k1 + offline
  CHECK(sweep.find("offline,") != std::string::npos);
}

TEST_CASE("train rejects an unknown mode with a config error") {
  Fixture fx;
  std::string err = run_capture(
      "train --data /tmp/none.jsonl --src-bpe /tmp/none --mode bogus --out /tmp/x.ckpt",
      "2>&1 1>/dev/null");
  CHECK(err.rfind("error: E_", 0) == 0);
}
