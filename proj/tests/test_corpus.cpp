#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "dialmt/corpus.hpp"
#include "dialmt/errors.hpp"
#include "dialmt/jsonl.hpp"
#include "support/testutil.hpp"

using namespace dialmt;
using test::TmpDir;
using test::write_file;

TEST_CASE("load_parallel_documents splits on boundary ranges") {
  TmpDir tmp("corpus");
  write_file(tmp.path("a.src"), "a b\nc d\ne\nf g\nh\n");
  write_file(tmp.path("a.tgt"), "A B\nC D\nE\nF G\nH\n");
  write_file(tmp.path("a.bounds"), "0\t2\n3\t4\n");
  auto docs = load_parallel_documents(tmp.path("a.src"), tmp.path("a.tgt"), tmp.path("a.bounds"));
  REQUIRE(docs.size() == 2);
  CHECK(docs[0].size() == 3);
  CHECK(docs[1].size() == 2);
  CHECK(docs[0].src_sentences[0] == Tokens{"a", "b"});
  CHECK(docs[1].tgt_sentences[1] == Tokens{"H"});
}

TEST_CASE("line count mismatch raises an alignment error") {
  TmpDir tmp("corpus");
  write_file(tmp.path("a.src"), "a\nb\nc\nd\ne\n");
  write_file(tmp.path("a.tgt"), "A\nB\nC\nD\n");
  write_file(tmp.path("a.bounds"), "0\t4\n");
  CHECK_THROWS_AS(
      load_parallel_documents(tmp.path("a.src"), tmp.path("a.tgt"), tmp.path("a.bounds")), Error);
  try {
    load_parallel_documents(tmp.path("a.src"), tmp.path("a.tgt"), tmp.path("a.bounds"));
  } catch (const Error& e) {
    CHECK(e.code() == Errc::align);
  }
}

TEST_CASE("malformed boundaries report the line number") {
  TmpDir tmp("corpus");
  write_file(tmp.path("a.src"), "a\nb\n");
  write_file(tmp.path("a.tgt"), "A\nB\n");
  write_file(tmp.path("a.bounds"), "0\t0\nnot-a-range\n");
  try {
    load_parallel_documents(tmp.path("a.src"), tmp.path("a.tgt"), tmp.path("a.bounds"));
    FAIL("expected parse error");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::parse);
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
}

TEST_CASE("empty boundary file yields no documents") {
  TmpDir tmp("corpus");
  write_file(tmp.path("a.src"), "a\n");
  write_file(tmp.path("a.tgt"), "A\n");
  write_file(tmp.path("a.bounds"), "");
  CHECK(load_parallel_documents(tmp.path("a.src"), tmp.path("a.tgt"), tmp.path("a.bounds")).empty());
}

TEST_CASE("overlapping or out-of-range boundaries are rejected") {
  TmpDir tmp("corpus");
  write_file(tmp.path("a.src"), "a\nb\nc\n");
  write_file(tmp.path("a.tgt"), "A\nB\nC\n");
  write_file(tmp.path("bad1"), "0\t1\n1\t2\n");
  CHECK_THROWS_AS(load_parallel_documents(tmp.path("a.src"), tmp.path("a.tgt"), tmp.path("bad1")),
                  Error);
  write_file(tmp.path("bad2"), "0\t5\n");
  CHECK_THROWS_AS(load_parallel_documents(tmp.path("a.src"), tmp.path("a.tgt"), tmp.path("bad2")),
                  Error);
}

TEST_CASE("literal separator tokens are escaped on ingestion") {
  TmpDir tmp("corpus");
  write_file(tmp.path("a.src"), "a <sep> b\n");
  write_file(tmp.path("a.tgt"), "A X B\n");
  write_file(tmp.path("a.bounds"), "0\t0\n");
  auto docs = load_parallel_documents(tmp.path("a.src"), tmp.path("a.tgt"), tmp.path("a.bounds"));
  CHECK(docs[0].src_sentences[0] == Tokens{"a", kSepEscToken, "b"});
}

TEST_CASE("join_with_sep basics") {
  CHECK(join_with_sep({{"a", "b"}, {"c"}}) == Tokens{"a", "b", kSepToken, "c"});
  CHECK(join_with_sep({{"a"}}) == Tokens{"a"});
  CHECK(join_with_sep({}).empty());
  CHECK_THROWS_AS(join_with_sep({{kSepToken}}), Error);
}

TEST_CASE("split_by_sep basics") {
  CHECK(split_by_sep({"a", "b", kSepToken, "c"}) ==
        std::vector<Tokens>{{"a", "b"}, {"c"}});
  CHECK(split_by_sep({kSepToken}) == std::vector<Tokens>{{}, {}});
}

TEST_CASE("split is the inverse of join on random sentence lists") {
  Rng rng(7);
  for (int t = 0; t < 1000; ++t) {
    std::vector<Tokens> sents;
    int n = static_cast<int>(rng.uniform_int(1, 5));
    for (int s = 0; s < n; ++s) {
      Tokens sent;
      int w = static_cast<int>(rng.uniform_int(0, 4));
      for (int i = 0; i < w; ++i) sent.push_back("w" + std::to_string(rng.uniform(20)));
      sents.push_back(std::move(sent));
    }
    if (n == 1 && sents[0].empty()) continue;  // [] and [[]] share an image
    CHECK(split_by_sep(join_with_sep(sents)) == sents);
  }
}

TEST_CASE("sample_subdocuments partitions the document") {
  ParallelDocument doc;
  doc.doc_id = "d";
  for (int i = 0; i < 7; ++i) {
    doc.src_sentences.push_back({"s" + std::to_string(i)});
    doc.tgt_sentences.push_back({"t" + std::to_string(i)});
  }
  Rng rng(11);
  auto pairs = sample_subdocuments(doc, 10, rng);
  int covered = 0;
  Tokens rebuilt;
  for (const auto& p : pairs) {
    CHECK(p.n_sentences >= 1);
    CHECK(p.n_sentences <= 7);
    CHECK(p.start == covered);
    covered += p.n_sentences;
    for (const auto& t : p.src)
      if (t != kSepToken) rebuilt.push_back(t);
  }
  CHECK(covered == 7);
  Tokens expect;
  for (int i = 0; i < 7; ++i) expect.push_back("s" + std::to_string(i));
  CHECK(rebuilt == expect);
}

TEST_CASE("single-sentence document gives exactly one pair") {
  ParallelDocument doc;
  doc.doc_id = "d";
  doc.src_sentences.push_back({"x"});
  doc.tgt_sentences.push_back({"y"});
  Rng rng(3);
  auto pairs = sample_subdocuments(doc, 10, rng);
  REQUIRE(pairs.size() == 1);
  CHECK(pairs[0].n_sentences == 1);
}

TEST_CASE("sampling is deterministic for a fixed seed") {
  ParallelDocument doc;
  doc.doc_id = "d";
  for (int i = 0; i < 12; ++i) {
    doc.src_sentences.push_back({"s" + std::to_string(i)});
    doc.tgt_sentences.push_back({"t" + std::to_string(i)});
  }
  TmpDir tmp("corpus");
  Rng r1(42), r2(42);
  auto a = sample_subdocuments(doc, 10, r1);
  auto b = sample_subdocuments(doc, 10, r2);
  write_subdocuments(tmp.path("a.jsonl"), a);
  write_subdocuments(tmp.path("b.jsonl"), b);
  CHECK(test::read_file(tmp.path("a.jsonl")) == test::read_file(tmp.path("b.jsonl")));
}

TEST_CASE("overlap mode keeps windows inside the document") {
  ParallelDocument doc;
  doc.doc_id = "d";
  for (int i = 0; i < 9; ++i) {
    doc.src_sentences.push_back({"s" + std::to_string(i)});
    doc.tgt_sentences.push_back({"t" + std::to_string(i)});
  }
  Rng rng(5);
  auto pairs = sample_subdocuments(doc, 4, rng, /*overlap=*/true);
  CHECK(!pairs.empty());
  for (const auto& p : pairs) {
    CHECK(p.start >= 0);
    CHECK(p.start + p.n_sentences <= 9);
    CHECK(p.n_sentences <= 4);
  }
}
