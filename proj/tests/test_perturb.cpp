#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "dialmt/errors.hpp"
#include "dialmt/perturb.hpp"
#include "support/testutil.hpp"

using namespace dialmt;

TEST_CASE("dropped pronoun labels its right neighbor (paper example)") {
  // Nancy 怎么 了 ? <sep> 她 是 不是 哭 了 啊 。  with 她 deleted
  Tokens x = {"Nancy", "怎么", "了", "?", kSepToken, "她", "是", "不是", "哭", "了", "啊", "。"};
  PerturbationTables t;
  t.pronouns = {"她"};
  t.punctuation = {"，"};  // not present, so only the pronoun can drop
  t.random_pool = {"了"};
  PerturbationConfig cfg;
  cfg.p_drop = 1.0;
  cfg.p_typo = 0.0;
  Rng rng(1);
  auto res = perturb_subdocument(x, t, cfg, rng);
  CHECK(res.tokens ==
        Tokens{"Nancy", "怎么", "了", "?", kSepToken, "是", "不是", "哭", "了", "啊", "。"});
  std::vector<Label> expect(res.tokens.size(), 0);
  expect[5] = kLabelProDrop;  // 是
  CHECK(res.labels == expect);
  REQUIRE(res.edits.size() == 1);
  CHECK(res.edits[0].kind == EditKind::prodrop);
  CHECK(res.edits[0].position == 5);
  CHECK(res.edits[0].original == "她");
}

TEST_CASE("zero probabilities are the identity") {
  Tokens x = {"p1", "w0", ".", kSepToken, "p2", "w1", "?"};
  PerturbationConfig cfg;
  cfg.p_drop = 0.0;
  cfg.p_typo = 0.0;
  Rng rng(3);
  auto res = perturb_subdocument(x, test::toy_tables(), cfg, rng);
  CHECK(res.tokens == x);
  CHECK(res.edits.empty());
  for (Label l : res.labels) CHECK(l == 0);
}

TEST_CASE("sequence-final deletion labels the left neighbor") {
  Tokens x = {"w0", "."};
  PerturbationTables t = test::toy_tables();
  PerturbationConfig cfg;
  cfg.p_drop = 1.0;
  cfg.p_typo = 0.0;
  Rng rng(5);
  auto res = perturb_subdocument(x, t, cfg, rng);
  CHECK(res.tokens == Tokens{"w0"});
  CHECK(res.labels == std::vector<Label>{kLabelPunDrop});
}

TEST_CASE("colliding deletions are skipped so labels stay unique") {
  // pronoun drop labels w0; the punctuation deletion would also label w0
  Tokens x = {"p1", "w0", "."};
  PerturbationConfig cfg;
  cfg.p_drop = 1.0;
  cfg.p_typo = 0.0;
  Rng rng(9);
  auto res = perturb_subdocument(x, test::toy_tables(), cfg, rng);
  CHECK(res.tokens == Tokens{"w0", "."});
  CHECK(res.labels == std::vector<Label>{kLabelProDrop, 0});
  REQUIRE(res.edits.size() == 1);
  CHECK(res.edits[0].kind == EditKind::prodrop);
}

TEST_CASE("separators are never edited and always carry label 0") {
  Rng rng(17);
  PerturbationConfig cfg;
  cfg.p_drop = 0.5;
  cfg.p_typo = 0.3;
  auto tables = test::toy_tables();
  for (int t = 0; t < 200; ++t) {
    Tokens x = test::random_subdocument(rng);
    auto res = perturb_subdocument(x, tables, cfg, rng);
    long seps_in = std::count(x.begin(), x.end(), kSepToken);
    long seps_out = std::count(res.tokens.begin(), res.tokens.end(), kSepToken);
    CHECK(seps_in == seps_out);
    for (std::size_t i = 0; i < res.tokens.size(); ++i)
      if (res.tokens[i] == kSepToken) CHECK(res.labels[i] == 0);
  }
}

TEST_CASE("labels_for_clean is all zeros") {
  CHECK(labels_for_clean({"a", "b", "c", "d", "e"}) == std::vector<Label>(5, 0));
  CHECK(labels_for_clean({}).empty());
}

TEST_CASE("invert_edits restores the clean sequence") {
  Rng rng(23);
  PerturbationConfig cfg;
  cfg.p_drop = 0.4;
  cfg.p_typo = 0.1;
  auto tables = test::toy_tables();
  for (int t = 0; t < 1000; ++t) {
    Tokens x = test::random_subdocument(rng);
    auto res = perturb_subdocument(x, tables, cfg, rng);
    CHECK(invert_edits(res.tokens, res.edits) == x);
  }
}

TEST_CASE("invert_edits with no edits is the identity") {
  Tokens x = {"a", "b"};
  CHECK(invert_edits(x, {}) == x);
}

TEST_CASE("invert_edits rejects inconsistent records") {
  EditRecord bad;
  bad.kind = EditKind::typo;
  bad.position = 0;
  bad.original = "a";
  bad.replacement = "z";
  try {
    invert_edits({"b"}, {bad});  // token at 0 is "b", not the recorded "z"
    FAIL("expected corruption error");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::corrupt);
  }
}

TEST_CASE("alignment oracle reproduces generator labels exactly") {
  Rng rng(31);
  PerturbationConfig cfg;
  cfg.p_drop = 0.4;
  cfg.p_typo = 0.15;
  auto tables = test::toy_tables();
  for (int t = 0; t < 1000; ++t) {
    Tokens x = test::random_subdocument(rng);
    auto res = perturb_subdocument(x, tables, cfg, rng);
    CHECK(derive_labels_by_alignment(x, res.tokens, tables) == res.labels);
  }
}

TEST_CASE("alignment oracle trivial cases") {
  auto tables = test::toy_tables();
  Tokens x = {"w3", "w4", "w5"};
  CHECK(derive_labels_by_alignment(x, x, tables) == std::vector<Label>(3, 0));
  CHECK(derive_labels_by_alignment(x, {"w3", "w7", "w5"}, tables) ==
        std::vector<Label>{0, kLabelTypo, 0});
  // a longer perturbed side cannot be aligned
  CHECK_THROWS_AS(derive_labels_by_alignment({"w3"}, {"w3", "w4"}, tables), Error);
}

TEST_CASE("empirical edit rates sit inside the 99% binomial interval") {
  // sentences shaped p w w w w w . so deletions never collide
  auto tables = test::toy_tables();
  PerturbationConfig cfg;  // defaults: 0.30 / 0.01 / 0.80
  Rng gen(1234);
  PerturbStats stats;
  Rng rng(99);
  const int n_sents = 12000;
  for (int s = 0; s < n_sents; ++s) {
    Tokens sent = {"p1"};
    for (int w = 0; w < 6; ++w) sent.push_back("w" + std::to_string(gen.uniform(8)));
    sent.push_back(".");
    perturb_subdocument(sent, tables, cfg, rng, &stats);
  }
  CHECK(stats.pronoun_sites >= 10000);
  CHECK(stats.punct_sites >= 10000);
  CHECK(stats.typo_sites >= 50000);
  CHECK(stats.pronoun_skipped == 0);
  CHECK(stats.punct_skipped == 0);

  auto inside99 = [](std::int64_t k, std::int64_t n, double p) {
    double mu = n * p, sd = std::sqrt(n * p * (1 - p));
    return k >= mu - 2.576 * sd && k <= mu + 2.576 * sd;
  };
  CHECK(inside99(stats.pronoun_dropped, stats.pronoun_sites, cfg.p_drop));
  CHECK(inside99(stats.punct_dropped, stats.punct_sites, cfg.p_drop));
  CHECK(inside99(stats.typo_applied, stats.typo_sites, cfg.p_typo));
  // the 80/20 branch split applies where the token has a homophone entry
  CHECK(inside99(stats.homophone_branch, stats.typo_entry_sites, cfg.p_homophone));
}

TEST_CASE("same seed gives identical perturbations") {
  auto tables = test::toy_tables();
  PerturbationConfig cfg;
  cfg.p_drop = 0.5;
  cfg.p_typo = 0.2;
  Rng gen(77);
  Tokens x = test::random_subdocument(gen);
  Rng r1(5150), r2(5150);
  auto a = perturb_subdocument(x, tables, cfg, r1);
  auto b = perturb_subdocument(x, tables, cfg, r2);
  CHECK(a.tokens == b.tokens);
  CHECK(a.labels == b.labels);
}

TEST_CASE("typo with empty pool is a configuration error") {
  PerturbationTables t = test::toy_tables();
  t.random_pool.clear();
  t.homophones.clear();
  PerturbationConfig cfg;
  cfg.p_drop = 0.0;
  cfg.p_typo = 1.0;
  Rng rng(2);
  Tokens x = {"w3", "w4"};
  CHECK_THROWS_AS(perturb_subdocument(x, t, cfg, rng), Error);
  CHECK_THROWS_AS(validate_tables(t, cfg), Error);
}

TEST_CASE("default_segment splits CJK runs per codepoint") {
  CHECK(default_segment("Nancy怎么了") == Tokens{"Nancy", "怎", "么", "了"});
  CHECK(default_segment("hello world") == Tokens{"hello", "world"});
  CHECK(default_segment("").empty());
  CHECK(default_segment("  a\tb\n") == Tokens{"a", "b"});
}

TEST_CASE("make_labeled_example keeps invariants") {
  auto tables = test::toy_tables();
  PerturbationConfig cfg;
  cfg.p_drop = 0.5;
  cfg.p_typo = 0.1;
  Rng rng(41);
  SubDocumentPair pair;
  pair.src = test::random_subdocument(rng);
  pair.tgt = {"T"};
  pair.n_sentences = 1;
  auto ex = make_labeled_example(pair, tables, cfg, rng);
  CHECK(ex.labels_clean.size() == ex.src.size());
  for (Label l : ex.labels_clean) CHECK(l == 0);
  CHECK(ex.labels_pert.size() == ex.src_pert.size());
  long deletions = 0, typos = 0;
  for (const auto& e : ex.edits) (e.kind == EditKind::typo ? typos : deletions)++;
  CHECK(ex.src_pert.size() == ex.src.size() - static_cast<std::size_t>(deletions));
  long label1 = std::count(ex.labels_pert.begin(), ex.labels_pert.end(), kLabelTypo);
  CHECK(label1 == typos);
}
