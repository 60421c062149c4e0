// dialmt: dialogue-MT robustness pipeline in one binary.
// Subcommands: gen-data, learn-bpe, train, translate, evaluate, sweep-context.

#include <CLI11.hpp>
#include <json.hpp>

#include <Eigen/Core>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <thread>

#include "dialmt/corpus.hpp"
#include "dialmt/decode.hpp"
#include "dialmt/errors.hpp"
#include "dialmt/evalmetrics.hpp"
#include "dialmt/jsonl.hpp"
#include "dialmt/log.hpp"
#include "dialmt/perturb.hpp"
#include "dialmt/train.hpp"

using namespace dialmt;

namespace {

struct GlobalFlags {
  std::uint64_t seed = 1;
  int jobs = 1;
};

void log_resolved(const CLI::App* cmd) {
  if (!log_enabled(LogLevel::info)) return;
  std::ostringstream os;
  os << "resolved config for '" << cmd->get_name() << "':";
  for (const auto* opt : cmd->get_options()) {
    if (opt->get_name().empty() || opt->count() == 0) continue;
    os << " " << opt->get_name() << "=";
    auto results = opt->results();
    for (std::size_t i = 0; i < results.size(); ++i) os << (i ? "," : "") << results[i];
  }
  log_line(LogLevel::info, os.str());
}

// ---------------- gen-data ----------------

struct GenDataArgs {
  std::string src, tgt, boundaries, pronouns, punct, homophones;
  std::string out, subdocs_out, report_out, text_out;
  int n_max = 10;
  double p_drop = 0.30, p_typo = 0.01, p_homophone = 0.80;
  bool overlap = false;
};

int cmd_gen_data(const GenDataArgs& a, const GlobalFlags& g) {
  auto docs = load_parallel_documents(a.src, a.tgt, a.boundaries);
  PerturbationTables tables = load_tables(a.pronouns, a.punct, a.homophones);

  // random-word pool: every corpus token except separator and table tokens
  {
    std::set<std::string> pool;
    for (const auto& doc : docs)
      for (const auto& sent : doc.src_sentences)
        for (const auto& tok : sent)
          if (!tables.is_table_token(tok)) pool.insert(tok);
    tables.random_pool.assign(pool.begin(), pool.end());
  }
  PerturbationConfig pcfg;
  pcfg.p_drop = a.p_drop;
  pcfg.p_typo = a.p_typo;
  pcfg.p_homophone = a.p_homophone;
  if (pcfg.p_typo > 0) validate_tables(tables, pcfg);

  std::vector<std::vector<SubDocumentPair>> doc_pairs(docs.size());
  std::vector<std::vector<LabeledExample>> doc_examples(docs.size());
  std::vector<PerturbStats> doc_stats(docs.size());
  auto work = [&](std::size_t d) {
    // per-document derived seed: results are independent of scheduling
    Rng rng(g.seed ^ static_cast<std::uint64_t>(d));
    doc_pairs[d] = sample_subdocuments(docs[d], a.n_max, rng, a.overlap);
    for (const auto& pair : doc_pairs[d])
      doc_examples[d].push_back(make_labeled_example(pair, tables, pcfg, rng, &doc_stats[d]));
  };
  if (g.jobs <= 1) {
    for (std::size_t d = 0; d < docs.size(); ++d) work(d);
  } else {
    std::vector<std::thread> threads;
    for (int w = 0; w < g.jobs; ++w)
      threads.emplace_back([&, w] {
        for (std::size_t d = static_cast<std::size_t>(w); d < docs.size();
             d += static_cast<std::size_t>(g.jobs))
          work(d);
      });
    for (auto& th : threads) th.join();
  }

  std::vector<SubDocumentPair> pairs;
  std::vector<LabeledExample> examples;
  PerturbStats stats;
  for (std::size_t d = 0; d < docs.size(); ++d) {
    for (auto& p : doc_pairs[d]) pairs.push_back(std::move(p));
    for (auto& e : doc_examples[d]) examples.push_back(std::move(e));
    stats.merge(doc_stats[d]);
  }

  write_labeled_examples(a.out, examples);
  if (!a.subdocs_out.empty()) write_subdocuments(a.subdocs_out, pairs);
  if (!a.text_out.empty()) {
    std::ofstream s(a.text_out + ".src.txt", std::ios::binary);
    std::ofstream t(a.text_out + ".tgt.txt", std::ios::binary);
    for (const auto& ex : examples) {
      s << join_tokens(ex.src) << "\n" << join_tokens(ex.src_pert) << "\n";
      t << join_tokens(ex.tgt) << "\n";
    }
  }

  nlohmann::json rep;
  rep["examples"] = examples.size();
  rep["documents"] = docs.size();
  rep["config"] = {{"p_drop", pcfg.p_drop},
                   {"p_typo", pcfg.p_typo},
                   {"p_homophone", pcfg.p_homophone},
                   {"n_max", a.n_max},
                   {"seed", g.seed}};
  auto rate = [](std::int64_t k, std::int64_t n) {
    return n == 0 ? nlohmann::json(nullptr)
                  : nlohmann::json(static_cast<double>(k) / static_cast<double>(n));
  };
  rep["prodrop"] = {{"sites", stats.pronoun_sites},
                    {"dropped", stats.pronoun_dropped},
                    {"skipped_collisions", stats.pronoun_skipped},
                    {"rate", rate(stats.pronoun_dropped, stats.pronoun_sites)}};
  rep["pundrop"] = {{"sites", stats.punct_sites},
                    {"dropped", stats.punct_dropped},
                    {"skipped_collisions", stats.punct_skipped},
                    {"rate", rate(stats.punct_dropped, stats.punct_sites)}};
  rep["dialtypo"] = {{"sites", stats.typo_sites},
                     {"applied", stats.typo_applied},
                     {"rate", rate(stats.typo_applied, stats.typo_sites)},
                     {"homophone_branch", stats.homophone_branch},
                     {"random_branch", stats.random_branch},
                     {"entry_sites", stats.typo_entry_sites},
                     {"homophone_rate", rate(stats.homophone_branch, stats.typo_entry_sites)}};
  std::string text = rep.dump(2) + "\n";
  if (a.report_out.empty()) {
    std::cout << text;
  } else {
    std::ofstream out(a.report_out, std::ios::binary);
    if (!out) raise(Errc::io, "cannot write " + a.report_out);
    out << text;
  }
  return 0;
}

// ---------------- learn-bpe ----------------

struct LearnBpeArgs {
  std::vector<std::string> inputs;
  int max_merges = 30000;
  std::string out;
};

int cmd_learn_bpe(const LearnBpeArgs& a) {
  std::vector<Tokens> corpus;
  for (const auto& path : a.inputs) {
    std::ifstream in(path, std::ios::binary);
    if (!in) raise(Errc::io, "cannot open " + path);
    std::string line;
    while (std::getline(in, line)) corpus.push_back(split_tokens(line));
  }
  BpeModel model = learn_bpe(corpus, a.max_merges);
  save_bpe(model, a.out + ".merges", a.out + ".vocab");
  std::cout << "merges " << model.merges.size() << " vocab " << model.vocab_size() << "\n";
  return 0;
}

// ---------------- train ----------------

struct TrainArgs {
  std::string data, valid, src_bpe, tgt_bpe, out, trace;
  std::string mode = "mtl";
  long max_updates = 1000;
  long checkpoint_every = 0;
  // model
  int enc_layers = 4, dec_layers = 4, d_model = 256, d_ffn = 1024, heads = 4;
  int max_positions = 512;
  double attn_dropout = 0.1;
  // optimizer
  OptimizerConfig opt;
  Schedule sched;
};

BpeModel load_bpe_prefix(const std::string& prefix) {
  return load_bpe(prefix + ".merges", prefix + ".vocab");
}

int cmd_train(const TrainArgs& a, const GlobalFlags& g) {
  Eigen::setNbThreads(g.jobs);
  TrainingMode mode = training_mode_from_name(a.mode);
  BpeModel src_bpe = load_bpe_prefix(a.src_bpe);
  BpeModel tgt_bpe = a.tgt_bpe.empty()
                         ? (mode == TrainingMode::REPAIR ? src_bpe : load_bpe_prefix(a.src_bpe))
                         : load_bpe_prefix(a.tgt_bpe);

  auto examples = read_labeled_examples(a.data);
  auto stream = build_training_stream(mode, examples);
  auto items = encode_stream(stream, src_bpe, tgt_bpe);
  LOG_INFO("training items: " << items.size());

  ModelConfig mc;
  mc.enc_layers = a.enc_layers;
  mc.dec_layers = a.dec_layers;
  mc.d_model = a.d_model;
  mc.d_ffn = a.d_ffn;
  mc.heads = a.heads;
  mc.max_positions = a.max_positions;
  mc.dropout = a.opt.dropout;
  mc.attn_dropout = a.attn_dropout;
  mc.src_vocab = src_bpe.vocab_size();
  mc.tgt_vocab = tgt_bpe.vocab_size();
  TransformerModel<float> model(mc, derive_seed(g.seed, 0x30de1));
  LOG_INFO("model parameters: " << model.num_parameters());

  std::vector<TrainItem> valid_items;
  if (!a.valid.empty()) {
    auto vex = read_labeled_examples(a.valid);
    valid_items = encode_stream(build_training_stream(
                                    mode == TrainingMode::MTL ? TrainingMode::ROBUST : mode, vex),
                                src_bpe, tgt_bpe);
  }

  double best_valid = std::numeric_limits<double>::infinity();
  TrainHooks hooks;
  long every = a.checkpoint_every;
  hooks.on_update = [&](const TraceRow& row) {
    if (every > 0 && (row.update + 1) % every == 0) {
      save_checkpoint(model, a.out);
      if (!valid_items.empty()) {
        double v = evaluate_nll(model, valid_items, a.opt.label_smoothing, 512);
        LOG_INFO("update " << row.update << " valid nll " << v);
        if (v < best_valid) {
          best_valid = v;
          save_checkpoint(model, a.out + ".best");
        }
      }
    }
  };

  auto result = run_training(model, items, a.opt, a.sched, mode, a.max_updates, g.seed,
                             a.out + ".diag.json", hooks);
  save_checkpoint(model, a.out);
  if (!a.trace.empty()) write_trace_csv(a.trace, result.trace);
  if (!result.trace.empty())
    std::cout << "final L_MT " << result.trace.back().l_mt << " after " << result.trace.size()
              << " updates\n";
  return 0;
}

// ---------------- translate ----------------

struct TranslateArgs {
  std::string model, repair_model, src_bpe, tgt_bpe, input, out;
  std::string mode = "offline";
  int context_len = 1000;
  BeamConfig beam;
};

int cmd_translate(const TranslateArgs& a, const GlobalFlags& g) {
  DecodeMode mode = decode_mode_from_name(a.mode);
  BpeModel src_bpe = load_bpe_prefix(a.src_bpe);
  BpeModel tgt_bpe = a.tgt_bpe.empty() ? src_bpe : load_bpe_prefix(a.tgt_bpe);
  auto model = load_checkpoint<float>(a.model);
  Translator translator{model.get(), &src_bpe, &tgt_bpe, a.beam};

  std::unique_ptr<TransformerModel<float>> repair_model;
  if (mode == DecodeMode::pipeline) {
    if (a.repair_model.empty()) raise(Errc::config, "pipeline mode requires --repair-model");
    repair_model = load_checkpoint<float>(a.repair_model);
  }

  auto dialogues = read_dialogues(a.input);
  std::vector<std::vector<std::string>> hyps(dialogues.size());
  auto work = [&](std::size_t d) {
    const auto& sents = dialogues[d].sents;
    switch (mode) {
      case DecodeMode::offline:
        hyps[d] = translate_offline(translator, sents);
        break;
      case DecodeMode::pipeline: {
        Translator repair{repair_model.get(), &src_bpe, &src_bpe, a.beam};
        hyps[d] = repair_then_translate(repair, translator, sents, DecodeMode::offline, 0);
        break;
      }
      case DecodeMode::online_cut:
      case DecodeMode::online_fd: {
        DialogueSession session;
        session.context_len = a.context_len;
        for (const auto& s : sents)
          hyps[d].push_back(mode == DecodeMode::online_cut
                                ? translate_online_cut(translator, session, s)
                                : translate_online_fd(translator, session, s));
        break;
      }
    }
  };
  if (g.jobs <= 1) {
    for (std::size_t d = 0; d < dialogues.size(); ++d) work(d);
  } else {
    std::vector<std::thread> threads;
    for (int w = 0; w < g.jobs; ++w)
      threads.emplace_back([&, w] {
        for (std::size_t d = static_cast<std::size_t>(w); d < dialogues.size();
             d += static_cast<std::size_t>(g.jobs))
          work(d);
      });
    for (auto& th : threads) th.join();
  }
  for (std::size_t d = 0; d < dialogues.size(); ++d) dialogues[d].hyps = std::move(hyps[d]);
  write_dialogues(a.out, dialogues);
  return 0;
}

// ---------------- evaluate ----------------

struct EvaluateArgs {
  std::string testset, hyps, out;
  std::string model, src_bpe, data;  // optional labeling evaluation
};

int cmd_evaluate(const EvaluateArgs& a) {
  TestSet ts = load_testset(a.testset);
  std::vector<std::string> hyps;
  for (const auto& d : read_dialogues(a.hyps)) {
    if (d.hyps.size() != d.sents.size())
      raise(Errc::input, "dialogue " + d.id + " has " + std::to_string(d.hyps.size()) +
                             " hypotheses for " + std::to_string(d.sents.size()) + " sentences");
    for (const auto& h : d.hyps) hyps.push_back(h);
  }
  MetricsReport report = evaluate_all(ts, hyps);

  if (!a.model.empty()) {
    if (a.src_bpe.empty() || a.data.empty())
      raise(Errc::config, "labeling evaluation needs --src-bpe and --data");
    auto model = load_checkpoint<float>(a.model);
    BpeModel src_bpe = load_bpe_prefix(a.src_bpe);
    auto head = labeling_head(*model);
    std::vector<std::vector<Label>> gold, pred;
    for (const auto& ex : read_labeled_examples(a.data)) {
      auto enc = apply_bpe(src_bpe, ex.src_pert);
      auto ids = pieces_to_ids(src_bpe, enc.pieces);
      auto H = encode(*model, ids);
      auto probs = label_probs(head, H);
      std::vector<Label> p(static_cast<std::size_t>(probs.rows()));
      for (Eigen::Index r = 0; r < probs.rows(); ++r) {
        int best = 0;
        for (int c = 1; c < 4; ++c)
          if (probs(r, c) > probs(r, best)) best = c;
        p[static_cast<std::size_t>(r)] = static_cast<Label>(best);
      }
      pred.push_back(std::move(p));
      gold.push_back(project_labels(ex.labels_pert, enc.word_spans));
    }
    report.labeling = labeling_prf(gold, pred);
  }

  std::cout << report_to_text(report);
  if (!a.out.empty()) {
    std::ofstream out(a.out, std::ios::binary);
    if (!out) raise(Errc::io, "cannot write " + a.out);
    out << report_to_json(report) << "\n";
  }
  return 0;
}

// ---------------- sweep-context ----------------

struct SweepArgs {
  std::string model, src_bpe, tgt_bpe, testset, out;
  std::string mode = "online-cut";
  std::string k_list = "0,1,2,4";
  BeamConfig beam;
};

int cmd_sweep_context(const SweepArgs& a, const GlobalFlags& g) {
  DecodeMode mode = decode_mode_from_name(a.mode);
  BpeModel src_bpe = load_bpe_prefix(a.src_bpe);
  BpeModel tgt_bpe = a.tgt_bpe.empty() ? src_bpe : load_bpe_prefix(a.tgt_bpe);
  auto model = load_checkpoint<float>(a.model);
  Translator translator{model.get(), &src_bpe, &tgt_bpe, a.beam};
  TestSet ts = load_testset(a.testset);

  std::vector<int> ks;
  std::size_t pos = 0;
  while (pos < a.k_list.size()) {
    auto comma = a.k_list.find(',', pos);
    if (comma == std::string::npos) comma = a.k_list.size();
    if (comma > pos) ks.push_back(std::stoi(a.k_list.substr(pos, comma - pos)));
    pos = comma + 1;
  }
  auto rows = context_sweep(translator, ts, mode, ks, g.jobs);
  write_sweep_csv(a.out, rows);
  for (const auto& r : rows)
    std::cout << r.context << "\tBLEU " << r.bleu << "\tprodrop " << r.prodrop_accuracy << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dialogue machine-translation robustness toolkit"};
  app.require_subcommand(1);
  app.set_config("--config", "", "config file (ini; keys = long option names)");

  GlobalFlags g;
  app.add_option("--seed", g.seed, "global random seed")->capture_default_str();
  app.add_option("--jobs", g.jobs, "worker threads")->capture_default_str();

  GenDataArgs gd;
  auto* c_gd = app.add_subcommand("gen-data", "sample sub-documents and generate perturbations");
  c_gd->add_option("--src", gd.src, "source text, one sentence per line")->required();
  c_gd->add_option("--tgt", gd.tgt, "target text, line-aligned")->required();
  c_gd->add_option("--boundaries", gd.boundaries, "document ranges: start<TAB>end per line")
      ->required();
  c_gd->add_option("--pronouns", gd.pronouns, "pronoun table")->required();
  c_gd->add_option("--punct", gd.punct, "punctuation table")->required();
  c_gd->add_option("--homophones", gd.homophones, "homophone table (tsv)")->required();
  c_gd->add_option("--n-max", gd.n_max, "max sentences per sub-document")->capture_default_str();
  c_gd->add_option("--p-drop", gd.p_drop, "pronoun/punctuation drop probability")
      ->capture_default_str();
  c_gd->add_option("--p-typo", gd.p_typo, "typo probability")->capture_default_str();
  c_gd->add_option("--p-homophone", gd.p_homophone, "homophone branch probability")
      ->capture_default_str();
  c_gd->add_flag("--overlap", gd.overlap, "sample overlapping windows");
  c_gd->add_option("--out", gd.out, "labeled examples jsonl")->required();
  c_gd->add_option("--subdocs-out", gd.subdocs_out, "also write raw sub-documents");
  c_gd->add_option("--text-out", gd.text_out, "also write <prefix>.src.txt/.tgt.txt for bpe");
  c_gd->add_option("--report", gd.report_out, "write the statistics report here (default stdout)");

  LearnBpeArgs lb;
  auto* c_lb = app.add_subcommand("learn-bpe", "learn a subword model");
  c_lb->add_option("--input", lb.inputs, "tokenized text file(s)")->required();
  c_lb->add_option("--max-merges", lb.max_merges, "merge budget")->capture_default_str();
  c_lb->add_option("--out", lb.out, "output prefix (.merges/.vocab)")->required();

  TrainArgs tr;
  auto* c_tr = app.add_subcommand("train", "train a translation model");
  c_tr->add_option("--data", tr.data, "labeled examples jsonl")->required();
  c_tr->add_option("--valid", tr.valid, "validation examples jsonl");
  c_tr->add_option("--src-bpe", tr.src_bpe, "source bpe prefix")->required();
  c_tr->add_option("--tgt-bpe", tr.tgt_bpe, "target bpe prefix (repair mode defaults to src)");
  c_tr->add_option("--mode", tr.mode, "base|repair|robust|mtl")->capture_default_str();
  c_tr->add_option("--max-updates", tr.max_updates, "updates to run")->capture_default_str();
  c_tr->add_option("--out", tr.out, "checkpoint path")->required();
  c_tr->add_option("--trace", tr.trace, "loss trace csv");
  c_tr->add_option("--checkpoint-every", tr.checkpoint_every, "save every N updates");
  c_tr->add_option("--enc-layers", tr.enc_layers)->capture_default_str();
  c_tr->add_option("--dec-layers", tr.dec_layers)->capture_default_str();
  c_tr->add_option("--d-model", tr.d_model)->capture_default_str();
  c_tr->add_option("--d-ffn", tr.d_ffn)->capture_default_str();
  c_tr->add_option("--heads", tr.heads)->capture_default_str();
  c_tr->add_option("--max-positions", tr.max_positions)->capture_default_str();
  c_tr->add_option("--lr", tr.opt.learning_rate)->capture_default_str();
  c_tr->add_option("--warmup", tr.opt.warmup_updates)->capture_default_str();
  c_tr->add_option("--batch-tokens", tr.opt.batch_tokens)->capture_default_str();
  c_tr->add_option("--dropout", tr.opt.dropout)->capture_default_str();
  c_tr->add_option("--attn-dropout", tr.attn_dropout)->capture_default_str();
  c_tr->add_option("--label-smoothing", tr.opt.label_smoothing)->capture_default_str();
  c_tr->add_option("--grad-clip", tr.opt.grad_clip_norm)->capture_default_str();
  c_tr->add_option("--lambda-horizon", tr.sched.horizon)->capture_default_str();
  c_tr->add_option("--lambda-floor", tr.sched.floor)->capture_default_str();

  TranslateArgs ta;
  auto* c_ta = app.add_subcommand("translate", "decode dialogues");
  c_ta->add_option("--model", ta.model, "checkpoint")->required();
  c_ta->add_option("--repair-model", ta.repair_model, "repair checkpoint (pipeline mode)");
  c_ta->add_option("--src-bpe", ta.src_bpe, "source bpe prefix")->required();
  c_ta->add_option("--tgt-bpe", ta.tgt_bpe, "target bpe prefix (defaults to src)");
  c_ta->add_option("--input", ta.input, "dialogues jsonl")->required();
  c_ta->add_option("--out", ta.out, "hypotheses jsonl")->required();
  c_ta->add_option("--mode", ta.mode, "offline|online-cut|online-fd|pipeline")
      ->capture_default_str();
  c_ta->add_option("--context-len", ta.context_len, "context sentences for online modes");
  c_ta->add_option("--beam", ta.beam.beam_size, "beam size")->capture_default_str();
  c_ta->add_option("--length-penalty", ta.beam.length_penalty_alpha)->capture_default_str();

  EvaluateArgs ev;
  auto* c_ev = app.add_subcommand("evaluate", "score hypotheses against an annotated test set");
  c_ev->add_option("--testset", ev.testset, "annotated test set jsonl")->required();
  c_ev->add_option("--hyps", ev.hyps, "translated dialogues jsonl")->required();
  c_ev->add_option("--out", ev.out, "machine-readable report json");
  c_ev->add_option("--model", ev.model, "checkpoint for labeling P/R/F1");
  c_ev->add_option("--src-bpe", ev.src_bpe, "source bpe prefix (labeling eval)");
  c_ev->add_option("--data", ev.data, "labeled examples jsonl (labeling eval)");

  SweepArgs sw;
  auto* c_sw = app.add_subcommand("sweep-context", "context-length sweep");
  c_sw->add_option("--model", sw.model, "checkpoint")->required();
  c_sw->add_option("--src-bpe", sw.src_bpe, "source bpe prefix")->required();
  c_sw->add_option("--tgt-bpe", sw.tgt_bpe, "target bpe prefix (defaults to src)");
  c_sw->add_option("--testset", sw.testset, "annotated test set jsonl")->required();
  c_sw->add_option("--mode", sw.mode, "online-cut|online-fd")->capture_default_str();
  c_sw->add_option("--k", sw.k_list, "comma-separated context lengths")->capture_default_str();
  c_sw->add_option("--beam", sw.beam.beam_size)->capture_default_str();
  c_sw->add_option("--out", sw.out, "sweep csv")->required();

  try {
    app.parse(argc, argv);
    CLI::App* cmd = app.get_subcommands().front();
    log_resolved(cmd);
    if (cmd == c_gd) return cmd_gen_data(gd, g);
    if (cmd == c_lb) return cmd_learn_bpe(lb);
    if (cmd == c_tr) return cmd_train(tr, g);
    if (cmd == c_ta) return cmd_translate(ta, g);
    if (cmd == c_ev) return cmd_evaluate(ev);
    if (cmd == c_sw) return cmd_sweep_context(sw, g);
    return 1;
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help and friends
    std::cerr << "error: E_USAGE: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: E_INTERNAL: " << e.what() << "\n";
    return 1;
  }
}
