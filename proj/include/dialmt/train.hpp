#pragma once

#include <functional>
#include <string>
#include <vector>

#include "dialmt/bpe.hpp"
#include "dialmt/perturb.hpp"
#include "dialmt/transformer.hpp"

namespace dialmt {

// Multi-task weight schedule: lambda = max(1 - update_num/horizon, floor).
struct Schedule {
  long horizon = 100000;
  double floor = 0.2;
  long update_num = 0;
};

double lambda_at(long update_num, const Schedule& schedule);

struct OptimizerConfig {
  double beta1 = 0.9;
  double beta2 = 0.98;
  double learning_rate = 5e-4;
  double grad_clip_norm = 5.0;
  double label_smoothing = 0.1;
  double dropout = 0.3;
  long batch_tokens = 4000;  // src+tgt tokens per update
  long warmup_updates = 4000;
  void validate() const;
};

enum class TrainingMode { BASE, REPAIR, ROBUST, MTL };
const char* training_mode_name(TrainingMode m);
TrainingMode training_mode_from_name(const std::string& s);

// One word-level training instance drawn from a labeled example.
struct StreamItem {
  const LabeledExample* ex = nullptr;
  bool perturbed_src = false;  // x_d' instead of x_d
  bool repair = false;         // target is the clean source (repair model)
  bool with_labels = false;

  const Tokens& src() const { return perturbed_src ? ex->src_pert : ex->src; }
  const Tokens& tgt() const { return repair ? ex->src : ex->tgt; }
  const std::vector<Label>& labels() const {
    return perturbed_src ? ex->labels_pert : ex->labels_clean;
  }
};

// BASE: (x_d -> y_d). ROBUST: both (x_d -> y_d) and (x_d' -> y_d).
// MTL: the ROBUST stream with label sequences attached.
// REPAIR: (x_d' -> x_d) for the repair model itself.
std::vector<StreamItem> build_training_stream(TrainingMode mode,
                                              const std::vector<LabeledExample>& examples);

struct TrainItem {
  std::vector<int> src, tgt;
  std::vector<Label> labels;
  bool has_labels = false;
  long cost() const { return static_cast<long>(src.size() + tgt.size()); }
};

// Subword-encodes a stream; word labels are projected onto subwords.
// For REPAIR streams pass the source-side model as tgt_bpe.
std::vector<TrainItem> encode_stream(const std::vector<StreamItem>& stream,
                                     const BpeModel& src_bpe, const BpeModel& tgt_bpe);

struct TraceRow {
  long update = 0;  // 0-based update_num
  double lambda = 0, l_mt = 0, l_sl = 0, l_total = 0;
};

void write_trace_csv(const std::string& path, const std::vector<TraceRow>& rows);

struct TrainHooks {
  // called after every completed update
  std::function<void(const TraceRow&)> on_update;
};

struct TrainResult {
  std::vector<TraceRow> trace;
  std::vector<double> post_clip_norms;  // global gradient norm after clipping
};

// Adam + inverse-square-root LR decay after warmup; global-norm gradient
// clipping; token-count batching. Deterministic for a fixed seed.
// Non-MTL modes run with lambda = 0 and no labeling-head gradients.
TrainResult run_training(TransformerModel<float>& model, const std::vector<TrainItem>& items,
                         const OptimizerConfig& opt, const Schedule& schedule, TrainingMode mode,
                         long max_updates, std::uint64_t seed,
                         const std::string& diag_dump_path = "", const TrainHooks& hooks = {});

// Mean translation NLL over up to max_items items (eval mode).
double evaluate_nll(TransformerModel<float>& model, const std::vector<TrainItem>& items,
                    double label_smoothing, std::size_t max_items = 0);

}  // namespace dialmt
