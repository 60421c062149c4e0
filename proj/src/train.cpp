#include "dialmt/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <json.hpp>

#include "dialmt/errors.hpp"
#include "dialmt/log.hpp"

namespace dialmt {

double lambda_at(long update_num, const Schedule& schedule) {
  if (update_num < 0) raise(Errc::input, "update_num must be >= 0");
  if (schedule.horizon <= 0) raise(Errc::config, "schedule horizon must be > 0");
  double v = 1.0 - static_cast<double>(update_num) / static_cast<double>(schedule.horizon);
  return std::max(v, schedule.floor);
}

void OptimizerConfig::validate() const {
  if (beta1 <= 0 || beta1 >= 1 || beta2 <= 0 || beta2 >= 1)
    raise(Errc::config, "adam betas must be in (0,1)");
  if (learning_rate <= 0 || grad_clip_norm <= 0 || batch_tokens <= 0 || warmup_updates < 1)
    raise(Errc::config, "optimizer rates and sizes must be positive");
  if (label_smoothing < 0 || label_smoothing >= 1)
    raise(Errc::config, "label smoothing must be in [0,1)");
  if (dropout < 0 || dropout >= 1) raise(Errc::config, "dropout must be in [0,1)");
}

const char* training_mode_name(TrainingMode m) {
  switch (m) {
    case TrainingMode::BASE: return "base";
    case TrainingMode::REPAIR: return "repair";
    case TrainingMode::ROBUST: return "robust";
    case TrainingMode::MTL: return "mtl";
  }
  return "?";
}

TrainingMode training_mode_from_name(const std::string& s) {
  if (s == "base") return TrainingMode::BASE;
  if (s == "repair") return TrainingMode::REPAIR;
  if (s == "robust") return TrainingMode::ROBUST;
  if (s == "mtl") return TrainingMode::MTL;
  raise(Errc::config, "unknown training mode: " + s);
}

std::vector<StreamItem> build_training_stream(TrainingMode mode,
                                              const std::vector<LabeledExample>& examples) {
  std::vector<StreamItem> out;
  for (const auto& ex : examples) {
    switch (mode) {
      case TrainingMode::BASE:
        out.push_back({&ex, false, false, false});
        break;
      case TrainingMode::REPAIR:
        out.push_back({&ex, true, true, false});
        break;
      case TrainingMode::ROBUST:
        out.push_back({&ex, false, false, false});
        out.push_back({&ex, true, false, false});
        break;
      case TrainingMode::MTL:
        out.push_back({&ex, false, false, true});
        out.push_back({&ex, true, false, true});
        break;
    }
  }
  return out;
}

std::vector<TrainItem> encode_stream(const std::vector<StreamItem>& stream,
                                     const BpeModel& src_bpe, const BpeModel& tgt_bpe) {
  std::vector<TrainItem> out;
  out.reserve(stream.size());
  for (const auto& s : stream) {
    TrainItem it;
    auto enc = apply_bpe(src_bpe, s.src());
    it.src = pieces_to_ids(src_bpe, enc.pieces);
    it.tgt = encode_words(tgt_bpe, s.tgt());
    if (s.with_labels) {
      it.labels = project_labels(s.labels(), enc.word_spans);
      it.has_labels = true;
    }
    out.push_back(std::move(it));
  }
  return out;
}

void write_trace_csv(const std::string& path, const std::vector<TraceRow>& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) raise(Errc::io, "cannot write " + path);
  out << "update,lambda,L_MT,L_SL,L_total\n";
  out << std::setprecision(9);
  for (const auto& r : rows)
    out << r.update << "," << r.lambda << "," << r.l_mt << "," << r.l_sl << "," << r.l_total
        << "\n";
}

namespace {

void dump_batch(const std::string& path, const std::vector<const TrainItem*>& batch, long update) {
  if (path.empty()) return;
  nlohmann::json j;
  j["update"] = update;
  j["items"] = nlohmann::json::array();
  for (const TrainItem* it : batch) {
    nlohmann::json e;
    e["src"] = it->src;
    e["tgt"] = it->tgt;
    if (it->has_labels) e["labels"] = it->labels;
    j["items"].push_back(std::move(e));
  }
  std::ofstream out(path, std::ios::binary);
  out << j.dump(2) << "\n";
}

}  // namespace

TrainResult run_training(TransformerModel<float>& model, const std::vector<TrainItem>& items,
                         const OptimizerConfig& opt, const Schedule& schedule, TrainingMode mode,
                         long max_updates, std::uint64_t seed, const std::string& diag_dump_path,
                         const TrainHooks& hooks) {
  opt.validate();
  if (items.empty()) raise(Errc::input, "no training items");
  long longest = 0;
  for (const auto& it : items) longest = std::max(longest, it.cost());
  if (opt.batch_tokens < longest)
    raise(Errc::config, "batch_tokens (" + std::to_string(opt.batch_tokens) +
                            ") smaller than the longest example (" + std::to_string(longest) + ")");

  const bool mtl = mode == TrainingMode::MTL;
  if (mtl)
    for (const auto& it : items)
      if (!it.has_labels) raise(Errc::config, "mtl mode requires labels on every item");
  if (!mtl)
    for (const auto& it : items)
      if (it.has_labels)
        raise(Errc::config, "labels supplied outside mtl mode");

  model.cfg.dropout = opt.dropout;

  // Adam state
  auto& params = model.params();
  std::vector<Mat<float>> adam_m(params.size()), adam_v(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    adam_m[i] = Mat<float>::Zero(params[i].value->rows(), params[i].value->cols());
    adam_v[i] = Mat<float>::Zero(params[i].value->rows(), params[i].value->cols());
  }

  TrainResult result;
  result.trace.reserve(static_cast<std::size_t>(max_updates));

  std::vector<std::size_t> order(items.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::size_t cursor = order.size();  // forces a shuffle on first use
  long epoch = -1;

  for (long update = 0; update < max_updates; ++update) {
    // assemble a batch by token budget
    std::vector<const TrainItem*> batch;
    long cost = 0;
    while (true) {
      if (cursor >= order.size()) {
        ++epoch;
        Rng shuffle_rng(derive_seed(seed, 0xeb0c + static_cast<std::uint64_t>(epoch)));
        shuffle_rng.shuffle(order);
        cursor = 0;
      }
      const TrainItem* it = &items[order[cursor]];
      if (!batch.empty() && cost + it->cost() > opt.batch_tokens) break;
      batch.push_back(it);
      cost += it->cost();
      ++cursor;
      if (cost >= opt.batch_tokens) break;
    }

    const double lambda = mtl ? lambda_at(update, schedule) : 0.0;

    std::vector<BatchItemView> views;
    views.reserve(batch.size());
    for (const TrainItem* it : batch)
      views.push_back({&it->src, &it->tgt, it->has_labels ? &it->labels : nullptr});

    ForwardOptions fopts;
    fopts.train = true;
    fopts.lambda = lambda;
    fopts.label_smoothing = opt.label_smoothing;
    fopts.labeling = mtl;
    fopts.dropout_seed = derive_seed(seed, 0xd000 + static_cast<std::uint64_t>(update));

    model.zero_grads();
    auto bg = build_batch(model, views, fopts);
    double l_mt = bg.l_mt(), l_sl = mtl ? bg.l_sl() : 0.0;
    double l_total = bg.l_total();
    if (!std::isfinite(l_total)) {
      dump_batch(diag_dump_path, batch, update);
      raise(Errc::train, "non-finite loss at update " + std::to_string(update) +
                             (diag_dump_path.empty() ? "" : "; batch dumped to " + diag_dump_path));
    }
    bg.g->backward(bg.loss_total);
    bg.g.reset();  // free activations before the optimizer step

    // global-norm clipping
    double norm_sq = 0;
    for (auto& p : params) norm_sq += static_cast<double>(p.grad.squaredNorm());
    double norm = std::sqrt(norm_sq);
    if (norm > opt.grad_clip_norm) {
      float s = static_cast<float>(opt.grad_clip_norm / norm);
      for (auto& p : params) p.grad *= s;
      norm_sq = 0;
      for (auto& p : params) norm_sq += static_cast<double>(p.grad.squaredNorm());
      norm = std::sqrt(norm_sq);
    }
    result.post_clip_norms.push_back(norm);

    // inverse-square-root schedule with linear warmup
    const double u = static_cast<double>(update + 1);
    const double w = static_cast<double>(opt.warmup_updates);
    const double lr = opt.learning_rate * std::min(u / w, std::sqrt(w / u));

    const float b1 = static_cast<float>(opt.beta1), b2 = static_cast<float>(opt.beta2);
    const float bc1 = 1.0f - std::pow(b1, static_cast<float>(u));
    const float bc2 = 1.0f - std::pow(b2, static_cast<float>(u));
    const float eps = 1e-8f;
    for (std::size_t i = 0; i < params.size(); ++i) {
      Mat<float>& g = params[i].grad;
      adam_m[i] = b1 * adam_m[i] + (1.0f - b1) * g;
      adam_v[i] = b2 * adam_v[i] + (1.0f - b2) * g.cwiseProduct(g);
      params[i].value->array() -= static_cast<float>(lr) * (adam_m[i].array() / bc1) /
                                  ((adam_v[i].array() / bc2).sqrt() + eps);
    }

    TraceRow row{update, lambda, l_mt, l_sl, l_total};
    result.trace.push_back(row);
    if (hooks.on_update) hooks.on_update(row);
    if (update % 100 == 0)
      LOG_INFO("update " << update << " lambda " << lambda << " L_MT " << l_mt << " L_SL " << l_sl);
  }
  return result;
}

double evaluate_nll(TransformerModel<float>& model, const std::vector<TrainItem>& items,
                    double label_smoothing, std::size_t max_items) {
  if (items.empty()) raise(Errc::input, "no items to evaluate");
  std::size_t n = max_items == 0 ? items.size() : std::min(max_items, items.size());
  // one token-weighted mean across the whole slice
  long total_tokens = 0;
  double total = 0;
  std::size_t i = 0;
  while (i < n) {
    std::vector<BatchItemView> views;
    long cost = 0;
    while (i < n && (views.empty() || cost < 4000)) {
      views.push_back({&items[i].src, &items[i].tgt, nullptr});
      cost += items[i].cost();
      ++i;
    }
    ForwardOptions fopts;
    fopts.train = false;
    fopts.label_smoothing = label_smoothing;
    auto bg = build_batch(model, views, fopts);
    total += static_cast<double>(bg.l_mt()) * static_cast<double>(bg.mt_tokens);
    total_tokens += bg.mt_tokens;
  }
  return total / static_cast<double>(total_tokens);
}

}  // namespace dialmt
