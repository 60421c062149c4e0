#include "dialmt/transformer.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <unordered_map>

#include <json.hpp>

#include "dialmt/bpe.hpp"
#include "dialmt/errors.hpp"

namespace dialmt {

void ModelConfig::validate() const {
  if (enc_layers < 1 || dec_layers < 1 || d_model < 1 || d_ffn < 1 || heads < 1)
    raise(Errc::config, "model dimensions must be >= 1");
  if (d_model % heads != 0) raise(Errc::config, "d_model must be divisible by heads");
  if (label_classes != 4) raise(Errc::config, "label_classes must be 4");
  if (src_vocab < 1 || tgt_vocab < 1) raise(Errc::config, "vocabulary sizes must be set");
  if (max_positions < 2) raise(Errc::config, "max_positions too small");
  if (dropout < 0 || dropout >= 1 || attn_dropout < 0 || attn_dropout >= 1)
    raise(Errc::config, "dropout rates must be in [0,1)");
}

namespace {

template <typename S>
Mat<S> sinusoidal_positions(int max_positions, int d) {
  Mat<S> pe(max_positions, d);
  for (int pos = 0; pos < max_positions; ++pos)
    for (int i = 0; i < d; ++i) {
      double angle = pos / std::pow(10000.0, double(2 * (i / 2)) / d);
      pe(pos, i) = static_cast<S>((i % 2 == 0) ? std::sin(angle) : std::cos(angle));
    }
  return pe;
}

template <typename S>
void xavier(Mat<S>& m, int rows, int cols, Rng& rng) {
  m.resize(rows, cols);
  double limit = std::sqrt(6.0 / (rows + cols));
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      m(i, j) = static_cast<S>((rng.next_double() * 2.0 - 1.0) * limit);
}

template <typename S>
void gaussian_embed(Mat<S>& m, int rows, int cols, Rng& rng) {
  m.resize(rows, cols);
  double scale = 1.0 / std::sqrt(double(cols));
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      m(i, j) = static_cast<S>(rng.next_gaussian() * scale);
}

template <typename S>
void zeros(Mat<S>& m, int rows, int cols) {
  m = Mat<S>::Zero(rows, cols);
}

template <typename S>
void ones(Mat<S>& m, int rows, int cols) {
  m = Mat<S>::Ones(rows, cols);
}

}  // namespace

template <typename S>
TransformerModel<S>::TransformerModel(const ModelConfig& config, std::uint64_t seed) : cfg(config) {
  cfg.validate();
  init_params(seed);
  register_params();
  posenc = sinusoidal_positions<S>(cfg.max_positions, cfg.d_model);
}

template <typename S>
void TransformerModel<S>::init_params(std::uint64_t seed) {
  Rng rng(derive_seed(seed, 0x7a11));
  const int d = cfg.d_model;
  gaussian_embed(src_emb, cfg.src_vocab, d, rng);
  gaussian_embed(tgt_emb, cfg.tgt_vocab, d, rng);

  auto init_attn = [&](AttnParams& a) {
    xavier(a.wq, d, d, rng);
    zeros(a.bq, 1, d);
    xavier(a.wk, d, d, rng);
    zeros(a.bk, 1, d);
    xavier(a.wv, d, d, rng);
    zeros(a.bv, 1, d);
    xavier(a.wo, d, d, rng);
    zeros(a.bo, 1, d);
  };
  auto init_layer = [&](LayerParams& l, bool decoder) {
    ones(l.ln1_g, 1, d);
    zeros(l.ln1_b, 1, d);
    init_attn(l.self_attn);
    ones(l.ln2_g, 1, d);
    zeros(l.ln2_b, 1, d);
    if (decoder) {
      init_attn(l.cross_attn);
      ones(l.ln3_g, 1, d);
      zeros(l.ln3_b, 1, d);
    }
    xavier(l.w1, d, cfg.d_ffn, rng);
    zeros(l.b1, 1, cfg.d_ffn);
    xavier(l.w2, cfg.d_ffn, d, rng);
    zeros(l.b2, 1, d);
  };

  enc.resize(static_cast<std::size_t>(cfg.enc_layers));
  for (auto& l : enc) init_layer(l, false);
  dec.resize(static_cast<std::size_t>(cfg.dec_layers));
  for (auto& l : dec) init_layer(l, true);

  ones(enc_ln_g, 1, d);
  zeros(enc_ln_b, 1, d);
  ones(dec_ln_g, 1, d);
  zeros(dec_ln_b, 1, d);
  xavier(out_w, d, cfg.tgt_vocab, rng);
  zeros(out_b, 1, cfg.tgt_vocab);
  xavier(lab_w, d, cfg.label_classes, rng);
  zeros(lab_b, 1, cfg.label_classes);
}

template <typename S>
void TransformerModel<S>::register_params() {
  params_.clear();
  auto reg = [&](const std::string& name, Mat<S>& m) {
    params_.push_back(ParamRef{name, &m, Mat<S>::Zero(m.rows(), m.cols())});
  };
  reg("src_emb", src_emb);
  reg("tgt_emb", tgt_emb);
  auto reg_attn = [&](const std::string& p, AttnParams& a) {
    reg(p + ".wq", a.wq);
    reg(p + ".bq", a.bq);
    reg(p + ".wk", a.wk);
    reg(p + ".bk", a.bk);
    reg(p + ".wv", a.wv);
    reg(p + ".bv", a.bv);
    reg(p + ".wo", a.wo);
    reg(p + ".bo", a.bo);
  };
  for (std::size_t i = 0; i < enc.size(); ++i) {
    std::string p = "enc." + std::to_string(i);
    reg(p + ".ln1.g", enc[i].ln1_g);
    reg(p + ".ln1.b", enc[i].ln1_b);
    reg_attn(p + ".self", enc[i].self_attn);
    reg(p + ".ln2.g", enc[i].ln2_g);
    reg(p + ".ln2.b", enc[i].ln2_b);
    reg(p + ".ffn.w1", enc[i].w1);
    reg(p + ".ffn.b1", enc[i].b1);
    reg(p + ".ffn.w2", enc[i].w2);
    reg(p + ".ffn.b2", enc[i].b2);
  }
  for (std::size_t i = 0; i < dec.size(); ++i) {
    std::string p = "dec." + std::to_string(i);
    reg(p + ".ln1.g", dec[i].ln1_g);
    reg(p + ".ln1.b", dec[i].ln1_b);
    reg_attn(p + ".self", dec[i].self_attn);
    reg(p + ".ln2.g", dec[i].ln2_g);
    reg(p + ".ln2.b", dec[i].ln2_b);
    reg_attn(p + ".cross", dec[i].cross_attn);
    reg(p + ".ln3.g", dec[i].ln3_g);
    reg(p + ".ln3.b", dec[i].ln3_b);
    reg(p + ".ffn.w1", dec[i].w1);
    reg(p + ".ffn.b1", dec[i].b1);
    reg(p + ".ffn.w2", dec[i].w2);
    reg(p + ".ffn.b2", dec[i].b2);
  }
  reg("enc.final_ln.g", enc_ln_g);
  reg("enc.final_ln.b", enc_ln_b);
  reg("dec.final_ln.g", dec_ln_g);
  reg("dec.final_ln.b", dec_ln_b);
  reg("out.w", out_w);
  reg("out.b", out_b);
  reg("lab.w", lab_w);
  reg("lab.b", lab_b);
}

template <typename S>
void TransformerModel<S>::zero_grads() {
  for (auto& p : params_) p.grad.setZero();
}

template <typename S>
long TransformerModel<S>::num_parameters() const {
  long n = 0;
  for (const auto& p : params_) n += static_cast<long>(p.value->size());
  return n;
}

// ---- graph builders ----

namespace {

template <typename S>
struct Builder {
  Graph<S>& g;
  const TransformerModel<S>& m;
  std::unordered_map<const Mat<S>*, Mat<S>*>* grads;  // null for eval graphs

  using Id = typename Graph<S>::Id;

  Id P(const Mat<S>& mat) {
    Mat<S>* gp = nullptr;
    if (grads) {
      auto it = grads->find(&mat);
      if (it == grads->end()) raise(Errc::config, "parameter missing from gradient map");
      gp = it->second;
    }
    return g.param(&mat, gp);
  }

  Id attention(Id x_q, Id kv_source, const typename TransformerModel<S>::AttnParams& a,
               const Segments& seg_q, const Segments& seg_kv, bool causal,
               const std::vector<std::uint8_t>* kv_valid) {
    Id q = g.linear(x_q, P(a.wq), P(a.bq));
    Id k = g.linear(kv_source, P(a.wk), P(a.bk));
    Id v = g.linear(kv_source, P(a.wv), P(a.bv));
    Id att = g.mha(q, k, v, seg_q, seg_kv, m.cfg.heads, causal, m.cfg.attn_dropout, kv_valid);
    Id o = g.linear(att, P(a.wo), P(a.bo));
    return g.dropout(o, m.cfg.dropout);
  }

  Id ffn(Id x, const typename TransformerModel<S>::LayerParams& l) {
    Id h = g.relu(g.linear(x, P(l.w1), P(l.b1)));
    return g.dropout(g.linear(h, P(l.w2), P(l.b2)), m.cfg.dropout);
  }

  Id encoder(const std::vector<int>& ids, const std::vector<int>& pos, const Segments& segs,
             const std::vector<std::uint8_t>* valid) {
    Id x = g.embedding(P(m.src_emb), ids, pos, &m.posenc,
                       static_cast<S>(std::sqrt(double(m.cfg.d_model))));
    x = g.dropout(x, m.cfg.dropout);
    for (const auto& l : m.enc) {
      Id a = g.layernorm(x, P(l.ln1_g), P(l.ln1_b));
      x = g.add(x, attention(a, a, l.self_attn, segs, segs, false, valid));
      Id b = g.layernorm(x, P(l.ln2_g), P(l.ln2_b));
      x = g.add(x, ffn(b, l));
    }
    return g.layernorm(x, P(m.enc_ln_g), P(m.enc_ln_b));
  }

  Id decoder(const std::vector<int>& ids, const std::vector<int>& pos, const Segments& tgt_segs,
             Id enc_out, const Segments& src_segs) {
    Id x = g.embedding(P(m.tgt_emb), ids, pos, &m.posenc,
                       static_cast<S>(std::sqrt(double(m.cfg.d_model))));
    x = g.dropout(x, m.cfg.dropout);
    for (const auto& l : m.dec) {
      Id a = g.layernorm(x, P(l.ln1_g), P(l.ln1_b));
      x = g.add(x, attention(a, a, l.self_attn, tgt_segs, tgt_segs, true, nullptr));
      Id b = g.layernorm(x, P(l.ln2_g), P(l.ln2_b));
      x = g.add(x, attention(b, enc_out, l.cross_attn, tgt_segs, src_segs, false, nullptr));
      Id c = g.layernorm(x, P(l.ln3_g), P(l.ln3_b));
      x = g.add(x, ffn(c, l));
    }
    x = g.layernorm(x, P(m.dec_ln_g), P(m.dec_ln_b));
    return g.linear(x, P(m.out_w), P(m.out_b));  // logits
  }
};

}  // namespace

template <typename S>
BatchGraph<S> build_batch(TransformerModel<S>& model, const std::vector<BatchItemView>& items,
                          const ForwardOptions& opts) {
  if (items.empty()) raise(Errc::input, "empty batch");

  BatchGraph<S> out;
  out.g = std::make_unique<Graph<S>>();
  out.g->train_mode = opts.train;
  Rng rng(derive_seed(opts.dropout_seed, 0xd70));
  if (opts.train) out.g->rng = &rng;

  // flatten source and decoder-input streams
  std::vector<int> src_ids, src_pos, dec_ids, dec_pos, mt_targets;
  std::vector<Label> sl_targets;
  for (const auto& it : items) {
    if (!it.src || it.src->empty()) raise(Errc::input, "empty source sequence");
    if (!it.tgt || it.tgt->empty()) raise(Errc::input, "empty target sequence");
    if (static_cast<int>(it.src->size()) > model.cfg.max_positions ||
        static_cast<int>(it.tgt->size()) + 1 > model.cfg.max_positions)
      raise(Errc::trunc, "sequence exceeds max_positions");
    for (int id : *it.src)
      if (id < 0 || id >= model.cfg.src_vocab) raise(Errc::input, "source id out of vocabulary");
    for (int id : *it.tgt)
      if (id < 0 || id >= model.cfg.tgt_vocab) raise(Errc::input, "target id out of vocabulary");

    out.src_segments.emplace_back(static_cast<int>(src_ids.size()),
                                  static_cast<int>(it.src->size()));
    for (std::size_t p = 0; p < it.src->size(); ++p) {
      src_ids.push_back((*it.src)[p]);
      src_pos.push_back(static_cast<int>(p));
    }

    out.tgt_segments.emplace_back(static_cast<int>(dec_ids.size()),
                                  static_cast<int>(it.tgt->size()) + 1);
    dec_ids.push_back(kBosId);
    dec_pos.push_back(0);
    for (std::size_t p = 0; p < it.tgt->size(); ++p) {
      dec_ids.push_back((*it.tgt)[p]);
      dec_pos.push_back(static_cast<int>(p) + 1);
      mt_targets.push_back((*it.tgt)[p]);
    }
    mt_targets.push_back(kEosId);

    if (opts.labeling) {
      if (!it.labels) raise(Errc::config, "labeling loss requested but an item has no labels");
      if (it.labels->size() != it.src->size())
        raise(Errc::input, "label sequence length does not match source length");
      for (Label l : *it.labels) {
        if (l > 3) raise(Errc::input, "label outside {0..3}");
        sl_targets.push_back(l);
      }
    }
  }
  out.mt_tokens = static_cast<long>(mt_targets.size());
  out.sl_tokens = static_cast<long>(sl_targets.size());

  std::unordered_map<const Mat<S>*, Mat<S>*> grad_map;
  for (auto& p : model.params()) grad_map.emplace(p.value, &p.grad);
  Builder<S> b{*out.g, model, &grad_map};

  out.enc_out = b.encoder(src_ids, src_pos, out.src_segments, nullptr);
  typename Graph<S>::Id logits =
      b.decoder(dec_ids, dec_pos, out.tgt_segments, out.enc_out, out.src_segments);

  std::vector<S> mt_w(mt_targets.size(), S(1) / static_cast<S>(out.mt_tokens));
  out.loss_mt = out.g->cross_entropy(logits, mt_targets, std::move(mt_w),
                                     static_cast<S>(opts.label_smoothing));

  if (opts.labeling) {
    typename Graph<S>::Id lab_logits = out.g->linear(out.enc_out, b.P(model.lab_w), b.P(model.lab_b));
    std::vector<int> t(sl_targets.begin(), sl_targets.end());
    std::vector<S> w(t.size(), S(1) / static_cast<S>(out.sl_tokens));
    out.loss_sl = out.g->cross_entropy(lab_logits, std::move(t), std::move(w), S(0));
    out.loss_total = out.g->add_scaled(out.loss_mt, out.loss_sl, static_cast<S>(opts.lambda));
  } else {
    out.loss_total = out.loss_mt;
  }
  out.g->rng = nullptr;  // masks are drawn at build time; rng was a local
  return out;
}

// ---- eval operations ----

template <typename S>
EncoderOutput<S> encode(const TransformerModel<S>& model, const std::vector<int>& src,
                        int valid_len) {
  EncoderOutput<S> out;
  if (src.empty()) {
    out.H.resize(0, model.cfg.d_model);
    return out;
  }
  if (static_cast<int>(src.size()) > model.cfg.max_positions)
    raise(Errc::trunc, "source exceeds max_positions");
  for (int id : src)
    if (id < 0 || id >= model.cfg.src_vocab) raise(Errc::input, "source id out of vocabulary");

  out.valid.assign(src.size(), 1);
  if (valid_len >= 0)
    for (std::size_t i = static_cast<std::size_t>(valid_len); i < src.size(); ++i) out.valid[i] = 0;

  Graph<S> g;
  Builder<S> b{g, model, nullptr};
  std::vector<int> pos(src.size());
  for (std::size_t i = 0; i < src.size(); ++i) pos[i] = static_cast<int>(i);
  Segments segs{{0, static_cast<int>(src.size())}};
  auto h = b.encoder(src, pos, segs, valid_len >= 0 ? &out.valid : nullptr);
  out.H = g.val(h);
  return out;
}

template <typename S>
LabelingHead<S> labeling_head(const TransformerModel<S>& model) {
  LabelingHead<S> h;
  h.W = model.lab_w.transpose();
  h.b = model.lab_b;
  return h;
}

template <typename S>
Mat<S> label_probs(const LabelingHead<S>& head, const EncoderOutput<S>& H) {
  if (head.W.cols() != H.H.cols()) raise(Errc::input, "labeling head / H shape mismatch");
  Mat<S> logits = H.H * head.W.transpose();
  logits.rowwise() += RowVec<S>(head.b.row(0));
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    RowVec<S> row = logits.row(r);
    S mx = row.maxCoeff();
    RowVec<S> e = (row.array() - mx).exp();
    logits.row(r) = e / e.sum();
  }
  return logits;
}

template <typename S>
S translation_nll(const TransformerModel<S>& model, const std::vector<int>& src,
                  const std::vector<int>& tgt, double label_smoothing) {
  if (tgt.empty()) raise(Errc::input, "empty target");
  BatchItemView item{&src, &tgt, nullptr};
  ForwardOptions opts;
  opts.train = false;
  opts.label_smoothing = label_smoothing;
  // const_cast is safe: eval graphs never touch parameter gradients
  auto bg = build_batch(const_cast<TransformerModel<S>&>(model), {item}, opts);
  return bg.l_mt();
}

template <typename S>
S labeling_nll(const LabelingHead<S>& head, const EncoderOutput<S>& H,
               const std::vector<Label>& labels) {
  if (static_cast<Eigen::Index>(labels.size()) != H.H.rows())
    raise(Errc::input, "label count does not match encoder rows");
  Mat<S> logits = H.H * head.W.transpose();
  logits.rowwise() += RowVec<S>(head.b.row(0));
  S total = S(0);
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    Label l = labels[static_cast<std::size_t>(r)];
    if (l > 3) raise(Errc::input, "label outside {0..3}");
    RowVec<S> row = logits.row(r);
    S mx = row.maxCoeff();
    S lse = mx + std::log((row.array() - mx).exp().sum());
    total += lse - row(l);
  }
  return logits.rows() == 0 ? S(0) : total / static_cast<S>(logits.rows());
}

// ---- incremental decoding ----

namespace {

template <typename S>
RowVec<S> row_layernorm(const RowVec<S>& x, const Mat<S>& gain, const Mat<S>& bias) {
  const S d = static_cast<S>(x.cols());
  S mu = x.mean();
  RowVec<S> c = x.array() - mu;
  S var = c.squaredNorm() / d;
  S inv = S(1) / std::sqrt(var + S(1e-5));
  RowVec<S> out = (c * inv).array() * gain.row(0).array();
  out += bias.row(0);
  return out;
}

template <typename S>
RowVec<S> row_attention(const RowVec<S>& q_row, const Mat<S>& K, const Mat<S>& V, int heads) {
  const int d = static_cast<int>(q_row.cols());
  const int dh = d / heads;
  const S inv_sqrt = S(1) / std::sqrt(static_cast<S>(dh));
  RowVec<S> out(d);
  for (int h = 0; h < heads; ++h) {
    RowVec<S> scores = q_row.segment(h * dh, dh) * K.middleCols(h * dh, dh).transpose();
    scores *= inv_sqrt;
    S mx = scores.maxCoeff();
    RowVec<S> e = (scores.array() - mx).exp();
    e /= e.sum();
    out.segment(h * dh, dh) = e * V.middleCols(h * dh, dh);
  }
  return out;
}

}  // namespace

template <typename S>
EncodedSource<S> encode_for_decoding(const TransformerModel<S>& model,
                                     const std::vector<int>& src) {
  if (src.empty()) raise(Errc::input, "empty source");
  EncodedSource<S> out;
  out.H = encode(model, src).H;
  out.src_len = static_cast<int>(src.size());
  for (const auto& l : model.dec) {
    Mat<S> k = out.H * l.cross_attn.wk;
    k.rowwise() += RowVec<S>(l.cross_attn.bk.row(0));
    Mat<S> v = out.H * l.cross_attn.wv;
    v.rowwise() += RowVec<S>(l.cross_attn.bv.row(0));
    out.cross_k.push_back(std::move(k));
    out.cross_v.push_back(std::move(v));
  }
  return out;
}

template <typename S>
RowVec<S> decode_step(const TransformerModel<S>& model, const EncodedSource<S>& enc,
                      DecodeState<S>& state, int token) {
  const auto& cfg = model.cfg;
  if (token < 0 || token >= cfg.tgt_vocab) raise(Errc::input, "decoder token out of vocabulary");
  if (state.len + 1 > cfg.max_positions) raise(Errc::trunc, "decoder exceeds max_positions");
  if (state.self_k.empty()) {
    state.self_k.resize(model.dec.size());
    state.self_v.resize(model.dec.size());
  }

  const S scale = static_cast<S>(std::sqrt(double(cfg.d_model)));
  RowVec<S> x = model.tgt_emb.row(token) * scale + model.posenc.row(state.len);

  auto bias = [](const Mat<S>& b) { return RowVec<S>(b.row(0)); };
  for (std::size_t li = 0; li < model.dec.size(); ++li) {
    const auto& l = model.dec[li];
    RowVec<S> a = row_layernorm<S>(x, l.ln1_g, l.ln1_b);
    RowVec<S> q = a * l.self_attn.wq + bias(l.self_attn.bq);
    RowVec<S> k = a * l.self_attn.wk + bias(l.self_attn.bk);
    RowVec<S> v = a * l.self_attn.wv + bias(l.self_attn.bv);
    Mat<S>& K = state.self_k[li];
    Mat<S>& V = state.self_v[li];
    K.conservativeResize(state.len + 1, cfg.d_model);
    V.conservativeResize(state.len + 1, cfg.d_model);
    K.row(state.len) = k;
    V.row(state.len) = v;
    RowVec<S> att = row_attention<S>(q, K, V, cfg.heads);
    x += att * l.self_attn.wo + bias(l.self_attn.bo);

    RowVec<S> b = row_layernorm<S>(x, l.ln2_g, l.ln2_b);
    RowVec<S> q2 = b * l.cross_attn.wq + bias(l.cross_attn.bq);
    RowVec<S> att2 = row_attention<S>(q2, enc.cross_k[li], enc.cross_v[li], cfg.heads);
    x += att2 * l.cross_attn.wo + bias(l.cross_attn.bo);

    RowVec<S> c = row_layernorm<S>(x, l.ln3_g, l.ln3_b);
    RowVec<S> h = (c * l.w1 + bias(l.b1)).cwiseMax(S(0));
    x += h * l.w2 + bias(l.b2);
  }

  x = row_layernorm<S>(x, model.dec_ln_g, model.dec_ln_b);
  RowVec<S> logits = x * model.out_w + bias(model.out_b);
  S mx = logits.maxCoeff();
  S lse = mx + std::log((logits.array() - mx).exp().sum());
  state.len += 1;
  return (logits.array() - lse).matrix();
}

// ---- checkpointing ----

template <typename S>
void save_checkpoint(const TransformerModel<S>& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) raise(Errc::io, "cannot write " + path);
  nlohmann::json j;
  const auto& c = model.cfg;
  j["enc_layers"] = c.enc_layers;
  j["dec_layers"] = c.dec_layers;
  j["d_model"] = c.d_model;
  j["d_ffn"] = c.d_ffn;
  j["heads"] = c.heads;
  j["dropout"] = c.dropout;
  j["attn_dropout"] = c.attn_dropout;
  j["src_vocab"] = c.src_vocab;
  j["tgt_vocab"] = c.tgt_vocab;
  j["label_classes"] = c.label_classes;
  j["max_positions"] = c.max_positions;
  out << "DIALMT_CKPT v1\n" << j.dump() << "\n" << model.params().size() << "\n";
  std::vector<float> buf;
  for (const auto& p : model.params()) {
    const Mat<S>& m = *p.value;
    out << p.name << " " << m.rows() << " " << m.cols() << "\n";
    buf.resize(static_cast<std::size_t>(m.size()));
    std::size_t idx = 0;
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j2 = 0; j2 < m.cols(); ++j2) buf[idx++] = static_cast<float>(m(i, j2));
    out.write(reinterpret_cast<const char*>(buf.data()),
              static_cast<std::streamsize>(buf.size() * sizeof(float)));
  }
  if (!out) raise(Errc::io, "write failed: " + path);
}

template <typename S>
std::unique_ptr<TransformerModel<S>> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise(Errc::io, "cannot open " + path);
  std::string line;
  if (!std::getline(in, line) || line != "DIALMT_CKPT v1")
    raise(Errc::format, "not a dialmt checkpoint: " + path);
  if (!std::getline(in, line)) raise(Errc::format, "checkpoint missing config header");
  nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
  if (j.is_discarded()) raise(Errc::format, "checkpoint config is not valid json");
  ModelConfig c;
  c.enc_layers = j.at("enc_layers").get<int>();
  c.dec_layers = j.at("dec_layers").get<int>();
  c.d_model = j.at("d_model").get<int>();
  c.d_ffn = j.at("d_ffn").get<int>();
  c.heads = j.at("heads").get<int>();
  c.dropout = j.at("dropout").get<double>();
  c.attn_dropout = j.at("attn_dropout").get<double>();
  c.src_vocab = j.at("src_vocab").get<int>();
  c.tgt_vocab = j.at("tgt_vocab").get<int>();
  c.label_classes = j.at("label_classes").get<int>();
  c.max_positions = j.at("max_positions").get<int>();

  auto model = std::make_unique<TransformerModel<S>>(c, 0);
  std::size_t count = 0;
  if (!std::getline(in, line)) raise(Errc::format, "checkpoint missing tensor count");
  count = static_cast<std::size_t>(std::stoul(line));
  if (count != model->params().size())
    raise(Errc::format, "checkpoint tensor count does not match architecture");

  std::unordered_map<std::string, Mat<S>*> by_name;
  for (auto& p : model->params()) by_name[p.name] = p.value;
  std::vector<float> buf;
  for (std::size_t t = 0; t < count; ++t) {
    if (!std::getline(in, line)) raise(Errc::format, "checkpoint truncated");
    std::size_t s1 = line.find(' ');
    std::size_t s2 = line.find(' ', s1 + 1);
    if (s1 == std::string::npos || s2 == std::string::npos)
      raise(Errc::format, "bad tensor header: " + line);
    std::string name = line.substr(0, s1);
    long rows = std::stol(line.substr(s1 + 1, s2 - s1 - 1));
    long cols = std::stol(line.substr(s2 + 1));
    auto it = by_name.find(name);
    if (it == by_name.end()) raise(Errc::format, "unknown tensor in checkpoint: " + name);
    Mat<S>* m = it->second;
    if (m->rows() != rows || m->cols() != cols)
      raise(Errc::format, "tensor shape mismatch for " + name);
    buf.resize(static_cast<std::size_t>(rows * cols));
    in.read(reinterpret_cast<char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (!in) raise(Errc::format, "checkpoint truncated in tensor " + name);
    std::size_t idx = 0;
    for (long i = 0; i < rows; ++i)
      for (long j2 = 0; j2 < cols; ++j2) (*m)(i, j2) = static_cast<S>(buf[idx++]);
    by_name.erase(it);
  }
  if (!by_name.empty()) raise(Errc::format, "checkpoint missing tensors");
  return model;
}

// ---- explicit instantiations ----

template class TransformerModel<float>;
template class TransformerModel<double>;
template BatchGraph<float> build_batch(TransformerModel<float>&, const std::vector<BatchItemView>&,
                                       const ForwardOptions&);
template BatchGraph<double> build_batch(TransformerModel<double>&,
                                        const std::vector<BatchItemView>&, const ForwardOptions&);
template EncoderOutput<float> encode(const TransformerModel<float>&, const std::vector<int>&, int);
template EncoderOutput<double> encode(const TransformerModel<double>&, const std::vector<int>&,
                                      int);
template LabelingHead<float> labeling_head(const TransformerModel<float>&);
template LabelingHead<double> labeling_head(const TransformerModel<double>&);
template Mat<float> label_probs(const LabelingHead<float>&, const EncoderOutput<float>&);
template Mat<double> label_probs(const LabelingHead<double>&, const EncoderOutput<double>&);
template float translation_nll(const TransformerModel<float>&, const std::vector<int>&,
                               const std::vector<int>&, double);
template double translation_nll(const TransformerModel<double>&, const std::vector<int>&,
                                const std::vector<int>&, double);
template float labeling_nll(const LabelingHead<float>&, const EncoderOutput<float>&,
                            const std::vector<Label>&);
template double labeling_nll(const LabelingHead<double>&, const EncoderOutput<double>&,
                             const std::vector<Label>&);
template EncodedSource<float> encode_for_decoding(const TransformerModel<float>&,
                                                  const std::vector<int>&);
template EncodedSource<double> encode_for_decoding(const TransformerModel<double>&,
                                                   const std::vector<int>&);
template RowVec<float> decode_step(const TransformerModel<float>&, const EncodedSource<float>&,
                                   DecodeState<float>&, int);
template RowVec<double> decode_step(const TransformerModel<double>&, const EncodedSource<double>&,
                                    DecodeState<double>&, int);
template void save_checkpoint(const TransformerModel<float>&, const std::string&);
template void save_checkpoint(const TransformerModel<double>&, const std::string&);
template std::unique_ptr<TransformerModel<float>> load_checkpoint(const std::string&);
template std::unique_ptr<TransformerModel<double>> load_checkpoint(const std::string&);

}  // namespace dialmt
