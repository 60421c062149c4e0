#pragma once

#include <memory>
#include <string>
#include <vector>

#include "dialmt/graph.hpp"
#include "dialmt/perturb.hpp"

namespace dialmt {

struct ModelConfig {
  int enc_layers = 4;
  int dec_layers = 4;
  int d_model = 256;
  int d_ffn = 1024;
  int heads = 4;
  double dropout = 0.3;
  double attn_dropout = 0.1;
  int src_vocab = 0;
  int tgt_vocab = 0;
  int label_classes = 4;
  int max_positions = 512;
  void validate() const;
};

// Encoder-decoder transformer (pre-norm, sinusoidal positions, ReLU FFN)
// with a linear per-token labeling head on the final encoder layer.
template <typename S>
class TransformerModel {
 public:
  explicit TransformerModel(const ModelConfig& config, std::uint64_t seed);
  TransformerModel(const TransformerModel&) = delete;
  TransformerModel& operator=(const TransformerModel&) = delete;

  ModelConfig cfg;

  struct AttnParams {
    Mat<S> wq, bq, wk, bk, wv, bv, wo, bo;
  };
  struct LayerParams {
    Mat<S> ln1_g, ln1_b;
    AttnParams self_attn;
    Mat<S> ln2_g, ln2_b;
    AttnParams cross_attn;  // decoder layers only
    Mat<S> ln3_g, ln3_b;    // decoder layers only
    Mat<S> w1, b1, w2, b2;
  };

  Mat<S> src_emb, tgt_emb;  // vocab × d
  std::vector<LayerParams> enc, dec;
  Mat<S> enc_ln_g, enc_ln_b, dec_ln_g, dec_ln_b;
  Mat<S> out_w, out_b;  // d × tgt_vocab, 1 × tgt_vocab
  Mat<S> lab_w, lab_b;  // d × classes, 1 × classes
  Mat<S> posenc;        // constant, max_positions × d

  struct ParamRef {
    std::string name;
    Mat<S>* value;
    Mat<S> grad;
  };
  std::vector<ParamRef>& params() { return params_; }
  const std::vector<ParamRef>& params() const { return params_; }
  void zero_grads();
  long num_parameters() const;

 private:
  void init_params(std::uint64_t seed);
  void register_params();
  std::vector<ParamRef> params_;
};

// ---- batched training/scoring graph ----

struct BatchItemView {
  const std::vector<int>* src = nullptr;
  const std::vector<int>* tgt = nullptr;
  const std::vector<Label>* labels = nullptr;  // per src token; may be null
};

struct ForwardOptions {
  bool train = false;
  double lambda = 0.0;          // weight of the labeling loss inside loss_total
  double label_smoothing = 0.1; // translation loss only
  bool labeling = false;        // build the labeling head and loss
  std::uint64_t dropout_seed = 0;
};

template <typename S>
struct BatchGraph {
  std::unique_ptr<Graph<S>> g;
  typename Graph<S>::Id enc_out = -1;
  typename Graph<S>::Id loss_mt = -1, loss_sl = -1, loss_total = -1;
  Segments src_segments, tgt_segments;
  long mt_tokens = 0, sl_tokens = 0;
  S l_mt() const { return g->val(loss_mt)(0, 0); }
  S l_sl() const { return loss_sl >= 0 ? g->val(loss_sl)(0, 0) : S(0); }
  S l_total() const { return g->val(loss_total)(0, 0); }
};

// Builds forward graph + losses for a batch. Token-mean losses: loss_mt
// averages over all target tokens (incl. EOS) of the batch, loss_sl over all
// source tokens of label-carrying items.
template <typename S>
BatchGraph<S> build_batch(TransformerModel<S>& model, const std::vector<BatchItemView>& items,
                          const ForwardOptions& opts);

// ---- spec-level eval operations ----

template <typename S>
struct EncoderOutput {
  Mat<S> H;                          // one row per source token
  std::vector<std::uint8_t> valid;   // per-position validity flags
};

// Deterministic eval-mode encode. valid_len < 0 means all positions valid;
// otherwise positions >= valid_len are masked out of attention.
template <typename S>
EncoderOutput<S> encode(const TransformerModel<S>& model, const std::vector<int>& src,
                        int valid_len = -1);

template <typename S>
struct LabelingHead {
  Mat<S> W;  // classes × d, as in P(p_i=j|X) = softmax(W·h_i + b)[j]
  Mat<S> b;  // 1 × classes
};

template <typename S>
LabelingHead<S> labeling_head(const TransformerModel<S>& model);

// Per-token distributions over the 4 classes; each row sums to 1.
template <typename S>
Mat<S> label_probs(const LabelingHead<S>& head, const EncoderOutput<S>& H);

// Mean-per-token smoothed cross entropy of y given x (teacher forcing).
template <typename S>
S translation_nll(const TransformerModel<S>& model, const std::vector<int>& src,
                  const std::vector<int>& tgt, double label_smoothing);

// Mean per-token negative log probability of the gold labels.
template <typename S>
S labeling_nll(const LabelingHead<S>& head, const EncoderOutput<S>& H,
               const std::vector<Label>& labels);

template <typename S>
inline S combined_loss(S l_mt, S l_sl, S lambda) {
  return l_mt + lambda * l_sl;
}

// ---- incremental decoding ----

template <typename S>
struct EncodedSource {
  Mat<S> H;
  std::vector<Mat<S>> cross_k, cross_v;  // per decoder layer
  int src_len = 0;
};

template <typename S>
EncodedSource<S> encode_for_decoding(const TransformerModel<S>& model,
                                     const std::vector<int>& src);

template <typename S>
struct DecodeState {
  std::vector<Mat<S>> self_k, self_v;  // per decoder layer, one row per emitted position
  int len = 0;                         // number of consumed decoder inputs
};

// Feeds one decoder input token (BOS first) and returns log-probabilities of
// the next target token. Must match the training graph bit-for-bit in math.
template <typename S>
RowVec<S> decode_step(const TransformerModel<S>& model, const EncodedSource<S>& enc,
                      DecodeState<S>& state, int token);

// ---- checkpointing ----

// Versioned container: text header with the config, then named tensors as
// little-endian float32 (row-major). Manifest: docs/checkpoint_format.md.
template <typename S>
void save_checkpoint(const TransformerModel<S>& model, const std::string& path);

template <typename S>
std::unique_ptr<TransformerModel<S>> load_checkpoint(const std::string& path);

}  // namespace dialmt
