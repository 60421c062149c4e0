#pragma once

#include <Eigen/Core>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <utility>
#include <vector>

#include "dialmt/errors.hpp"
#include "dialmt/rng.hpp"

namespace dialmt {

template <typename S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
template <typename S>
using RowVec = Eigen::Matrix<S, 1, Eigen::Dynamic>;

// (start, length) row ranges of the per-example segments inside a stacked
// activation matrix.
using Segments = std::vector<std::pair<int, int>>;

// Reverse-mode tape over Eigen matrices. Nodes are created in forward order;
// backward() walks them in reverse. Parameter leaves alias external storage
// so gradients accumulate straight into the model.
template <typename S>
class Graph {
 public:
  using Id = int;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  bool train_mode = false;
  Rng* rng = nullptr;  // dropout mask source (train mode only)

  Id leaf(Mat<S> v) {
    nodes_.push_back(Node{});
    nodes_.back().val = std::move(v);
    return last();
  }

  Id param(const Mat<S>* v, Mat<S>* g) {
    nodes_.push_back(Node{});
    nodes_.back().ext_val = v;
    nodes_.back().ext_grad = g;
    return last();
  }

  const Mat<S>& val(Id id) const { return nodes_[static_cast<std::size_t>(id)].value(); }

  Mat<S>& grad(Id id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    Mat<S>& g = n.grad_ref();
    if (g.size() == 0) g = Mat<S>::Zero(n.value().rows(), n.value().cols());
    return g;
  }

  bool has_grad(Id id) {
    return nodes_[static_cast<std::size_t>(id)].grad_ref().size() != 0;
  }

  // ---- ops ----

  Id matmul(Id a, Id b) {
    Id out = leaf(val(a) * val(b));
    set_back(out, [this, a, b, out] {
      const Mat<S>& g = grad(out);
      grad(a).noalias() += g * val(b).transpose();
      grad(b).noalias() += val(a).transpose() * g;
    });
    return out;
  }

  // X·W + broadcast row bias
  Id linear(Id x, Id w, Id b) {
    Mat<S> v = val(x) * val(w);
    v.rowwise() += RowVec<S>(val(b).row(0));
    Id out = leaf(std::move(v));
    set_back(out, [this, x, w, b, out] {
      const Mat<S>& g = grad(out);
      grad(x).noalias() += g * val(w).transpose();
      grad(w).noalias() += val(x).transpose() * g;
      grad(b).row(0) += g.colwise().sum();
    });
    return out;
  }

  Id add(Id a, Id b) {
    Id out = leaf(val(a) + val(b));
    set_back(out, [this, a, b, out] {
      const Mat<S>& g = grad(out);
      grad(a) += g;
      grad(b) += g;
    });
    return out;
  }

  Id add_scaled(Id a, Id b, S s) {
    Id out = leaf(val(a) + s * val(b));
    set_back(out, [this, a, b, s, out] {
      const Mat<S>& g = grad(out);
      grad(a) += g;
      grad(b) += s * g;
    });
    return out;
  }

  Id relu(Id a) {
    Id out = leaf(val(a).cwiseMax(S(0)));
    set_back(out, [this, a, out] {
      grad(a).array() += grad(out).array() * (val(a).array() > S(0)).template cast<S>();
    });
    return out;
  }

  Id dropout(Id a, double rate) {
    if (!train_mode || rate <= 0.0) return a;
    if (!rng) raise(Errc::config, "dropout requires an rng in train mode");
    auto mask = std::make_shared<Mat<S>>(val(a).rows(), val(a).cols());
    const S keep_scale = S(1.0 / (1.0 - rate));
    for (Eigen::Index j = 0; j < mask->cols(); ++j)
      for (Eigen::Index i = 0; i < mask->rows(); ++i)
        (*mask)(i, j) = rng->bernoulli(rate) ? S(0) : keep_scale;
    Id out = leaf(val(a).cwiseProduct(*mask));
    set_back(out, [this, a, out, mask] {
      grad(a) += grad(out).cwiseProduct(*mask);
    });
    return out;
  }

  // rowwise layer norm with learned gain/bias (1×d parameters)
  Id layernorm(Id x, Id gain, Id bias, S eps = S(1e-5)) {
    const Mat<S>& xv = val(x);
    auto xhat = std::make_shared<Mat<S>>(xv.rows(), xv.cols());
    auto inv_std = std::make_shared<Mat<S>>(xv.rows(), 1);
    const S d = static_cast<S>(xv.cols());
    for (Eigen::Index i = 0; i < xv.rows(); ++i) {
      S mu = xv.row(i).mean();
      RowVec<S> c = xv.row(i).array() - mu;
      S var = c.squaredNorm() / d;
      S inv = S(1) / std::sqrt(var + eps);
      (*inv_std)(i, 0) = inv;
      xhat->row(i) = c * inv;
    }
    Mat<S> v = *xhat;
    v.array().rowwise() *= val(gain).row(0).array();
    v.rowwise() += RowVec<S>(val(bias).row(0));
    Id out = leaf(std::move(v));
    set_back(out, [this, x, gain, bias, out, xhat, inv_std] {
      const Mat<S>& g = grad(out);
      grad(gain).row(0) += (g.array() * xhat->array()).colwise().sum().matrix();
      grad(bias).row(0) += g.colwise().sum();
      Mat<S>& gx = grad(x);
      for (Eigen::Index i = 0; i < g.rows(); ++i) {
        RowVec<S> dxhat = (g.row(i).array() * val(gain).row(0).array()).matrix();
        S m1 = dxhat.mean();
        S m2 = (dxhat.array() * xhat->row(i).array()).mean();
        gx.row(i).array() +=
            ((dxhat.array() - m1 - xhat->row(i).array() * m2) * (*inv_std)(i, 0));
      }
    });
    return out;
  }

  // token embedding + sinusoidal position encoding, scaled by sqrt(d)
  Id embedding(Id table, std::vector<int> ids, std::vector<int> positions, const Mat<S>* posenc,
               S scale) {
    const Mat<S>& tab = val(table);
    Mat<S> v(static_cast<Eigen::Index>(ids.size()), tab.cols());
    for (std::size_t r = 0; r < ids.size(); ++r) {
      v.row(static_cast<Eigen::Index>(r)) =
          tab.row(ids[r]) * scale + posenc->row(positions[r]);
    }
    Id out = leaf(std::move(v));
    auto ids_p = std::make_shared<std::vector<int>>(std::move(ids));
    set_back(out, [this, table, out, ids_p, scale] {
      const Mat<S>& g = grad(out);
      Mat<S>& gt = grad(table);
      for (std::size_t r = 0; r < ids_p->size(); ++r)
        gt.row((*ids_p)[r]) += g.row(static_cast<Eigen::Index>(r)) * scale;
    });
    return out;
  }

  // Fused multi-head attention over per-example segments. q/k/v are stacked
  // projected activations; seg_q and seg_kv pair up per example. kv_valid,
  // when given, marks stacked kv rows that may be attended to.
  Id mha(Id q, Id k, Id v, const Segments& seg_q, const Segments& seg_kv, int heads, bool causal,
         double attn_dropout, const std::vector<std::uint8_t>* kv_valid = nullptr) {
    const Mat<S>& qv = val(q);
    const Mat<S>& kv = val(k);
    const Mat<S>& vv = val(v);
    const int d = static_cast<int>(qv.cols());
    if (d % heads != 0) raise(Errc::config, "d_model not divisible by heads");
    const int dh = d / heads;
    const S inv_sqrt = S(1) / std::sqrt(static_cast<S>(dh));
    const bool drop = train_mode && attn_dropout > 0.0;
    if (drop && !rng) raise(Errc::config, "attention dropout requires an rng");

    auto probs = std::make_shared<std::vector<Mat<S>>>();
    auto dmask = std::make_shared<std::vector<Mat<S>>>();
    probs->reserve(seg_q.size() * static_cast<std::size_t>(heads));

    Mat<S> out_v = Mat<S>::Zero(qv.rows(), d);
    for (std::size_t s = 0; s < seg_q.size(); ++s) {
      const auto [qs, ql] = seg_q[s];
      const auto [ks, kl] = seg_kv[s];
      if (causal && ql != kl) raise(Errc::input, "causal attention requires square segments");
      for (int h = 0; h < heads; ++h) {
        Mat<S> scores = qv.block(qs, h * dh, ql, dh) * kv.block(ks, h * dh, kl, dh).transpose();
        scores *= inv_sqrt;
        Mat<S> p(ql, kl);
        for (int i = 0; i < ql; ++i) {
          int limit = causal ? i + 1 : kl;
          S mx = std::numeric_limits<S>::lowest();
          for (int j = 0; j < limit; ++j)
            if (!kv_valid || (*kv_valid)[static_cast<std::size_t>(ks + j)])
              mx = std::max(mx, scores(i, j));
          S denom = S(0);
          for (int j = 0; j < kl; ++j) {
            bool ok = j < limit && (!kv_valid || (*kv_valid)[static_cast<std::size_t>(ks + j)]);
            S e = ok ? std::exp(scores(i, j) - mx) : S(0);
            p(i, j) = e;
            denom += e;
          }
          if (denom > S(0)) p.row(i) /= denom;
        }
        Mat<S> pd;
        if (drop) {
          Mat<S> m(ql, kl);
          const S keep_scale = S(1.0 / (1.0 - attn_dropout));
          for (int j = 0; j < kl; ++j)
            for (int i = 0; i < ql; ++i) m(i, j) = rng->bernoulli(attn_dropout) ? S(0) : keep_scale;
          pd = p.cwiseProduct(m);
          dmask->push_back(std::move(m));
        }
        out_v.block(qs, h * dh, ql, dh).noalias() = (drop ? pd : p) * vv.block(ks, h * dh, kl, dh);
        probs->push_back(std::move(p));
      }
    }

    Id out = leaf(std::move(out_v));
    auto sq = std::make_shared<Segments>(seg_q);
    auto skv = std::make_shared<Segments>(seg_kv);
    set_back(out, [this, q, k, v, out, sq, skv, heads, dh, inv_sqrt, probs, dmask, drop] {
      const Mat<S>& g = grad(out);
      const Mat<S>& qv = val(q);
      const Mat<S>& kv = val(k);
      const Mat<S>& vv = val(v);
      Mat<S>& gq = grad(q);
      Mat<S>& gk = grad(k);
      Mat<S>& gv = grad(v);
      std::size_t idx = 0;
      for (std::size_t s = 0; s < sq->size(); ++s) {
        const auto [qs, ql] = (*sq)[s];
        const auto [ks, kl] = (*skv)[s];
        for (int h = 0; h < heads; ++h, ++idx) {
          const Mat<S>& p = (*probs)[idx];
          Mat<S> pd = drop ? Mat<S>(p.cwiseProduct((*dmask)[idx])) : p;
          Mat<S> g_o = g.block(qs, h * dh, ql, dh);
          Mat<S> d_pd = g_o * vv.block(ks, h * dh, kl, dh).transpose();
          gv.block(ks, h * dh, kl, dh).noalias() += pd.transpose() * g_o;
          Mat<S> d_p = drop ? Mat<S>(d_pd.cwiseProduct((*dmask)[idx])) : d_pd;
          Mat<S> row_dot = (d_p.cwiseProduct(p)).rowwise().sum();
          Mat<S> d_s = p.cwiseProduct(d_p - row_dot.replicate(1, kl));
          gq.block(qs, h * dh, ql, dh).noalias() += d_s * kv.block(ks, h * dh, kl, dh) * inv_sqrt;
          gk.block(ks, h * dh, kl, dh).noalias() +=
              d_s.transpose() * qv.block(qs, h * dh, ql, dh) * inv_sqrt;
        }
      }
    });
    return out;
  }

  // Weighted smoothed cross entropy; returns a 1×1 node holding
  // sum_r w_r * ce_r. Targets index columns of the logits matrix.
  Id cross_entropy(Id logits, std::vector<int> targets, std::vector<S> row_weights, S smoothing) {
    const Mat<S>& z = val(logits);
    if (static_cast<Eigen::Index>(targets.size()) != z.rows())
      raise(Errc::input, "cross_entropy target count does not match logits rows");
    const S vsz = static_cast<S>(z.cols());
    auto lse = std::make_shared<Mat<S>>(z.rows(), 1);
    S total = S(0);
    for (Eigen::Index r = 0; r < z.rows(); ++r) {
      S mx = z.row(r).maxCoeff();
      S sum = (z.row(r).array() - mx).exp().sum();
      S l = mx + std::log(sum);
      (*lse)(r, 0) = l;
      S ce = l - (S(1) - smoothing) * z(r, targets[static_cast<std::size_t>(r)]) -
             (smoothing / vsz) * z.row(r).sum();
      total += row_weights[static_cast<std::size_t>(r)] * ce;
    }
    Mat<S> v(1, 1);
    v(0, 0) = total;
    Id out = leaf(std::move(v));
    auto tg = std::make_shared<std::vector<int>>(std::move(targets));
    auto wt = std::make_shared<std::vector<S>>(std::move(row_weights));
    set_back(out, [this, logits, out, tg, wt, lse, smoothing] {
      const S g = grad(out)(0, 0);
      const Mat<S>& z = val(logits);
      Mat<S>& gz = grad(logits);
      const S vsz = static_cast<S>(z.cols());
      for (Eigen::Index r = 0; r < z.rows(); ++r) {
        const S w = (*wt)[static_cast<std::size_t>(r)] * g;
        gz.row(r).array() += w * ((z.row(r).array() - (*lse)(r, 0)).exp() - smoothing / vsz);
        gz(r, (*tg)[static_cast<std::size_t>(r)]) -= w * (S(1) - smoothing);
      }
    });
    return out;
  }

  void backward(Id loss) {
    grad(loss).setConstant(S(1));
    for (Id id = last(); id >= 0; --id) {
      Node& n = nodes_[static_cast<std::size_t>(id)];
      if (!n.back) continue;
      if (n.grad_ref().size() == 0) continue;  // unreached
      n.back();
    }
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Mat<S> val;
    Mat<S> grad;
    const Mat<S>* ext_val = nullptr;
    Mat<S>* ext_grad = nullptr;
    std::function<void()> back;
    const Mat<S>& value() const { return ext_val ? *ext_val : val; }
    Mat<S>& grad_ref() { return ext_grad ? *ext_grad : grad; }
  };

  Id last() const { return static_cast<Id>(nodes_.size()) - 1; }
  void set_back(Id id, std::function<void()> fn) {
    nodes_[static_cast<std::size_t>(id)].back = std::move(fn);
  }

  std::vector<Node> nodes_;
};

}  // namespace dialmt
