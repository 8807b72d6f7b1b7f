#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "unicon/errors.hpp"
#include "unicon/rng.hpp"
#include "unicon/tokenizer.hpp"

namespace unicon {

enum class NumericEncoding { ScaledEmbedding, PiecewiseLinear };

std::string to_string(NumericEncoding e);
NumericEncoding parse_numeric_encoding(const std::string& s);

struct EncoderConfig {
  int d_model = 64;
  int n_layers = 2;
  int n_heads = 2;
  int d_ff = 256;
  int max_seq_len = 100;  // event tokens; one extra slot holds CLS
  NumericEncoding numeric_encoding = NumericEncoding::ScaledEmbedding;
  bool use_timestamp = true;
  bool class_weighting = false;
  double dropout = 0.0;
  int ple_bins = 16;
  std::uint64_t seed = 1;

  void validate() const;
};

nlohmann::ordered_json encoder_config_json(const EncoderConfig& cfg);
EncoderConfig encoder_config_from_json(const nlohmann::json& j);

// The next-item path runs strictly causal attention with positional
// embeddings; the classifier path lets every token and the CLS slot see the
// whole sequence, with event order carried only by the timestamp feature.
enum class ForwardMode { NextItem, Classifier };

template <typename Scalar>
struct Tensor {
  std::string name;
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> value;
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> grad;
  bool frozen = false;
};

template <typename Scalar>
struct ForwardResult {
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> encodings;  // (L+1) x d, row 0 = CLS
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> next_logits;  // L x n_skus
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> class_logits;              // 2
};

template <typename Scalar>
class Model {
 public:
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using RowVec = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

  Model(EncoderConfig config, const Tokenizer& tok) : cfg_(std::move(config)) {
    cfg_.validate();
    if (!tok.fitted()) throw InvalidArgument("model: tokenizer must be fitted");
    n_skus_ = tok.sku_count();
    price_edges_ = tok.price_edges();
    ts_edges_ = tok.timestamp_edges();
    const int d = cfg_.d_model;

    for (const auto& f : Tokenizer::event_features())
      event_refs_.push_back(add_param("embed." + f, tok.vocab_size(f), d, d));
    cls_token_ = add_param("embed.cls_token", 1, d, d);
    for (const auto& f : Tokenizer::cls_features())
      cls_refs_.push_back(add_param("embed.cls." + f, tok.vocab_size(f), d, d));
    if (cfg_.numeric_encoding == NumericEncoding::ScaledEmbedding) {
      price_ref_ = add_param("embed.price", 1, d, d);
      if (cfg_.use_timestamp) ts_ref_ = add_param("embed.timestamp", 1, d, d);
    } else {
      price_ref_ = add_param("embed.price_bins", cfg_.ple_bins, d, d);
      if (cfg_.use_timestamp) ts_ref_ = add_param("embed.timestamp_bins", cfg_.ple_bins, d, d);
    }
    pos_ = add_param("embed.position", cfg_.max_seq_len + 1, d, d);

    for (int l = 0; l < cfg_.n_layers; ++l) {
      const std::string p = "layer" + std::to_string(l) + ".";
      LayerRefs r;
      r.ln1_g = add_param(p + "ln1.gain", 1, d, 0);
      r.ln1_b = add_param(p + "ln1.bias", 1, d, 0);
      r.wq = add_param(p + "attn.wq", d, d, d);
      r.bq = add_param(p + "attn.bq", 1, d, 0);
      r.wk = add_param(p + "attn.wk", d, d, d);
      r.bk = add_param(p + "attn.bk", 1, d, 0);
      r.wv = add_param(p + "attn.wv", d, d, d);
      r.bv = add_param(p + "attn.bv", 1, d, 0);
      r.wo = add_param(p + "attn.wo", d, d, d);
      r.bo = add_param(p + "attn.bo", 1, d, 0);
      r.ln2_g = add_param(p + "ln2.gain", 1, d, 0);
      r.ln2_b = add_param(p + "ln2.bias", 1, d, 0);
      r.w1 = add_param(p + "ff.w1", d, cfg_.d_ff, d);
      r.b1 = add_param(p + "ff.b1", 1, cfg_.d_ff, 0);
      r.w2 = add_param(p + "ff.w2", cfg_.d_ff, d, cfg_.d_ff);
      r.b2 = add_param(p + "ff.b2", 1, d, 0);
      layer_refs_.push_back(r);
      params_[static_cast<std::size_t>(r.ln1_g)].value.setOnes();
      params_[static_cast<std::size_t>(r.ln2_g)].value.setOnes();
    }
    final_g_ = add_param("final_ln.gain", 1, d, 0);
    final_b_ = add_param("final_ln.bias", 1, d, 0);
    params_[static_cast<std::size_t>(final_g_)].value.setOnes();
    next_w_ = add_param("head.next_item.w", d, n_skus_, d);
    next_b_ = add_param("head.next_item.b", 1, n_skus_, 0);
    cls_w_ = add_param("head.classifier.w", d, 2, d);
    cls_b_ = add_param("head.classifier.b", 1, 2, 0);
  }

  const EncoderConfig& config() const { return cfg_; }
  int n_skus() const { return n_skus_; }

  std::vector<Tensor<Scalar>>& parameters() { return params_; }
  const std::vector<Tensor<Scalar>>& parameters() const { return params_; }

  Tensor<Scalar>& param(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw InvalidArgument("model: no parameter named " + name);
    return params_[static_cast<std::size_t>(it->second)];
  }
  const Tensor<Scalar>& param(const std::string& name) const {
    return const_cast<Model*>(this)->param(name);
  }
  bool has_param(const std::string& name) const { return index_.count(name) > 0; }

  void zero_grads() {
    for (auto& t : params_) t.grad.setZero();
  }

  Tensor<Scalar>& next_w() { return params_[static_cast<std::size_t>(next_w_)]; }
  Tensor<Scalar>& next_b() { return params_[static_cast<std::size_t>(next_b_)]; }
  Tensor<Scalar>& cls_w() { return params_[static_cast<std::size_t>(cls_w_)]; }
  Tensor<Scalar>& cls_b() { return params_[static_cast<std::size_t>(cls_b_)]; }
  const Tensor<Scalar>& next_w() const { return params_[static_cast<std::size_t>(next_w_)]; }
  const Tensor<Scalar>& next_b() const { return params_[static_cast<std::size_t>(next_b_)]; }
  const Tensor<Scalar>& cls_w() const { return params_[static_cast<std::size_t>(cls_w_)]; }
  const Tensor<Scalar>& cls_b() const { return params_[static_cast<std::size_t>(cls_b_)]; }

  struct Cache {
    ForwardMode mode = ForwardMode::NextItem;
    int L = 0, n_valid = 0, P = 0;
    Eigen::MatrixXi cats;  // events in processed order
    std::array<int, 3> cls{0, 0, 0};
    Mat price_coeffs, ts_coeffs;
    struct Layer {
      Mat xhat1;
      Vec inv_std1;
      Mat a_ln, Q, K, V;
      std::vector<Mat> A;
      Mat attn_concat, drop1, xhat2;
      Vec inv_std2;
      Mat b_ln, u, g, drop2;
    };
    std::vector<Layer> layers;
    Mat xhatf;
    Vec inv_stdf;
    Mat y;
  };

  // Token vector for one event: the sum of its feature embeddings.
  Vec embed_token(const TokenizedSequence& seq, int event) const {
    if (event < 0 || event >= seq.length())
      throw InvalidArgument("embed_token: event index out of range");
    Vec out = Vec::Zero(cfg_.d_model);
    RowVec row = RowVec::Zero(cfg_.d_model);
    Mat coeff_sink(1, coeff_width());
    add_event_embedding(seq, event, row, coeff_sink, 0);
    out = row.transpose();
    return out;
  }

  Vec embed_cls(const TokenizedSequence& seq) const {
    RowVec row = value(cls_token_).row(0);
    for (std::size_t f = 0; f < cls_refs_.size(); ++f) {
      check_id(seq.cls[f], cls_refs_[f], Tokenizer::cls_features()[f]);
      row += value(cls_refs_[f]).row(seq.cls[f]);
    }
    return row.transpose();
  }

  void forward_cached(const TokenizedSequence& seq, ForwardMode mode, Cache& cache,
                      Rng* dropout_rng = nullptr, int pad_to = 0) const {
    const int L = seq.length();
    const int d = cfg_.d_model;
    if (L > cfg_.max_seq_len)
      throw InvalidArgument("sequence of " + std::to_string(L) + " events exceeds max_seq_len " +
                            std::to_string(cfg_.max_seq_len));
    if (pad_to > cfg_.max_seq_len + 1)
      throw InvalidArgument("pad_to exceeds max_seq_len + 1");
    cache.mode = mode;
    cache.L = L;
    cache.n_valid = L + 1;
    cache.P = std::max(L + 1, pad_to);
    cache.cls = seq.cls;

    std::vector<int> order(static_cast<std::size_t>(L));
    std::iota(order.begin(), order.end(), 0);
    if (mode == ForwardMode::Classifier && !cfg_.use_timestamp) {
      // Without timestamps nothing may depend on event order, so process
      // tokens in a canonical order and make permutation invariance exact.
      std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        for (Eigen::Index f = 0; f < seq.cats.cols(); ++f) {
          if (seq.cats(a, f) != seq.cats(b, f)) return seq.cats(a, f) < seq.cats(b, f);
        }
        return seq.price[a] < seq.price[b];
      });
    }
    cache.cats.resize(L, seq.cats.cols());
    TokenizedSequence view;  // processed-order copies of the per-event fields
    view.cats.resize(L, seq.cats.cols());
    view.price.resize(L);
    view.timestamp.resize(L);
    for (int e = 0; e < L; ++e) {
      view.cats.row(e) = seq.cats.row(order[static_cast<std::size_t>(e)]);
      view.price[e] = seq.price[order[static_cast<std::size_t>(e)]];
      view.timestamp[e] = seq.timestamp[order[static_cast<std::size_t>(e)]];
    }
    cache.cats = view.cats;
    cache.price_coeffs.setZero(std::max(L, 1), coeff_width());
    cache.ts_coeffs.setZero(std::max(L, 1), coeff_width());

    Mat x = Mat::Zero(cache.P, d);
    {
      RowVec row = embed_cls(seq).transpose();
      x.row(0) = row;
    }
    for (int e = 0; e < L; ++e) {
      RowVec row = RowVec::Zero(d);
      add_event_embedding(view, e, row, cache.price_coeffs, &cache.ts_coeffs, e);
      x.row(e + 1) = row;
    }
    if (mode == ForwardMode::NextItem) {
      for (int p = 0; p < cache.n_valid; ++p) x.row(p) += value(pos_).row(p);
    }

    cache.layers.clear();
    cache.layers.resize(static_cast<std::size_t>(cfg_.n_layers));
    for (int l = 0; l < cfg_.n_layers; ++l)
      layer_forward(l, x, cache.layers[static_cast<std::size_t>(l)], mode, cache.n_valid,
                    dropout_rng);
    ln_forward(x, value(final_g_), value(final_b_), cache.xhatf, cache.inv_stdf, cache.y);
  }

  ForwardResult<Scalar> forward(const TokenizedSequence& seq, ForwardMode mode,
                                int pad_to = 0) const {
    Cache cache;
    forward_cached(seq, mode, cache, nullptr, pad_to);
    ForwardResult<Scalar> out;
    out.encodings = cache.y.topRows(cache.n_valid);
    if (mode == ForwardMode::NextItem) {
      out.next_logits = cache.y.middleRows(1, cache.L) * next_w().value;
      out.next_logits.rowwise() += next_b().value.row(0);
    } else {
      out.class_logits = (cache.y.row(0) * cls_w().value + cls_b().value.row(0)).transpose();
    }
    return out;
  }

  void backward(const Cache& cache, Mat d_y) {
    Mat d_x = ln_backward(cache.xhatf, cache.inv_stdf, tensor(final_g_), tensor(final_b_), d_y);
    for (int l = cfg_.n_layers - 1; l >= 0; --l) layer_backward(l, cache, d_x);

    if (cache.mode == ForwardMode::NextItem) {
      auto& pos = tensor(pos_);
      for (int p = 0; p < cache.n_valid; ++p) pos.grad.row(p) += d_x.row(p);
    }
    tensor(cls_token_).grad.row(0) += d_x.row(0);
    for (std::size_t f = 0; f < cls_refs_.size(); ++f)
      tensor(cls_refs_[f]).grad.row(cache.cls[f]) += d_x.row(0);
    for (int e = 0; e < cache.L; ++e) {
      const auto row = d_x.row(e + 1);
      for (std::size_t f = 0; f < event_refs_.size(); ++f)
        tensor(event_refs_[f]).grad.row(cache.cats(e, static_cast<Eigen::Index>(f))) += row;
      if (cfg_.numeric_encoding == NumericEncoding::ScaledEmbedding) {
        tensor(price_ref_).grad.row(0) += cache.price_coeffs(e, 0) * row;
        if (cfg_.use_timestamp) tensor(ts_ref_).grad.row(0) += cache.ts_coeffs(e, 0) * row;
      } else {
        tensor(price_ref_).grad.noalias() += cache.price_coeffs.row(e).transpose() * row;
        if (cfg_.use_timestamp)
          tensor(ts_ref_).grad.noalias() += cache.ts_coeffs.row(e).transpose() * row;
      }
    }
  }

  bool next_item_trained = false;
  bool classifier_trained = false;

 private:
  struct LayerRefs {
    int ln1_g, ln1_b, wq, bq, wk, bk, wv, bv, wo, bo, ln2_g, ln2_b, w1, b1, w2, b2;
  };

  int add_param(const std::string& name, int rows, int cols, int fan_in) {
    Tensor<Scalar> t;
    t.name = name;
    t.value.setZero(rows, cols);
    t.grad.setZero(rows, cols);
    if (fan_in > 0) {
      Rng rng(derive_seed(cfg_.seed, "init:" + name));
      const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
      for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c)
          t.value(r, c) = static_cast<Scalar>(rng.uniform(-bound, bound));
    }
    params_.push_back(std::move(t));
    const int idx = static_cast<int>(params_.size()) - 1;
    index_[name] = idx;
    return idx;
  }

  Tensor<Scalar>& tensor(int idx) { return params_[static_cast<std::size_t>(idx)]; }
  const Tensor<Scalar>& tensor(int idx) const { return params_[static_cast<std::size_t>(idx)]; }
  const Mat& value(int idx) const { return params_[static_cast<std::size_t>(idx)].value; }

  int coeff_width() const {
    return cfg_.numeric_encoding == NumericEncoding::PiecewiseLinear ? cfg_.ple_bins : 1;
  }

  void check_id(int id, int table, const std::string& feature) const {
    if (id < 0 || id >= value(table).rows())
      throw InvalidArgument("feature '" + feature + "' id " + std::to_string(id) +
                            " outside its embedding table");
  }

  void add_event_embedding(const TokenizedSequence& seq, int e, RowVec& row, Mat& price_coeffs,
                           Mat* ts_coeffs, int coeff_row) const {
    const auto& features = Tokenizer::event_features();
    for (std::size_t f = 0; f < event_refs_.size(); ++f) {
      const int id = seq.cats(e, static_cast<Eigen::Index>(f));
      check_id(id, event_refs_[f], features[f]);
      row += value(event_refs_[f]).row(id);
    }
    if (cfg_.numeric_encoding == NumericEncoding::ScaledEmbedding) {
      row += static_cast<Scalar>(seq.price[e]) * value(price_ref_).row(0);
      price_coeffs(coeff_row, 0) = static_cast<Scalar>(seq.price[e]);
      if (cfg_.use_timestamp) {
        row += static_cast<Scalar>(seq.timestamp[e]) * value(ts_ref_).row(0);
        (*ts_coeffs)(coeff_row, 0) = static_cast<Scalar>(seq.timestamp[e]);
      }
    } else {
      const Eigen::VectorXd pc = ple_vector(seq.price[e], price_edges_);
      price_coeffs.row(coeff_row) = pc.cast<Scalar>().transpose();
      row += pc.cast<Scalar>().transpose() * value(price_ref_);
      if (cfg_.use_timestamp) {
        const Eigen::VectorXd tc = ple_vector(seq.timestamp[e], ts_edges_);
        ts_coeffs->row(coeff_row) = tc.cast<Scalar>().transpose();
        row += tc.cast<Scalar>().transpose() * value(ts_ref_);
      }
    }
  }

  // Convenience overload for embed_token (no timestamp sink needed).
  void add_event_embedding(const TokenizedSequence& seq, int e, RowVec& row, Mat& price_coeffs,
                           int coeff_row) const {
    Mat ts_sink(1, coeff_width());
    add_event_embedding(seq, e, row, price_coeffs, &ts_sink, coeff_row);
  }

  static void ln_forward(const Mat& x, const Mat& gain, const Mat& bias, Mat& xhat, Vec& inv_std,
                         Mat& out) {
    const Scalar eps = static_cast<Scalar>(1e-5);
    Vec mean = x.rowwise().mean();
    Mat centered = x;
    centered.array().colwise() -= mean.array();
    Vec var = centered.array().square().rowwise().mean().matrix();
    inv_std = (var.array() + eps).sqrt().inverse().matrix();
    xhat = (centered.array().colwise() * inv_std.array()).matrix();
    out = xhat;
    out.array().rowwise() *= gain.row(0).array();
    out.rowwise() += bias.row(0);
  }

  Mat ln_backward(const Mat& xhat, const Vec& inv_std, Tensor<Scalar>& gain, Tensor<Scalar>& bias,
                  const Mat& dy) {
    gain.grad.row(0) += dy.cwiseProduct(xhat).colwise().sum();
    bias.grad.row(0) += dy.colwise().sum();
    Mat dxhat = dy;
    dxhat.array().rowwise() *= gain.value.row(0).array();
    Vec m1 = dxhat.rowwise().mean();
    Vec m2 = dxhat.cwiseProduct(xhat).rowwise().mean();
    Mat dx = dxhat;
    dx.array().colwise() -= m1.array();
    dx.array() -= xhat.array().colwise() * m2.array();
    dx.array().colwise() *= inv_std.array();
    return dx;
  }

  static Mat gelu(const Mat& u) {
    const Scalar inv_sqrt2 = static_cast<Scalar>(0.7071067811865476);
    return u.unaryExpr([inv_sqrt2](Scalar v) {
      return static_cast<Scalar>(0.5) * v *
             (static_cast<Scalar>(1) + static_cast<Scalar>(std::erf(v * inv_sqrt2)));
    });
  }

  static Mat gelu_prime(const Mat& u) {
    const Scalar inv_sqrt2 = static_cast<Scalar>(0.7071067811865476);
    const Scalar inv_sqrt2pi = static_cast<Scalar>(0.3989422804014327);
    return u.unaryExpr([inv_sqrt2, inv_sqrt2pi](Scalar v) {
      const Scalar phi = static_cast<Scalar>(std::exp(-0.5 * static_cast<double>(v) *
                                                      static_cast<double>(v))) *
                         inv_sqrt2pi;
      return static_cast<Scalar>(0.5) *
                 (static_cast<Scalar>(1) + static_cast<Scalar>(std::erf(v * inv_sqrt2))) +
             v * phi;
    });
  }

  Mat dropout_mask(int rows, int cols, int n_valid, Rng* rng) const {
    Mat mask = Mat::Zero(rows, cols);
    const double p = cfg_.dropout;
    const Scalar keep = static_cast<Scalar>(1.0 / (1.0 - p));
    for (int r = 0; r < n_valid; ++r)
      for (int c = 0; c < cols; ++c) mask(r, c) = rng->next_double() >= p ? keep : Scalar(0);
    return mask;
  }

  void layer_forward(int l, Mat& x, typename Cache::Layer& c, ForwardMode mode, int n_valid,
                     Rng* dropout_rng) const {
    const auto& r = layer_refs_[static_cast<std::size_t>(l)];
    const int d = cfg_.d_model;
    const int dh = d / cfg_.n_heads;
    const Scalar scale = static_cast<Scalar>(1.0 / std::sqrt(static_cast<double>(dh)));
    const int P = static_cast<int>(x.rows());

    ln_forward(x, value(r.ln1_g), value(r.ln1_b), c.xhat1, c.inv_std1, c.a_ln);
    c.Q = c.a_ln * value(r.wq);
    c.Q.rowwise() += value(r.bq).row(0);
    c.K = c.a_ln * value(r.wk);
    c.K.rowwise() += value(r.bk).row(0);
    c.V = c.a_ln * value(r.wv);
    c.V.rowwise() += value(r.bv).row(0);

    c.A.assign(static_cast<std::size_t>(cfg_.n_heads), Mat());
    c.attn_concat.setZero(P, d);
    for (int h = 0; h < cfg_.n_heads; ++h) {
      Mat S = c.Q.middleCols(h * dh, dh) * c.K.middleCols(h * dh, dh).transpose() * scale;
      Mat& A = c.A[static_cast<std::size_t>(h)];
      A.setZero(P, P);
      for (int i = 0; i < n_valid; ++i) {
        const int hi = mode == ForwardMode::NextItem ? i : n_valid - 1;
        Scalar m = S(i, 0);
        for (int j = 1; j <= hi; ++j) m = std::max(m, S(i, j));
        Scalar sum = 0;
        for (int j = 0; j <= hi; ++j) {
          A(i, j) = std::exp(S(i, j) - m);
          sum += A(i, j);
        }
        for (int j = 0; j <= hi; ++j) A(i, j) /= sum;
      }
      c.attn_concat.middleCols(h * dh, dh).noalias() = A * c.V.middleCols(h * dh, dh);
    }
    Mat attn = c.attn_concat * value(r.wo);
    attn.rowwise() += value(r.bo).row(0);
    if (dropout_rng != nullptr && cfg_.dropout > 0) {
      c.drop1 = dropout_mask(P, d, n_valid, dropout_rng);
      attn = attn.cwiseProduct(c.drop1);
    }
    x += attn;

    ln_forward(x, value(r.ln2_g), value(r.ln2_b), c.xhat2, c.inv_std2, c.b_ln);
    c.u = c.b_ln * value(r.w1);
    c.u.rowwise() += value(r.b1).row(0);
    c.g = gelu(c.u);
    Mat ff = c.g * value(r.w2);
    ff.rowwise() += value(r.b2).row(0);
    if (dropout_rng != nullptr && cfg_.dropout > 0) {
      c.drop2 = dropout_mask(P, d, n_valid, dropout_rng);
      ff = ff.cwiseProduct(c.drop2);
    }
    x += ff;
  }

  void layer_backward(int l, const Cache& cache, Mat& d_x) {
    const auto& r = layer_refs_[static_cast<std::size_t>(l)];
    const auto& c = cache.layers[static_cast<std::size_t>(l)];
    const int d = cfg_.d_model;
    const int dh = d / cfg_.n_heads;
    const Scalar scale = static_cast<Scalar>(1.0 / std::sqrt(static_cast<double>(dh)));
    const int P = cache.P;

    Mat d_ff = d_x;
    if (c.drop2.size() > 0) d_ff = d_ff.cwiseProduct(c.drop2);
    tensor(r.w2).grad.noalias() += c.g.transpose() * d_ff;
    tensor(r.b2).grad.row(0) += d_ff.colwise().sum();
    Mat d_g = d_ff * value(r.w2).transpose();
    Mat d_u = d_g.cwiseProduct(gelu_prime(c.u));
    tensor(r.w1).grad.noalias() += c.b_ln.transpose() * d_u;
    tensor(r.b1).grad.row(0) += d_u.colwise().sum();
    Mat d_bln = d_u * value(r.w1).transpose();
    d_x += ln_backward(c.xhat2, c.inv_std2, tensor(r.ln2_g), tensor(r.ln2_b), d_bln);

    Mat d_attn = d_x;
    if (c.drop1.size() > 0) d_attn = d_attn.cwiseProduct(c.drop1);
    tensor(r.wo).grad.noalias() += c.attn_concat.transpose() * d_attn;
    tensor(r.bo).grad.row(0) += d_attn.colwise().sum();
    Mat d_concat = d_attn * value(r.wo).transpose();
    Mat d_Q = Mat::Zero(P, d), d_K = Mat::Zero(P, d), d_V = Mat::Zero(P, d);
    for (int h = 0; h < cfg_.n_heads; ++h) {
      const Mat& A = c.A[static_cast<std::size_t>(h)];
      auto d_Oh = d_concat.middleCols(h * dh, dh);
      Mat d_A = d_Oh * c.V.middleCols(h * dh, dh).transpose();
      d_V.middleCols(h * dh, dh).noalias() += A.transpose() * d_Oh;
      Mat t = A.cwiseProduct(d_A);
      Vec rs = t.rowwise().sum();
      Mat d_S = t;
      d_S.array() -= A.array().colwise() * rs.array();
      d_S *= scale;
      d_Q.middleCols(h * dh, dh).noalias() += d_S * c.K.middleCols(h * dh, dh);
      d_K.middleCols(h * dh, dh).noalias() += d_S.transpose() * c.Q.middleCols(h * dh, dh);
    }
    tensor(r.wq).grad.noalias() += c.a_ln.transpose() * d_Q;
    tensor(r.bq).grad.row(0) += d_Q.colwise().sum();
    tensor(r.wk).grad.noalias() += c.a_ln.transpose() * d_K;
    tensor(r.bk).grad.row(0) += d_K.colwise().sum();
    tensor(r.wv).grad.noalias() += c.a_ln.transpose() * d_V;
    tensor(r.bv).grad.row(0) += d_V.colwise().sum();
    Mat d_aln = d_Q * value(r.wq).transpose();
    d_aln.noalias() += d_K * value(r.wk).transpose();
    d_aln.noalias() += d_V * value(r.wv).transpose();
    d_x += ln_backward(c.xhat1, c.inv_std1, tensor(r.ln1_g), tensor(r.ln1_b), d_aln);
  }

  EncoderConfig cfg_;
  int n_skus_ = 0;
  std::vector<double> price_edges_, ts_edges_;
  std::vector<Tensor<Scalar>> params_;
  std::map<std::string, int> index_;
  std::vector<int> event_refs_, cls_refs_;
  int cls_token_ = -1, pos_ = -1, price_ref_ = -1, ts_ref_ = -1;
  std::vector<LayerRefs> layer_refs_;
  int final_g_ = -1, final_b_ = -1, next_w_ = -1, next_b_ = -1, cls_w_ = -1, cls_b_ = -1;
};

struct TrainConfig {
  int epochs = 10;
  int batch_size = 64;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t seed = 1;

  void validate() const {
    if (epochs < 1) throw ConfigError("train: epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
    if (!(lr > 0)) throw ConfigError("train: lr must be positive");
  }
};

struct TrainReport {
  std::vector<double> epoch_losses;
  double final_loss = 0.0;
  std::int64_t steps = 0;
  double wall_seconds = 0.0;
  std::uint64_t seed = 0;
};

template <typename Scalar>
class AdamOptimizer {
 public:
  using Mat = typename Model<Scalar>::Mat;

  AdamOptimizer(double lr, double beta1, double beta2, double eps)
      : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {}

  void step(Model<Scalar>& model) {
    auto& params = model.parameters();
    if (m_.empty()) {
      for (const auto& t : params) {
        m_.push_back(Mat::Zero(t.value.rows(), t.value.cols()));
        v_.push_back(Mat::Zero(t.value.rows(), t.value.cols()));
      }
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto& p = params[i];
      if (p.frozen) continue;
      m_[i] = static_cast<Scalar>(b1_) * m_[i] + static_cast<Scalar>(1.0 - b1_) * p.grad;
      v_[i] = static_cast<Scalar>(b2_) * v_[i] +
              static_cast<Scalar>(1.0 - b2_) * p.grad.cwiseProduct(p.grad);
      Mat mhat = m_[i] / static_cast<Scalar>(bc1);
      Mat vhat = v_[i] / static_cast<Scalar>(bc2);
      p.value.array() -= static_cast<Scalar>(lr_) * mhat.array() /
                         (vhat.array().sqrt() + static_cast<Scalar>(eps_));
    }
  }

 private:
  double lr_, b1_, b2_, eps_;
  std::int64_t t_ = 0;
  std::vector<Mat> m_, v_;
};

namespace detail {

// Summed next-item cross entropy over the sequence's targets (nats). When
// with_grad is set, gradients scaled by `scale` are accumulated.
template <typename Scalar>
double next_item_step(Model<Scalar>& model, const TokenizedSequence& seq, double scale,
                      bool with_grad, Rng* dropout_rng) {
  using Mat = typename Model<Scalar>::Mat;
  const int L = seq.length();
  if (L < 2) return 0.0;
  typename Model<Scalar>::Cache cache;
  model.forward_cached(seq, ForwardMode::NextItem, cache, with_grad ? dropout_rng : nullptr);
  const int T = L - 1;
  Mat ysub = cache.y.middleRows(1, T);  // encodings of events 0..L-2
  Mat logits = ysub * model.next_w().value;
  logits.rowwise() += model.next_b().value.row(0);
  double total = 0.0;
  Mat d_logits;
  if (with_grad) d_logits.setZero(T, model.n_skus());
  for (int t = 0; t < T; ++t) {
    const int target = seq.sku[t + 1];
    if (target < 0 || target >= model.n_skus())
      throw InvalidArgument("next-item target sku id out of range");
    const Scalar m = logits.row(t).maxCoeff();
    Scalar sum = 0;
    for (int k = 0; k < model.n_skus(); ++k) sum += std::exp(logits(t, k) - m);
    const Scalar lse = m + std::log(sum);
    total += static_cast<double>(lse - logits(t, target));
    if (with_grad) {
      for (int k = 0; k < model.n_skus(); ++k)
        d_logits(t, k) = std::exp(logits(t, k) - lse) * static_cast<Scalar>(scale);
      d_logits(t, target) -= static_cast<Scalar>(scale);
    }
  }
  if (with_grad) {
    model.next_w().grad.noalias() += ysub.transpose() * d_logits;
    model.next_b().grad.row(0) += d_logits.colwise().sum();
    Mat d_y = Mat::Zero(cache.P, model.config().d_model);
    d_y.middleRows(1, T).noalias() = d_logits * model.next_w().value.transpose();
    model.backward(cache, std::move(d_y));
  }
  return total;
}

// Unweighted binary cross entropy of the CLS head (nats); gradients are
// scaled by `weight_scale` when requested.
template <typename Scalar>
double classifier_step(Model<Scalar>& model, const TokenizedSequence& seq, double weight_scale,
                       bool with_grad, Rng* dropout_rng) {
  using Mat = typename Model<Scalar>::Mat;
  if (seq.label != 0 && seq.label != 1)
    throw InvalidArgument("classifier: sequence " + seq.consumer_id + " has no label");
  typename Model<Scalar>::Cache cache;
  model.forward_cached(seq, ForwardMode::Classifier, cache, with_grad ? dropout_rng : nullptr);
  Eigen::Matrix<Scalar, 1, Eigen::Dynamic> logits =
      cache.y.row(0) * model.cls_w().value + model.cls_b().value.row(0);
  const Scalar m = std::max(logits(0, 0), logits(0, 1));
  const Scalar sum = std::exp(logits(0, 0) - m) + std::exp(logits(0, 1) - m);
  const Scalar lse = m + std::log(sum);
  const double ce = static_cast<double>(lse - logits(0, seq.label));
  if (with_grad) {
    Eigen::Matrix<Scalar, 1, Eigen::Dynamic> d_logits(1, 2);
    d_logits(0, 0) = std::exp(logits(0, 0) - lse);
    d_logits(0, 1) = std::exp(logits(0, 1) - lse);
    d_logits(0, seq.label) -= Scalar(1);
    d_logits *= static_cast<Scalar>(weight_scale);
    model.cls_w().grad.noalias() += cache.y.row(0).transpose() * d_logits;
    model.cls_b().grad.row(0) += d_logits;
    Mat d_y = Mat::Zero(cache.P, model.config().d_model);
    d_y.row(0) = d_logits * model.cls_w().value.transpose();
    model.backward(cache, std::move(d_y));
  }
  return ce;
}

}  // namespace detail

template <typename Scalar>
TrainReport train_next_item(Model<Scalar>& model, const std::vector<TokenizedSequence>& seqs,
                            const TrainConfig& tcfg) {
  tcfg.validate();
  std::vector<std::size_t> usable;
  for (std::size_t i = 0; i < seqs.size(); ++i)
    if (seqs[i].length() >= 2) usable.push_back(i);
  if (usable.empty())
    throw InvalidArgument("next-item training needs sequences with at least two events");

  const auto t0 = std::chrono::steady_clock::now();
  AdamOptimizer<Scalar> opt(tcfg.lr, tcfg.beta1, tcfg.beta2, tcfg.eps);
  Rng dropout_rng(derive_seed(tcfg.seed, "dropout"));
  Rng* dr = model.config().dropout > 0 ? &dropout_rng : nullptr;
  TrainReport rep;
  rep.seed = tcfg.seed;
  for (int epoch = 0; epoch < tcfg.epochs; ++epoch) {
    auto order = usable;
    Rng(derive_seed(tcfg.seed, "order:" + std::to_string(epoch))).shuffle(order);
    double epoch_ce = 0.0;
    std::int64_t epoch_targets = 0;
    for (std::size_t start = 0; start < order.size(); start += tcfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + tcfg.batch_size);
      std::int64_t n_targets = 0;
      for (std::size_t i = start; i < end; ++i) n_targets += seqs[order[i]].length() - 1;
      model.zero_grads();
      double batch_ce = 0.0;
      for (std::size_t i = start; i < end; ++i)
        batch_ce += detail::next_item_step(model, seqs[order[i]],
                                           1.0 / static_cast<double>(n_targets), true, dr);
      const double loss = batch_ce / static_cast<double>(n_targets);
      if (!std::isfinite(loss))
        throw NumericError("next-item training diverged at step " + std::to_string(rep.steps) +
                           " (loss=" + std::to_string(loss) + ")");
      opt.step(model);
      ++rep.steps;
      epoch_ce += batch_ce;
      epoch_targets += n_targets;
    }
    rep.epoch_losses.push_back(epoch_ce / static_cast<double>(epoch_targets));
  }
  rep.final_loss = rep.epoch_losses.back();
  rep.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  model.next_item_trained = true;
  return rep;
}

template <typename Scalar>
TrainReport train_classifier(Model<Scalar>& model, const std::vector<TokenizedSequence>& seqs,
                             const TrainConfig& tcfg) {
  tcfg.validate();
  std::int64_t n_pos = 0, n_neg = 0;
  for (const auto& s : seqs) {
    if (s.label == 1)
      ++n_pos;
    else if (s.label == 0)
      ++n_neg;
    else
      throw InvalidArgument("classifier: sequence " + s.consumer_id + " has no label");
  }
  if (n_pos == 0 || n_neg == 0)
    throw InvalidArgument("classifier training requires examples of both classes");
  double class_w[2] = {1.0, 1.0};
  if (model.config().class_weighting) {
    const double total = static_cast<double>(n_pos + n_neg);
    class_w[0] = total / (2.0 * static_cast<double>(n_neg));
    class_w[1] = total / (2.0 * static_cast<double>(n_pos));
  }

  const auto t0 = std::chrono::steady_clock::now();
  AdamOptimizer<Scalar> opt(tcfg.lr, tcfg.beta1, tcfg.beta2, tcfg.eps);
  Rng dropout_rng(derive_seed(tcfg.seed, "dropout"));
  Rng* dr = model.config().dropout > 0 ? &dropout_rng : nullptr;
  TrainReport rep;
  rep.seed = tcfg.seed;
  std::vector<std::size_t> usable(seqs.size());
  std::iota(usable.begin(), usable.end(), std::size_t{0});
  for (int epoch = 0; epoch < tcfg.epochs; ++epoch) {
    auto order = usable;
    Rng(derive_seed(tcfg.seed, "order:" + std::to_string(epoch))).shuffle(order);
    double epoch_num = 0.0, epoch_den = 0.0;
    for (std::size_t start = 0; start < order.size(); start += tcfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + tcfg.batch_size);
      double w_sum = 0.0;
      for (std::size_t i = start; i < end; ++i)
        w_sum += seqs[order[i]].weight * class_w[seqs[order[i]].label];
      model.zero_grads();
      double batch_num = 0.0;
      for (std::size_t i = start; i < end; ++i) {
        const auto& s = seqs[order[i]];
        const double w = s.weight * class_w[s.label];
        batch_num += w * detail::classifier_step(model, s, w / w_sum, true, dr);
      }
      const double loss = batch_num / w_sum;
      if (!std::isfinite(loss))
        throw NumericError("classifier training diverged at step " + std::to_string(rep.steps) +
                           " (loss=" + std::to_string(loss) + ")");
      opt.step(model);
      ++rep.steps;
      epoch_num += batch_num;
      epoch_den += w_sum;
    }
    rep.epoch_losses.push_back(epoch_num / epoch_den);
  }
  rep.final_loss = rep.epoch_losses.back();
  rep.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  model.classifier_trained = true;
  return rep;
}

template <typename Scalar>
double evaluate_next_item_loss(Model<Scalar>& model, const std::vector<TokenizedSequence>& seqs) {
  double total = 0.0;
  std::int64_t targets = 0;
  for (const auto& s : seqs) {
    if (s.length() < 2) continue;
    total += detail::next_item_step(model, s, 0.0, false, nullptr);
    targets += s.length() - 1;
  }
  if (targets == 0) throw InvalidArgument("no evaluable sequences");
  return total / static_cast<double>(targets);
}

// Mean of per-sequence weights times cross entropies over their weight sum.
template <typename Scalar>
double evaluate_classifier_loss(Model<Scalar>& model,
                                const std::vector<TokenizedSequence>& seqs) {
  double num = 0.0, den = 0.0;
  for (const auto& s : seqs) {
    num += s.weight * detail::classifier_step(model, s, 0.0, false, nullptr);
    den += s.weight;
  }
  if (den <= 0) throw InvalidArgument("no evaluable sequences");
  return num / den;
}

template <typename Scalar>
double score_consumer(const Model<Scalar>& model, const TokenizedSequence& seq) {
  if (!model.classifier_trained)
    throw InvalidArgument("classifier head is untrained; run classifier training first");
  const auto res = model.forward(seq, ForwardMode::Classifier);
  const double a = static_cast<double>(res.class_logits[0]);
  const double b = static_cast<double>(res.class_logits[1]);
  const double m = std::max(a, b);
  const double pa = std::exp(a - m), pb = std::exp(b - m);
  return pb / (pa + pb);
}

template <typename Scalar>
Eigen::VectorXd score_consumers(const Model<Scalar>& model,
                                const std::vector<TokenizedSequence>& seqs) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(seqs.size()));
  for (std::size_t i = 0; i < seqs.size(); ++i)
    out[static_cast<Eigen::Index>(i)] = score_consumer(model, seqs[i]);
  return out;
}

struct GradCheckEntry {
  std::string name;
  double rel_error = 0.0;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::vector<GradCheckEntry> per_param;
};

// Central finite differences against the analytic gradients of both losses on
// a random subset of parameter entries.
template <typename Scalar>
GradCheckReport grad_check(Model<Scalar>& model, const std::vector<TokenizedSequence>& batch,
                           int samples_per_tensor = 4, std::uint64_t seed = 7) {
  static_assert(std::is_same_v<Scalar, double>,
                "grad_check requires a double precision model");
  std::vector<TokenizedSequence> next_batch, cls_batch;
  for (const auto& s : batch) {
    if (s.length() >= 2) next_batch.push_back(s);
    if (s.label == 0 || s.label == 1) cls_batch.push_back(s);
  }
  if (next_batch.empty() && cls_batch.empty())
    throw InvalidArgument("grad_check: batch has no usable sequences");

  auto loss_of = [&](int kind) {
    if (kind == 0) {
      double total = 0.0;
      std::int64_t targets = 0;
      for (const auto& s : next_batch) {
        total += detail::next_item_step(model, s, 0.0, false, nullptr);
        targets += s.length() - 1;
      }
      return total / static_cast<double>(targets);
    }
    double num = 0.0, den = 0.0;
    for (const auto& s : cls_batch) {
      num += s.weight * detail::classifier_step(model, s, 0.0, false, nullptr);
      den += s.weight;
    }
    return num / den;
  };

  std::map<std::string, double> worst;
  for (int kind = 0; kind < 2; ++kind) {
    const auto& used = kind == 0 ? next_batch : cls_batch;
    if (used.empty()) continue;
    model.zero_grads();
    if (kind == 0) {
      std::int64_t targets = 0;
      for (const auto& s : next_batch) targets += s.length() - 1;
      for (const auto& s : next_batch)
        detail::next_item_step(model, s, 1.0 / static_cast<double>(targets), true, nullptr);
    } else {
      double den = 0.0;
      for (const auto& s : cls_batch) den += s.weight;
      for (const auto& s : cls_batch)
        detail::classifier_step(model, s, s.weight / den, true, nullptr);
    }
    Rng rng(derive_seed(seed, "gradcheck:" + std::to_string(kind)));
    const double h = 1e-5;
    for (auto& t : model.parameters()) {
      if (t.frozen) continue;
      for (int s = 0; s < samples_per_tensor; ++s) {
        const auto r = static_cast<Eigen::Index>(rng.next_index(static_cast<std::size_t>(t.value.rows())));
        const auto c = static_cast<Eigen::Index>(rng.next_index(static_cast<std::size_t>(t.value.cols())));
        const double analytic = t.grad(r, c);
        const double orig = t.value(r, c);
        t.value(r, c) = orig + h;
        const double lp = loss_of(kind);
        t.value(r, c) = orig - h;
        const double lm = loss_of(kind);
        t.value(r, c) = orig;
        const double numeric = (lp - lm) / (2.0 * h);
        const double rel = std::abs(analytic - numeric) /
                           std::max({1.0, std::abs(analytic), std::abs(numeric)});
        auto it = worst.emplace(t.name, 0.0).first;
        it->second = std::max(it->second, rel);
      }
    }
  }
  GradCheckReport rep;
  for (const auto& t : model.parameters()) {
    const auto it = worst.find(t.name);
    if (it == worst.end()) continue;
    rep.per_param.push_back({t.name, it->second});
    rep.max_rel_error = std::max(rep.max_rel_error, it->second);
  }
  return rep;
}

struct Checkpoint {
  Tokenizer tokenizer;
  Model<double> model;
};

void save_checkpoint(const std::string& path, const Tokenizer& tok, const Model<double>& model);
Checkpoint load_checkpoint(const std::string& path);

// Stable hex digest of the architecture plus tokenizer state; changes when
// either would produce different artifacts.
std::string model_fingerprint(const Tokenizer& tok, const EncoderConfig& config);

}  // namespace unicon
