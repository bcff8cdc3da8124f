#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "chunkstack/chunker.hpp"
#include "chunkstack/rng.hpp"
#include "chunkstack/tensor.hpp"
#include "json.hpp"

namespace chunkstack {

enum class WordPool { Cls, WeightedSum };
enum class AggregatorKind { Transformer, TransformerPos, Lstm, Cnn, Mean };

std::string to_string(WordPool p);
std::string to_string(AggregatorKind k);
WordPool word_pool_from_string(const std::string& s);
AggregatorKind aggregator_from_string(const std::string& s);

struct ModelConfig {
  int vocab_size = 0;
  int n_layers = 2;
  int hidden = 64;
  int ff_inner = 128;
  int n_heads = 4;
  int max_positions = 203;

  WordPool word_pool = WordPool::Cls;
  AggregatorKind aggregator = AggregatorKind::Transformer;
  int agg_layers = 2;
  int agg_heads = 4;
  int agg_ff = 128;

  int content_len = 202;
  int max_chunks = 32;
  int n_class = 2;

  int head_dim() const { return hidden / n_heads; }
  void validate() const {
    if (hidden % n_heads != 0 || hidden % agg_heads != 0)
      throw std::runtime_error("model config: hidden must be divisible by head counts");
    if (max_positions < content_len + 1)
      throw std::runtime_error("model config: max_positions must cover content_len + 1");
    if (n_class < 2) throw std::runtime_error("model config: n_class must be >= 2");
    if (vocab_size < 4) throw std::runtime_error("model config: vocab_size too small");
  }

  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
};

inline std::string to_string(WordPool p) {
  return p == WordPool::Cls ? "cls" : "wsum";
}
inline std::string to_string(AggregatorKind k) {
  switch (k) {
    case AggregatorKind::Transformer: return "transformer";
    case AggregatorKind::TransformerPos: return "transformer-pos";
    case AggregatorKind::Lstm: return "lstm";
    case AggregatorKind::Cnn: return "cnn";
    case AggregatorKind::Mean: return "mean";
  }
  return "?";
}
inline WordPool word_pool_from_string(const std::string& s) {
  if (s == "cls") return WordPool::Cls;
  if (s == "wsum") return WordPool::WeightedSum;
  throw std::runtime_error("unknown word pool '" + s + "' (expected cls|wsum)");
}
inline AggregatorKind aggregator_from_string(const std::string& s) {
  if (s == "transformer") return AggregatorKind::Transformer;
  if (s == "transformer-pos") return AggregatorKind::TransformerPos;
  if (s == "lstm") return AggregatorKind::Lstm;
  if (s == "cnn") return AggregatorKind::Cnn;
  if (s == "mean") return AggregatorKind::Mean;
  throw std::runtime_error("unknown aggregator '" + s +
                           "' (expected transformer|transformer-pos|lstm|cnn|mean)");
}

inline nlohmann::json ModelConfig::to_json() const {
  return nlohmann::json{{"vocab_size", vocab_size}, {"n_layers", n_layers},
                        {"hidden", hidden},         {"ff_inner", ff_inner},
                        {"n_heads", n_heads},       {"max_positions", max_positions},
                        {"word_pool", to_string(word_pool)},
                        {"aggregator", to_string(aggregator)},
                        {"agg_layers", agg_layers}, {"agg_heads", agg_heads},
                        {"agg_ff", agg_ff},         {"content_len", content_len},
                        {"max_chunks", max_chunks}, {"n_class", n_class}};
}

inline ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.vocab_size = j.at("vocab_size").get<int>();
  c.n_layers = j.at("n_layers").get<int>();
  c.hidden = j.at("hidden").get<int>();
  c.ff_inner = j.at("ff_inner").get<int>();
  c.n_heads = j.at("n_heads").get<int>();
  c.max_positions = j.at("max_positions").get<int>();
  c.word_pool = word_pool_from_string(j.at("word_pool").get<std::string>());
  c.aggregator = aggregator_from_string(j.at("aggregator").get<std::string>());
  c.agg_layers = j.at("agg_layers").get<int>();
  c.agg_heads = j.at("agg_heads").get<int>();
  c.agg_ff = j.at("agg_ff").get<int>();
  c.content_len = j.at("content_len").get<int>();
  c.max_chunks = j.at("max_chunks").get<int>();
  c.n_class = j.at("n_class").get<int>();
  c.validate();
  return c;
}

inline constexpr double kLayerNormEps = 1e-12;
inline constexpr double kAttnMaskBias = -1e9;
inline constexpr double kInitStd = 0.02;

// Ordered parameter registry; creation order fixes both initialization and
// checkpoint layout.
template <typename T>
struct ParamSet {
  std::vector<std::pair<std::string, ad::NodePtr<T>>> items;

  ad::NodePtr<T> add(const std::string& name, std::vector<int64_t> shape) {
    int64_t n = 1;
    for (int64_t d : shape) n *= d;
    auto node = ad::make_leaf<T>(std::move(shape), std::vector<T>(static_cast<size_t>(n), T(0)),
                                 true);
    items.emplace_back(name, node);
    return node;
  }

  ad::NodePtr<T> get(const std::string& name) const {
    for (const auto& [n, p] : items)
      if (n == name) return p;
    throw std::runtime_error("param not found: " + name);
  }
};

template <typename T>
struct EncoderLayerParams {
  ad::NodePtr<T> wq, bq, wk, bk, wv, bv, wo, bo;
  ad::NodePtr<T> ln1_g, ln1_b;
  ad::NodePtr<T> w1, b1, w2, b2;
  ad::NodePtr<T> ln2_g, ln2_b;
};

// Post-LN transformer encoder layer: self-attention with additive masking of
// mask-0 keys, residual, layer norm, gelu feed-forward, residual, layer norm.
template <typename T>
ad::NodePtr<T> encoder_layer(const ad::NodePtr<T>& x, const ad::NodePtr<T>& mask_bias,
                             const EncoderLayerParams<T>& p, int n_heads) {
  namespace o = ad::ops;
  int64_t hidden = x->cols();
  int64_t d = hidden / n_heads;
  T scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(d)));

  auto q = o::bias_add(o::matmul(x, p.wq), p.bq);
  auto k = o::bias_add(o::matmul(x, p.wk), p.bk);
  auto v = o::bias_add(o::matmul(x, p.wv), p.bv);

  std::vector<ad::NodePtr<T>> heads;
  heads.reserve(static_cast<size_t>(n_heads));
  for (int h = 0; h < n_heads; ++h) {
    auto qh = o::slice_cols(q, h * d, (h + 1) * d);
    auto kh = o::slice_cols(k, h * d, (h + 1) * d);
    auto vh = o::slice_cols(v, h * d, (h + 1) * d);
    auto scores = o::add(o::scale_by(o::matmul(qh, o::transpose(kh)), scale), mask_bias);
    heads.push_back(o::matmul(o::softmax_lastdim(scores), vh));
  }
  auto ctx = n_heads == 1 ? heads[0] : o::concat_cols(heads);
  auto attn_out = o::bias_add(o::matmul(ctx, p.wo), p.bo);
  auto h1 = o::layer_norm_lastdim(o::add(x, attn_out), p.ln1_g, p.ln1_b,
                                  static_cast<T>(kLayerNormEps));
  auto ff = o::bias_add(o::matmul(o::gelu(o::bias_add(o::matmul(h1, p.w1), p.b1)), p.w2), p.b2);
  return o::layer_norm_lastdim(o::add(h1, ff), p.ln2_g, p.ln2_b,
                               static_cast<T>(kLayerNormEps));
}

// Additive attention bias: 0 over mask-1 keys, a large negative constant over
// mask-0 keys, identical for every query row. exp() underflows the biased
// scores to exactly zero, so masked keys are excluded bit-exactly.
template <typename T>
ad::NodePtr<T> attention_mask_bias(const std::vector<int>& mask) {
  int64_t r = static_cast<int64_t>(mask.size());
  std::vector<T> bias(static_cast<size_t>(r * r), T(0));
  for (int64_t i = 0; i < r; ++i)
    for (int64_t j = 0; j < r; ++j)
      if (!mask[static_cast<size_t>(j)])
        bias[static_cast<size_t>(i * r + j)] = static_cast<T>(kAttnMaskBias);
  return ad::make_leaf<T>({r, r}, std::move(bias), false);
}

template <typename T>
class HierModel {
 public:
  explicit HierModel(ModelConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    build_params();
  }

  const ModelConfig& config() const { return cfg_; }
  ParamSet<T>& params() { return params_; }
  const ParamSet<T>& params() const { return params_; }

  // Parameters trained in the given mode; FeatureExtract excludes the word
  // encoder (prefix "word.") entirely.
  std::vector<std::pair<std::string, ad::NodePtr<T>>> trainable_params(bool freeze_word) const {
    std::vector<std::pair<std::string, ad::NodePtr<T>>> out;
    for (const auto& [name, p] : params_.items)
      if (!freeze_word || name.rfind("word.", 0) != 0) out.emplace_back(name, p);
    return out;
  }

  void set_word_encoder_frozen(bool frozen) {
    for (auto& [name, p] : params_.items)
      if (name.rfind("word.", 0) == 0) p->requires_grad = !frozen;
  }

  void zero_grad() {
    for (auto& [name, p] : params_.items) p->grad.assign(p->value.size(), T(0));
  }

  void init(Rng& rng) {
    for (auto& [name, p] : params_.items) {
      bool is_bias = name.ends_with(".b") || name.ends_with(".bq") || name.ends_with(".bk") ||
                     name.ends_with(".bv") || name.ends_with(".bo") || name.ends_with(".b1") ||
                     name.ends_with(".b2") || name.ends_with("_b");
      bool is_gain = name.ends_with("_g");
      if (name == "pool.layer_weights") {
        std::fill(p->value.begin(), p->value.end(), static_cast<T>(1.0 / cfg_.n_layers));
      } else if (is_gain) {
        std::fill(p->value.begin(), p->value.end(), T(1));
      } else if (is_bias) {
        std::fill(p->value.begin(), p->value.end(), T(0));
      } else {
        for (auto& v : p->value) v = static_cast<T>(rng.next_normal(0.0, kInitStd));
      }
    }
  }

  // --- word level -----------------------------------------------------------

  // Per-layer hidden states for one chunk row, layer 1 first.
  std::vector<ad::NodePtr<T>> encode_chunk(const int* ids, const int* mask, int row_len) const {
    namespace o = ad::ops;
    if (row_len > cfg_.max_positions)
      throw std::runtime_error("encode_chunk: row longer than max_positions");
    std::vector<int> id_vec(ids, ids + row_len);
    std::vector<int> mask_vec(mask, mask + row_len);
    // Embedding layer norm keeps the attention inputs at unit scale; without
    // it the initial query/key products are ~1e-4 and attention cannot move
    // off uniform.
    auto x = o::layer_norm_lastdim(
        o::add(o::embedding(params_.get("word.tok_emb"), id_vec),
               o::slice_rows(params_.get("word.pos_emb"), 0, row_len)),
        params_.get("word.emb_ln_g"), params_.get("word.emb_ln_b"),
        static_cast<T>(kLayerNormEps));
    auto bias = attention_mask_bias<T>(mask_vec);
    std::vector<ad::NodePtr<T>> outputs;
    outputs.reserve(static_cast<size_t>(cfg_.n_layers));
    for (int l = 0; l < cfg_.n_layers; ++l) {
      x = encoder_layer(x, bias, layer_params("word.l" + std::to_string(l)), cfg_.n_heads);
      outputs.push_back(x);
    }
    return outputs;
  }

  ad::NodePtr<T> cls_pool(const std::vector<ad::NodePtr<T>>& layer_outputs) const {
    return ad::ops::pick_row(layer_outputs.back(), 0);
  }

  // Sum over layers of w_i times the masked mean of layer i's rows.
  ad::NodePtr<T> weighted_sum_pool(const std::vector<ad::NodePtr<T>>& layer_outputs,
                                   const std::vector<int>& mask) const {
    namespace o = ad::ops;
    auto lw = params_.get("pool.layer_weights");
    ad::NodePtr<T> acc;
    for (size_t i = 0; i < layer_outputs.size(); ++i) {
      auto term = o::mul(o::masked_mean_rows(layer_outputs[i], mask),
                         o::pick_elem(lw, static_cast<int64_t>(i)));
      acc = acc ? o::add(acc, term) : term;
    }
    return acc;
  }

  ad::NodePtr<T> pool_chunk(const std::vector<ad::NodePtr<T>>& layer_outputs,
                            const std::vector<int>& mask) const {
    return cfg_.word_pool == WordPool::Cls ? cls_pool(layer_outputs)
                                           : weighted_sum_pool(layer_outputs, mask);
  }

  // --- chunk level -----------------------------------------------------------

  ad::NodePtr<T> transformer_aggregate(const std::vector<ad::NodePtr<T>>& chunk_vecs,
                                       const std::vector<int>& chunk_mask,
                                       bool use_positions) const {
    namespace o = ad::ops;
    require_real_chunk(chunk_mask);
    std::vector<ad::NodePtr<T>> rows;
    rows.reserve(chunk_vecs.size() + 1);
    rows.push_back(params_.get("agg.doc_token"));
    for (size_t i = 0; i < chunk_vecs.size(); ++i) {
      if (use_positions && chunk_mask[i]) {
        rows.push_back(o::add(chunk_vecs[i],
                              o::pick_row(params_.get("agg.pos_emb"),
                                          static_cast<int64_t>(i))));
      } else {
        rows.push_back(chunk_vecs[i]);
      }
    }
    std::vector<int> seq_mask{1};
    seq_mask.insert(seq_mask.end(), chunk_mask.begin(), chunk_mask.end());
    // Same unit-scale normalization as the word level: the doc token and the
    // position offsets start tiny next to the O(1) pooled chunk vectors.
    auto x = o::layer_norm_lastdim(o::concat_rows(rows), params_.get("agg.emb_ln_g"),
                                   params_.get("agg.emb_ln_b"),
                                   static_cast<T>(kLayerNormEps));
    auto bias = attention_mask_bias<T>(seq_mask);
    for (int l = 0; l < cfg_.agg_layers; ++l)
      x = encoder_layer(x, bias, layer_params("agg.l" + std::to_string(l)), cfg_.agg_heads);
    return o::pick_row(x, 0);
  }

  ad::NodePtr<T> lstm_aggregate(const std::vector<ad::NodePtr<T>>& chunk_vecs,
                                const std::vector<int>& chunk_mask) const {
    namespace o = ad::ops;
    require_real_chunk(chunk_mask);
    int64_t hidden = cfg_.hidden;
    auto wx = params_.get("agg.lstm_wx");
    auto wh = params_.get("agg.lstm_wh");
    auto b = params_.get("agg.lstm_b");
    auto h = ad::make_leaf<T>({1, hidden}, std::vector<T>(static_cast<size_t>(hidden), T(0)));
    auto c = h;
    for (size_t t = 0; t < chunk_vecs.size(); ++t) {
      if (!chunk_mask[t]) continue;
      auto xr = o::concat_rows<T>({chunk_vecs[t]});  // [1 x H]
      auto gates = o::bias_add(o::add(o::matmul(xr, wx), o::matmul(h, wh)), b);
      auto ig = o::sigmoid(o::slice_cols(gates, 0, hidden));
      auto fg = o::sigmoid(o::slice_cols(gates, hidden, 2 * hidden));
      auto gg = o::tanh_(o::slice_cols(gates, 2 * hidden, 3 * hidden));
      auto og = o::sigmoid(o::slice_cols(gates, 3 * hidden, 4 * hidden));
      c = o::add(o::mul(fg, c), o::mul(ig, gg));
      h = o::mul(og, o::tanh_(c));
    }
    auto out = ad::ops::pick_row(h, 0);
    return out;
  }

  ad::NodePtr<T> cnn_aggregate(const std::vector<ad::NodePtr<T>>& chunk_vecs,
                               const std::vector<int>& chunk_mask) const {
    namespace o = ad::ops;
    require_real_chunk(chunk_mask);
    auto x = o::concat_rows(chunk_vecs);
    // zero out masked chunk rows so same-padding and PAD chunks coincide
    int64_t tr = x->rows(), hc = x->cols();
    std::vector<T> m(static_cast<size_t>(tr * hc));
    for (int64_t t = 0; t < tr; ++t)
      for (int64_t j = 0; j < hc; ++j)
        m[static_cast<size_t>(t * hc + j)] = chunk_mask[static_cast<size_t>(t)] ? T(1) : T(0);
    x = o::mul(x, ad::make_leaf<T>({tr, hc}, std::move(m)));
    auto conv = o::conv1d_same(x, params_.get("agg.conv_w"), params_.get("agg.conv_b"));
    return o::masked_max_rows(o::relu(conv), chunk_mask);
  }

  ad::NodePtr<T> mean_aggregate(const std::vector<ad::NodePtr<T>>& chunk_vecs,
                                const std::vector<int>& chunk_mask) const {
    require_real_chunk(chunk_mask);
    return ad::ops::masked_mean_rows(ad::ops::concat_rows(chunk_vecs), chunk_mask);
  }

  ad::NodePtr<T> aggregate(const std::vector<ad::NodePtr<T>>& chunk_vecs,
                           const std::vector<int>& chunk_mask) const {
    switch (cfg_.aggregator) {
      case AggregatorKind::Transformer: return transformer_aggregate(chunk_vecs, chunk_mask, false);
      case AggregatorKind::TransformerPos: return transformer_aggregate(chunk_vecs, chunk_mask, true);
      case AggregatorKind::Lstm: return lstm_aggregate(chunk_vecs, chunk_mask);
      case AggregatorKind::Cnn: return cnn_aggregate(chunk_vecs, chunk_mask);
      case AggregatorKind::Mean: return mean_aggregate(chunk_vecs, chunk_mask);
    }
    throw std::runtime_error("aggregate: bad kind");
  }

  ad::NodePtr<T> classify(const ad::NodePtr<T>& doc_vec) const {
    namespace o = ad::ops;
    auto logits = o::bias_add(o::matmul(o::concat_rows<T>({doc_vec}), params_.get("head.w")),
                              params_.get("head.b"));
    return o::pick_row(logits, 0);
  }

  // Training-time dropout on chunk and document vectors; 0 disables it and
  // keeps runs fully deterministic.
  void set_dropout(double rate, uint64_t seed) {
    dropout_rate_ = rate;
    dropout_rng_ = Rng::stream(seed, 21);
  }

  // Full forward pass: logits for one chunked document.
  ad::NodePtr<T> forward(const ChunkedDocument& doc) const {
    std::vector<ad::NodePtr<T>> chunk_vecs;
    chunk_vecs.reserve(static_cast<size_t>(doc.n_chunks));
    for (int c = 0; c < doc.n_chunks; ++c) {
      std::vector<int> mask(doc.row_mask(c), doc.row_mask(c) + doc.row_len);
      auto layers = encode_chunk(doc.row_ids(c), doc.row_mask(c), doc.row_len);
      auto vec = pool_chunk(layers, mask);
      if (dropout_rate_ > 0) vec = ad::ops::dropout(vec, dropout_rate_, dropout_rng_);
      chunk_vecs.push_back(vec);
    }
    std::vector<int> chunk_mask(static_cast<size_t>(doc.n_chunks), 1);
    auto doc_vec = aggregate(chunk_vecs, chunk_mask);
    if (dropout_rate_ > 0) doc_vec = ad::ops::dropout(doc_vec, dropout_rate_, dropout_rng_);
    return classify(doc_vec);
  }

  // Inference: predicted class and softmax probabilities.
  std::pair<int, std::vector<double>> predict(const ChunkedDocument& doc) const {
    auto logits = forward(doc);
    std::vector<double> probs(logits->value.size());
    double m = static_cast<double>(logits->value[0]);
    for (auto v : logits->value) m = std::max(m, static_cast<double>(v));
    double sum = 0;
    for (size_t i = 0; i < probs.size(); ++i) {
      probs[i] = std::exp(static_cast<double>(logits->value[i]) - m);
      sum += probs[i];
    }
    int best = 0;
    for (size_t i = 0; i < probs.size(); ++i) {
      probs[i] /= sum;
      if (probs[i] > probs[static_cast<size_t>(best)]) best = static_cast<int>(i);
    }
    return {best, probs};
  }

 private:
  static void require_real_chunk(const std::vector<int>& chunk_mask) {
    for (int m : chunk_mask)
      if (m) return;
    throw std::runtime_error("aggregate: all chunks masked");
  }

  void add_encoder_layer_params(const std::string& prefix, int ff) {
    int64_t h = cfg_.hidden;
    params_.add(prefix + ".wq", {h, h});
    params_.add(prefix + ".bq", {h});
    params_.add(prefix + ".wk", {h, h});
    params_.add(prefix + ".bk", {h});
    params_.add(prefix + ".wv", {h, h});
    params_.add(prefix + ".bv", {h});
    params_.add(prefix + ".wo", {h, h});
    params_.add(prefix + ".bo", {h});
    params_.add(prefix + ".ln1_g", {h});
    params_.add(prefix + ".ln1_b", {h});
    params_.add(prefix + ".w1", {h, ff});
    params_.add(prefix + ".b1", {ff});
    params_.add(prefix + ".w2", {ff, h});
    params_.add(prefix + ".b2", {h});
    params_.add(prefix + ".ln2_g", {h});
    params_.add(prefix + ".ln2_b", {h});
  }

  EncoderLayerParams<T> layer_params(const std::string& prefix) const {
    EncoderLayerParams<T> p;
    p.wq = params_.get(prefix + ".wq");
    p.bq = params_.get(prefix + ".bq");
    p.wk = params_.get(prefix + ".wk");
    p.bk = params_.get(prefix + ".bk");
    p.wv = params_.get(prefix + ".wv");
    p.bv = params_.get(prefix + ".bv");
    p.wo = params_.get(prefix + ".wo");
    p.bo = params_.get(prefix + ".bo");
    p.ln1_g = params_.get(prefix + ".ln1_g");
    p.ln1_b = params_.get(prefix + ".ln1_b");
    p.w1 = params_.get(prefix + ".w1");
    p.b1 = params_.get(prefix + ".b1");
    p.w2 = params_.get(prefix + ".w2");
    p.b2 = params_.get(prefix + ".b2");
    p.ln2_g = params_.get(prefix + ".ln2_g");
    p.ln2_b = params_.get(prefix + ".ln2_b");
    return p;
  }

  void build_params() {
    int64_t h = cfg_.hidden;
    params_.add("word.tok_emb", {cfg_.vocab_size, h});
    params_.add("word.pos_emb", {cfg_.max_positions, h});
    params_.add("word.emb_ln_g", {h});
    params_.add("word.emb_ln_b", {h});
    for (int l = 0; l < cfg_.n_layers; ++l)
      add_encoder_layer_params("word.l" + std::to_string(l), cfg_.ff_inner);
    params_.add("pool.layer_weights", {cfg_.n_layers});
    switch (cfg_.aggregator) {
      case AggregatorKind::TransformerPos:
        params_.add("agg.pos_emb", {cfg_.max_chunks + 1, h});
        [[fallthrough]];
      case AggregatorKind::Transformer:
        params_.add("agg.doc_token", {h});
        params_.add("agg.emb_ln_g", {h});
        params_.add("agg.emb_ln_b", {h});
        for (int l = 0; l < cfg_.agg_layers; ++l)
          add_encoder_layer_params("agg.l" + std::to_string(l), cfg_.agg_ff);
        break;
      case AggregatorKind::Lstm:
        params_.add("agg.lstm_wx", {h, 4 * h});
        params_.add("agg.lstm_wh", {h, 4 * h});
        params_.add("agg.lstm_b", {4 * h});
        break;
      case AggregatorKind::Cnn:
        params_.add("agg.conv_w", {3, h, h});
        params_.add("agg.conv_b", {h});
        break;
      case AggregatorKind::Mean:
        break;
    }
    params_.add("head.w", {h, cfg_.n_class});
    params_.add("head.b", {cfg_.n_class});
  }

  ModelConfig cfg_;
  ParamSet<T> params_;
  double dropout_rate_ = 0;
  mutable Rng dropout_rng_{0};
};

}  // namespace chunkstack
