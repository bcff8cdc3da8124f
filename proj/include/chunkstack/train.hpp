#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "chunkstack/checkpoint.hpp"
#include "chunkstack/data.hpp"
#include "chunkstack/metrics.hpp"
#include "chunkstack/model.hpp"
#include "chunkstack/rng.hpp"
#include "chunkstack/tokenizer.hpp"

namespace chunkstack {

enum class TrainMode { FineTune, FeatureExtract };

inline std::string to_string(TrainMode m) {
  return m == TrainMode::FineTune ? "finetune" : "frozen";
}
inline TrainMode train_mode_from_string(const std::string& s) {
  if (s == "finetune") return TrainMode::FineTune;
  if (s == "frozen") return TrainMode::FeatureExtract;
  throw std::runtime_error("unknown mode '" + s + "' (expected finetune|frozen)");
}

struct TrainConfig {
  double lr = 3e-5;
  int batch_size = 16;
  int grad_accum_steps = 2;
  int epochs = 40;
  int warmup_steps = 150;
  TrainMode mode = TrainMode::FineTune;
  uint64_t seed = 1;
  double dropout = 0.0;
  bool linear_decay = false;  // decay to zero after warmup instead of holding
  int64_t total_steps = 0;    // required when linear_decay is set

  void validate() const {
    if (lr <= 0) throw std::runtime_error("train config: lr must be positive");
    if (batch_size < 1 || grad_accum_steps < 1 || epochs < 1 || warmup_steps < 1)
      throw std::runtime_error("train config: counts must be >= 1");
    if (linear_decay && total_steps <= warmup_steps)
      throw std::runtime_error("train config: linear decay needs total_steps > warmup_steps");
  }
};

// Linear warmup to lr over warmup_steps, then constant (or an optional
// linear decay to zero). step is 1-based.
inline double lr_schedule(int64_t step, const TrainConfig& cfg) {
  if (step < 1) throw std::runtime_error("lr_schedule: step must be >= 1");
  if (step < cfg.warmup_steps)
    return cfg.lr * static_cast<double>(step) / cfg.warmup_steps;
  if (!cfg.linear_decay || cfg.total_steps <= cfg.warmup_steps) return cfg.lr;
  double frac = static_cast<double>(cfg.total_steps - step) /
                static_cast<double>(cfg.total_steps - cfg.warmup_steps);
  return cfg.lr * std::max(0.0, frac);
}

// One Adam update on a flat parameter vector with bias correction.
// t is the 1-based step count after this update.
template <typename T>
void adam_update(std::vector<T>& theta, const std::vector<T>& grad, std::vector<T>& m,
                 std::vector<T>& v, int64_t t, double lr, double grad_scale = 1.0,
                 double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8) {
  if (theta.size() != grad.size() || m.size() != theta.size() || v.size() != theta.size())
    throw std::runtime_error("adam: shape mismatch");
  double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
  double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
  for (size_t i = 0; i < theta.size(); ++i) {
    double g = static_cast<double>(grad[i]) * grad_scale;
    if (!std::isfinite(g)) throw std::runtime_error("adam: non-finite gradient");
    double mi = beta1 * static_cast<double>(m[i]) + (1.0 - beta1) * g;
    double vi = beta2 * static_cast<double>(v[i]) + (1.0 - beta2) * g * g;
    m[i] = static_cast<T>(mi);
    v[i] = static_cast<T>(vi);
    double mhat = mi / bc1;
    double vhat = vi / bc2;
    theta[i] -= static_cast<T>(lr * mhat / (std::sqrt(vhat) + eps));
  }
}

template <typename T>
class Adam {
 public:
  explicit Adam(const std::vector<std::pair<std::string, ad::NodePtr<T>>>& params) {
    for (const auto& [name, p] : params) {
      m_.emplace_back(p->value.size(), T(0));
      v_.emplace_back(p->value.size(), T(0));
    }
  }

  void step(const std::vector<std::pair<std::string, ad::NodePtr<T>>>& params, double lr,
            double grad_scale) {
    ++t_;
    for (size_t i = 0; i < params.size(); ++i) {
      auto& p = *params[i].second;
      ad::ensure_grad(p);
      adam_update(p.value, p.grad, m_[i], v_[i], t_, lr, grad_scale);
    }
  }

  int64_t steps_taken() const { return t_; }

 private:
  int64_t t_ = 0;
  std::vector<std::vector<T>> m_, v_;
};

// Down-sample every class to the minority count, without replacement, then
// shuffle. Deterministic under seed (stream 3).
inline std::vector<Record> downsample_balance(const std::vector<Record>& records,
                                              uint64_t seed, int n_class = 2) {
  std::map<int, std::vector<size_t>> by_class;
  for (size_t i = 0; i < records.size(); ++i) by_class[records[i].label].push_back(i);
  for (int c = 0; c < n_class; ++c)
    if (!by_class.count(c))
      throw std::runtime_error("downsample_balance: class " + std::to_string(c) +
                               " absent from corpus");
  size_t minority = records.size();
  for (auto& [c, idx] : by_class) minority = std::min(minority, idx.size());
  Rng rng = Rng::stream(seed, 3);
  std::vector<size_t> keep;
  for (auto& [c, idx] : by_class) {
    auto pool = idx;
    rng.shuffle(pool);
    keep.insert(keep.end(), pool.begin(), pool.begin() + static_cast<long>(minority));
  }
  rng.shuffle(keep);
  std::vector<Record> out;
  out.reserve(keep.size());
  for (size_t i : keep) out.push_back(records[i]);
  return out;
}

struct TrainLogEntry {
  int64_t step;
  double lr;
  double loss;
};

struct TrainResult {
  std::vector<TrainLogEntry> log;
  double final_loss = 0;
};

template <typename T>
ChunkedDocument prepare_doc(const Record& rec, const Vocabulary& vocab, const ModelConfig& mc) {
  return chunk(encode(rec.text, vocab), mc.content_len, mc.max_chunks);
}

// Mean cross-entropy over a micro-batch of prepared documents.
template <typename T>
ad::NodePtr<T> batch_loss(const HierModel<T>& model, const std::vector<ChunkedDocument>& docs,
                          const std::vector<int>& labels, const std::vector<size_t>& which) {
  namespace o = ad::ops;
  ad::NodePtr<T> total;
  for (size_t i : which) {
    auto loss = o::cross_entropy(model.forward(docs[i]), labels[i]);
    total = total ? o::add(total, loss) : loss;
  }
  return o::scale_by(total, static_cast<T>(1.0 / static_cast<double>(which.size())));
}

// Mini-batch Adam training with gradient accumulation. The model must be
// initialized by the caller. Per-epoch shuffling uses seed stream 1.
template <typename T>
TrainResult train(HierModel<T>& model, const std::vector<Record>& records,
                  const Vocabulary& vocab, const TrainConfig& tc) {
  tc.validate();
  if (records.empty()) throw std::runtime_error("train: empty corpus");
  const ModelConfig& mc = model.config();
  std::vector<ChunkedDocument> docs;
  std::vector<int> labels;
  docs.reserve(records.size());
  for (const auto& rec : records) {
    if (rec.label < 0 || rec.label >= mc.n_class)
      throw std::runtime_error("train: label out of range for record " + rec.id);
    docs.push_back(prepare_doc<T>(rec, vocab, mc));
    labels.push_back(rec.label);
  }

  bool frozen = tc.mode == TrainMode::FeatureExtract;
  model.set_word_encoder_frozen(frozen);
  model.set_dropout(tc.dropout, tc.seed);
  auto trainables = model.trainable_params(frozen);
  Adam<T> opt(trainables);
  Rng shuffle_rng = Rng::stream(tc.seed, 1);

  TrainResult result;
  int64_t step = 0;
  std::vector<size_t> order(records.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 0; epoch < tc.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    size_t cursor = 0;
    while (cursor < order.size()) {
      model.zero_grad();
      int micros = 0;
      double loss_sum = 0;
      for (int a = 0; a < tc.grad_accum_steps && cursor < order.size(); ++a) {
        std::vector<size_t> which;
        for (int b = 0; b < tc.batch_size && cursor < order.size(); ++b)
          which.push_back(order[cursor++]);
        auto loss = batch_loss(model, docs, labels, which);
        double lv = static_cast<double>(loss->value[0]);
        if (!std::isfinite(lv))
          throw std::runtime_error("train: non-finite loss at step " + std::to_string(step + 1));
        ad::backward(loss);
        loss_sum += lv;
        ++micros;
      }
      ++step;
      double lr = lr_schedule(step, tc);
      opt.step(trainables, lr, 1.0 / micros);
      result.log.push_back({step, lr, loss_sum / micros});
    }
  }
  model.set_dropout(0.0, tc.seed);
  model.set_word_encoder_frozen(false);
  if (!result.log.empty()) result.final_loss = result.log.back().loss;
  return result;
}

// Inference over a corpus; positive-class probability is the AUC score for
// binary tasks.
template <typename T>
EvalReport evaluate(const HierModel<T>& model, const std::vector<Record>& records,
                    const Vocabulary& vocab) {
  if (records.empty()) throw std::runtime_error("evaluate: empty corpus");
  const ModelConfig& mc = model.config();
  std::vector<int> gold, pred;
  std::vector<double> scores;
  for (const auto& rec : records) {
    if (rec.label < 0 || rec.label >= mc.n_class)
      throw std::runtime_error("evaluate: label out of range for record " + rec.id);
    auto doc = prepare_doc<T>(rec, vocab, mc);
    auto [label, probs] = model.predict(doc);
    gold.push_back(rec.label);
    pred.push_back(label);
    if (mc.n_class == 2) scores.push_back(probs[1]);
  }
  return make_report(gold, pred, mc.n_class, scores);
}

template <typename T>
std::vector<NamedTensor> model_to_tensors(const HierModel<T>& model) {
  std::vector<NamedTensor> out;
  for (const auto& [name, p] : model.params().items)
    out.push_back(pack_tensor(name, p->shape, p->value));
  return out;
}

template <typename T>
void load_model_params(HierModel<T>& model, const std::vector<NamedTensor>& tensors) {
  if (tensors.size() != model.params().items.size())
    throw std::runtime_error("checkpoint: tensor count does not match model");
  for (size_t i = 0; i < tensors.size(); ++i) {
    auto& [name, p] = model.params().items[i];
    if (tensors[i].name != name)
      throw std::runtime_error("checkpoint: expected tensor '" + name + "', found '" +
                               tensors[i].name + "'");
    auto vals = unpack_tensor<T>(tensors[i]);
    if (vals.size() != p->value.size())
      throw std::runtime_error("checkpoint: shape mismatch for '" + name + "'");
    p->value = std::move(vals);
  }
}

}  // namespace chunkstack
