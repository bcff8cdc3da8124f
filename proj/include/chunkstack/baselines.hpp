#pragma once

#include <string>
#include <vector>

#include "chunkstack/train.hpp"

namespace chunkstack {

// Unigram logistic baseline over term-frequency vectors, standing in for the
// linear SVM comparators. L2-regularized, trained with the same Adam.
struct BowConfig {
  size_t vocab_target = 4096;
  double lr = 0.05;
  int epochs = 30;
  int batch_size = 32;
  double l2 = 1e-4;
  int n_class = 2;
  uint64_t seed = 1;
};

template <typename T>
EvalReport bow_baseline(const std::vector<Record>& train_set,
                        const std::vector<Record>& test_set, const BowConfig& cfg) {
  namespace o = ad::ops;
  if (train_set.empty() || test_set.empty())
    throw std::runtime_error("bow_baseline: empty corpus");
  Vocabulary vocab = build_vocab(train_set, cfg.vocab_target);
  int64_t v = static_cast<int64_t>(vocab.size());

  auto featurize = [&](const Record& rec) {
    std::vector<T> counts(static_cast<size_t>(v), T(0));
    for (int id : encode(rec.text, vocab)) counts[static_cast<size_t>(id)] += T(1);
    return counts;
  };
  std::vector<std::vector<T>> feats_train, feats_test;
  for (const auto& r : train_set) feats_train.push_back(featurize(r));
  for (const auto& r : test_set) feats_test.push_back(featurize(r));

  auto w = ad::make_leaf<T>({v, cfg.n_class},
                            std::vector<T>(static_cast<size_t>(v * cfg.n_class), T(0)), true);
  auto b = ad::make_leaf<T>({cfg.n_class},
                            std::vector<T>(static_cast<size_t>(cfg.n_class), T(0)), true);
  std::vector<std::pair<std::string, ad::NodePtr<T>>> params{{"bow.w", w}, {"bow.b", b}};
  Adam<T> opt(params);
  Rng shuffle_rng = Rng::stream(cfg.seed, 1);

  auto logits_for = [&](const std::vector<T>& feat) {
    auto x = ad::make_leaf<T>({1, v}, feat);
    return o::pick_row(o::bias_add(o::matmul(x, w), b), 0);
  };

  std::vector<size_t> order(train_set.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    size_t cursor = 0;
    while (cursor < order.size()) {
      w->grad.assign(w->value.size(), T(0));
      b->grad.assign(b->value.size(), T(0));
      ad::NodePtr<T> total;
      int n = 0;
      for (int k = 0; k < cfg.batch_size && cursor < order.size(); ++k, ++n) {
        size_t i = order[cursor++];
        auto loss = o::cross_entropy(logits_for(feats_train[i]), train_set[i].label);
        total = total ? o::add(total, loss) : loss;
      }
      auto loss = o::scale_by(total, static_cast<T>(1.0 / n));
      ad::backward(loss);
      for (size_t i = 0; i < w->value.size(); ++i)
        w->grad[i] += static_cast<T>(cfg.l2) * w->value[i];
      opt.step(params, cfg.lr, 1.0);
    }
  }

  std::vector<int> gold, pred;
  std::vector<double> scores;
  for (size_t i = 0; i < test_set.size(); ++i) {
    auto logits = logits_for(feats_test[i]);
    int best = 0;
    for (int c = 1; c < cfg.n_class; ++c)
      if (logits->value[c] > logits->value[best]) best = c;
    gold.push_back(test_set[i].label);
    pred.push_back(best);
    if (cfg.n_class == 2) {
      double z0 = static_cast<double>(logits->value[0]);
      double z1 = static_cast<double>(logits->value[1]);
      double m = std::max(z0, z1);
      double p1 = std::exp(z1 - m) / (std::exp(z0 - m) + std::exp(z1 - m));
      scores.push_back(p1);
    }
  }
  return make_report(gold, pred, cfg.n_class, scores);
}

// The same hierarchical model restricted to the first chunk (max_chunks = 1),
// trained and evaluated identically.
template <typename T>
EvalReport truncation_baseline(const std::vector<Record>& train_set,
                               const std::vector<Record>& test_set, ModelConfig mc,
                               const TrainConfig& tc, const Vocabulary& vocab) {
  mc.max_chunks = 1;
  HierModel<T> model(mc);
  Rng init_rng = Rng::stream(tc.seed, 2);
  model.init(init_rng);
  train(model, train_set, vocab, tc);
  return evaluate(model, test_set, vocab);
}

}  // namespace chunkstack
