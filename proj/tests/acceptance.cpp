// Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on any
// hard failure. Criterion 8 is report-only unless the expected ordering is
// inverted by a wide margin.
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <map>
#include <string>
#include <vector>

#include "chunkstack/baselines.hpp"
#include "chunkstack/data.hpp"
#include "chunkstack/gradcheck.hpp"
#include "chunkstack/metrics.hpp"
#include "chunkstack/model.hpp"
#include "chunkstack/rng.hpp"
#include "chunkstack/runner.hpp"
#include "chunkstack/train.hpp"
#include "json.hpp"

using namespace chunkstack;
namespace o = ad::ops;

namespace {

int g_failures = 0;

void report(int criterion, bool pass, const std::string& detail) {
  std::printf("CRITERION %d %s — %s\n", criterion, pass ? "PASS" : "FAIL", detail.c_str());
  std::fflush(stdout);
  if (!pass) ++g_failures;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, ...) {
  char buf[512];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof(buf), f, ap);
  va_end(ap);
  return buf;
}

double max_abs_diff(const ad::NodePtr<double>& a, const ad::NodePtr<double>& b) {
  double d = 0;
  for (size_t i = 0; i < a->value.size(); ++i)
    d = std::max(d, std::abs(a->value[i] - b->value[i]));
  return d;
}

// --- criterion 1: full-model gradient check, tiny config ---------------------

void criterion_1() {
  auto t0 = std::chrono::steady_clock::now();
  try {
    auto rep = nlohmann::json::parse(run::gradcheck_run("f64", true));
    double max_rel = rep.at("max_rel_err").get<double>();
    double secs = seconds_since(t0);
    bool pass = max_rel <= 1e-4 && secs < 60.0;
    report(1, pass, fmt("gradient check max_rel_err=%.3g (tol 1e-4), %d elements, %.1fs",
                        max_rel, static_cast<int>(rep.at("n_checked").get<int64_t>()), secs));
  } catch (const std::exception& e) {
    report(1, false, std::string("exception: ") + e.what());
  }
}

// --- criterion 2: pooling and aggregator invariants ---------------------------

ModelConfig inv_config(AggregatorKind kind, WordPool pool) {
  ModelConfig mc;
  mc.vocab_size = 12;
  mc.n_layers = 2;
  mc.hidden = 8;
  mc.ff_inner = 16;
  mc.n_heads = 2;
  mc.max_positions = 9;
  mc.content_len = 8;
  mc.max_chunks = 5;
  mc.word_pool = pool;
  mc.aggregator = kind;
  mc.agg_layers = 1;
  mc.agg_heads = 2;
  mc.agg_ff = 16;
  return mc;
}

std::vector<ad::NodePtr<double>> random_chunks(int n, uint64_t seed) {
  Rng rng = Rng::stream(seed, 6);
  std::vector<ad::NodePtr<double>> out;
  for (int i = 0; i < n; ++i) {
    std::vector<double> v(8);
    for (auto& x : v) x = rng.next_normal(0.0, 1.0);
    out.push_back(ad::make_leaf<double>({8}, std::move(v)));
  }
  return out;
}

void criterion_2() {
  try {
    std::vector<std::string> problems;

    // cls pooling is bitwise row 0 of the final layer
    {
      HierModel<double> m(inv_config(AggregatorKind::Mean, WordPool::Cls));
      Rng rng = Rng::stream(3, 2);
      m.init(rng);
      std::vector<int> ids{kClsId, 3, 9, 5, kPadId};
      std::vector<int> mask{1, 1, 1, 1, 0};
      auto outs = m.encode_chunk(ids.data(), mask.data(), 5);
      auto pooled = m.cls_pool(outs);
      for (int j = 0; j < 8; ++j)
        if (pooled->value[static_cast<size_t>(j)] != outs.back()->value[static_cast<size_t>(j)])
          problems.push_back("cls_pool not bitwise row 0");
    }

    // one-hot layer weights reduce wsum to that layer's masked mean
    {
      HierModel<double> m(inv_config(AggregatorKind::Mean, WordPool::WeightedSum));
      Rng rng = Rng::stream(5, 2);
      m.init(rng);
      std::vector<int> ids{kClsId, 3, 9, 5, kPadId};
      std::vector<int> mask{1, 1, 1, 1, 0};
      auto lw = m.params().get("pool.layer_weights");
      for (int hot = 0; hot < 2; ++hot) {
        lw->value[0] = hot == 0 ? 1.0 : 0.0;
        lw->value[1] = hot == 1 ? 1.0 : 0.0;
        auto outs = m.encode_chunk(ids.data(), mask.data(), 5);
        auto got = m.weighted_sum_pool(outs, mask);
        auto want = o::masked_mean_rows(outs[static_cast<size_t>(hot)], mask);
        if (max_abs_diff(got, want) > 1e-12) problems.push_back("one-hot wsum > 1e-12");
      }
    }

    // permutation invariance: mean and position-free transformer
    {
      auto chunks = random_chunks(4, 17);
      std::vector<ad::NodePtr<double>> perm{chunks[2], chunks[0], chunks[3], chunks[1]};
      std::vector<int> mask{1, 1, 1, 1};
      HierModel<double> mm(inv_config(AggregatorKind::Mean, WordPool::Cls));
      HierModel<double> tm(inv_config(AggregatorKind::Transformer, WordPool::Cls));
      Rng r1 = Rng::stream(7, 2), r2 = Rng::stream(9, 2);
      mm.init(r1);
      tm.init(r2);
      if (max_abs_diff(mm.mean_aggregate(chunks, mask), mm.mean_aggregate(perm, mask)) > 1e-8)
        problems.push_back("mean not permutation invariant");
      if (max_abs_diff(tm.transformer_aggregate(chunks, mask, false),
                       tm.transformer_aggregate(perm, mask, false)) > 1e-8)
        problems.push_back("position-free transformer not permutation invariant");
    }

    // appending a masked PAD chunk changes nothing, for all four aggregators
    {
      auto chunks = random_chunks(3, 23);
      std::vector<int> mask{1, 1, 1};
      Rng pr = Rng::stream(99, 6);
      std::vector<double> junk(8);
      for (auto& x : junk) x = pr.next_normal(0.0, 1.0);
      auto padded = chunks;
      padded.push_back(ad::make_leaf<double>({8}, std::move(junk)));
      std::vector<int> pmask{1, 1, 1, 0};
      for (auto kind : {AggregatorKind::TransformerPos, AggregatorKind::Lstm,
                        AggregatorKind::Cnn, AggregatorKind::Mean}) {
        HierModel<double> m(inv_config(kind, WordPool::Cls));
        Rng rng = Rng::stream(11, 2);
        m.init(rng);
        double d = max_abs_diff(m.aggregate(chunks, mask), m.aggregate(padded, pmask));
        if (d > 1e-8)
          problems.push_back("PAD-append changed " + to_string(kind) + " by " +
                             std::to_string(d));
      }
    }

    if (problems.empty()) {
      report(2, true, "cls bitwise, one-hot wsum <=1e-12, permutation and PAD-append "
                      "invariance <=1e-8 across aggregators");
    } else {
      std::string msg;
      for (const auto& p : problems) msg += (msg.empty() ? "" : "; ") + p;
      report(2, false, msg);
    }
  } catch (const std::exception& e) {
    report(2, false, std::string("exception: ") + e.what());
  }
}

// --- shared toy corpus for 3, 9, 10 ------------------------------------------

std::vector<Record> toy_corpus() {
  return {
      {"p0", "alpha beta gamma alpha", 1}, {"p1", "alpha alpha delta beta", 1},
      {"p2", "alpha gamma gamma beta", 1}, {"p3", "alpha delta beta beta", 1},
      {"n0", "omega beta gamma delta", 0}, {"n1", "omega omega delta beta", 0},
      {"n2", "omega gamma gamma beta", 0}, {"n3", "omega delta beta beta", 0},
  };
}

ModelConfig toy_model_config(const Vocabulary& vocab) {
  ModelConfig mc;
  mc.vocab_size = static_cast<int>(vocab.size());
  mc.n_layers = 2;
  mc.hidden = 8;
  mc.ff_inner = 16;
  mc.n_heads = 2;
  mc.max_positions = 9;
  mc.content_len = 8;
  mc.max_chunks = 4;
  mc.word_pool = WordPool::WeightedSum;
  mc.aggregator = AggregatorKind::Mean;
  return mc;
}

// --- criterion 3: frozen word encoder ----------------------------------------

void criterion_3() {
  try {
    auto corpus = toy_corpus();
    auto vocab = build_vocab(corpus, 32);
    HierModel<float> model(toy_model_config(vocab));
    Rng init_rng = Rng::stream(7, 2);
    model.init(init_rng);
    std::map<std::string, std::vector<float>> before;
    for (const auto& [name, p] : model.params().items) before[name] = p->value;

    TrainConfig tc;
    tc.lr = 1e-3;
    tc.batch_size = 8;
    tc.grad_accum_steps = 1;
    tc.epochs = 10;  // exactly 10 optimizer steps
    tc.warmup_steps = 2;
    tc.mode = TrainMode::FeatureExtract;
    tc.seed = 7;
    auto result = train(model, corpus, vocab, tc);

    bool word_frozen = true, head_moved = false;
    for (const auto& [name, p] : model.params().items) {
      bool is_word = name.rfind("word.", 0) == 0;
      for (size_t i = 0; i < p->value.size(); ++i) {
        if (is_word && p->value[i] != before[name][i]) word_frozen = false;
        if (name == "head.w" && p->value[i] != before[name][i]) head_moved = true;
      }
    }
    bool pass = word_frozen && head_moved && result.log.size() == 10;
    report(3, pass, fmt("10 frozen steps: word encoder bitwise unchanged=%s, head moved=%s",
                        word_frozen ? "yes" : "no", head_moved ? "yes" : "no"));
  } catch (const std::exception& e) {
    report(3, false, std::string("exception: ") + e.what());
  }
}

// --- criterion 4: metric oracles ----------------------------------------------

double oracle_macro_f1(const std::vector<int>& gold, const std::vector<int>& pred, int n_class) {
  double sum = 0;
  int counted = 0;
  for (int c = 0; c < n_class; ++c) {
    long tp = 0, fp = 0, fn = 0, support = 0;
    for (size_t i = 0; i < gold.size(); ++i) {
      support += (gold[i] == c);
      tp += (gold[i] == c && pred[i] == c);
      fp += (gold[i] != c && pred[i] == c);
      fn += (gold[i] == c && pred[i] != c);
    }
    if (support == 0) continue;
    double p = (tp + fp) ? static_cast<double>(tp) / (tp + fp) : 0.0;
    double r = (tp + fn) ? static_cast<double>(tp) / (tp + fn) : 0.0;
    sum += (p + r > 0) ? 2 * p * r / (p + r) : 0.0;
    ++counted;
  }
  return sum / counted;
}

double oracle_auc(const std::vector<int>& gold, const std::vector<double>& scores) {
  double wins = 0;
  long pairs = 0;
  for (size_t i = 0; i < gold.size(); ++i) {
    if (gold[i] != 1) continue;
    for (size_t j = 0; j < gold.size(); ++j) {
      if (gold[j] != 0) continue;
      ++pairs;
      if (scores[i] > scores[j]) wins += 1.0;
      else if (scores[i] == scores[j]) wins += 0.5;
    }
  }
  return wins / pairs;
}

void criterion_4() {
  try {
    double worst = 0;
    Rng rng = Rng::stream(2024, 4);
    for (int it = 0; it < 200; ++it) {
      int n = 2 + static_cast<int>(rng.next_below(40));
      int n_class = 2 + static_cast<int>(rng.next_below(3));
      std::vector<int> gold(n), pred(n);
      for (int i = 0; i < n; ++i) {
        gold[i] = static_cast<int>(rng.next_below(static_cast<uint64_t>(n_class)));
        pred[i] = static_cast<int>(rng.next_below(static_cast<uint64_t>(n_class)));
      }
      gold[0] = 0;
      worst = std::max(worst, std::abs(macro_f1(gold, pred, n_class) -
                                       oracle_macro_f1(gold, pred, n_class)));
      std::vector<int> bg(n);
      std::vector<double> scores(n);
      bool has0 = false, has1 = false;
      for (int i = 0; i < n; ++i) {
        bg[i] = static_cast<int>(rng.next_below(2));
        scores[i] = static_cast<double>(rng.next_below(7)) / 6.0;
        has0 |= bg[i] == 0;
        has1 |= bg[i] == 1;
      }
      if (!has0) bg[0] = 0;
      if (!has1) bg[n - 1] = 1;
      worst = std::max(worst, std::abs(auc_roc(bg, scores) - oracle_auc(bg, scores)));
    }
    double worked_f1 = macro_f1({0, 0, 1, 1}, {0, 1, 1, 1}, 2);
    double worked_auc = auc_roc({1, 0, 1, 0}, {0.9, 0.8, 0.3, 0.1});
    bool pass = worst <= 1e-12 && std::abs(worked_f1 - 11.0 / 15.0) <= 1e-15 &&
                worked_auc == 0.75;
    report(4, pass, fmt("200 random cases, worst |diff| vs oracle = %.3g; worked macro-F1 "
                        "%.6f (want 11/15), AUC %.2f (want 0.75 exact)",
                        worst, worked_f1, worked_auc));
  } catch (const std::exception& e) {
    report(4, false, std::string("exception: ") + e.what());
  }
}

// --- criterion 5: schedule and Adam -------------------------------------------

void criterion_5() {
  try {
    TrainConfig tc;
    tc.lr = 3e-5;
    tc.warmup_steps = 150;
    bool sched_ok = std::abs(lr_schedule(75, tc) - 1.5e-5) <= 1e-20 &&
                    std::abs(lr_schedule(150, tc) - 3e-5) <= 1e-20 &&
                    std::abs(lr_schedule(151, tc) - 3e-5) <= 1e-20;

    // independent scalar Adam
    const double b1 = 0.9, b2 = 0.999, eps = 1e-8, lr = 0.1;
    std::vector<double> grads{0.3, -0.1, 0.2};
    double want = 0.5, m_ref = 0, v_ref = 0;
    for (size_t t = 1; t <= grads.size(); ++t) {
      double g = grads[t - 1];
      m_ref = b1 * m_ref + (1 - b1) * g;
      v_ref = b2 * v_ref + (1 - b2) * g * g;
      want -= lr * (m_ref / (1 - std::pow(b1, static_cast<double>(t)))) /
              (std::sqrt(v_ref / (1 - std::pow(b2, static_cast<double>(t)))) + eps);
    }
    std::vector<double> theta{0.5}, m{0}, v{0};
    for (size_t t = 1; t <= grads.size(); ++t) {
      std::vector<double> g{grads[t - 1]};
      adam_update(theta, g, m, v, static_cast<int64_t>(t), lr);
    }
    double diff = std::abs(theta[0] - want);
    bool pass = sched_ok && diff <= 1e-12;
    report(5, pass, fmt("lr(75)=1.5e-5 lr(150)=lr(151)=3e-5 ok=%s; 3-step Adam vs "
                        "independent impl |diff|=%.3g (tol 1e-12)",
                        sched_ok ? "yes" : "no", diff));
  } catch (const std::exception& e) {
    report(5, false, std::string("exception: ") + e.what());
  }
}

// --- criterion 6: deterministic downsampling ----------------------------------

void criterion_6() {
  try {
    std::vector<Record> records;
    for (int i = 0; i < 361; ++i) records.push_back({"p" + std::to_string(i), "x", 1});
    for (int i = 0; i < 5152; ++i) records.push_back({"n" + std::to_string(i), "x", 0});
    auto a = downsample_balance(records, 42);
    auto b = downsample_balance(records, 42);
    int pos = 0;
    for (const auto& r : a) pos += r.label;
    bool same = a.size() == b.size();
    for (size_t i = 0; same && i < a.size(); ++i) same = a[i].id == b[i].id;
    bool pass = a.size() == 722 && pos == 361 && same;
    report(6, pass, fmt("361 vs 5152 -> %zu records (want 722), %d positives, repeat "
                        "identical=%s",
                        a.size(), pos, same ? "yes" : "no"));
  } catch (const std::exception& e) {
    report(6, false, std::string("exception: ") + e.what());
  }
}

// --- criteria 7 and 8: long-range synthetic experiment ------------------------

struct LongRangeSetup {
  SynthCorpus corpus;
  Vocabulary vocab{std::vector<std::string>{"[PAD]", "[UNK]", "[CLS]", "x"}};
  ModelConfig mc;
  TrainConfig tc;
};

LongRangeSetup longrange_setup() {
  SynthSpec spec;
  spec.n_train = 2000;
  spec.n_test = 500;
  spec.vocab_size = 50;
  spec.doc_len_mean = 248;
  spec.doc_len_jitter = 8;
  spec.content_len = 8;
  spec.signal_offset_tokens = 208;  // chunk-aligned: 26 * 8
  spec.signal_kind = SignalKind::LongRangePair;
  spec.seed = 11;

  LongRangeSetup s;
  s.corpus = synth_generate(spec);
  s.vocab = build_vocab(s.corpus.train, 128);

  s.mc.vocab_size = static_cast<int>(s.vocab.size());
  s.mc.n_layers = 1;
  s.mc.hidden = 32;
  s.mc.ff_inner = 64;
  s.mc.n_heads = 2;
  s.mc.max_positions = 9;
  s.mc.content_len = 8;
  s.mc.max_chunks = 32;
  s.mc.word_pool = WordPool::WeightedSum;
  s.mc.aggregator = AggregatorKind::TransformerPos;
  s.mc.agg_layers = 1;
  s.mc.agg_heads = 2;
  s.mc.agg_ff = 64;

  s.tc.lr = 1e-3;
  s.tc.batch_size = 16;
  s.tc.grad_accum_steps = 1;
  s.tc.epochs = 8;
  s.tc.warmup_steps = 50;
  s.tc.seed = 5;  // pinned: the 0.02-scale init makes plateau escape seed-dependent
  return s;
}

double train_and_eval_accuracy(const LongRangeSetup& s, AggregatorKind kind) {
  ModelConfig mc = s.mc;
  mc.aggregator = kind;
  HierModel<float> model(mc);
  Rng init_rng = Rng::stream(s.tc.seed, 2);
  model.init(init_rng);
  train(model, s.corpus.train, s.vocab, s.tc);
  return evaluate(model, s.corpus.test, s.vocab).accuracy;
}

void criteria_7_and_8() {
  try {
    auto t0 = std::chrono::steady_clock::now();
    auto s = longrange_setup();

    double hier_acc = train_and_eval_accuracy(s, AggregatorKind::TransformerPos);

    // truncation baseline: same architecture limited to the first chunk
    EvalReport trunc =
        truncation_baseline<float>(s.corpus.train, s.corpus.test, s.mc, s.tc, s.vocab);

    // unigram bag-of-words baseline
    BowConfig bc;
    bc.vocab_target = 128;
    bc.epochs = 20;
    bc.seed = 3;
    EvalReport bow = bow_baseline<float>(s.corpus.train, s.corpus.test, bc);

    double secs = seconds_since(t0);
    bool pass = hier_acc >= 0.90 && trunc.accuracy <= 0.60 && bow.accuracy <= 0.60 &&
                secs <= 900.0;
    report(7, pass, fmt("long-range: hierarchical acc=%.3f (>=0.90), truncation acc=%.3f "
                        "(<=0.60), bag-of-words acc=%.3f (<=0.60), %.0fs (<=900s)",
                        hier_acc, trunc.accuracy, bow.accuracy, secs));

    // criterion 8: transformer aggregator vs mean aggregator on the same corpus
    double mean_acc = train_and_eval_accuracy(s, AggregatorKind::Mean);
    double gap = hier_acc - mean_acc;
    bool inverted = gap < -0.05;
    report(8, !inverted, fmt("transformer acc=%.3f vs mean acc=%.3f, gap=%+.3f "
                             "(>=+0.05 expected, report-only; hard fail only below -0.05)",
                             hier_acc, mean_acc, gap));
  } catch (const std::exception& e) {
    report(7, false, std::string("exception: ") + e.what());
    report(8, false, "skipped after criterion 7 exception");
  }
}

// --- criterion 9: bitwise reproducibility and checkpoint round trip ------------

void criterion_9() {
  try {
    auto corpus = toy_corpus();
    auto vocab = build_vocab(corpus, 32);

    auto run_once = [&]() {
      HierModel<float> model(toy_model_config(vocab));
      Rng init_rng = Rng::stream(13, 2);
      model.init(init_rng);
      TrainConfig tc;
      tc.lr = 1e-3;
      tc.batch_size = 4;
      tc.grad_accum_steps = 2;
      tc.epochs = 5;
      tc.warmup_steps = 3;
      tc.seed = 13;
      train(model, corpus, vocab, tc);
      return model_to_tensors(model);
    };

    auto a = run_once();
    auto b = run_once();
    bool bitwise = a.size() == b.size();
    for (size_t i = 0; bitwise && i < a.size(); ++i)
      bitwise = a[i].name == b[i].name && a[i].payload == b[i].payload;

    // save -> load -> inference is bitwise identical to the source model
    HierModel<float> src(toy_model_config(vocab));
    Rng init_rng = Rng::stream(13, 2);
    src.init(init_rng);
    load_model_params(src, a);
    save_checkpoint("acc_ck.bin", model_to_tensors(src));
    HierModel<float> loaded(toy_model_config(vocab));
    load_model_params(loaded, load_checkpoint("acc_ck.bin"));
    std::remove("acc_ck.bin");

    bool infer_bitwise = true;
    for (const auto& rec : corpus) {
      auto doc = prepare_doc<float>(rec, vocab, src.config());
      auto x = src.forward(doc);
      auto y = loaded.forward(doc);
      for (size_t i = 0; i < x->value.size(); ++i)
        if (x->value[i] != y->value[i]) infer_bitwise = false;
    }
    report(9, bitwise && infer_bitwise,
           fmt("train-twice checkpoints bitwise identical=%s; save/load inference bitwise "
               "identical=%s",
               bitwise ? "yes" : "no", infer_bitwise ? "yes" : "no"));
  } catch (const std::exception& e) {
    report(9, false, std::string("exception: ") + e.what());
  }
}

// --- criterion 10: overfit a tiny corpus --------------------------------------

void criterion_10() {
  try {
    auto corpus = toy_corpus();
    auto vocab = build_vocab(corpus, 32);
    HierModel<float> model(toy_model_config(vocab));
    Rng init_rng = Rng::stream(3, 2);
    model.init(init_rng);
    TrainConfig tc;
    tc.lr = 5e-3;
    tc.batch_size = 8;
    tc.grad_accum_steps = 1;
    tc.epochs = 200;  // one full-batch step per epoch -> 200 steps
    tc.warmup_steps = 10;
    tc.seed = 3;
    auto result = train(model, corpus, vocab, tc);
    double first = result.log.front().loss;
    double last = result.final_loss;
    bool pass = std::abs(first - std::log(2.0)) < 0.2 && last <= 0.1 &&
                result.log.size() == 200;
    report(10, pass, fmt("overfit 8 docs, 200 steps: loss %.4f (start, ~ln2) -> %.4f "
                         "(<=0.1)",
                         first, last));
  } catch (const std::exception& e) {
    report(10, false, std::string("exception: ") + e.what());
  }
}

}  // namespace

int main() {
  criterion_1();
  criterion_2();
  criterion_3();
  criterion_4();
  criterion_5();
  criterion_6();
  criteria_7_and_8();
  criterion_9();
  criterion_10();
  if (g_failures) {
    std::printf("ACCEPTANCE: %d criterion(s) failed\n", g_failures);
    return 1;
  }
  std::printf("ACCEPTANCE: all criteria passed\n");
  return 0;
}
