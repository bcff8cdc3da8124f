#include "chunkstack/runner.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "chunkstack/baselines.hpp"
#include "chunkstack/checkpoint.hpp"
#include "chunkstack/data.hpp"
#include "chunkstack/gradcheck.hpp"
#include "chunkstack/model.hpp"
#include "chunkstack/train.hpp"
#include "json.hpp"

namespace chunkstack::run {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

uint64_t fnv1a_file(const std::string& path, uint64_t h = 0xcbf29ce484222325ULL) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path + " for hashing");
  char buf[4096];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ULL;
    }
    if (!in) break;
  }
  return h;
}

std::string hex64(uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
}

ModelConfig model_config_from_json(const json& j, int vocab_size) {
  ModelConfig mc;
  mc.vocab_size = vocab_size;
  mc.n_layers = j.value("n_layers", mc.n_layers);
  mc.hidden = j.value("hidden", mc.hidden);
  mc.ff_inner = j.value("ff_inner", mc.ff_inner);
  mc.n_heads = j.value("n_heads", mc.n_heads);
  mc.word_pool = word_pool_from_string(j.value("word_pool", std::string("cls")));
  mc.aggregator = aggregator_from_string(j.value("aggregator", std::string("transformer")));
  mc.agg_layers = j.value("agg_layers", mc.agg_layers);
  mc.agg_heads = j.value("agg_heads", mc.n_heads);
  mc.agg_ff = j.value("agg_ff", mc.ff_inner);
  mc.content_len = j.value("content_len", mc.content_len);
  mc.max_chunks = j.value("max_chunks", mc.max_chunks);
  mc.n_class = j.value("n_class", mc.n_class);
  mc.max_positions = j.value("max_positions", mc.content_len + 1);
  mc.validate();
  return mc;
}

TrainConfig train_config_from_json(const json& j) {
  TrainConfig tc;
  tc.lr = j.value("lr", tc.lr);
  tc.batch_size = j.value("batch_size", tc.batch_size);
  tc.grad_accum_steps = j.value("grad_accum_steps", tc.grad_accum_steps);
  tc.epochs = j.value("epochs", tc.epochs);
  tc.warmup_steps = j.value("warmup_steps", tc.warmup_steps);
  tc.mode = train_mode_from_string(j.value("mode", std::string("finetune")));
  tc.seed = j.value("seed", tc.seed);
  tc.dropout = j.value("dropout", tc.dropout);
  tc.linear_decay = j.value("linear_decay", tc.linear_decay);
  tc.total_steps = j.value("total_steps", tc.total_steps);
  tc.validate();
  return tc;
}

template <typename T>
std::string train_impl(const json& cfg) {
  std::string train_path = cfg.at("train_path").get<std::string>();
  std::string vocab_path = cfg.at("vocab_path").get<std::string>();
  std::string out_dir = cfg.at("out_dir").get<std::string>();
  fs::create_directories(out_dir);

  Vocabulary vocab = Vocabulary::load(vocab_path);
  std::vector<Record> records = load_corpus(train_path);
  TrainConfig tc = train_config_from_json(cfg.value("train", json::object()));
  if (cfg.value("balance", false))
    records = downsample_balance(records, tc.seed,
                                 cfg.value("model", json::object()).value("n_class", 2));

  ModelConfig mc = model_config_from_json(cfg.value("model", json::object()),
                                          static_cast<int>(vocab.size()));
  HierModel<T> model(mc);
  Rng init_rng = Rng::stream(tc.seed, 2);
  model.init(init_rng);

  TrainResult result = train(model, records, vocab, tc);

  save_checkpoint(out_dir + "/model.ckpt", model_to_tensors(model));
  vocab.save(out_dir + "/vocab.txt");
  json meta{{"dtype", sizeof(T) == 4 ? "f32" : "f64"}, {"model", mc.to_json()}};
  write_text(out_dir + "/model.json", meta.dump(2) + "\n");

  std::ostringstream log;
  log << "step\tlr\tloss\n";
  log.precision(10);
  for (const auto& e : result.log)
    log << e.step << "\t" << e.lr << "\t" << e.loss << "\n";
  write_text(out_dir + "/train_log.tsv", log.str());

  uint64_t h = fnv1a_file(train_path);
  h = fnv1a_file(vocab_path, h);
  json manifest{{"command", "train"},
                {"config", cfg},
                {"seed", tc.seed},
                {"input_hash", hex64(h)},
                {"outputs",
                 {out_dir + "/model.ckpt", out_dir + "/model.json", out_dir + "/vocab.txt",
                  out_dir + "/train_log.tsv"}}};
  write_text(out_dir + "/manifest.json", manifest.dump(2) + "\n");
  return manifest.dump();
}

struct LoadedMeta {
  std::string dtype;
  json model;
};

LoadedMeta load_meta(const std::string& model_dir) {
  std::ifstream in(model_dir + "/model.json");
  if (!in) throw std::runtime_error("cannot open " + model_dir + "/model.json");
  json j = json::parse(in);
  return {j.at("dtype").get<std::string>(), j.at("model")};
}

template <typename T>
HierModel<T> load_model(const std::string& model_dir, const json& mc_json) {
  HierModel<T> model(ModelConfig::from_json(mc_json));
  load_model_params(model, load_checkpoint(model_dir + "/model.ckpt"));
  return model;
}

template <typename T>
std::string eval_impl(const std::string& model_dir, const json& mc_json,
                      const std::string& corpus_path) {
  auto model = load_model<T>(model_dir, mc_json);
  Vocabulary vocab = Vocabulary::load(model_dir + "/vocab.txt");
  EvalReport report = evaluate(model, load_corpus(corpus_path), vocab);
  json out{{"text", report.to_text()}, {"report", json::parse(report.to_json_line())}};
  return out.dump();
}

template <typename T>
std::string predict_impl(const std::string& model_dir, const json& mc_json,
                         const std::string& corpus_path) {
  auto model = load_model<T>(model_dir, mc_json);
  Vocabulary vocab = Vocabulary::load(model_dir + "/vocab.txt");
  std::ostringstream out;
  for (const auto& rec : load_corpus(corpus_path)) {
    auto doc = prepare_doc<T>(rec, vocab, model.config());
    auto [label, probs] = model.predict(doc);
    out << rec.id << "\t" << label << "\t";
    char buf[32];
    for (size_t i = 0; i < probs.size(); ++i) {
      std::snprintf(buf, sizeof(buf), "%.6f", probs[i]);
      out << (i ? "," : "") << buf;
    }
    out << "\n";
  }
  return out.str();
}

// Tiny end-to-end configs exercised by the gradient check: every aggregator
// kind, weighted-sum pooling so the layer weights participate.
GradCheckReport gradcheck_model(AggregatorKind kind, bool tiny) {
  ModelConfig mc;
  mc.vocab_size = 12;
  mc.n_layers = 2;
  mc.hidden = tiny ? 8 : 16;
  mc.ff_inner = 2 * mc.hidden;
  mc.n_heads = 2;
  mc.agg_heads = 2;
  mc.agg_layers = 2;
  mc.agg_ff = 2 * mc.hidden;
  mc.content_len = tiny ? 6 : 8;
  mc.max_chunks = tiny ? 3 : 4;
  mc.max_positions = mc.content_len + 1;
  mc.word_pool = WordPool::WeightedSum;
  mc.aggregator = kind;
  mc.n_class = 2;

  HierModel<double> model(mc);
  Rng init_rng = Rng::stream(99, 2);
  model.init(init_rng);

  // random document spanning all chunks, last chunk partially padded
  Rng doc_rng = Rng::stream(99, 5);
  int n_tokens = mc.content_len * mc.max_chunks - mc.content_len / 2;
  std::vector<int> ids(static_cast<size_t>(n_tokens));
  for (auto& id : ids) id = 3 + static_cast<int>(doc_rng.next_below(mc.vocab_size - 3));
  ChunkedDocument doc = chunk(ids, mc.content_len, mc.max_chunks);

  auto fn = [&]() { return ad::ops::cross_entropy(model.forward(doc), 1); };
  return grad_check(fn, model.params().items, 1e-5);
}

std::string baseline_truncation(const json& cfg) {
  auto train_set = load_corpus(cfg.at("train_path").get<std::string>());
  auto test_set = load_corpus(cfg.at("test_path").get<std::string>());
  Vocabulary vocab =
      cfg.contains("vocab_path")
          ? Vocabulary::load(cfg.at("vocab_path").get<std::string>())
          : build_vocab(train_set, cfg.value("vocab_target", size_t{4096}));
  ModelConfig mc = model_config_from_json(cfg.value("model", json::object()),
                                          static_cast<int>(vocab.size()));
  TrainConfig tc = train_config_from_json(cfg.value("train", json::object()));
  std::string dtype = cfg.value("dtype", std::string("f32"));
  EvalReport report =
      dtype == "f64" ? truncation_baseline<double>(train_set, test_set, mc, tc, vocab)
                     : truncation_baseline<float>(train_set, test_set, mc, tc, vocab);
  return report.to_json_line();
}

std::string baseline_bow(const json& cfg) {
  auto train_set = load_corpus(cfg.at("train_path").get<std::string>());
  auto test_set = load_corpus(cfg.at("test_path").get<std::string>());
  BowConfig bc;
  bc.vocab_target = cfg.value("vocab_target", bc.vocab_target);
  bc.lr = cfg.value("lr", bc.lr);
  bc.epochs = cfg.value("epochs", bc.epochs);
  bc.batch_size = cfg.value("batch_size", bc.batch_size);
  bc.l2 = cfg.value("l2", bc.l2);
  bc.n_class = cfg.value("n_class", bc.n_class);
  bc.seed = cfg.value("seed", bc.seed);
  std::string dtype = cfg.value("dtype", std::string("f32"));
  EvalReport report = dtype == "f64" ? bow_baseline<double>(train_set, test_set, bc)
                                     : bow_baseline<float>(train_set, test_set, bc);
  return report.to_json_line();
}

}  // namespace

size_t vocab_build(const std::string& corpus_path, size_t target_size,
                   const std::string& out_path) {
  Vocabulary vocab = build_vocab(load_corpus(corpus_path), target_size);
  vocab.save(out_path);
  return vocab.size();
}

std::string synth(const std::string& spec_json, const std::string& out_dir) {
  SynthSpec spec = SynthSpec::from_json(spec_json);
  synth_write(spec, out_dir);
  json manifest{{"command", "synth"},
                {"config", json::parse(spec.to_json())},
                {"seed", spec.seed},
                {"outputs",
                 {out_dir + "/train.jsonl", out_dir + "/test.jsonl", out_dir + "/spec.json"}}};
  write_text(out_dir + "/manifest.json", manifest.dump(2) + "\n");
  return manifest.dump();
}

std::string train_run(const std::string& config_json) {
  json cfg = json::parse(config_json);
  std::string dtype = cfg.value("dtype", std::string("f32"));
  if (dtype == "f64") return train_impl<double>(cfg);
  if (dtype == "f32") return train_impl<float>(cfg);
  throw std::runtime_error("unknown dtype '" + dtype + "' (expected f32|f64)");
}

std::string eval_run(const std::string& model_dir, const std::string& corpus_path) {
  LoadedMeta meta = load_meta(model_dir);
  return meta.dtype == "f64" ? eval_impl<double>(model_dir, meta.model, corpus_path)
                             : eval_impl<float>(model_dir, meta.model, corpus_path);
}

std::string predict_run(const std::string& model_dir, const std::string& corpus_path) {
  LoadedMeta meta = load_meta(model_dir);
  return meta.dtype == "f64" ? predict_impl<double>(model_dir, meta.model, corpus_path)
                             : predict_impl<float>(model_dir, meta.model, corpus_path);
}

std::string gradcheck_run(const std::string& dtype, bool tiny) {
  if (dtype != "f64")
    throw std::runtime_error("gradcheck requires --dtype f64 (finite differences need f64)");
  double max_rel = 0;
  int64_t n_checked = 0;
  json worst = json::array();
  for (AggregatorKind kind : {AggregatorKind::TransformerPos, AggregatorKind::Lstm,
                              AggregatorKind::Cnn, AggregatorKind::Mean}) {
    GradCheckReport r = gradcheck_model(kind, tiny);
    max_rel = std::max(max_rel, r.max_rel_err);
    n_checked += r.n_checked;
    if (!r.worst.empty()) {
      const auto& w = r.worst.front();
      worst.push_back({{"aggregator", to_string(kind)},
                       {"param", w.param},
                       {"index", w.index},
                       {"analytic", w.analytic},
                       {"numeric", w.numeric},
                       {"rel_err", w.rel_err}});
    }
  }
  json out{{"max_rel_err", max_rel}, {"n_checked", n_checked}, {"worst", worst}};
  return out.dump();
}

std::string baseline_run(const std::string& config_json) {
  json cfg = json::parse(config_json);
  std::string kind = cfg.at("kind").get<std::string>();
  if (kind == "truncation") return baseline_truncation(cfg);
  if (kind == "bow") return baseline_bow(cfg);
  throw std::runtime_error("unknown baseline kind '" + kind + "' (expected truncation|bow)");
}

}  // namespace chunkstack::run
