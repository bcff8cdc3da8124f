// chunkstack command-line interface. Talks to the core exclusively through
// the C API in chunkstack.h.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "chunkstack.h"
#include "json.hpp"

using nlohmann::json;

namespace {

struct FreeString {
  void operator()(char* s) const { chunkstack_free_string(s); }
};
using OwnedString = std::unique_ptr<char, FreeString>;

int runtime_fail() {
  std::cerr << "error: " << chunkstack_last_error() << "\n";
  return 1;
}

// key=value lines; '#' starts a comment.
std::map<std::string, std::string> read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw CLI::ValidationError("--config", "cannot open " + path);
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(in, line)) {
    auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    auto trim = [](std::string s) {
      size_t a = s.find_first_not_of(" \t\r");
      size_t b = s.find_last_not_of(" \t\r");
      return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (!key.empty()) kv[key] = value;
  }
  return kv;
}

struct TrainArgs {
  std::string train_path, vocab_path, out_dir = "run";
  std::string dtype = "f32";
  std::string preset, config_file;
  bool balance = false;

  // model
  std::string word_pool = "cls", aggregator = "transformer";
  int hidden = 64, n_layers = 2, ff_inner = 128, n_heads = 4;
  int agg_layers = 2, agg_heads = 4, agg_ff = 128;
  int content_len = 202, max_chunks = 32, n_class = 2;

  // optimization
  double lr = 3e-5;
  int batch_size = 16, grad_accum = 2, epochs = 40, warmup = 150;
  std::string mode = "finetune";
  uint64_t seed = 1;
  double dropout = 0.0;
  bool linear_decay = false;
  int total_steps = 0;
};

void add_train_flags(CLI::App* cmd, TrainArgs& a) {
  cmd->add_option("--train", a.train_path, "training corpus (JSONL)")->required();
  cmd->add_option("--vocab", a.vocab_path, "vocabulary file")->required();
  cmd->add_option("--out-dir", a.out_dir, "output directory");
  cmd->add_option("--dtype", a.dtype, "f32|f64");
  cmd->add_option("--preset", a.preset, "finetune|frozen hyperparameter preset");
  cmd->add_option("--config", a.config_file, "key=value config file (flags win)");
  cmd->add_flag("--balance", a.balance, "down-sample classes to the minority count");

  cmd->add_option("--word-pool", a.word_pool, "cls|wsum");
  cmd->add_option("--aggregator", a.aggregator,
                  "transformer|transformer-pos|lstm|cnn|mean");
  cmd->add_option("--hidden", a.hidden, "hidden size");
  cmd->add_option("--layers", a.n_layers, "word-encoder layers");
  cmd->add_option("--ff-inner", a.ff_inner, "word-encoder feed-forward size");
  cmd->add_option("--heads", a.n_heads, "word-encoder attention heads");
  cmd->add_option("--agg-layers", a.agg_layers, "chunk-encoder layers");
  cmd->add_option("--agg-heads", a.agg_heads, "chunk-encoder heads");
  cmd->add_option("--agg-ff", a.agg_ff, "chunk-encoder feed-forward size");
  cmd->add_option("--content-len", a.content_len, "content tokens per chunk");
  cmd->add_option("--max-chunks", a.max_chunks, "maximum chunks per document");
  cmd->add_option("--n-class", a.n_class, "number of classes");

  cmd->add_option("--lr", a.lr, "peak learning rate");
  cmd->add_option("--batch-size", a.batch_size, "micro-batch size");
  cmd->add_option("--grad-accum", a.grad_accum, "gradient accumulation steps");
  cmd->add_option("--epochs", a.epochs, "training epochs");
  cmd->add_option("--warmup", a.warmup, "linear warmup steps");
  cmd->add_option("--mode", a.mode, "finetune|frozen");
  cmd->add_option("--seed", a.seed, "random seed");
  cmd->add_option("--dropout", a.dropout, "dropout rate (default 0, deterministic)");
  cmd->add_flag("--linear-decay", a.linear_decay, "decay lr to zero after warmup");
  cmd->add_option("--total-steps", a.total_steps, "total steps for --linear-decay");
}

// Priority: defaults < preset < config file < explicit flags.
void apply_train_layers(CLI::App* cmd, TrainArgs& a) {
  auto overridable = [&](const char* flag) { return cmd->count(flag) == 0; };

  if (!a.preset.empty()) {
    if (a.preset == "finetune") {
      if (overridable("--lr")) a.lr = 3e-5;
      if (overridable("--batch-size")) a.batch_size = 16;
      if (overridable("--grad-accum")) a.grad_accum = 2;
      if (overridable("--epochs")) a.epochs = 40;
      if (overridable("--warmup")) a.warmup = 150;
      if (overridable("--mode")) a.mode = "finetune";
      if (overridable("--word-pool")) a.word_pool = "cls";
    } else if (a.preset == "frozen") {
      if (overridable("--lr")) a.lr = 3e-5;
      if (overridable("--batch-size")) a.batch_size = 32;
      if (overridable("--grad-accum")) a.grad_accum = 1;
      if (overridable("--epochs")) a.epochs = 20;
      if (overridable("--warmup")) a.warmup = 40;
      if (overridable("--mode")) a.mode = "frozen";
      if (overridable("--word-pool")) a.word_pool = "wsum";
    } else {
      throw CLI::ValidationError("--preset", "expected finetune|frozen");
    }
  }

  if (a.config_file.empty()) return;
  auto kv = read_config_file(a.config_file);
  auto get = [&](const char* flag, const char* key, auto& slot) {
    auto it = kv.find(key);
    if (it == kv.end() || !overridable(flag)) return;
    std::istringstream is(it->second);
    is >> slot;
    if (is.fail()) throw CLI::ValidationError("--config", std::string("bad value for ") + key);
  };
  get("--lr", "lr", a.lr);
  get("--batch-size", "batch_size", a.batch_size);
  get("--grad-accum", "grad_accum", a.grad_accum);
  get("--epochs", "epochs", a.epochs);
  get("--warmup", "warmup", a.warmup);
  get("--mode", "mode", a.mode);
  get("--seed", "seed", a.seed);
  get("--dropout", "dropout", a.dropout);
  get("--word-pool", "word_pool", a.word_pool);
  get("--aggregator", "aggregator", a.aggregator);
  get("--hidden", "hidden", a.hidden);
  get("--layers", "layers", a.n_layers);
  get("--ff-inner", "ff_inner", a.ff_inner);
  get("--heads", "heads", a.n_heads);
  get("--agg-layers", "agg_layers", a.agg_layers);
  get("--agg-heads", "agg_heads", a.agg_heads);
  get("--agg-ff", "agg_ff", a.agg_ff);
  get("--content-len", "content_len", a.content_len);
  get("--max-chunks", "max_chunks", a.max_chunks);
  get("--n-class", "n_class", a.n_class);
  get("--dtype", "dtype", a.dtype);
}

int run_train(CLI::App* cmd, TrainArgs& a) {
  apply_train_layers(cmd, a);
  json cfg{{"train_path", a.train_path},
           {"vocab_path", a.vocab_path},
           {"out_dir", a.out_dir},
           {"dtype", a.dtype},
           {"balance", a.balance},
           {"model",
            {{"hidden", a.hidden},
             {"n_layers", a.n_layers},
             {"ff_inner", a.ff_inner},
             {"n_heads", a.n_heads},
             {"word_pool", a.word_pool},
             {"aggregator", a.aggregator},
             {"agg_layers", a.agg_layers},
             {"agg_heads", a.agg_heads},
             {"agg_ff", a.agg_ff},
             {"content_len", a.content_len},
             {"max_chunks", a.max_chunks},
             {"n_class", a.n_class}}},
           {"train",
            {{"lr", a.lr},
             {"batch_size", a.batch_size},
             {"grad_accum_steps", a.grad_accum},
             {"epochs", a.epochs},
             {"warmup_steps", a.warmup},
             {"mode", a.mode},
             {"seed", a.seed},
             {"dropout", a.dropout},
             {"linear_decay", a.linear_decay},
             {"total_steps", a.total_steps}}}};

  std::printf(
      "config: lr=%g batch=%d accum=%d epochs=%d warmup=%d mode=%s word-pool=%s "
      "aggregator=%s content-len=%d max-chunks=%d seed=%llu dtype=%s\n",
      a.lr, a.batch_size, a.grad_accum, a.epochs, a.warmup, a.mode.c_str(),
      a.word_pool.c_str(), a.aggregator.c_str(), a.content_len, a.max_chunks,
      static_cast<unsigned long long>(a.seed), a.dtype.c_str());

  char* manifest = nullptr;
  if (chunkstack_train(cfg.dump().c_str(), &manifest) != CHUNKSTACK_OK) return runtime_fail();
  OwnedString owned(manifest);
  std::printf("%s\n", manifest);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"chunkstack: hierarchical transformer classification of long documents"};
  app.require_subcommand(1);

  // vocab-build
  auto* vb = app.add_subcommand("vocab-build", "build a whole-word vocabulary from a corpus");
  std::string vb_corpus, vb_out;
  size_t vb_size = 4096;
  vb->add_option("--corpus", vb_corpus, "JSONL corpus")->required();
  vb->add_option("--out", vb_out, "output vocab file")->required();
  vb->add_option("--size", vb_size, "target vocabulary size");

  // synth
  auto* sy = app.add_subcommand("synth", "generate a synthetic corpus");
  std::string sy_out = "synth", sy_kind = "longrange";
  int sy_ntrain = 2000, sy_ntest = 500, sy_vocab = 50, sy_mean = 270, sy_jitter = 20;
  int sy_offset = 202, sy_content = 32, sy_kwmax = 0;
  uint64_t sy_seed = 1;
  sy->add_option("--out-dir", sy_out, "output directory");
  sy->add_option("--signal", sy_kind, "keyword|longrange");
  sy->add_option("--n-train", sy_ntrain, "training documents");
  sy->add_option("--n-test", sy_ntest, "test documents");
  sy->add_option("--vocab-size", sy_vocab, "filler vocabulary size");
  sy->add_option("--doc-len-mean", sy_mean, "mean document length in tokens");
  sy->add_option("--doc-len-jitter", sy_jitter, "uniform length jitter");
  sy->add_option("--offset", sy_offset, "minimum position of the late trigger");
  sy->add_option("--content-len", sy_content, "chunk content length the corpus targets");
  sy->add_option("--keyword-max-pos", sy_kwmax, "keyword task: cap trigger position (0 = anywhere)");
  sy->add_option("--seed", sy_seed, "random seed");

  // train
  auto* tr = app.add_subcommand("train", "train a hierarchical model");
  TrainArgs ta;
  add_train_flags(tr, ta);

  // eval
  auto* ev = app.add_subcommand("eval", "evaluate a saved model on a corpus");
  std::string ev_model, ev_corpus;
  ev->add_option("--model-dir", ev_model, "directory written by train")->required();
  ev->add_option("--corpus", ev_corpus, "JSONL corpus")->required();

  // predict
  auto* pr = app.add_subcommand("predict", "batch prediction to stdout");
  std::string pr_model, pr_corpus;
  pr->add_option("--model-dir", pr_model, "directory written by train")->required();
  pr->add_option("--corpus", pr_corpus, "JSONL corpus")->required();

  // gradcheck
  auto* gc = app.add_subcommand("gradcheck", "finite-difference check of the full model");
  std::string gc_dtype = "f64";
  bool gc_tiny = false;
  double gc_tol = 1e-4;
  gc->add_option("--dtype", gc_dtype, "must be f64");
  gc->add_flag("--tiny", gc_tiny, "tiny configuration");
  gc->add_option("--tol", gc_tol, "pass/fail threshold on max relative error");

  // baseline
  auto* bl = app.add_subcommand("baseline", "truncation or bag-of-words comparison baseline");
  std::string bl_kind, bl_train, bl_test, bl_vocab, bl_dtype = "f32";
  json bl_extra = json::object();
  std::string bl_extra_str;
  bl->add_option("--kind", bl_kind, "truncation|bow")->required();
  bl->add_option("--train", bl_train, "training corpus")->required();
  bl->add_option("--test", bl_test, "test corpus")->required();
  bl->add_option("--vocab", bl_vocab, "vocabulary file (truncation baseline)");
  bl->add_option("--dtype", bl_dtype, "f32|f64");
  bl->add_option("--options", bl_extra_str,
                 "extra options as inline JSON (model/train/bow settings)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (vb->parsed()) {
      size_t n = 0;
      if (chunkstack_vocab_build(vb_corpus.c_str(), vb_size, vb_out.c_str(), &n) !=
          CHUNKSTACK_OK)
        return runtime_fail();
      std::printf("vocab_size=%zu path=%s\n", n, vb_out.c_str());
      return 0;
    }
    if (sy->parsed()) {
      json spec{{"n_train", sy_ntrain},       {"n_test", sy_ntest},
                {"vocab_size", sy_vocab},     {"doc_len_mean", sy_mean},
                {"doc_len_jitter", sy_jitter}, {"signal_kind", sy_kind},
                {"signal_offset_tokens", sy_offset}, {"content_len", sy_content},
                {"keyword_max_pos", sy_kwmax}, {"seed", sy_seed}};
      char* manifest = nullptr;
      if (chunkstack_synth(spec.dump().c_str(), sy_out.c_str(), &manifest) != CHUNKSTACK_OK)
        return runtime_fail();
      OwnedString owned(manifest);
      std::printf("%s\n", manifest);
      return 0;
    }
    if (tr->parsed()) return run_train(tr, ta);
    if (ev->parsed()) {
      char* out = nullptr;
      if (chunkstack_eval(ev_model.c_str(), ev_corpus.c_str(), &out) != CHUNKSTACK_OK)
        return runtime_fail();
      OwnedString owned(out);
      json j = json::parse(out);
      std::printf("%s", j.at("text").get<std::string>().c_str());
      std::printf("%s\n", j.at("report").dump().c_str());
      return 0;
    }
    if (pr->parsed()) {
      char* out = nullptr;
      if (chunkstack_predict_file(pr_model.c_str(), pr_corpus.c_str(), &out) != CHUNKSTACK_OK)
        return runtime_fail();
      OwnedString owned(out);
      std::fputs(out, stdout);
      return 0;
    }
    if (gc->parsed()) {
      double max_rel = 0;
      char* report = nullptr;
      if (chunkstack_gradcheck(gc_dtype.c_str(), gc_tiny ? 1 : 0, &max_rel, &report) !=
          CHUNKSTACK_OK)
        return runtime_fail();
      OwnedString owned(report);
      std::printf("%s\n", report);
      std::printf("max_rel_err=%.3e tol=%.3e %s\n", max_rel, gc_tol,
                  max_rel <= gc_tol ? "PASS" : "FAIL");
      return max_rel <= gc_tol ? 0 : 1;
    }
    if (bl->parsed()) {
      json cfg = bl_extra_str.empty() ? json::object() : json::parse(bl_extra_str);
      cfg["kind"] = bl_kind;
      cfg["train_path"] = bl_train;
      cfg["test_path"] = bl_test;
      cfg["dtype"] = bl_dtype;
      if (!bl_vocab.empty()) cfg["vocab_path"] = bl_vocab;
      char* report = nullptr;
      if (chunkstack_baseline(cfg.dump().c_str(), &report) != CHUNKSTACK_OK)
        return runtime_fail();
      OwnedString owned(report);
      std::printf("%s\n", report);
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
