#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "chunkstack.h"
#include "doctest.h"
#include "json.hpp"

namespace {

// Takes ownership of a library-allocated string.
std::string owned(char* s) {
  std::string out = s ? s : "";
  chunkstack_free_string(s);
  return out;
}

bool file_exists(const std::string& path) { return std::ifstream(path).good(); }

const char* kSynthDir = "capi_synth";
const char* kModelDir = "capi_model";

const char* kSynthSpec = R"({
  "n_train": 240, "n_test": 40, "vocab_size": 20,
  "doc_len_mean": 24, "doc_len_jitter": 4, "content_len": 8,
  "signal_kind": "keyword", "signal_offset_tokens": 0, "seed": 3
})";

std::string train_config() {
  nlohmann::json cfg{
      {"train_path", std::string(kSynthDir) + "/train.jsonl"},
      {"vocab_path", "capi_vocab.txt"},
      {"out_dir", kModelDir},
      {"dtype", "f64"},
      {"model",
       {{"hidden", 8}, {"n_layers", 1}, {"ff_inner", 16}, {"n_heads", 2},
        {"content_len", 8}, {"max_chunks", 4}, {"word_pool", "wsum"},
        {"aggregator", "mean"}}},
      {"train",
       {{"lr", 1e-2}, {"batch_size", 16}, {"grad_accum_steps", 1},
        {"epochs", 20}, {"warmup_steps", 5}, {"seed", 3}}}};
  return cfg.dump();
}

}  // namespace

TEST_CASE("null arguments give BADARG and a message") {
  CHECK(chunkstack_vocab_build(nullptr, 10, "x", nullptr) == CHUNKSTACK_ERR_BADARG);
  CHECK(std::strlen(chunkstack_last_error()) > 0);
  CHECK(chunkstack_synth(nullptr, "x", nullptr) == CHUNKSTACK_ERR_BADARG);
  CHECK(chunkstack_train(nullptr, nullptr) == CHUNKSTACK_ERR_BADARG);
  CHECK(chunkstack_eval(nullptr, "x", nullptr) == CHUNKSTACK_ERR_BADARG);
  CHECK(chunkstack_model_open(nullptr, nullptr) == CHUNKSTACK_ERR_BADARG);
  CHECK(chunkstack_model_n_class(nullptr, nullptr) == CHUNKSTACK_ERR_BADARG);
}

TEST_CASE("runtime failures give ERR_RUNTIME and a message") {
  size_t n = 0;
  CHECK(chunkstack_vocab_build("no_such_corpus.jsonl", 10, "capi_nope.txt", &n) ==
        CHUNKSTACK_ERR_RUNTIME);
  CHECK(std::strlen(chunkstack_last_error()) > 0);
  char* out = nullptr;
  CHECK(chunkstack_train("this is not json", &out) == CHUNKSTACK_ERR_RUNTIME);
  CHECK(out == nullptr);
  char* rep = nullptr;
  CHECK(chunkstack_eval("no_such_dir", "no_such.jsonl", &rep) == CHUNKSTACK_ERR_RUNTIME);
}

TEST_CASE("full pipeline: synth, vocab, train, eval, predict, handle API") {
  // synth
  char* manifest = nullptr;
  REQUIRE(chunkstack_synth(kSynthSpec, kSynthDir, &manifest) == CHUNKSTACK_OK);
  auto mj = nlohmann::json::parse(owned(manifest));
  CHECK(mj.at("command") == "synth");
  REQUIRE(file_exists(std::string(kSynthDir) + "/train.jsonl"));
  REQUIRE(file_exists(std::string(kSynthDir) + "/test.jsonl"));

  // vocab
  size_t vocab_size = 0;
  REQUIRE(chunkstack_vocab_build((std::string(kSynthDir) + "/train.jsonl").c_str(), 64,
                                 "capi_vocab.txt", &vocab_size) == CHUNKSTACK_OK);
  CHECK(vocab_size > 3);

  // train
  char* train_manifest = nullptr;
  REQUIRE(chunkstack_train(train_config().c_str(), &train_manifest) == CHUNKSTACK_OK);
  auto tj = nlohmann::json::parse(owned(train_manifest));
  CHECK(tj.at("command") == "train");
  for (const char* f : {"model.ckpt", "model.json", "vocab.txt", "train_log.tsv"})
    CHECK(file_exists(std::string(kModelDir) + "/" + f));

  // eval on the held-out split: the keyword task is easily separable
  char* report = nullptr;
  REQUIRE(chunkstack_eval(kModelDir, (std::string(kSynthDir) + "/test.jsonl").c_str(),
                          &report) == CHUNKSTACK_OK);
  auto rj = nlohmann::json::parse(owned(report));
  CHECK(rj.at("report").at("n_examples").get<int>() == 40);
  CHECK(rj.at("report").at("accuracy").get<double>() >= 0.75);

  // predict: one TSV line per record, "id\tlabel\tprobs"
  char* tsv = nullptr;
  REQUIRE(chunkstack_predict_file(kModelDir, (std::string(kSynthDir) + "/test.jsonl").c_str(),
                                  &tsv) == CHUNKSTACK_OK);
  std::istringstream lines(owned(tsv));
  std::string line;
  int n_lines = 0;
  while (std::getline(lines, line)) {
    ++n_lines;
    int tabs = 0;
    for (char ch : line) tabs += (ch == '\t');
    CHECK(tabs == 2);
  }
  CHECK(n_lines == 40);

  // opaque handle inference
  chunkstack_model* model = nullptr;
  REQUIRE(chunkstack_model_open(kModelDir, &model) == CHUNKSTACK_OK);
  int n_class = 0;
  REQUIRE(chunkstack_model_n_class(model, &n_class) == CHUNKSTACK_OK);
  CHECK(n_class == 2);
  int label = -1;
  double probs[2] = {0, 0};
  REQUIRE(chunkstack_model_predict(model, "filler words and more filler", &label, probs, 2) ==
          CHUNKSTACK_OK);
  CHECK((label == 0 || label == 1));
  CHECK(probs[0] + probs[1] == doctest::Approx(1.0).epsilon(1e-9));
  // too-small probability buffer is reported, not written past
  CHECK(chunkstack_model_predict(model, "x", &label, probs, 1) == CHUNKSTACK_ERR_RUNTIME);
  chunkstack_model_close(model);
  chunkstack_model_close(nullptr);  // must be a no-op
}

TEST_CASE("bow baseline solves the unigram keyword task through the C API") {
  nlohmann::json cfg{{"kind", "bow"},
                     {"train_path", std::string(kSynthDir) + "/train.jsonl"},
                     {"test_path", std::string(kSynthDir) + "/test.jsonl"},
                     {"vocab_target", 64},
                     {"epochs", 20},
                     {"dtype", "f64"},
                     {"seed", 3}};
  char* report = nullptr;
  REQUIRE(chunkstack_baseline(cfg.dump().c_str(), &report) == CHUNKSTACK_OK);
  auto rj = nlohmann::json::parse(owned(report));
  CHECK(rj.at("accuracy").get<double>() >= 0.9);

  char* bad = nullptr;
  CHECK(chunkstack_baseline("{\"kind\":\"nope\"}", &bad) == CHUNKSTACK_ERR_RUNTIME);
}
