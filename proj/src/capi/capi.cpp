#include "chunkstack.h"

#include <cstdlib>
#include <cstring>
#include <fstream>
#include <string>
#include <variant>

#include "chunkstack/runner.hpp"
#include "chunkstack/train.hpp"
#include "json.hpp"

namespace {

thread_local std::string g_last_error = "ok";

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

int fail_badarg(const char* msg) {
  g_last_error = msg;
  return CHUNKSTACK_ERR_BADARG;
}

template <typename F>
int guarded(F&& fn) {
  try {
    fn();
    g_last_error = "ok";
    return CHUNKSTACK_OK;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return CHUNKSTACK_ERR_RUNTIME;
  } catch (...) {
    g_last_error = "unknown error";
    return CHUNKSTACK_ERR_RUNTIME;
  }
}

}  // namespace

// Holds either precision variant behind the opaque handle.
struct chunkstack_model {
  std::variant<chunkstack::HierModel<float>, chunkstack::HierModel<double>> model;
  chunkstack::Vocabulary vocab;

  template <typename T>
  chunkstack_model(chunkstack::HierModel<T> m, chunkstack::Vocabulary v)
      : model(std::move(m)), vocab(std::move(v)) {}
};

extern "C" {

const char* chunkstack_last_error(void) { return g_last_error.c_str(); }

void chunkstack_free_string(char* s) { std::free(s); }

int chunkstack_vocab_build(const char* corpus_path, size_t target_size, const char* out_path,
                           size_t* out_vocab_size) {
  if (!corpus_path || !out_path) return fail_badarg("null path argument");
  return guarded([&] {
    size_t n = chunkstack::run::vocab_build(corpus_path, target_size, out_path);
    if (out_vocab_size) *out_vocab_size = n;
  });
}

int chunkstack_synth(const char* spec_json, const char* out_dir, char** out_manifest_json) {
  if (!spec_json || !out_dir) return fail_badarg("null argument");
  return guarded([&] {
    std::string manifest = chunkstack::run::synth(spec_json, out_dir);
    if (out_manifest_json) *out_manifest_json = dup_string(manifest);
  });
}

int chunkstack_train(const char* config_json, char** out_manifest_json) {
  if (!config_json) return fail_badarg("null config");
  return guarded([&] {
    std::string manifest = chunkstack::run::train_run(config_json);
    if (out_manifest_json) *out_manifest_json = dup_string(manifest);
  });
}

int chunkstack_eval(const char* model_dir, const char* corpus_path, char** out_report_json) {
  if (!model_dir || !corpus_path) return fail_badarg("null path argument");
  return guarded([&] {
    std::string report = chunkstack::run::eval_run(model_dir, corpus_path);
    if (out_report_json) *out_report_json = dup_string(report);
  });
}

int chunkstack_predict_file(const char* model_dir, const char* corpus_path, char** out_tsv) {
  if (!model_dir || !corpus_path) return fail_badarg("null path argument");
  return guarded([&] {
    std::string tsv = chunkstack::run::predict_run(model_dir, corpus_path);
    if (out_tsv) *out_tsv = dup_string(tsv);
  });
}

int chunkstack_gradcheck(const char* dtype, int tiny, double* out_max_rel_err,
                         char** out_report_json) {
  if (!dtype) return fail_badarg("null dtype");
  return guarded([&] {
    std::string report = chunkstack::run::gradcheck_run(dtype, tiny != 0);
    if (out_max_rel_err)
      *out_max_rel_err = nlohmann::json::parse(report).at("max_rel_err").get<double>();
    if (out_report_json) *out_report_json = dup_string(report);
  });
}

int chunkstack_baseline(const char* config_json, char** out_report_json) {
  if (!config_json) return fail_badarg("null config");
  return guarded([&] {
    std::string report = chunkstack::run::baseline_run(config_json);
    if (out_report_json) *out_report_json = dup_string(report);
  });
}

int chunkstack_model_open(const char* model_dir, chunkstack_model** out_model) {
  if (!model_dir || !out_model) return fail_badarg("null argument");
  return guarded([&] {
    std::string dir = model_dir;
    std::ifstream meta_in(dir + "/model.json");
    if (!meta_in) throw std::runtime_error("cannot open " + dir + "/model.json");
    nlohmann::json meta = nlohmann::json::parse(meta_in);
    auto mc = chunkstack::ModelConfig::from_json(meta.at("model"));
    auto vocab = chunkstack::Vocabulary::load(dir + "/vocab.txt");
    auto tensors = chunkstack::load_checkpoint(dir + "/model.ckpt");
    if (meta.at("dtype").get<std::string>() == "f64") {
      chunkstack::HierModel<double> model(mc);
      chunkstack::load_model_params(model, tensors);
      *out_model = new chunkstack_model(std::move(model), std::move(vocab));
    } else {
      chunkstack::HierModel<float> model(mc);
      chunkstack::load_model_params(model, tensors);
      *out_model = new chunkstack_model(std::move(model), std::move(vocab));
    }
  });
}

void chunkstack_model_close(chunkstack_model* model) { delete model; }

int chunkstack_model_n_class(const chunkstack_model* model, int* out_n_class) {
  if (!model || !out_n_class) return fail_badarg("null argument");
  *out_n_class = std::visit([](const auto& m) { return m.config().n_class; }, model->model);
  return CHUNKSTACK_OK;
}

int chunkstack_model_predict(const chunkstack_model* model, const char* text, int* out_label,
                             double* probs, size_t probs_len) {
  if (!model || !text) return fail_badarg("null argument");
  return guarded([&] {
    std::visit(
        [&](const auto& m) {
          auto ids = chunkstack::encode(text, model->vocab);
          auto doc =
              chunkstack::chunk(ids, m.config().content_len, m.config().max_chunks);
          auto [label, p] = m.predict(doc);
          if (probs && probs_len < p.size())
            throw std::runtime_error("probs buffer too small");
          if (out_label) *out_label = label;
          if (probs)
            for (size_t i = 0; i < p.size(); ++i) probs[i] = p[i];
        },
        model->model);
  });
}

}  // extern "C"
