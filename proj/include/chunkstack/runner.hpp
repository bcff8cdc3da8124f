#pragma once

#include <string>

namespace chunkstack::run {

// High-level entry points shared by the C API and the CLI. All configs and
// results travel as JSON strings so the surface stays narrow.

// Builds a whole-word vocabulary from a corpus file; returns the vocab size.
size_t vocab_build(const std::string& corpus_path, size_t target_size,
                   const std::string& out_path);

// Writes train.jsonl / test.jsonl / spec.json under out_dir; returns the
// manifest JSON.
std::string synth(const std::string& spec_json, const std::string& out_dir);

// Trains a model per the config JSON (see README for the schema); writes
// model.ckpt, model.json, vocab.txt, train_log.tsv and manifest.json into
// out_dir. Returns the manifest JSON.
std::string train_run(const std::string& config_json);

// Evaluates the model saved in model_dir on a corpus. Returns
// {"text": <human block>, "report": <EvalReport object>}.
std::string eval_run(const std::string& model_dir, const std::string& corpus_path);

// One line per record: id <TAB> predicted label <TAB> comma-joined
// probabilities.
std::string predict_run(const std::string& model_dir, const std::string& corpus_path);

// Finite-difference check of the full hierarchical model in f64.
// Returns {"max_rel_err": ..., "n_checked": ..., "worst": [...]}.
std::string gradcheck_run(const std::string& dtype, bool tiny);

// Runs a comparison baseline ("truncation" or "bow") per the config JSON.
// Returns the EvalReport JSON.
std::string baseline_run(const std::string& config_json);

}  // namespace chunkstack::run
