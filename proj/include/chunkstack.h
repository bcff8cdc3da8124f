/* C API for the chunkstack hierarchical long-document classifier.
 *
 * All functions return CHUNKSTACK_OK on success. On failure they return a
 * nonzero code and chunkstack_last_error() yields a single-line message
 * (thread-local). String results are heap-allocated by the library and must
 * be released with chunkstack_free_string(). Models are opaque handles.
 */
#ifndef CHUNKSTACK_H
#define CHUNKSTACK_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#define CHUNKSTACK_OK 0
#define CHUNKSTACK_ERR_RUNTIME 1
#define CHUNKSTACK_ERR_BADARG 2

typedef struct chunkstack_model chunkstack_model;

/* Last error message for the calling thread; never NULL. */
const char* chunkstack_last_error(void);

void chunkstack_free_string(char* s);

/* Build a whole-word vocabulary file from a JSONL corpus. */
int chunkstack_vocab_build(const char* corpus_path, size_t target_size,
                           const char* out_path, size_t* out_vocab_size);

/* Generate a synthetic corpus; spec_json per the documented schema. */
int chunkstack_synth(const char* spec_json, const char* out_dir, char** out_manifest_json);

/* Train a model; config_json per the documented schema. */
int chunkstack_train(const char* config_json, char** out_manifest_json);

/* Evaluate the model saved in model_dir on a JSONL corpus. */
int chunkstack_eval(const char* model_dir, const char* corpus_path, char** out_report_json);

/* Batch prediction: one "id\tlabel\tprobs" line per record. */
int chunkstack_predict_file(const char* model_dir, const char* corpus_path, char** out_tsv);

/* Finite-difference gradient check of the full hierarchical model (f64). */
int chunkstack_gradcheck(const char* dtype, int tiny, double* out_max_rel_err,
                         char** out_report_json);

/* Comparison baselines: config_json selects "truncation" or "bow". */
int chunkstack_baseline(const char* config_json, char** out_report_json);

/* Opaque-handle inference API. */
int chunkstack_model_open(const char* model_dir, chunkstack_model** out_model);
void chunkstack_model_close(chunkstack_model* model);
int chunkstack_model_n_class(const chunkstack_model* model, int* out_n_class);
/* probs must hold at least n_class doubles. */
int chunkstack_model_predict(const chunkstack_model* model, const char* text,
                             int* out_label, double* probs, size_t probs_len);

#ifdef __cplusplus
}
#endif

#endif /* CHUNKSTACK_H */
