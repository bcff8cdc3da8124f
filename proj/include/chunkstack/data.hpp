#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace chunkstack {

struct Record {
  std::string id;
  std::string text;
  int label = 0;
};

// Newline-delimited JSON, one object per line with fields "id", "text",
// "label". Order-preserving; malformed lines raise with their line number.
std::vector<Record> load_corpus(const std::string& path);
void save_corpus(const std::string& path, const std::vector<Record>& records);

enum class SignalKind { KeywordAnywhere, LongRangePair };

struct SynthSpec {
  int n_train = 2000;
  int n_test = 500;
  int vocab_size = 50;          // filler word count, triggers on top
  int doc_len_mean = 270;
  int doc_len_jitter = 20;
  int n_class = 2;
  SignalKind signal_kind = SignalKind::LongRangePair;
  int signal_offset_tokens = 202;  // LongRangePair: B lands at/after this position
  int content_len = 32;            // chunk content length the corpus is aimed at
  int keyword_max_pos = 0;         // KeywordAnywhere: 0 = anywhere, else exclusive cap
  uint64_t seed = 1;

  std::string to_json() const;
  static SynthSpec from_json(const std::string& json);
};

struct SynthCorpus {
  std::vector<Record> train;
  std::vector<Record> test;
};

// Deterministic given the spec. KeywordAnywhere plants a trigger word in
// positives only, so a unigram model solves it. LongRangePair plants both
// trigger words in every document; the label is carried solely by whether
// the second trigger lands at/after signal_offset_tokens, so neither the
// first chunk nor unigram counts are informative.
SynthCorpus synth_generate(const SynthSpec& spec);

// Writes train.jsonl, test.jsonl and a spec.json echo into out_dir.
void synth_write(const SynthSpec& spec, const std::string& out_dir);

inline const char* kTriggerA = "trigalpha";
inline const char* kTriggerB = "trigbravo";

}  // namespace chunkstack
