#include "chunkstack/data.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "chunkstack/rng.hpp"
#include "json.hpp"

namespace chunkstack {

using nlohmann::json;

std::vector<Record> load_corpus(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_corpus: cannot open " + path);
  std::vector<Record> records;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const std::exception& e) {
      throw std::runtime_error("load_corpus: malformed JSON at line " +
                               std::to_string(line_no) + ": " + e.what());
    }
    if (!j.is_object() || !j.contains("id") || !j.contains("text") || !j.contains("label"))
      throw std::runtime_error("load_corpus: missing field at line " + std::to_string(line_no));
    if (!j["label"].is_number_integer() || j["label"].get<int64_t>() < 0)
      throw std::runtime_error("load_corpus: unknown label value at line " +
                               std::to_string(line_no));
    Record rec;
    rec.id = j["id"].get<std::string>();
    rec.text = j["text"].get<std::string>();
    rec.label = j["label"].get<int>();
    records.push_back(std::move(rec));
  }
  return records;
}

void save_corpus(const std::string& path, const std::vector<Record>& records) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_corpus: cannot write " + path);
  for (const auto& rec : records) {
    json j{{"id", rec.id}, {"text", rec.text}, {"label", rec.label}};
    out << j.dump() << "\n";
  }
}

std::string SynthSpec::to_json() const {
  json j{{"n_train", n_train},
         {"n_test", n_test},
         {"vocab_size", vocab_size},
         {"doc_len_mean", doc_len_mean},
         {"doc_len_jitter", doc_len_jitter},
         {"n_class", n_class},
         {"signal_kind", signal_kind == SignalKind::KeywordAnywhere ? "keyword" : "longrange"},
         {"signal_offset_tokens", signal_offset_tokens},
         {"content_len", content_len},
         {"keyword_max_pos", keyword_max_pos},
         {"seed", seed}};
  return j.dump(2);
}

SynthSpec SynthSpec::from_json(const std::string& text) {
  json j = json::parse(text);
  SynthSpec s;
  s.n_train = j.value("n_train", s.n_train);
  s.n_test = j.value("n_test", s.n_test);
  s.vocab_size = j.value("vocab_size", s.vocab_size);
  s.doc_len_mean = j.value("doc_len_mean", s.doc_len_mean);
  s.doc_len_jitter = j.value("doc_len_jitter", s.doc_len_jitter);
  s.n_class = j.value("n_class", s.n_class);
  std::string kind = j.value("signal_kind", std::string("longrange"));
  if (kind == "keyword")
    s.signal_kind = SignalKind::KeywordAnywhere;
  else if (kind == "longrange")
    s.signal_kind = SignalKind::LongRangePair;
  else
    throw std::runtime_error("synth spec: unknown signal_kind '" + kind + "'");
  s.signal_offset_tokens = j.value("signal_offset_tokens", s.signal_offset_tokens);
  s.content_len = j.value("content_len", s.content_len);
  s.keyword_max_pos = j.value("keyword_max_pos", s.keyword_max_pos);
  s.seed = j.value("seed", s.seed);
  return s;
}

namespace {

std::string filler_word(uint64_t idx) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "tok%05llu", static_cast<unsigned long long>(idx));
  return buf;
}

std::string join_words(const std::vector<std::string>& words) {
  std::string text;
  for (size_t i = 0; i < words.size(); ++i) {
    if (i) text.push_back(' ');
    text += words[i];
  }
  return text;
}

std::vector<Record> gen_split(const SynthSpec& spec, int n_docs, const std::string& prefix,
                              Rng& rng) {
  std::vector<Record> out;
  out.reserve(static_cast<size_t>(n_docs));
  for (int i = 0; i < n_docs; ++i) {
    int jitter = spec.doc_len_jitter > 0
                     ? static_cast<int>(rng.next_below(2 * spec.doc_len_jitter + 1)) -
                           spec.doc_len_jitter
                     : 0;
    int doc_len = spec.doc_len_mean + jitter;
    int label = i % 2;

    std::vector<std::string> words(static_cast<size_t>(doc_len));
    for (auto& w : words) w = filler_word(rng.next_below(spec.vocab_size));

    if (spec.signal_kind == SignalKind::KeywordAnywhere) {
      if (label == 1) {
        int cap = spec.keyword_max_pos > 0 ? std::min(spec.keyword_max_pos, doc_len) : doc_len;
        words[rng.next_below(static_cast<uint64_t>(cap))] = kTriggerA;
      }
    } else {
      // Both triggers in every document; only B's region carries the label.
      if (doc_len <= spec.signal_offset_tokens + 1)
        throw std::runtime_error("synth_generate: impossible spec (doc_len < offset)");
      int pos_a = static_cast<int>(rng.next_below(static_cast<uint64_t>(spec.content_len)));
      int pos_b;
      if (label == 1) {
        pos_b = spec.signal_offset_tokens +
                static_cast<int>(rng.next_below(
                    static_cast<uint64_t>(doc_len - spec.signal_offset_tokens)));
      } else {
        pos_b = spec.content_len +
                static_cast<int>(rng.next_below(
                    static_cast<uint64_t>(spec.signal_offset_tokens - spec.content_len)));
      }
      words[static_cast<size_t>(pos_a)] = kTriggerA;
      words[static_cast<size_t>(pos_b)] = kTriggerB;
    }

    char idbuf[32];
    std::snprintf(idbuf, sizeof(idbuf), "%s-%05d", prefix.c_str(), i);
    out.push_back(Record{idbuf, join_words(words), label});
  }
  return out;
}

}  // namespace

SynthCorpus synth_generate(const SynthSpec& spec) {
  if (spec.n_train < 1 || spec.n_test < 0 || spec.vocab_size < 1)
    throw std::runtime_error("synth_generate: invalid spec counts");
  if (spec.n_class != 2) throw std::runtime_error("synth_generate: only binary tasks supported");
  if (spec.doc_len_mean - spec.doc_len_jitter < 1)
    throw std::runtime_error("synth_generate: doc length can reach zero");
  if (spec.signal_kind == SignalKind::LongRangePair) {
    if (spec.signal_offset_tokens < spec.content_len)
      throw std::runtime_error("synth_generate: signal offset must be >= content_len");
    if (spec.signal_offset_tokens <= spec.content_len)
      throw std::runtime_error(
          "synth_generate: impossible spec (no room between first chunk and offset)");
    if (spec.doc_len_mean - spec.doc_len_jitter <= spec.signal_offset_tokens + 1)
      throw std::runtime_error("synth_generate: impossible spec (doc_len < offset)");
  }
  Rng train_rng = Rng::stream(spec.seed, 11);
  Rng test_rng = Rng::stream(spec.seed, 12);
  SynthCorpus corpus;
  corpus.train = gen_split(spec, spec.n_train, "train", train_rng);
  corpus.test = gen_split(spec, spec.n_test, "test", test_rng);
  return corpus;
}

void synth_write(const SynthSpec& spec, const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  SynthCorpus corpus = synth_generate(spec);
  save_corpus(out_dir + "/train.jsonl", corpus.train);
  save_corpus(out_dir + "/test.jsonl", corpus.test);
  std::ofstream echo(out_dir + "/spec.json");
  if (!echo) throw std::runtime_error("synth_write: cannot write spec.json");
  echo << spec.to_json() << "\n";
}

}  // namespace chunkstack
