#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "chunkstack/data.hpp"
#include "doctest.h"

using namespace chunkstack;

namespace {

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path);
  out << content;
}

std::vector<std::string> words_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  std::string w;
  while (in >> w) out.push_back(w);
  return out;
}

int position_of(const std::vector<std::string>& words, const std::string& target) {
  for (size_t i = 0; i < words.size(); ++i)
    if (words[i] == target) return static_cast<int>(i);
  return -1;
}

int count_of(const std::vector<std::string>& words, const std::string& target) {
  int n = 0;
  for (const auto& w : words) n += (w == target);
  return n;
}

}  // namespace

TEST_CASE("load_corpus parses JSONL and reports bad lines") {
  const char* path = "data_corpus.jsonl";
  write_file(path,
             "{\"id\":\"a\",\"text\":\"hello world\",\"label\":0}\n"
             "\n"
             "{\"id\":\"b\",\"text\":\"bye\",\"label\":1}\n");
  auto recs = load_corpus(path);
  REQUIRE(recs.size() == 2);
  CHECK(recs[0].id == "a");
  CHECK(recs[0].text == "hello world");
  CHECK(recs[0].label == 0);
  CHECK(recs[1].label == 1);

  write_file(path, "{\"id\":\"a\",\"text\":\"x\",\"label\":0}\nnot json\n");
  CHECK_THROWS_WITH_AS(load_corpus(path), doctest::Contains("line 2"), std::runtime_error);

  write_file(path, "{\"id\":\"a\",\"text\":\"x\",\"label\":-1}\n");
  CHECK_THROWS(load_corpus(path));

  write_file(path, "{\"id\":\"a\",\"label\":0}\n");
  CHECK_THROWS(load_corpus(path));
  std::remove(path);

  CHECK_THROWS(load_corpus("no_such_file.jsonl"));
}

TEST_CASE("save then load is the identity") {
  std::vector<Record> recs{{"x1", "some text with \"quotes\" and \\ slashes", 0},
                           {"x2", "", 1},
                           {"x3", "unicode \xC3\xA9", 2}};
  const char* path = "data_roundtrip.jsonl";
  save_corpus(path, recs);
  auto back = load_corpus(path);
  REQUIRE(back.size() == recs.size());
  for (size_t i = 0; i < recs.size(); ++i) {
    CHECK(back[i].id == recs[i].id);
    CHECK(back[i].text == recs[i].text);
    CHECK(back[i].label == recs[i].label);
  }
  std::remove(path);
}

TEST_CASE("generator is deterministic and balanced") {
  SynthSpec spec;
  spec.n_train = 200;
  spec.n_test = 100;
  spec.doc_len_mean = 60;
  spec.doc_len_jitter = 5;
  spec.content_len = 16;
  spec.signal_offset_tokens = 32;
  spec.seed = 42;

  auto a = synth_generate(spec);
  auto b = synth_generate(spec);
  REQUIRE(a.train.size() == 200);
  REQUIRE(a.test.size() == 100);
  for (size_t i = 0; i < a.train.size(); ++i) {
    CHECK(a.train[i].text == b.train[i].text);
    CHECK(a.train[i].label == b.train[i].label);
  }
  int pos = 0;
  for (const auto& r : a.train) pos += r.label;
  CHECK(pos == 100);

  spec.seed = 43;
  auto c = synth_generate(spec);
  bool any_diff = false;
  for (size_t i = 0; i < a.train.size(); ++i)
    if (a.train[i].text != c.train[i].text) any_diff = true;
  CHECK(any_diff);
}

TEST_CASE("synth_write emits byte-identical files on re-run") {
  SynthSpec spec;
  spec.n_train = 50;
  spec.n_test = 20;
  spec.doc_len_mean = 40;
  spec.doc_len_jitter = 4;
  spec.content_len = 8;
  spec.signal_offset_tokens = 16;
  spec.seed = 9;

  synth_write(spec, "synth_out_a");
  synth_write(spec, "synth_out_b");
  for (const char* name : {"train.jsonl", "test.jsonl", "spec.json"}) {
    std::ifstream fa(std::string("synth_out_a/") + name, std::ios::binary);
    std::ifstream fb(std::string("synth_out_b/") + name, std::ios::binary);
    REQUIRE(fa.good());
    REQUIRE(fb.good());
    std::string sa((std::istreambuf_iterator<char>(fa)), std::istreambuf_iterator<char>());
    std::string sb((std::istreambuf_iterator<char>(fb)), std::istreambuf_iterator<char>());
    CHECK(sa == sb);
  }
}

TEST_CASE("KeywordAnywhere plants the trigger in positives only") {
  SynthSpec spec;
  spec.signal_kind = SignalKind::KeywordAnywhere;
  spec.n_train = 200;
  spec.n_test = 50;
  spec.doc_len_mean = 40;
  spec.doc_len_jitter = 5;
  spec.content_len = 16;
  spec.signal_offset_tokens = 0;
  spec.seed = 7;
  auto c = synth_generate(spec);
  for (const auto& r : c.train) {
    auto words = words_of(r.text);
    CHECK(count_of(words, kTriggerA) == (r.label == 1 ? 1 : 0));
  }
}

TEST_CASE("LongRangePair structure and trigger marginals") {
  SynthSpec spec;
  spec.n_train = 400;
  spec.n_test = 100;
  spec.doc_len_mean = 248;
  spec.doc_len_jitter = 8;
  spec.content_len = 8;
  spec.signal_offset_tokens = 208;
  spec.seed = 11;
  auto c = synth_generate(spec);

  std::map<int, int> a_count, b_count, n_count;
  for (const auto& r : c.train) {
    auto words = words_of(r.text);
    // exactly one of each trigger per document, A inside chunk 1
    CHECK(count_of(words, kTriggerA) == 1);
    CHECK(count_of(words, kTriggerB) == 1);
    CHECK(position_of(words, kTriggerA) < spec.content_len);
    int b = position_of(words, kTriggerB);
    if (r.label == 1) {
      CHECK(b >= spec.signal_offset_tokens);
    } else {
      CHECK(b >= spec.content_len);
      CHECK(b < spec.signal_offset_tokens);
    }
    a_count[r.label]++;
    b_count[r.label]++;
    n_count[r.label]++;
  }
  // trigger marginals match between classes exactly (both present everywhere)
  CHECK(a_count[0] == n_count[0]);
  CHECK(a_count[1] == n_count[1]);
  CHECK(b_count[0] == n_count[0]);
  CHECK(b_count[1] == n_count[1]);
  CHECK(n_count[0] == n_count[1]);
}

TEST_CASE("impossible specs are rejected") {
  SynthSpec spec;
  spec.doc_len_mean = 100;  // shorter than the required offset
  spec.doc_len_jitter = 4;
  spec.signal_offset_tokens = 202;
  spec.content_len = 32;
  CHECK_THROWS(synth_generate(spec));

  SynthSpec bad;
  bad.signal_offset_tokens = 8;  // below content_len: B could land in chunk 1
  bad.content_len = 32;
  CHECK_THROWS(synth_generate(bad));
}

TEST_CASE("spec JSON round trip") {
  SynthSpec spec;
  spec.n_train = 123;
  spec.signal_kind = SignalKind::KeywordAnywhere;
  spec.seed = 77;
  auto back = SynthSpec::from_json(spec.to_json());
  CHECK(back.n_train == 123);
  CHECK(back.signal_kind == SignalKind::KeywordAnywhere);
  CHECK(back.seed == 77);
  CHECK(back.content_len == spec.content_len);
}
