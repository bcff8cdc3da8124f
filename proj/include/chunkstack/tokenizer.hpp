#pragma once

#include <string>
#include <unordered_map>
#include <vector>

namespace chunkstack {

struct Record;  // data.hpp

inline constexpr int kPadId = 0;
inline constexpr int kUnkId = 1;
inline constexpr int kClsId = 2;

// Immutable after construction; encode is safe to call concurrently.
class Vocabulary {
 public:
  // tokens[0..2] must be [PAD], [UNK], [CLS].
  explicit Vocabulary(std::vector<std::string> tokens);

  static Vocabulary load(const std::string& path);
  void save(const std::string& path) const;

  int id_of(const std::string& token) const;  // -1 if absent
  const std::string& token_of(int id) const;
  size_t size() const { return id_to_token_.size(); }

 private:
  std::vector<std::string> id_to_token_;
  std::unordered_map<std::string, int> token_to_id_;
};

// Lowercase, replace every Unicode punctuation codepoint with a space,
// collapse whitespace runs, strip ends.
std::string normalize(const std::string& text);

// Greedy longest-match-first WordPiece on a single whitespace-free word.
// Continuation pieces are matched with a "##" prefix. Falls back to [UNK]
// for unmatched or over-long words.
std::vector<int> wordpiece(const std::string& word, const Vocabulary& vocab,
                           size_t max_word_len = 100);

// normalize + split on whitespace + wordpiece each word. No [CLS] here;
// the chunker owns special-token insertion.
std::vector<int> encode(const std::string& text, const Vocabulary& vocab);

// Reserved tokens plus the most frequent whitespace-delimited words of the
// normalized corpus, ties broken lexicographically.
Vocabulary build_vocab(const std::vector<Record>& corpus, size_t target_size);

}  // namespace chunkstack
