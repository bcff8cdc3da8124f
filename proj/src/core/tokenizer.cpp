#include "chunkstack/tokenizer.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "chunkstack/data.hpp"

namespace chunkstack {

namespace {

// Decodes the UTF-8 codepoint starting at s[i]; advances i past it.
// Invalid bytes are consumed one at a time and returned as-is.
uint32_t next_codepoint(const std::string& s, size_t& i) {
  unsigned char c = static_cast<unsigned char>(s[i]);
  if (c < 0x80) {
    ++i;
    return c;
  }
  int extra = (c >= 0xF0) ? 3 : (c >= 0xE0) ? 2 : (c >= 0xC0) ? 1 : 0;
  uint32_t cp = c & (0x3F >> extra);
  size_t j = i + 1;
  for (int k = 0; k < extra && j < s.size(); ++k, ++j) {
    unsigned char cc = static_cast<unsigned char>(s[j]);
    if ((cc & 0xC0) != 0x80) break;
    cp = (cp << 6) | (cc & 0x3F);
  }
  i = j;
  return cp;
}

void append_codepoint(std::string& out, uint32_t cp) {
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
}

bool is_punct_cp(uint32_t cp) {
  if (cp < 0x80) return std::ispunct(static_cast<int>(cp)) != 0;
  // Latin-1 punctuation and symbols treated as punctuation
  if (cp == 0xA1 || cp == 0xA7 || cp == 0xAB || cp == 0xB6 || cp == 0xB7 ||
      cp == 0xBB || cp == 0xBF)
    return true;
  if (cp >= 0x2000 && cp <= 0x206F) return true;  // general punctuation
  if (cp >= 0x3000 && cp <= 0x303F) return true;  // CJK symbols and punctuation
  if (cp >= 0xFE30 && cp <= 0xFE4F) return true;  // CJK compatibility forms
  if (cp >= 0xFF01 && cp <= 0xFF0F) return true;  // fullwidth ASCII punctuation
  if (cp >= 0xFF1A && cp <= 0xFF20) return true;
  if (cp >= 0xFF3B && cp <= 0xFF40) return true;
  if (cp >= 0xFF5B && cp <= 0xFF65) return true;
  return false;
}

bool is_space_cp(uint32_t cp) {
  return cp == ' ' || cp == '\t' || cp == '\n' || cp == '\r' || cp == '\f' ||
         cp == '\v' || cp == 0xA0 || (cp >= 0x2000 && cp <= 0x200A) || cp == 0x3000;
}

}  // namespace

Vocabulary::Vocabulary(std::vector<std::string> tokens) : id_to_token_(std::move(tokens)) {
  if (id_to_token_.size() < 3 || id_to_token_[0] != "[PAD]" || id_to_token_[1] != "[UNK]" ||
      id_to_token_[2] != "[CLS]")
    throw std::runtime_error("vocabulary: ids 0-2 must be [PAD], [UNK], [CLS]");
  for (size_t i = 0; i < id_to_token_.size(); ++i) {
    const std::string& t = id_to_token_[i];
    if (t.empty() || t.find_first_of(" \t\n\r") != std::string::npos)
      throw std::runtime_error("vocabulary: token at id " + std::to_string(i) +
                               " is empty or contains whitespace");
    if (!token_to_id_.emplace(t, static_cast<int>(i)).second)
      throw std::runtime_error("vocabulary: duplicate token '" + t + "'");
  }
}

Vocabulary Vocabulary::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("vocabulary: cannot open " + path);
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    tokens.push_back(line);
  }
  return Vocabulary(std::move(tokens));
}

void Vocabulary::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("vocabulary: cannot write " + path);
  for (const auto& t : id_to_token_) out << t << "\n";
}

int Vocabulary::id_of(const std::string& token) const {
  auto it = token_to_id_.find(token);
  return it == token_to_id_.end() ? -1 : it->second;
}

const std::string& Vocabulary::token_of(int id) const {
  if (id < 0 || static_cast<size_t>(id) >= id_to_token_.size())
    throw std::runtime_error("vocabulary: id out of range");
  return id_to_token_[static_cast<size_t>(id)];
}

std::string normalize(const std::string& text) {
  std::string out;
  out.reserve(text.size());
  bool pending_space = false;
  size_t i = 0;
  while (i < text.size()) {
    uint32_t cp = next_codepoint(text, i);
    if (is_punct_cp(cp) || is_space_cp(cp)) {
      pending_space = true;
      continue;
    }
    if (pending_space && !out.empty()) out.push_back(' ');
    pending_space = false;
    if (cp < 0x80)
      out.push_back(static_cast<char>(std::tolower(static_cast<int>(cp))));
    else
      append_codepoint(out, cp);
  }
  return out;
}

std::vector<int> wordpiece(const std::string& word, const Vocabulary& vocab,
                           size_t max_word_len) {
  if (word.empty()) return {};
  if (word.size() > max_word_len) return {kUnkId};
  std::vector<int> pieces;
  size_t start = 0;
  while (start < word.size()) {
    size_t end = word.size();
    int match = -1;
    while (end > start) {
      std::string piece = word.substr(start, end - start);
      if (start > 0) piece = "##" + piece;
      match = vocab.id_of(piece);
      if (match >= 0) break;
      --end;
    }
    if (match < 0) return {kUnkId};
    pieces.push_back(match);
    start = end;
  }
  return pieces;
}

std::vector<int> encode(const std::string& text, const Vocabulary& vocab) {
  std::vector<int> ids;
  std::istringstream in(normalize(text));
  std::string word;
  while (in >> word) {
    auto pieces = wordpiece(word, vocab);
    ids.insert(ids.end(), pieces.begin(), pieces.end());
  }
  return ids;
}

Vocabulary build_vocab(const std::vector<Record>& corpus, size_t target_size) {
  if (corpus.empty()) throw std::runtime_error("build_vocab: empty corpus");
  if (target_size <= 3) throw std::runtime_error("build_vocab: target_size must exceed 3");
  std::map<std::string, int64_t> counts;  // ordered, for the lexicographic tie-break
  for (const auto& rec : corpus) {
    std::istringstream in(normalize(rec.text));
    std::string word;
    while (in >> word) counts[word]++;
  }
  std::vector<std::pair<std::string, int64_t>> by_freq(counts.begin(), counts.end());
  std::stable_sort(by_freq.begin(), by_freq.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> tokens{"[PAD]", "[UNK]", "[CLS]"};
  for (const auto& [word, count] : by_freq) {
    if (tokens.size() >= target_size) break;
    tokens.push_back(word);
  }
  return Vocabulary(std::move(tokens));
}

}  // namespace chunkstack
