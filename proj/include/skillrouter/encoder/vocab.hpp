#pragma once

#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

namespace skillrouter::encoder {

// Printable ASCII (0x20..0x7E) plus UNK at index 0.
class CharVocab {
 public:
  CharVocab();

  int index(char c) const;
  std::size_t size() const { return symbols_.size(); }
  const std::vector<std::string>& symbols() const { return symbols_; }

  // chars.txt: one symbol per line, index = line number. The space symbol is
  // written as "<space>" and UNK as "<unk>".
  void save(const std::filesystem::path& path) const;
  static CharVocab load(const std::filesystem::path& path);

 private:
  std::vector<std::string> symbols_;
};

// Word vocabulary with "<unk>" at index 0. Words below min_count map to UNK.
class WordVocab {
 public:
  WordVocab();
  explicit WordVocab(std::vector<std::string> words);

  // Ordered by descending count, then ascending word.
  static WordVocab build(const std::vector<std::vector<std::string>>& corpus, int min_count = 2);

  int index(const std::string& word) const;
  bool contains(const std::string& word) const { return index_.count(word) > 0; }
  std::size_t size() const { return words_.size(); }
  const std::vector<std::string>& words() const { return words_; }

  void save(const std::filesystem::path& path) const;
  static WordVocab load(const std::filesystem::path& path);

 private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, int> index_;
};

inline constexpr const char* kUnk = "<unk>";

// Share of distinct token types in `corpus` that the vocabulary knows.
double vocab_coverage(const std::vector<std::vector<std::string>>& corpus, const WordVocab& vocab);

}  // namespace skillrouter::encoder
