#include "skillrouter/encoder/vocab.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <stdexcept>

#include "skillrouter/corpus/jsonl.hpp"

namespace skillrouter::encoder {

namespace {

constexpr char kFirstPrintable = 0x20;
constexpr char kLastPrintable = 0x7E;
constexpr const char* kSpace = "<space>";

// Every line is a symbol here, including "#".
std::vector<std::string> read_raw_lines(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open " + path.string());
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    out.push_back(line);
  }
  return out;
}

}  // namespace

CharVocab::CharVocab() {
  symbols_.push_back(kUnk);
  for (char c = kFirstPrintable; c <= kLastPrintable; ++c) {
    symbols_.push_back(c == ' ' ? kSpace : std::string(1, c));
  }
}

int CharVocab::index(char c) const {
  if (c < kFirstPrintable || c > kLastPrintable) return 0;
  return 1 + (c - kFirstPrintable);
}

void CharVocab::save(const std::filesystem::path& path) const { corpus::write_lines(path, symbols_); }

CharVocab CharVocab::load(const std::filesystem::path& path) {
  CharVocab v;
  if (read_raw_lines(path) != v.symbols_) {
    throw std::invalid_argument(path.string() + ": character vocabulary does not match");
  }
  return v;
}

WordVocab::WordVocab() : WordVocab(std::vector<std::string>{}) {}

WordVocab::WordVocab(std::vector<std::string> words) {
  if (words.empty() || words.front() != kUnk) words.insert(words.begin(), kUnk);
  words_ = std::move(words);
  for (std::size_t i = 0; i < words_.size(); ++i) {
    if (words_[i].empty()) throw std::invalid_argument("word vocabulary: empty word");
    if (!index_.emplace(words_[i], static_cast<int>(i)).second) {
      throw std::invalid_argument("word vocabulary: duplicate word '" + words_[i] + "'");
    }
  }
}

WordVocab WordVocab::build(const std::vector<std::vector<std::string>>& corpus, int min_count) {
  std::map<std::string, long> counts;
  for (const auto& tokens : corpus) {
    for (const auto& t : tokens) ++counts[t];
  }
  std::vector<std::pair<std::string, long>> kept;
  for (const auto& [w, c] : counts) {
    if (c >= min_count && w != kUnk) kept.emplace_back(w, c);
  }
  std::stable_sort(kept.begin(), kept.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> words = {kUnk};
  for (auto& [w, c] : kept) words.push_back(std::move(w));
  return WordVocab(std::move(words));
}

int WordVocab::index(const std::string& word) const {
  auto it = index_.find(word);
  return it == index_.end() ? 0 : it->second;
}

void WordVocab::save(const std::filesystem::path& path) const { corpus::write_lines(path, words_); }

WordVocab WordVocab::load(const std::filesystem::path& path) {
  auto words = corpus::read_lines(path);
  if (words.empty() || words.front() != kUnk) {
    throw std::invalid_argument(path.string() + ": word vocabulary must start with " + kUnk);
  }
  return WordVocab(std::move(words));
}

double vocab_coverage(const std::vector<std::vector<std::string>>& corpus, const WordVocab& vocab) {
  std::set<std::string> types;
  for (const auto& tokens : corpus) types.insert(tokens.begin(), tokens.end());
  if (types.empty()) return 1.0;
  std::size_t known = 0;
  for (const auto& t : types) known += vocab.contains(t) && t != kUnk;
  return static_cast<double>(known) / static_cast<double>(types.size());
}

}  // namespace skillrouter::encoder
