#include "ctxgen/vocab.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>

#include "ctxgen/rng.hpp"

namespace ctxgen {

const std::array<std::string, Vocabulary::kNumSpecials>&
Vocabulary::special_tokens() {
  static const std::array<std::string, kNumSpecials> specials = {
      "<pad>", "<bos>", "<eos>", "<unk>"};
  return specials;
}

Vocabulary::Vocabulary() : Vocabulary(std::vector<std::string>{}) {}

Vocabulary::Vocabulary(std::vector<std::string> content_tokens) {
  tokens_.reserve(kNumSpecials + content_tokens.size());
  for (const std::string& s : special_tokens()) tokens_.push_back(s);
  for (std::string& t : content_tokens) tokens_.push_back(std::move(t));
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    auto [it, inserted] = index_.emplace(tokens_[i], static_cast<int>(i));
    if (!inserted) {
      throw DataError("duplicate token '" + tokens_[i] + "' in vocabulary");
    }
  }
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || id >= static_cast<int>(tokens_.size())) {
    throw DataError("token id " + std::to_string(id) + " out of range");
  }
  return tokens_[static_cast<std::size_t>(id)];
}

int Vocabulary::id_or_unk(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? kUnk : it->second;
}

bool Vocabulary::contains(const std::string& token) const {
  return index_.count(token) != 0;
}

std::uint64_t Vocabulary::fingerprint() const {
  std::string joined;
  for (const std::string& t : tokens_) {
    joined += t;
    joined += '\n';
  }
  return fnv1a64(joined);
}

void Vocabulary::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write vocabulary file '" + path + "'");
  for (const std::string& t : tokens_) out << t << '\n';
  if (!out) throw DataError("failed writing vocabulary file '" + path + "'");
}

Vocabulary Vocabulary::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read vocabulary file '" + path + "'");
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  if (lines.size() < kNumSpecials) {
    throw DataError("vocabulary file '" + path + "' is missing specials");
  }
  for (std::size_t i = 0; i < kNumSpecials; ++i) {
    if (lines[i] != special_tokens()[i]) {
      throw DataError("vocabulary file '" + path + "' line " +
                      std::to_string(i + 1) + ": expected special '" +
                      special_tokens()[i] + "', got '" + lines[i] + "'");
    }
  }
  return Vocabulary(
      std::vector<std::string>(lines.begin() + kNumSpecials, lines.end()));
}

std::vector<std::string> split_words(const std::string& text) {
  std::vector<std::string> words;
  std::string current;
  for (char ch : text) {
    const unsigned char c = static_cast<unsigned char>(ch);
    if (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' ||
        c == '\v') {
      if (!current.empty()) {
        words.push_back(std::move(current));
        current.clear();
      }
    } else {
      current.push_back(c < 0x80 ? static_cast<char>(std::tolower(c)) : ch);
    }
  }
  if (!current.empty()) words.push_back(std::move(current));
  return words;
}

Vocabulary build_vocab(const std::vector<std::string>& texts,
                       std::size_t max_size) {
  if (max_size < 1) throw ShapeError("build_vocab: max_size must be >= 1");
  // std::map keeps candidates lexicographically sorted, which is exactly the
  // tie-break order.
  std::map<std::string, std::size_t> counts;
  for (const std::string& text : texts) {
    for (std::string& w : split_words(text)) {
      bool is_special_literal = false;
      for (const std::string& s : Vocabulary::special_tokens()) {
        if (w == s) {
          is_special_literal = true;
          break;
        }
      }
      if (!is_special_literal) ++counts[w];
    }
  }
  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(),
                                                          counts.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) {
                     return a.second > b.second;
                   });
  if (ranked.size() > max_size) ranked.resize(max_size);
  std::vector<std::string> content;
  content.reserve(ranked.size());
  for (auto& [word, count] : ranked) content.push_back(word);
  return Vocabulary(std::move(content));
}

std::vector<int> tokenize(const std::string& text, const Vocabulary& vocab) {
  std::vector<int> ids;
  const std::vector<std::string> words = split_words(text);
  ids.reserve(words.size() + 2);
  ids.push_back(Vocabulary::kBos);
  for (const std::string& w : words) ids.push_back(vocab.id_or_unk(w));
  ids.push_back(Vocabulary::kEos);
  return ids;
}

std::string detokenize(const std::vector<int>& ids, const Vocabulary& vocab) {
  std::string text;
  for (int id : ids) {
    if (Vocabulary::is_special(id) && id != Vocabulary::kUnk) continue;
    if (!text.empty()) text += ' ';
    text += vocab.token(id);
  }
  return text;
}

}  // namespace ctxgen
