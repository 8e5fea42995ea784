#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "ctxgen/common.hpp"

namespace ctxgen {

// Deterministic token <-> id map. Ids are contiguous from 0 with the four
// reserved specials pinned to 0..3; content tokens follow ordered by
// descending frequency, ties broken lexicographically ascending.
class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;
  static constexpr int kUnk = 3;
  static constexpr std::size_t kNumSpecials = 4;

  static const std::array<std::string, kNumSpecials>& special_tokens();

  Vocabulary();
  explicit Vocabulary(std::vector<std::string> content_tokens);

  std::size_t size() const { return tokens_.size(); }
  const std::string& token(int id) const;
  const std::vector<std::string>& tokens() const { return tokens_; }
  // Returns kUnk for out-of-vocabulary tokens.
  int id_or_unk(const std::string& token) const;
  bool contains(const std::string& token) const;
  static bool is_special(int id) { return id >= 0 && id < static_cast<int>(kNumSpecials); }

  // FNV-1a over all tokens, newline separated; recorded in checkpoints.
  std::uint64_t fingerprint() const;

  // Plain text, one token per line, line number = id (specials first).
  void save(const std::string& path) const;
  static Vocabulary load(const std::string& path);

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

// Lowercased (ASCII) whitespace split. Bytes >= 0x80 pass through unchanged.
std::vector<std::string> split_words(const std::string& text);

// The max_size most frequent words across the texts, specials excluded from
// the cap. Ties broken lexicographically ascending so construction is a pure
// function of the corpus.
Vocabulary build_vocab(const std::vector<std::string>& texts,
                       std::size_t max_size);

// BOS-prefixed, EOS-suffixed id sequence; OOV words map to UNK.
std::vector<int> tokenize(const std::string& text, const Vocabulary& vocab);

// Inverse of tokenize up to specials: joins content tokens with spaces.
std::string detokenize(const std::vector<int>& ids, const Vocabulary& vocab);

}  // namespace ctxgen
