#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ctxgen/rng.hpp"
#include "ctxgen/vocab.hpp"

namespace ctxgen {

// One categorical context type: its name and the ordered list of admissible
// value labels. The position of a label is the index fed to the encoder.
struct ContextType {
  std::string name;
  std::vector<std::string> values;

  std::size_t cardinality() const { return values.size(); }
  // -1 when the label is not admissible.
  int value_index(const std::string& label) const;
};

// Ordered set of context types. The order is fixed once built; the encoder
// concatenates embeddings in exactly this order.
struct ContextSchema {
  std::vector<ContextType> types;

  std::size_t type_count() const { return types.size(); }
  bool empty() const { return types.empty(); }
  const ContextType* find(const std::string& name) const;
};

// A corpus record as read from disk, before tokenization.
struct RawRecord {
  std::string text;
  int rating = 0;
  std::string product;
  std::size_t line = 0;  // 1-based source line, for error messages
};

struct LoadStats {
  std::size_t loaded = 0;
  std::size_t skipped_malformed = 0;
  std::size_t skipped_too_long = 0;
  std::size_t skipped_oov = 0;
};

// Newline-delimited JSON objects {"text","rating","product"}. Malformed
// lines are skipped and counted; an unreadable file is fatal. Records whose
// word count exceeds max_words are dropped and counted when max_words > 0.
std::vector<RawRecord> read_corpus(const std::string& path, LoadStats* stats,
                                   std::size_t max_words = 0);

inline constexpr const char* kRatingContext = "rating";
inline constexpr const char* kProductContext = "product";

// Builds the schema for the requested context type names ("rating",
// "product") in the given order. Rating values are fixed to 1..5; product
// labels are the sorted distinct product ids seen in the records. Rating
// values outside 1..5 are an error naming the offending line.
ContextSchema build_schema(const std::vector<RawRecord>& records,
                           const std::vector<std::string>& context_names);

// Maps a record's context fields to per-type value indices under the schema.
// Unknown values are an error naming the line and field.
std::vector<int> context_indices(const RawRecord& record,
                                 const ContextSchema& schema);

// A tokenized training example: BOS ... EOS ids plus one categorical value
// index per schema type.
struct Example {
  std::vector<int> tokens;
  std::vector<int> contexts;

  // Scored target positions: every token after BOS, EOS included.
  std::size_t target_count() const { return tokens.size() - 1; }
  // Content words, the natural "review length".
  std::size_t content_length() const { return tokens.size() - 2; }
};

enum class OovPolicy {
  kReplaceWithUnk,  // default: map out-of-vocabulary words to UNK
  kDropExample,     // drop records containing out-of-vocabulary words
};

std::vector<Example> make_examples(const std::vector<RawRecord>& records,
                                   const ContextSchema& schema,
                                   const Vocabulary& vocab,
                                   OovPolicy policy = OovPolicy::kReplaceWithUnk,
                                   LoadStats* stats = nullptr);

struct DatasetSplit {
  std::vector<Example> train;
  std::vector<Example> valid;
  std::vector<Example> test;
};

// Seeded shuffle, then an 18:1:1 partition with remainders assigned to
// train. Requires at least 20 examples.
DatasetSplit split_dataset(const std::vector<Example>& examples,
                           std::uint64_t seed);

// Padded batch. loss_mask is 1 exactly on non-PAD target positions, i.e.
// every position except column 0 (BOS, input only) and padding.
struct Batch {
  std::size_t rows = 0;
  std::size_t max_len = 0;
  std::vector<int> token_matrix;      // rows x max_len, PAD-filled
  std::vector<std::size_t> lengths;   // true token counts per row
  std::vector<std::uint8_t> loss_mask;  // rows x max_len
  std::vector<int> context_matrix;    // rows x schema type count
  std::size_t context_width = 0;

  int token(std::size_t r, std::size_t c) const {
    return token_matrix[r * max_len + c];
  }
  bool masked_on(std::size_t r, std::size_t c) const {
    return loss_mask[r * max_len + c] != 0;
  }
  std::size_t target_tokens() const;
  Example example(std::size_t r) const;
};

// Text bodies from a file that is either newline-delimited JSON with a
// "text" field (corpus records, sample records) or plain text, one document
// per line. Lines that parse as JSON objects without a "text" string are
// skipped; empty lines are skipped.
std::vector<std::string> read_text_lines(const std::string& path);

// One epoch of batches: examples grouped into length buckets of
// `bucket_width` tokens, shuffled within buckets, chunked, and the batch
// order shuffled. Every example appears exactly once.
std::vector<Batch> make_batches(const std::vector<Example>& examples,
                                std::size_t batch_size,
                                std::size_t bucket_width, Rng& rng);
std::vector<Batch> make_batches(const std::vector<Example>& examples,
                                std::size_t batch_size, std::uint64_t seed,
                                std::size_t bucket_width = 10);

}  // namespace ctxgen
