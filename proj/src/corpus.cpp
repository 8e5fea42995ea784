#include "ctxgen/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include "json.hpp"

namespace ctxgen {

int ContextType::value_index(const std::string& label) const {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (values[i] == label) return static_cast<int>(i);
  }
  return -1;
}

const ContextType* ContextSchema::find(const std::string& name) const {
  for (const ContextType& t : types) {
    if (t.name == name) return &t;
  }
  return nullptr;
}

std::vector<RawRecord> read_corpus(const std::string& path, LoadStats* stats,
                                   std::size_t max_words) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read corpus file '" + path + "'");

  LoadStats local;
  std::vector<RawRecord> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json obj = nlohmann::json::parse(line, nullptr, false);
    if (obj.is_discarded() || !obj.is_object() ||
        !obj.contains("text") || !obj["text"].is_string() ||
        !obj.contains("rating") || !obj["rating"].is_number_integer() ||
        !obj.contains("product") || !obj["product"].is_string()) {
      ++local.skipped_malformed;
      continue;
    }
    RawRecord rec;
    rec.text = obj["text"].get<std::string>();
    rec.rating = obj["rating"].get<int>();
    rec.product = obj["product"].get<std::string>();
    rec.line = line_no;
    if (max_words > 0 && split_words(rec.text).size() > max_words) {
      ++local.skipped_too_long;
      continue;
    }
    records.push_back(std::move(rec));
    ++local.loaded;
  }
  if (stats) *stats = local;
  return records;
}

ContextSchema build_schema(const std::vector<RawRecord>& records,
                           const std::vector<std::string>& context_names) {
  ContextSchema schema;
  for (const std::string& name : context_names) {
    ContextType type;
    type.name = name;
    if (name == kRatingContext) {
      type.values = {"1", "2", "3", "4", "5"};
      for (const RawRecord& r : records) {
        if (r.rating < 1 || r.rating > 5) {
          throw DataError("line " + std::to_string(r.line) +
                          ": unknown value '" + std::to_string(r.rating) +
                          "' for field 'rating'");
        }
      }
    } else if (name == kProductContext) {
      std::set<std::string> products;
      for (const RawRecord& r : records) products.insert(r.product);
      type.values.assign(products.begin(), products.end());
      if (type.values.empty()) {
        throw DataError("no product values found for context 'product'");
      }
    } else {
      throw DataError("unknown context type '" + name + "'");
    }
    schema.types.push_back(std::move(type));
  }
  return schema;
}

std::vector<int> context_indices(const RawRecord& record,
                                 const ContextSchema& schema) {
  std::vector<int> indices;
  indices.reserve(schema.type_count());
  for (const ContextType& type : schema.types) {
    const std::string label = type.name == kRatingContext
                                  ? std::to_string(record.rating)
                                  : record.product;
    const int idx = type.value_index(label);
    if (idx < 0) {
      throw DataError("line " + std::to_string(record.line) +
                      ": unknown value '" + label + "' for field '" +
                      type.name + "'");
    }
    indices.push_back(idx);
  }
  return indices;
}

std::vector<Example> make_examples(const std::vector<RawRecord>& records,
                                   const ContextSchema& schema,
                                   const Vocabulary& vocab, OovPolicy policy,
                                   LoadStats* stats) {
  std::vector<Example> examples;
  examples.reserve(records.size());
  for (const RawRecord& rec : records) {
    if (policy == OovPolicy::kDropExample) {
      bool oov = false;
      for (const std::string& w : split_words(rec.text)) {
        if (!vocab.contains(w)) {
          oov = true;
          break;
        }
      }
      if (oov) {
        if (stats) ++stats->skipped_oov;
        continue;
      }
    }
    Example ex;
    ex.tokens = tokenize(rec.text, vocab);
    ex.contexts = context_indices(rec, schema);
    examples.push_back(std::move(ex));
  }
  return examples;
}

DatasetSplit split_dataset(const std::vector<Example>& examples,
                           std::uint64_t seed) {
  if (examples.size() < 20) {
    throw DataError("split_dataset: need at least 20 examples to realize an "
                    "18:1:1 split, got " +
                    std::to_string(examples.size()));
  }
  std::vector<std::size_t> order(examples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng = Rng::fork(seed, "split");
  shuffle(order, rng);

  const std::size_t valid_n = examples.size() / 20;
  const std::size_t test_n = examples.size() / 20;
  const std::size_t train_n = examples.size() - valid_n - test_n;

  DatasetSplit split;
  split.train.reserve(train_n);
  split.valid.reserve(valid_n);
  split.test.reserve(test_n);
  for (std::size_t i = 0; i < order.size(); ++i) {
    const Example& ex = examples[order[i]];
    if (i < train_n) split.train.push_back(ex);
    else if (i < train_n + valid_n) split.valid.push_back(ex);
    else split.test.push_back(ex);
  }
  return split;
}

std::size_t Batch::target_tokens() const {
  std::size_t n = 0;
  for (std::uint8_t m : loss_mask) n += m;
  return n;
}

Example Batch::example(std::size_t r) const {
  Example ex;
  ex.tokens.assign(token_matrix.begin() + r * max_len,
                   token_matrix.begin() + r * max_len + lengths[r]);
  ex.contexts.assign(context_matrix.begin() + r * context_width,
                     context_matrix.begin() + (r + 1) * context_width);
  return ex;
}

namespace {

Batch pack_batch(const std::vector<const Example*>& rows) {
  Batch batch;
  batch.rows = rows.size();
  batch.context_width = rows.empty() ? 0 : rows[0]->contexts.size();
  for (const Example* ex : rows) {
    batch.max_len = std::max(batch.max_len, ex->tokens.size());
  }
  batch.token_matrix.assign(batch.rows * batch.max_len, Vocabulary::kPad);
  batch.loss_mask.assign(batch.rows * batch.max_len, 0);
  batch.lengths.resize(batch.rows);
  batch.context_matrix.reserve(batch.rows * batch.context_width);
  for (std::size_t r = 0; r < batch.rows; ++r) {
    const Example& ex = *rows[r];
    batch.lengths[r] = ex.tokens.size();
    for (std::size_t c = 0; c < ex.tokens.size(); ++c) {
      batch.token_matrix[r * batch.max_len + c] = ex.tokens[c];
      if (c >= 1) batch.loss_mask[r * batch.max_len + c] = 1;
    }
    for (int ctx : ex.contexts) batch.context_matrix.push_back(ctx);
  }
  return batch;
}

}  // namespace

std::vector<Batch> make_batches(const std::vector<Example>& examples,
                                std::size_t batch_size,
                                std::size_t bucket_width, Rng& rng) {
  if (batch_size < 1) throw ShapeError("make_batches: batch_size must be >= 1");
  if (bucket_width < 1) throw ShapeError("make_batches: bucket_width must be >= 1");

  // Bucket ids in ascending order keep the pre-shuffle layout deterministic.
  std::vector<std::pair<std::size_t, std::vector<std::size_t>>> buckets;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    const std::size_t b = examples[i].tokens.size() / bucket_width;
    auto it = std::find_if(buckets.begin(), buckets.end(),
                           [b](const auto& p) { return p.first == b; });
    if (it == buckets.end()) {
      buckets.push_back({b, {i}});
    } else {
      it->second.push_back(i);
    }
  }
  std::sort(buckets.begin(), buckets.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });

  std::vector<std::vector<const Example*>> groups;
  for (auto& [id, indices] : buckets) {
    shuffle(indices, rng);
    for (std::size_t start = 0; start < indices.size(); start += batch_size) {
      const std::size_t end = std::min(start + batch_size, indices.size());
      std::vector<const Example*> rows;
      rows.reserve(end - start);
      for (std::size_t i = start; i < end; ++i) {
        rows.push_back(&examples[indices[i]]);
      }
      groups.push_back(std::move(rows));
    }
  }
  shuffle(groups, rng);

  std::vector<Batch> batches;
  batches.reserve(groups.size());
  for (const auto& rows : groups) batches.push_back(pack_batch(rows));
  return batches;
}

std::vector<Batch> make_batches(const std::vector<Example>& examples,
                                std::size_t batch_size, std::uint64_t seed,
                                std::size_t bucket_width) {
  Rng rng = Rng::fork(seed, "batching");
  return make_batches(examples, batch_size, bucket_width, rng);
}

std::vector<std::string> read_text_lines(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read text file '" + path + "'");
  std::vector<std::string> texts;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    nlohmann::json obj = nlohmann::json::parse(line, nullptr, false);
    if (obj.is_discarded() || !obj.is_object()) {
      texts.push_back(line);  // plain-text document
    } else if (obj.contains("text") && obj["text"].is_string()) {
      texts.push_back(obj["text"].get<std::string>());
    }
  }
  return texts;
}

}  // namespace ctxgen
