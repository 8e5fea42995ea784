#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "ctxgen/corpus.hpp"
#include "ctxgen/model.hpp"
#include "ctxgen/tensor.hpp"
#include "ctxgen/vocab.hpp"

#include "json.hpp"

namespace ctxgen {

struct LengthBucket {
  std::size_t lo = 0;  // inclusive content-length bound
  std::size_t hi = 0;  // exclusive
  double perplexity = 0.0;
  std::size_t tokens = 0;
  std::size_t examples = 0;
};

struct PerplexityReport {
  double overall_perplexity = 0.0;
  double mean_loss = 0.0;
  std::size_t total_tokens = 0;
  std::size_t example_count = 0;
  std::size_t bucket_width = 20;
  std::vector<LengthBucket> buckets;  // ascending, empty buckets omitted

  nlohmann::ordered_json to_json() const;
  std::string to_table() const;
};

// Eval-mode forward over every example; exp(mean loss) overall and per
// content-length bucket. workers > 1 splits examples into contiguous ranges
// whose partial sums are reduced in range order, so results do not depend on
// scheduling.
PerplexityReport perplexity(const std::vector<Example>& data,
                            const ModelView& view, std::size_t bucket_width = 20,
                            std::size_t workers = 1);

struct GateAttributionEntry {
  int token_id = 0;
  std::string token;
  double mean_gate = 0.0;
  std::size_t count = 0;
};

struct GateAttributionReport {
  std::size_t min_count = 1;
  std::vector<GateAttributionEntry> entries;  // descending mean gate

  nlohmann::ordered_json to_json() const;
  std::string to_table() const;
};

// Mean gating-vector activation per target token type, ranked descending.
// Per-token contributions are summed in sorted order, so the report is
// independent of dataset order. Requires a gC2S model.
GateAttributionReport gate_attribution(const std::vector<Example>& data,
                                       const ModelView& view,
                                       const Vocabulary& vocab,
                                       std::size_t min_count = 1);

// --- n-gram logistic-regression classifier ---------------------------------

struct NgramClassifierConfig {
  double l2 = 1e-4;
  bool count_features = false;  // default: binary presence
  std::size_t max_iterations = 10000;
  double grad_tolerance = 1e-5;
};

// Multinomial logistic regression over unigram+bigram features, trained by
// full-batch gradient descent from a zero start (deterministic, no rng).
struct NgramClassifier {
  std::vector<std::string> feature_names;  // sorted; index = feature id
  std::unordered_map<std::string, std::size_t> feature_index;
  std::vector<std::string> class_names;
  bool count_features = false;
  double l2 = 0.0;
  std::size_t iterations_run = 0;
  double final_grad_norm = 0.0;
  Tensor weights;  // classes x features
  Tensor bias;     // classes

  Tensor features(const std::string& text) const;
  Tensor class_probs(const std::string& text) const;
  // Argmax class, ties broken by lowest class index.
  std::size_t predict(const std::string& text) const;
};

// texts[i] belongs to class labels[i] in [0, class_names.size()). Throws
// DataError unless at least two classes actually occur.
NgramClassifier train_ngram_classifier(
    const std::vector<std::string>& texts, const std::vector<int>& labels,
    const std::vector<std::string>& class_names,
    const NgramClassifierConfig& config = {});

struct ConfusionReport {
  std::vector<std::string> class_names;
  std::vector<std::size_t> matrix;  // classes x classes, row true, col pred
  double accuracy = 0.0;
  std::vector<double> precision;  // per class, 0 when undefined
  std::vector<double> recall;
  std::vector<double> f1;
  // Binary presentation (class 1 = positive), percentages over the true
  // class: tp + fn = 100 over positives, tn + fp = 100 over negatives.
  double tp_pct = 0.0, fn_pct = 0.0, tn_pct = 0.0, fp_pct = 0.0;

  std::size_t count(std::size_t true_class, std::size_t pred_class) const {
    return matrix[true_class * class_names.size() + pred_class];
  }
  nlohmann::ordered_json to_json() const;
  std::string to_table() const;
};

ConfusionReport classify_corpus(const NgramClassifier& classifier,
                                const std::vector<std::string>& texts,
                                const std::vector<int>& labels);

}  // namespace ctxgen
