#include "ctxgen/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <thread>
#include <utility>

namespace ctxgen {

using ordered_json = nlohmann::ordered_json;

namespace {

std::string fmt(const char* format, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), format, v);
  return buf;
}

}  // namespace

// --- perplexity -------------------------------------------------------------

namespace {

struct BucketAcc {
  double loss = 0.0;
  std::size_t tokens = 0;
  std::size_t examples = 0;
};

void score_range(const std::vector<Example>& data, const ModelView& view,
                 std::size_t lo, std::size_t hi, std::vector<double>& losses) {
  for (std::size_t i = lo; i < hi; ++i) {
    losses[i] = forward_sequence(data[i], view, Mode::kEval).loss;
  }
}

}  // namespace

PerplexityReport perplexity(const std::vector<Example>& data,
                            const ModelView& view, std::size_t bucket_width,
                            std::size_t workers) {
  if (data.empty()) throw DataError("cannot score an empty dataset");
  if (bucket_width < 1) throw ShapeError("bucket_width must be >= 1");
  if (workers < 1) workers = 1;
  workers = std::min(workers, data.size());

  // One loss slot per example, reduced sequentially in example order below:
  // the numbers never depend on worker count or thread scheduling.
  std::vector<double> losses(data.size());
  if (workers == 1) {
    score_range(data, view, 0, data.size(), losses);
  } else {
    std::vector<std::thread> threads;
    const std::size_t base = data.size() / workers;
    const std::size_t rem = data.size() % workers;
    std::size_t start = 0;
    for (std::size_t w = 0; w < workers; ++w) {
      const std::size_t len = base + (w < rem ? 1 : 0);
      threads.emplace_back(score_range, std::cref(data), std::cref(view),
                           start, start + len, std::ref(losses));
      start += len;
    }
    for (auto& t : threads) t.join();
  }

  struct {
    double loss = 0.0;
    std::size_t tokens = 0;
    std::map<std::size_t, BucketAcc> buckets;
  } total;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const Example& ex = data[i];
    total.loss += losses[i];
    total.tokens += ex.target_count();
    BucketAcc& bucket = total.buckets[ex.content_length() / bucket_width];
    bucket.loss += losses[i];
    bucket.tokens += ex.target_count();
    bucket.examples += 1;
  }

  PerplexityReport report;
  report.bucket_width = bucket_width;
  report.total_tokens = total.tokens;
  report.example_count = data.size();
  report.mean_loss = total.loss / static_cast<double>(total.tokens);
  report.overall_perplexity = std::exp(report.mean_loss);
  for (const auto& [idx, b] : total.buckets) {
    LengthBucket lb;
    lb.lo = idx * bucket_width;
    lb.hi = (idx + 1) * bucket_width;
    lb.perplexity = std::exp(b.loss / static_cast<double>(b.tokens));
    lb.tokens = b.tokens;
    lb.examples = b.examples;
    report.buckets.push_back(lb);
  }
  return report;
}

ordered_json PerplexityReport::to_json() const {
  ordered_json j;
  j["overall_perplexity"] = overall_perplexity;
  j["mean_loss"] = mean_loss;
  j["total_tokens"] = total_tokens;
  j["example_count"] = example_count;
  j["bucket_width"] = bucket_width;
  ordered_json arr = ordered_json::array();
  for (const LengthBucket& b : buckets) {
    arr.push_back({{"lo", b.lo},
                   {"hi", b.hi},
                   {"perplexity", b.perplexity},
                   {"tokens", b.tokens},
                   {"examples", b.examples}});
  }
  j["buckets"] = std::move(arr);
  return j;
}

std::string PerplexityReport::to_table() const {
  std::string out;
  out += "overall perplexity: " + fmt("%.6f", overall_perplexity) + "\n";
  out += "examples: " + std::to_string(example_count) +
         "  target tokens: " + std::to_string(total_tokens) + "\n\n";
  out += "length      perplexity      tokens    examples\n";
  for (const LengthBucket& b : buckets) {
    char line[128];
    std::snprintf(line, sizeof(line), "[%3zu,%3zu)  %12.6f  %10zu  %10zu\n",
                  b.lo, b.hi, b.perplexity, b.tokens, b.examples);
    out += line;
  }
  return out;
}

// --- gate attribution -------------------------------------------------------

GateAttributionReport gate_attribution(const std::vector<Example>& data,
                                       const ModelView& view,
                                       const Vocabulary& vocab,
                                       std::size_t min_count) {
  if (!view.config->gated()) {
    throw ShapeError("gate attribution requires a gc2s model");
  }
  if (min_count < 1) min_count = 1;

  // Per token type, every occurrence's mean gate. Summed in sorted order so
  // the report is identical for any shuffling of the dataset.
  std::map<int, std::vector<double>> occurrences;
  for (const Example& ex : data) {
    SequenceResult res = forward_sequence(ex, view, Mode::kEval);
    for (const GateTraceEntry& e : res.gate_trace->entries) {
      occurrences[e.token_id].push_back(e.mean_gate);
    }
  }

  GateAttributionReport report;
  report.min_count = min_count;
  for (auto& [token_id, values] : occurrences) {
    if (values.size() < min_count) continue;
    std::sort(values.begin(), values.end());
    double sum = 0.0;
    for (double v : values) sum += v;
    GateAttributionEntry entry;
    entry.token_id = token_id;
    entry.token = vocab.token(token_id);
    entry.mean_gate = sum / static_cast<double>(values.size());
    entry.count = values.size();
    report.entries.push_back(std::move(entry));
  }
  std::sort(report.entries.begin(), report.entries.end(),
            [](const GateAttributionEntry& a, const GateAttributionEntry& b) {
              if (a.mean_gate != b.mean_gate) return a.mean_gate > b.mean_gate;
              return a.token_id < b.token_id;
            });
  return report;
}

ordered_json GateAttributionReport::to_json() const {
  ordered_json j;
  j["min_count"] = min_count;
  ordered_json arr = ordered_json::array();
  for (const GateAttributionEntry& e : entries) {
    arr.push_back({{"token", e.token},
                   {"token_id", e.token_id},
                   {"mean_gate", e.mean_gate},
                   {"count", e.count}});
  }
  j["entries"] = std::move(arr);
  return j;
}

std::string GateAttributionReport::to_table() const {
  std::string out = "rank  token                 mean gate       count\n";
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const GateAttributionEntry& e = entries[i];
    char line[160];
    std::snprintf(line, sizeof(line), "%4zu  %-20s  %10.6f  %10zu\n", i + 1,
                  e.token.c_str(), e.mean_gate, e.count);
    out += line;
  }
  return out;
}

// --- n-gram logistic-regression classifier ----------------------------------

namespace {

std::vector<std::string> ngrams_of(const std::string& text) {
  const std::vector<std::string> words = split_words(text);
  std::vector<std::string> grams = words;
  for (std::size_t i = 0; i + 1 < words.size(); ++i) {
    grams.push_back(words[i] + " " + words[i + 1]);
  }
  return grams;
}

// Sparse row: sorted (feature, value) pairs.
using SparseRow = std::vector<std::pair<std::size_t, double>>;

SparseRow sparse_features(const std::string& text,
                          const std::unordered_map<std::string, std::size_t>& index,
                          bool counts) {
  std::map<std::size_t, double> acc;
  for (const std::string& gram : ngrams_of(text)) {
    auto it = index.find(gram);
    if (it == index.end()) continue;
    if (counts) {
      acc[it->second] += 1.0;
    } else {
      acc[it->second] = 1.0;
    }
  }
  return SparseRow(acc.begin(), acc.end());
}

}  // namespace

Tensor NgramClassifier::features(const std::string& text) const {
  Tensor x({feature_names.size()});
  for (const auto& [idx, value] :
       sparse_features(text, feature_index, count_features)) {
    x[idx] = value;
  }
  return x;
}

Tensor NgramClassifier::class_probs(const std::string& text) const {
  const SparseRow row = sparse_features(text, feature_index, count_features);
  Tensor scores = bias;
  for (std::size_t c = 0; c < class_names.size(); ++c) {
    for (const auto& [idx, value] : row) {
      scores[c] += weights.at(c, idx) * value;
    }
  }
  Tensor lsm = log_softmax(scores);
  for (double& v : lsm.data) v = std::exp(v);
  return lsm;
}

std::size_t NgramClassifier::predict(const std::string& text) const {
  Tensor probs = class_probs(text);
  std::size_t best = 0;
  for (std::size_t c = 1; c < probs.size(); ++c) {
    if (probs[c] > probs[best]) best = c;
  }
  return best;
}

NgramClassifier train_ngram_classifier(const std::vector<std::string>& texts,
                                       const std::vector<int>& labels,
                                       const std::vector<std::string>& class_names,
                                       const NgramClassifierConfig& config) {
  if (texts.size() != labels.size()) {
    throw ShapeError("texts and labels must have matching lengths");
  }
  if (texts.empty()) throw DataError("no training texts");
  if (class_names.size() < 2) throw ShapeError("need at least two classes");
  const std::size_t num_classes = class_names.size();

  std::vector<bool> seen(num_classes, false);
  for (int label : labels) {
    if (label < 0 || static_cast<std::size_t>(label) >= num_classes) {
      throw DataError("label " + std::to_string(label) + " outside classes");
    }
    seen[static_cast<std::size_t>(label)] = true;
  }
  if (std::count(seen.begin(), seen.end(), true) < 2) {
    throw DataError("training data contains a single class");
  }

  NgramClassifier clf;
  clf.class_names = class_names;
  clf.count_features = config.count_features;
  clf.l2 = config.l2;

  // Lexicographically sorted feature map: a pure function of the text set.
  {
    std::vector<std::string> all;
    for (const std::string& text : texts) {
      for (std::string& gram : ngrams_of(text)) all.push_back(std::move(gram));
    }
    std::sort(all.begin(), all.end());
    all.erase(std::unique(all.begin(), all.end()), all.end());
    clf.feature_names = std::move(all);
    for (std::size_t i = 0; i < clf.feature_names.size(); ++i) {
      clf.feature_index.emplace(clf.feature_names[i], i);
    }
  }
  const std::size_t num_features = clf.feature_names.size();

  std::vector<SparseRow> rows;
  rows.reserve(texts.size());
  double max_sq_norm = 0.0;
  for (const std::string& text : texts) {
    rows.push_back(
        sparse_features(text, clf.feature_index, clf.count_features));
    double sq = 0.0;
    for (const auto& [idx, value] : rows.back()) sq += value * value;
    max_sq_norm = std::max(max_sq_norm, sq);
  }

  // Softmax cross-entropy has curvature at most 1/2 in the scores; with the
  // bias treated as an always-on unit feature the mean loss is L-smooth for
  // L = (max ||x||^2 + 1)/2 + l2, making 1/L a safe constant step.
  const double lr = 1.0 / (0.5 * (max_sq_norm + 1.0) + config.l2);
  const double inv_n = 1.0 / static_cast<double>(texts.size());

  clf.weights = Tensor::zeros({num_classes, num_features});
  clf.bias = Tensor::zeros({num_classes});
  Tensor grad_w({num_classes, num_features});
  Tensor grad_b({num_classes});

  for (std::size_t iter = 0; iter < config.max_iterations; ++iter) {
    grad_w.fill(0.0);
    grad_b.fill(0.0);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      Tensor scores = clf.bias;
      for (std::size_t c = 0; c < num_classes; ++c) {
        for (const auto& [idx, value] : rows[i]) {
          scores[c] += clf.weights.at(c, idx) * value;
        }
      }
      Tensor lsm = log_softmax(scores);
      for (std::size_t c = 0; c < num_classes; ++c) {
        const double g =
            std::exp(lsm[c]) -
            (static_cast<std::size_t>(labels[i]) == c ? 1.0 : 0.0);
        grad_b[c] += g;
        for (const auto& [idx, value] : rows[i]) {
          grad_w.at(c, idx) += g * value;
        }
      }
    }
    scale(grad_w, inv_n);
    scale(grad_b, inv_n);
    add_scaled(grad_w, clf.weights, config.l2);  // bias unregularized

    double sq = 0.0;
    for (double g : grad_w.data) sq += g * g;
    for (double g : grad_b.data) sq += g * g;
    clf.final_grad_norm = std::sqrt(sq);
    clf.iterations_run = iter;
    if (clf.final_grad_norm < config.grad_tolerance) break;

    add_scaled(clf.weights, grad_w, -lr);
    add_scaled(clf.bias, grad_b, -lr);
  }
  return clf;
}

ConfusionReport classify_corpus(const NgramClassifier& classifier,
                                const std::vector<std::string>& texts,
                                const std::vector<int>& labels) {
  if (texts.size() != labels.size()) {
    throw ShapeError("texts and labels must have matching lengths");
  }
  if (texts.empty()) throw DataError("no texts to classify");
  const std::size_t num_classes = classifier.class_names.size();

  ConfusionReport report;
  report.class_names = classifier.class_names;
  report.matrix.assign(num_classes * num_classes, 0);

  std::size_t correct = 0;
  for (std::size_t i = 0; i < texts.size(); ++i) {
    const auto true_class = static_cast<std::size_t>(labels[i]);
    if (true_class >= num_classes) {
      throw DataError("label " + std::to_string(labels[i]) +
                      " outside classes");
    }
    const std::size_t pred = classifier.predict(texts[i]);
    report.matrix[true_class * num_classes + pred] += 1;
    if (pred == true_class) ++correct;
  }
  report.accuracy =
      static_cast<double>(correct) / static_cast<double>(texts.size());

  for (std::size_t c = 0; c < num_classes; ++c) {
    std::size_t row_sum = 0, col_sum = 0;
    for (std::size_t k = 0; k < num_classes; ++k) {
      row_sum += report.count(c, k);
      col_sum += report.count(k, c);
    }
    const auto tp = static_cast<double>(report.count(c, c));
    const double prec = col_sum ? tp / static_cast<double>(col_sum) : 0.0;
    const double rec = row_sum ? tp / static_cast<double>(row_sum) : 0.0;
    report.precision.push_back(prec);
    report.recall.push_back(rec);
    report.f1.push_back(prec + rec > 0.0 ? 2.0 * prec * rec / (prec + rec)
                                         : 0.0);
  }

  if (num_classes == 2) {
    const auto pos = static_cast<double>(report.count(1, 0) + report.count(1, 1));
    const auto neg = static_cast<double>(report.count(0, 0) + report.count(0, 1));
    if (pos > 0.0) {
      report.tp_pct = 100.0 * static_cast<double>(report.count(1, 1)) / pos;
      report.fn_pct = 100.0 * static_cast<double>(report.count(1, 0)) / pos;
    }
    if (neg > 0.0) {
      report.tn_pct = 100.0 * static_cast<double>(report.count(0, 0)) / neg;
      report.fp_pct = 100.0 * static_cast<double>(report.count(0, 1)) / neg;
    }
  }
  return report;
}

ordered_json ConfusionReport::to_json() const {
  ordered_json j;
  j["classes"] = class_names;
  ordered_json rows = ordered_json::array();
  const std::size_t n = class_names.size();
  for (std::size_t r = 0; r < n; ++r) {
    ordered_json row = ordered_json::array();
    for (std::size_t c = 0; c < n; ++c) row.push_back(count(r, c));
    rows.push_back(std::move(row));
  }
  j["matrix"] = std::move(rows);
  j["accuracy"] = accuracy;
  j["precision"] = precision;
  j["recall"] = recall;
  j["f1"] = f1;
  if (n == 2) {
    j["tp_pct"] = tp_pct;
    j["fn_pct"] = fn_pct;
    j["tn_pct"] = tn_pct;
    j["fp_pct"] = fp_pct;
  }
  return j;
}

std::string ConfusionReport::to_table() const {
  const std::size_t n = class_names.size();
  std::string out = "accuracy: " + fmt("%.4f", accuracy) + "\n\n";
  if (n == 2) {
    out += "            TP%       FN%       TN%       FP%\n";
    char line[128];
    std::snprintf(line, sizeof(line), "      %9.2f %9.2f %9.2f %9.2f\n",
                  tp_pct, fn_pct, tn_pct, fp_pct);
    out += line;
    out += "\n";
  }
  out += "true \\ pred";
  for (const std::string& name : class_names) {
    char cell[48];
    std::snprintf(cell, sizeof(cell), " %12s", name.c_str());
    out += cell;
  }
  out += "\n";
  for (std::size_t r = 0; r < n; ++r) {
    char head[48];
    std::snprintf(head, sizeof(head), "%-11s", class_names[r].c_str());
    out += head;
    for (std::size_t c = 0; c < n; ++c) {
      char cell[48];
      std::snprintf(cell, sizeof(cell), " %12zu", count(r, c));
      out += cell;
    }
    out += "\n";
  }
  return out;
}

}  // namespace ctxgen
