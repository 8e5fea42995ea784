#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ctxgen/corpus.hpp"
#include "ctxgen/model.hpp"
#include "ctxgen/param_store.hpp"
#include "ctxgen/rng.hpp"

#include "json.hpp"

namespace ctxgen {

// Optimization recipe. Defaults are the published ones: SGD at lr 1.0 halved
// on validation stalls, batches of 128, gradient norm clipped at 5, weights
// from Uniform(-0.1, 0.1), biases zero.
struct TrainConfig {
  std::size_t batch_size = 128;
  double initial_lr = 1.0;
  double clip_threshold = 5.0;
  double init_range = 0.1;
  std::size_t max_epochs = 10;
  std::uint64_t seed = 1;
  double dropout = 0.5;
  std::size_t hidden_size = 512;
  std::size_t bucket_width = 10;
  // Training stops once the halving schedule pushes lr below this.
  double min_lr = 1e-6;
  // Compare each epoch against the best perplexity so far instead of only
  // the immediately preceding epoch.
  bool lr_compare_best = false;

  void validate() const;
};

inline constexpr int kCheckpointVersion = 1;

// Everything but the tensors; the tensors travel in a ParamStore.
struct Checkpoint {
  int version = kCheckpointVersion;
  ModelConfig model;
  TrainConfig train;
  std::size_t epoch = 0;   // completed epochs
  double lr = 0.0;         // lr the next epoch would use
  std::uint64_t vocab_fingerprint = 0;
  std::vector<double> valid_ppl_history;
  std::vector<RngState> rng_states;
};

struct EpochReport {
  std::size_t epoch = 0;
  double train_loss = 0.0;  // mean per target token
  double valid_ppl = 0.0;
  double lr = 0.0;          // lr used during this epoch
  bool lr_halved = false;   // schedule halved lr after this epoch
  // Console-only; excluded from the epoch log so reruns stay byte-identical.
  double wall_seconds = 0.0;
};

// Deterministic log line (no wall time), newline-terminated JSON.
std::string epoch_log_line(const EpochReport& report);

// theta <- theta - lr * grad for every parameter. Throws NumericError before
// touching anything if any gradient is non-finite, so the params stay valid.
void sgd_step(ParamStore& params, double lr,
              Precision precision = Precision::kF64);

// One pass over all batches: forward (train mode) -> backward -> clip ->
// sgd_step, loss averaged per token within each batch before the update.
// Returns the token-averaged train loss. Numeric failures are rethrown with
// the batch index prepended.
double run_epoch(const std::vector<Example>& data, const ModelView& view,
                 const TrainConfig& config, double lr, Rng& batching_rng,
                 Rng& dropout_rng);

// Halve when the newest validation perplexity is not less than the previous
// epoch's (or the best so far, behind the flag).
double update_lr(const std::vector<double>& valid_ppl_history, double lr,
                 bool compare_best = false);

// Mean eval-mode loss per target token over a dataset, the quantity whose
// exp() is perplexity. Throws DataError on an empty dataset.
double dataset_mean_loss(const std::vector<Example>& data,
                         const ModelView& view);

// --- checkpoint container -------------------------------------------------
// One file: a little-endian u64 byte length followed by a human-readable
// JSON header (version, configs, epoch, lr, rng states, vocab fingerprint),
// then per tensor: name length + name bytes + rank + dims + row-major f64
// values, every integer u64 little-endian.

struct CheckpointVersionError : DataError {
  using DataError::DataError;
};
struct CheckpointFingerprintError : DataError {
  using DataError::DataError;
};
struct CheckpointCorruptError : DataError {
  using DataError::DataError;
};

void save_checkpoint(const std::string& path, const Checkpoint& meta,
                     const ParamStore& params);

struct LoadedCheckpoint {
  Checkpoint meta;
  ParamStore params;
};

// Verifies the format version; verifies the vocabulary fingerprint when
// expected_fingerprint is nonzero. Truncated or malformed files raise
// CheckpointCorruptError without partial state escaping.
LoadedCheckpoint load_checkpoint(const std::string& path,
                                 std::uint64_t expected_fingerprint = 0);

void verify_vocab_fingerprint(const Checkpoint& meta, const Vocabulary& vocab);

// JSON (de)serialization shared by the checkpoint header and run manifests.
// ordered_json keeps fields in declaration order so headers read naturally.
nlohmann::ordered_json model_config_to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const nlohmann::ordered_json& j);
nlohmann::ordered_json train_config_to_json(const TrainConfig& config);
TrainConfig train_config_from_json(const nlohmann::ordered_json& j);

}  // namespace ctxgen
