#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "ctxgen/corpus.hpp"
#include "ctxgen/evaluation.hpp"
#include "ctxgen/training.hpp"

namespace ctxgen {

// Corpus -> schema -> examples -> deterministic 18:1:1 split.
struct PreparedData {
  ContextSchema schema;
  LoadStats stats;
  std::size_t example_count = 0;
  DatasetSplit split;
};

PreparedData prepare_data(const std::string& corpus_path,
                          const Vocabulary& vocab,
                          const std::vector<std::string>& context_names,
                          std::uint64_t seed, std::size_t max_words = 100,
                          OovPolicy policy = OovPolicy::kReplaceWithUnk);

struct TrainLoopOptions {
  // Checkpoint rewritten after every epoch when non-empty.
  std::string checkpoint_path;
  // Epoch log line appended after every epoch when non-empty.
  std::string epoch_log_path;
  // Console reporting; receives wall time, unlike the log file.
  std::function<void(const EpochReport&)> on_epoch;
};

struct TrainRun {
  Checkpoint meta;
  ParamStore params;
  std::vector<EpochReport> reports;
};

// The full recipe: init from the seed's streams, then per epoch run_epoch ->
// validation perplexity -> halving schedule, checkpointing as configured.
// Stops at max_epochs or when lr sinks below train.min_lr. The validation
// set drives the schedule; pass the train set again when nothing is held
// out. train/valid must be non-empty.
TrainRun train_loop(const DatasetSplit& data, const ModelConfig& model_config,
                    const TrainConfig& train_config,
                    std::uint64_t vocab_fingerprint,
                    const TrainLoopOptions& options = {});

// Continue a loaded run up to max_epochs with bit-identical results to a
// single uninterrupted run: parameters, lr, perplexity history, and rng
// stream positions all come from the checkpoint.
TrainRun resume_loop(LoadedCheckpoint loaded, const DatasetSplit& data,
                     std::size_t max_epochs,
                     const TrainLoopOptions& options = {});

}  // namespace ctxgen
