#include "ctxgen/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <utility>

namespace ctxgen {

PreparedData prepare_data(const std::string& corpus_path,
                          const Vocabulary& vocab,
                          const std::vector<std::string>& context_names,
                          std::uint64_t seed, std::size_t max_words,
                          OovPolicy policy) {
  PreparedData out;
  std::vector<RawRecord> records =
      read_corpus(corpus_path, &out.stats, max_words);
  out.schema = build_schema(records, context_names);
  std::vector<Example> examples =
      make_examples(records, out.schema, vocab, policy, &out.stats);
  out.example_count = examples.size();
  out.split = split_dataset(examples, seed);
  return out;
}

namespace {

void append_log_line(const std::string& path, const std::string& line) {
  std::ofstream out(path, std::ios::app | std::ios::binary);
  if (!out) throw DataError("cannot append to epoch log: " + path);
  out << line;
  if (!out) throw DataError("epoch log write failed: " + path);
}

// Shared epoch loop for fresh and resumed runs. `meta` arrives describing
// the current state (epoch 0 for fresh runs) and leaves describing the last
// completed epoch.
TrainRun run_training(Checkpoint meta, ParamStore params,
                      const DatasetSplit& data, std::size_t max_epochs,
                      RngSet rngs, const TrainLoopOptions& options) {
  if (data.train.empty()) throw DataError("training split is empty");
  if (data.valid.empty()) throw DataError("validation split is empty");
  meta.model.validate();
  meta.train.validate();
  meta.train.max_epochs = max_epochs;

  ModelView view = ModelView::bind(params, meta.model);
  double lr = meta.lr;

  TrainRun run;
  if (!options.checkpoint_path.empty() && meta.epoch == 0) {
    meta.rng_states = rngs.states();
    save_checkpoint(options.checkpoint_path, meta, params);
  }

  for (std::size_t epoch = meta.epoch + 1; epoch <= max_epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    const double train_loss = run_epoch(data.train, view, meta.train, lr,
                                        rngs.batching, rngs.dropout);
    const double valid_ppl =
        std::exp(dataset_mean_loss(data.valid, view));
    meta.valid_ppl_history.push_back(valid_ppl);
    const double new_lr =
        update_lr(meta.valid_ppl_history, lr, meta.train.lr_compare_best);

    EpochReport report;
    report.epoch = epoch;
    report.train_loss = train_loss;
    report.valid_ppl = valid_ppl;
    report.lr = lr;
    report.lr_halved = new_lr < lr;
    report.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
            .count();

    lr = new_lr;
    meta.epoch = epoch;
    meta.lr = lr;
    meta.rng_states = rngs.states();

    if (!options.checkpoint_path.empty()) {
      save_checkpoint(options.checkpoint_path, meta, params);
    }
    if (!options.epoch_log_path.empty()) {
      append_log_line(options.epoch_log_path, epoch_log_line(report));
    }
    if (options.on_epoch) options.on_epoch(report);
    run.reports.push_back(report);

    if (lr < meta.train.min_lr) break;
  }

  run.meta = std::move(meta);
  run.params = std::move(params);
  return run;
}

}  // namespace

TrainRun train_loop(const DatasetSplit& data, const ModelConfig& model_config,
                    const TrainConfig& train_config,
                    std::uint64_t vocab_fingerprint,
                    const TrainLoopOptions& options) {
  model_config.validate();
  train_config.validate();

  RngSet rngs(train_config.seed);
  ParamStore params =
      init_params(model_config, rngs.init, train_config.init_range);

  Checkpoint meta;
  meta.model = model_config;
  meta.train = train_config;
  meta.epoch = 0;
  meta.lr = train_config.initial_lr;
  meta.vocab_fingerprint = vocab_fingerprint;

  return run_training(std::move(meta), std::move(params), data,
                      train_config.max_epochs, std::move(rngs), options);
}

TrainRun resume_loop(LoadedCheckpoint loaded, const DatasetSplit& data,
                     std::size_t max_epochs, const TrainLoopOptions& options) {
  RngSet rngs = RngSet::restore(loaded.meta.rng_states);
  return run_training(std::move(loaded.meta), std::move(loaded.params), data,
                      max_epochs, std::move(rngs), options);
}

}  // namespace ctxgen
