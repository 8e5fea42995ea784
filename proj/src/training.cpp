#include "ctxgen/training.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <utility>

namespace ctxgen {

using ordered_json = nlohmann::ordered_json;

void TrainConfig::validate() const {
  if (batch_size < 1) throw ShapeError("batch_size must be >= 1");
  if (!(initial_lr > 0.0)) throw ShapeError("initial_lr must be > 0");
  if (!(clip_threshold > 0.0)) throw ShapeError("clip_threshold must be > 0");
  if (!(init_range >= 0.0)) throw ShapeError("init_range must be >= 0");
  if (!(dropout >= 0.0 && dropout < 1.0)) {
    throw ShapeError("dropout must be in [0, 1)");
  }
  if (hidden_size < 1) throw ShapeError("hidden_size must be >= 1");
  if (bucket_width < 1) throw ShapeError("bucket_width must be >= 1");
  if (!(min_lr > 0.0)) throw ShapeError("min_lr must be > 0");
}

std::string epoch_log_line(const EpochReport& report) {
  ordered_json j;
  j["epoch"] = report.epoch;
  j["train_loss"] = report.train_loss;
  j["valid_ppl"] = report.valid_ppl;
  j["lr"] = report.lr;
  j["lr_halved"] = report.lr_halved;
  return j.dump() + "\n";
}

void sgd_step(ParamStore& params, double lr, Precision precision) {
  for (const auto& entry : params.entries()) {
    if (!all_finite(entry.grad)) {
      throw NumericError("non-finite gradient for parameter '" + entry.name +
                         "'; update aborted");
    }
  }
  for (auto& entry : params.entries()) {
    for (std::size_t i = 0; i < entry.value.size(); ++i) {
      entry.value[i] -= lr * entry.grad[i];
    }
    if (precision == Precision::kF32) round_to_f32(entry.value);
  }
}

double run_epoch(const std::vector<Example>& data, const ModelView& view,
                 const TrainConfig& config, double lr, Rng& batching_rng,
                 Rng& dropout_rng) {
  if (data.empty()) throw DataError("run_epoch: empty dataset");
  config.validate();

  std::vector<Batch> batches =
      make_batches(data, config.batch_size, config.bucket_width, batching_rng);

  double total_loss = 0.0;
  std::size_t total_tokens = 0;
  for (std::size_t bi = 0; bi < batches.size(); ++bi) {
    const Batch& batch = batches[bi];
    try {
      view.store->zero_grads();
      double batch_loss = 0.0;
      std::size_t batch_tokens = 0;
      for (std::size_t r = 0; r < batch.rows; ++r) {
        Example ex = batch.example(r);
        ForwardCache cache;
        SequenceResult res =
            forward_sequence(ex, view, Mode::kTrain, &dropout_rng, &cache);
        backward_sequence(view, cache);
        batch_loss += res.loss;
        batch_tokens += ex.target_count();
      }
      view.store->scale_grads(1.0 / static_cast<double>(batch_tokens));
      clip_global_norm(*view.store, config.clip_threshold);
      sgd_step(*view.store, lr, view.config->precision);
      total_loss += batch_loss;
      total_tokens += batch_tokens;
    } catch (const NumericError& e) {
      throw NumericError("batch " + std::to_string(bi) + ": " + e.what());
    }
  }
  return total_loss / static_cast<double>(total_tokens);
}

double update_lr(const std::vector<double>& valid_ppl_history, double lr,
                 bool compare_best) {
  if (valid_ppl_history.size() < 2) return lr;
  const double current = valid_ppl_history.back();
  double reference = valid_ppl_history[valid_ppl_history.size() - 2];
  if (compare_best) {
    for (std::size_t i = 0; i + 1 < valid_ppl_history.size(); ++i) {
      reference = std::min(reference, valid_ppl_history[i]);
    }
  }
  return current >= reference ? lr / 2.0 : lr;
}

double dataset_mean_loss(const std::vector<Example>& data,
                         const ModelView& view) {
  if (data.empty()) throw DataError("cannot score an empty dataset");
  double total_loss = 0.0;
  std::size_t total_tokens = 0;
  for (const Example& ex : data) {
    total_loss += forward_sequence(ex, view, Mode::kEval).loss;
    total_tokens += ex.target_count();
  }
  return total_loss / static_cast<double>(total_tokens);
}

// --- JSON config (de)serialization -----------------------------------------

namespace {

std::string precision_name(Precision p) {
  return p == Precision::kF32 ? "f32" : "f64";
}

Precision precision_from_name(const std::string& name) {
  if (name == "f64") return Precision::kF64;
  if (name == "f32") return Precision::kF32;
  throw DataError("unknown precision '" + name + "' (expected f64|f32)");
}

}  // namespace

ordered_json model_config_to_json(const ModelConfig& config) {
  ordered_json j;
  j["variant"] = variant_name(config.variant);
  j["vocab_size"] = config.vocab_size;
  j["hidden_size"] = config.hidden_size;
  j["context_embed_dim"] = config.context_embed_dim;
  j["input_embed_dim"] = config.input_embed_dim;
  j["num_layers"] = config.num_layers;
  j["dropout"] = config.dropout;
  j["precision"] = precision_name(config.precision);
  j["shared_recurrent"] = config.shared_recurrent;
  j["context_as_hidden_init"] = config.context_as_hidden_init;
  j["context_as_cell_init"] = config.context_as_cell_init;
  ordered_json schema = ordered_json::array();
  for (const ContextType& t : config.schema.types) {
    schema.push_back({{"name", t.name}, {"values", t.values}});
  }
  j["schema"] = std::move(schema);
  return j;
}

ModelConfig model_config_from_json(const ordered_json& j) {
  ModelConfig config;
  config.variant = variant_from_name(j.at("variant").get<std::string>());
  config.vocab_size = j.at("vocab_size").get<std::size_t>();
  config.hidden_size = j.at("hidden_size").get<std::size_t>();
  config.context_embed_dim = j.at("context_embed_dim").get<std::size_t>();
  config.input_embed_dim = j.at("input_embed_dim").get<std::size_t>();
  config.num_layers = j.at("num_layers").get<std::size_t>();
  config.dropout = j.at("dropout").get<double>();
  config.precision = precision_from_name(j.at("precision").get<std::string>());
  config.shared_recurrent = j.at("shared_recurrent").get<bool>();
  config.context_as_hidden_init = j.at("context_as_hidden_init").get<bool>();
  config.context_as_cell_init = j.at("context_as_cell_init").get<bool>();
  for (const auto& t : j.at("schema")) {
    ContextType type;
    type.name = t.at("name").get<std::string>();
    type.values = t.at("values").get<std::vector<std::string>>();
    config.schema.types.push_back(std::move(type));
  }
  return config;
}

ordered_json train_config_to_json(const TrainConfig& config) {
  ordered_json j;
  j["batch_size"] = config.batch_size;
  j["initial_lr"] = config.initial_lr;
  j["clip_threshold"] = config.clip_threshold;
  j["init_range"] = config.init_range;
  j["max_epochs"] = config.max_epochs;
  j["seed"] = config.seed;
  j["dropout"] = config.dropout;
  j["hidden_size"] = config.hidden_size;
  j["bucket_width"] = config.bucket_width;
  j["min_lr"] = config.min_lr;
  j["lr_compare_best"] = config.lr_compare_best;
  return j;
}

TrainConfig train_config_from_json(const ordered_json& j) {
  TrainConfig config;
  config.batch_size = j.at("batch_size").get<std::size_t>();
  config.initial_lr = j.at("initial_lr").get<double>();
  config.clip_threshold = j.at("clip_threshold").get<double>();
  config.init_range = j.at("init_range").get<double>();
  config.max_epochs = j.at("max_epochs").get<std::size_t>();
  config.seed = j.at("seed").get<std::uint64_t>();
  config.dropout = j.at("dropout").get<double>();
  config.hidden_size = j.at("hidden_size").get<std::size_t>();
  config.bucket_width = j.at("bucket_width").get<std::size_t>();
  config.min_lr = j.at("min_lr").get<double>();
  config.lr_compare_best = j.at("lr_compare_best").get<bool>();
  return config;
}

// --- checkpoint container ---------------------------------------------------

namespace {

void write_u64(std::ostream& out, std::uint64_t v) {
  char bytes[8];
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(bytes, 8);
}

void write_f64(std::ostream& out, double d) {
  write_u64(out, std::bit_cast<std::uint64_t>(d));
}

bool read_u64(std::istream& in, std::uint64_t& v) {
  char bytes[8];
  if (!in.read(bytes, 8)) return false;
  v = 0;
  for (int i = 0; i < 8; ++i) {
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[i]))
         << (8 * i);
  }
  return true;
}

bool read_f64(std::istream& in, double& d) {
  std::uint64_t bits = 0;
  if (!read_u64(in, bits)) return false;
  d = std::bit_cast<double>(bits);
  return true;
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& meta,
                     const ParamStore& params) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open checkpoint for writing: " + path);

  ordered_json header;
  header["format"] = "ctxgen-checkpoint";
  header["version"] = meta.version;
  header["epoch"] = meta.epoch;
  header["lr"] = meta.lr;
  header["vocab_fingerprint"] = meta.vocab_fingerprint;
  header["model"] = model_config_to_json(meta.model);
  header["train"] = train_config_to_json(meta.train);
  header["valid_ppl_history"] = meta.valid_ppl_history;
  ordered_json states = ordered_json::array();
  for (const RngState& s : meta.rng_states) {
    states.push_back({{"name", s.name},
                      {"algorithm", s.algorithm},
                      {"seed", s.seed},
                      {"position", s.position}});
  }
  header["rng_states"] = std::move(states);
  header["tensor_count"] = params.entries().size();

  const std::string header_bytes = header.dump(2) + "\n";
  write_u64(out, header_bytes.size());
  out.write(header_bytes.data(),
            static_cast<std::streamsize>(header_bytes.size()));

  for (const auto& entry : params.entries()) {
    write_u64(out, entry.name.size());
    out.write(entry.name.data(),
              static_cast<std::streamsize>(entry.name.size()));
    write_u64(out, entry.value.rank());
    for (std::size_t dim : entry.value.shape) write_u64(out, dim);
    for (double v : entry.value.data) write_f64(out, v);
  }
  out.flush();
  if (!out) throw DataError("checkpoint write failed: " + path);
}

LoadedCheckpoint load_checkpoint(const std::string& path,
                                 std::uint64_t expected_fingerprint) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint: " + path);

  std::uint64_t header_len = 0;
  if (!read_u64(in, header_len)) {
    throw CheckpointCorruptError("truncated checkpoint (missing header): " +
                                 path);
  }
  std::string header_bytes(header_len, '\0');
  if (!in.read(header_bytes.data(), static_cast<std::streamsize>(header_len))) {
    throw CheckpointCorruptError("truncated checkpoint header: " + path);
  }
  ordered_json header = ordered_json::parse(header_bytes, nullptr, false);
  if (header.is_discarded() || !header.is_object() ||
      header.value("format", "") != std::string("ctxgen-checkpoint")) {
    throw CheckpointCorruptError("malformed checkpoint header: " + path);
  }

  const int version = header.value("version", -1);
  if (version != kCheckpointVersion) {
    throw CheckpointVersionError(
        "checkpoint format version " + std::to_string(version) +
        ", this build reads version " + std::to_string(kCheckpointVersion));
  }

  LoadedCheckpoint loaded;
  std::uint64_t tensor_count = 0;
  try {
    Checkpoint& meta = loaded.meta;
    meta.version = version;
    meta.epoch = header.at("epoch").get<std::size_t>();
    meta.lr = header.at("lr").get<double>();
    meta.vocab_fingerprint =
        header.at("vocab_fingerprint").get<std::uint64_t>();
    meta.model = model_config_from_json(header.at("model"));
    meta.train = train_config_from_json(header.at("train"));
    meta.valid_ppl_history =
        header.at("valid_ppl_history").get<std::vector<double>>();
    for (const auto& s : header.at("rng_states")) {
      meta.rng_states.push_back(RngState{
          s.at("name").get<std::string>(),
          s.at("algorithm").get<std::string>(),
          s.at("seed").get<std::uint64_t>(),
          s.at("position").get<std::uint64_t>(),
      });
    }
    tensor_count = header.at("tensor_count").get<std::uint64_t>();
  } catch (const ordered_json::exception& e) {
    throw CheckpointCorruptError("malformed checkpoint header: " +
                                 std::string(e.what()));
  }

  for (std::uint64_t t = 0; t < tensor_count; ++t) {
    std::uint64_t name_len = 0;
    if (!read_u64(in, name_len)) {
      throw CheckpointCorruptError("truncated checkpoint tensors: " + path);
    }
    std::string name(name_len, '\0');
    if (!in.read(name.data(), static_cast<std::streamsize>(name_len))) {
      throw CheckpointCorruptError("truncated checkpoint tensors: " + path);
    }
    std::uint64_t rank = 0;
    if (!read_u64(in, rank)) {
      throw CheckpointCorruptError("truncated checkpoint tensors: " + path);
    }
    std::vector<std::size_t> shape(rank);
    std::size_t count = 1;
    for (std::uint64_t d = 0; d < rank; ++d) {
      std::uint64_t dim = 0;
      if (!read_u64(in, dim)) {
        throw CheckpointCorruptError("truncated checkpoint tensors: " + path);
      }
      shape[d] = dim;
      count *= dim;
    }
    Tensor tensor(std::move(shape));
    for (std::size_t i = 0; i < count; ++i) {
      if (!read_f64(in, tensor.data[i])) {
        throw CheckpointCorruptError("truncated tensor '" + name +
                                     "' in checkpoint: " + path);
      }
    }
    loaded.params.add(name, std::move(tensor));
  }
  if (in.peek() != std::ifstream::traits_type::eof()) {
    throw CheckpointCorruptError("trailing bytes after tensors: " + path);
  }

  if (expected_fingerprint != 0 &&
      loaded.meta.vocab_fingerprint != expected_fingerprint) {
    throw CheckpointFingerprintError(
        "vocabulary fingerprint mismatch: checkpoint was trained with a "
        "different vocabulary");
  }
  return loaded;
}

void verify_vocab_fingerprint(const Checkpoint& meta, const Vocabulary& vocab) {
  if (meta.vocab_fingerprint != vocab.fingerprint()) {
    throw CheckpointFingerprintError(
        "vocabulary fingerprint mismatch: checkpoint was trained with a "
        "different vocabulary");
  }
}

}  // namespace ctxgen
