// Optimizer, lr schedule, epoch loop wiring, and the checkpoint container.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "ctxgen/model.hpp"
#include "ctxgen/param_store.hpp"
#include "ctxgen/rng.hpp"
#include "ctxgen/training.hpp"
#include "ctxgen/vocab.hpp"
#include "doctest.h"
#include "json.hpp"
#include "test_util.hpp"

using namespace ctxgen;
using ordered_json = nlohmann::ordered_json;

namespace {

ParamStore two_tensor_store() {
  ParamStore store;
  Tensor a({2});
  a.data = {1.0, 2.0};
  store.add("a", std::move(a));
  Tensor b({2});
  b.data = {3.0, 4.0};
  store.add("b", std::move(b));
  return store;
}

ModelConfig wiring_config() {
  ModelConfig cfg;
  cfg.variant = Variant::kGc2s;
  cfg.vocab_size = 9;
  cfg.hidden_size = 3;
  cfg.context_embed_dim = 2;
  cfg.dropout = 0.3;
  cfg.schema.types.push_back({"kind", {"a", "b"}});
  return cfg;
}

std::vector<Example> wiring_data() {
  return {
      {{1, 4, 5, 2}, {0}},       {{1, 6, 7, 8, 2}, {1}},
      {{1, 5, 5, 4, 2}, {1}},    {{1, 8, 2}, {0}},
      {{1, 4, 6, 8, 5, 2}, {0}}, {{1, 7, 2}, {1}},
  };
}

bool same_tensors(const ParamStore& x, const ParamStore& y) {
  if (x.entries().size() != y.entries().size()) return false;
  for (std::size_t i = 0; i < x.entries().size(); ++i) {
    const auto& a = x.entries()[i];
    const auto& b = y.entries()[i];
    if (a.name != b.name || a.value.shape != b.value.shape ||
        a.value.data != b.value.data) {
      return false;
    }
  }
  return true;
}

Checkpoint sample_meta() {
  Checkpoint meta;
  meta.model = wiring_config();
  meta.model.precision = Precision::kF32;
  meta.model.shared_recurrent = true;
  meta.model.context_as_cell_init = true;
  meta.train.batch_size = 4;
  meta.train.initial_lr = 0.7;
  meta.train.clip_threshold = 3.5;
  meta.train.init_range = 0.05;
  meta.train.max_epochs = 6;
  meta.train.seed = 99;
  meta.train.dropout = 0.3;
  meta.train.hidden_size = 3;
  meta.train.bucket_width = 5;
  meta.train.min_lr = 1e-5;
  meta.train.lr_compare_best = true;
  meta.epoch = 3;
  meta.lr = 0.175;
  meta.vocab_fingerprint = 0x1234abcd5678ef00ull;
  meta.valid_ppl_history = {31.5, 28.25, 29.0};
  meta.rng_states = {{"init", "mt19937_64", 7, 120},
                     {"dropout", "mt19937_64", 8, 55}};
  return meta;
}

std::string read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  return std::string(std::istreambuf_iterator<char>(in), {});
}

void write_bytes(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

TEST_CASE("train config validation rejects out-of-range settings") {
  TrainConfig good;
  CHECK_NOTHROW(good.validate());

  TrainConfig c = good;
  c.batch_size = 0;
  CHECK_THROWS_AS(c.validate(), ShapeError);
  c = good;
  c.initial_lr = 0.0;
  CHECK_THROWS_AS(c.validate(), ShapeError);
  c = good;
  c.clip_threshold = -1.0;
  CHECK_THROWS_AS(c.validate(), ShapeError);
  c = good;
  c.init_range = -0.1;
  CHECK_THROWS_AS(c.validate(), ShapeError);
  c = good;
  c.dropout = 1.0;   // inverted scaling divides by 1-p
  CHECK_THROWS_AS(c.validate(), ShapeError);
  c = good;
  c.dropout = -0.2;
  CHECK_THROWS_AS(c.validate(), ShapeError);
  c = good;
  c.hidden_size = 0;
  CHECK_THROWS_AS(c.validate(), ShapeError);
  c = good;
  c.bucket_width = 0;
  CHECK_THROWS_AS(c.validate(), ShapeError);
  c = good;
  c.min_lr = 0.0;
  CHECK_THROWS_AS(c.validate(), ShapeError);
}

TEST_CASE("epoch log line is compact json with the stable field set") {
  EpochReport r;
  r.epoch = 3;
  r.train_loss = 1.5;
  r.valid_ppl = 20.25;
  r.lr = 0.5;
  r.lr_halved = true;
  r.wall_seconds = 12.75;   // must not appear: would break byte-identical logs

  std::string line = epoch_log_line(r);
  CHECK(line ==
        "{\"epoch\":3,\"train_loss\":1.5,\"valid_ppl\":20.25,\"lr\":0.5,"
        "\"lr_halved\":true}\n");

  ordered_json j = ordered_json::parse(line);
  std::vector<std::string> keys;
  for (auto it = j.begin(); it != j.end(); ++it) keys.push_back(it.key());
  CHECK(keys == std::vector<std::string>{"epoch", "train_loss", "valid_ppl",
                                         "lr", "lr_halved"});
}

TEST_CASE("sgd step applies theta -= lr * grad") {
  ParamStore store = two_tensor_store();
  store.grad("a").data = {0.5, -1.0};
  store.grad("b").data = {0.0, 2.0};

  sgd_step(store, 0.1);

  CHECK(store.value("a").data[0] == doctest::Approx(0.95).epsilon(1e-15));
  CHECK(store.value("a").data[1] == doctest::Approx(2.1).epsilon(1e-15));
  CHECK(store.value("b").data[0] == doctest::Approx(3.0).epsilon(1e-15));
  CHECK(store.value("b").data[1] == doctest::Approx(3.8).epsilon(1e-15));
}

TEST_CASE("sgd step aborts before touching params on non-finite gradients") {
  ParamStore store = two_tensor_store();
  store.grad("a").data = {0.5, -1.0};   // finite tensor first
  store.grad("b").data = {std::nan(""), 2.0};

  CHECK_THROWS_AS(sgd_step(store, 0.1), NumericError);
  // even the tensor with finite gradients must be untouched
  CHECK(store.value("a").data == std::vector<double>{1.0, 2.0});
  CHECK(store.value("b").data == std::vector<double>{3.0, 4.0});
}

TEST_CASE("sgd step keeps f32 params representable in single precision") {
  ParamStore store = two_tensor_store();
  store.grad("a").data = {0.1, 0.2};
  store.grad("b").data = {0.3, 0.4};

  sgd_step(store, 0.7, Precision::kF32);

  for (const auto& entry : store.entries()) {
    for (double v : entry.value.data) {
      CHECK(v == static_cast<double>(static_cast<float>(v)));
    }
  }
}

TEST_CASE("global norm clipping rescales a [6,8] gradient to [3,4]") {
  ParamStore store = two_tensor_store();
  store.grad("a").data = {6.0, 0.0};
  store.grad("b").data = {0.0, 8.0};
  CHECK(store.grad_norm() == doctest::Approx(10.0).epsilon(1e-15));

  double factor = clip_global_norm(store, 5.0);

  CHECK(factor == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(store.grad("a").data[0] == doctest::Approx(3.0).epsilon(1e-15));
  CHECK(store.grad("b").data[1] == doctest::Approx(4.0).epsilon(1e-15));
  // rescaling preserves direction: the component ratio is unchanged
  CHECK(store.grad("a").data[0] / store.grad("b").data[1] ==
        doctest::Approx(6.0 / 8.0).epsilon(1e-15));
}

TEST_CASE("global norm clipping leaves small gradients alone") {
  ParamStore store = two_tensor_store();
  store.grad("a").data = {0.6, 0.0};
  store.grad("b").data = {0.0, 0.8};

  double factor = clip_global_norm(store, 5.0);

  CHECK(factor == 1.0);
  CHECK(store.grad("a").data[0] == 0.6);
  CHECK(store.grad("b").data[1] == 0.8);
}

TEST_CASE("lr halves whenever validation perplexity fails to improve") {
  // stall at epoch 3 (28 -> 28) and regress at epoch 4 (28 -> 29):
  // multipliers 1, 1, 1/2, 1/4
  std::vector<double> ppls = {30.0, 28.0, 28.0, 29.0};
  std::vector<double> history;
  double lr = 1.0;
  std::vector<double> seen;
  for (double ppl : ppls) {
    history.push_back(ppl);
    lr = update_lr(history, lr);
    seen.push_back(lr);
  }
  CHECK(seen == std::vector<double>{1.0, 1.0, 0.5, 0.25});
}

TEST_CASE("lr comparison is strict: equal perplexity counts as a stall") {
  CHECK(update_lr({20.0, 20.0}, 1.0) == 0.5);
  CHECK(update_lr({20.0, 19.999}, 1.0) == 1.0);
  CHECK(update_lr({20.0, 20.001}, 1.0) == 0.5);
}

TEST_CASE("lr schedule ignores the first epoch") {
  CHECK(update_lr({}, 1.0) == 1.0);
  CHECK(update_lr({50.0}, 1.0) == 1.0);
}

TEST_CASE("compare-best halves against the running minimum") {
  // adjacent comparison sees 26 < 27 as an improvement; best-so-far (25)
  // does not
  std::vector<double> history = {30.0, 25.0, 27.0, 26.0};
  CHECK(update_lr(history, 1.0, false) == 1.0);
  CHECK(update_lr(history, 1.0, true) == 0.5);
  // still halves on an adjacent stall
  CHECK(update_lr({30.0, 25.0, 27.0}, 1.0, true) == 0.5);
}

TEST_CASE("run_epoch is exactly batch -> backward -> scale -> clip -> sgd") {
  ModelConfig cfg = wiring_config();
  std::vector<Example> data = wiring_data();
  TrainConfig tc;
  tc.batch_size = 2;
  tc.bucket_width = 3;
  tc.clip_threshold = 1.0;   // low threshold so clipping actually engages
  const double lr = 0.4;

  Rng init = Rng::fork(5, "init");
  ParamStore params = init_params(cfg, init, 0.1);
  Rng init2 = Rng::fork(5, "init");
  ParamStore manual = init_params(cfg, init2, 0.1);

  // run_epoch under test
  Rng batching = Rng::fork(5, "batching");
  Rng dropout = Rng::fork(5, "dropout");
  ModelView view = ModelView::bind(params, cfg);
  double reported = run_epoch(data, view, tc, lr, batching, dropout);

  // the same recipe spelled out by hand
  Rng batching2 = Rng::fork(5, "batching");
  Rng dropout2 = Rng::fork(5, "dropout");
  ModelView mview = ModelView::bind(manual, cfg);
  std::vector<Batch> batches =
      make_batches(data, tc.batch_size, tc.bucket_width, batching2);
  double total_loss = 0.0;
  std::size_t total_tokens = 0;
  for (const Batch& batch : batches) {
    manual.zero_grads();
    double batch_loss = 0.0;
    std::size_t batch_tokens = 0;
    for (std::size_t r = 0; r < batch.rows; ++r) {
      Example ex = batch.example(r);
      ForwardCache cache;
      batch_loss +=
          forward_sequence(ex, mview, Mode::kTrain, &dropout2, &cache).loss;
      backward_sequence(mview, cache);
      batch_tokens += ex.target_count();
    }
    manual.scale_grads(1.0 / static_cast<double>(batch_tokens));
    clip_global_norm(manual, tc.clip_threshold);
    sgd_step(manual, lr, cfg.precision);
    total_loss += batch_loss;
    total_tokens += batch_tokens;
  }

  CHECK(reported ==
        doctest::Approx(total_loss / static_cast<double>(total_tokens))
            .epsilon(1e-15));
  CHECK(same_tensors(params, manual));
}

TEST_CASE("run_epoch reports the failing batch on numeric blowups") {
  ModelConfig cfg = wiring_config();
  cfg.dropout = 0.0;
  Rng init = Rng::fork(5, "init");
  ParamStore params = init_params(cfg, init, 0.1);
  params.value("output.weight").data[0] = std::nan("");

  Rng batching = Rng::fork(5, "batching");
  Rng dropout = Rng::fork(5, "dropout");
  ModelView view = ModelView::bind(params, cfg);
  TrainConfig tc;
  tc.batch_size = 2;
  tc.bucket_width = 3;

  try {
    run_epoch(wiring_data(), view, tc, 0.4, batching, dropout);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("batch 0") == 0);
  }
}

TEST_CASE("run_epoch rejects an empty dataset") {
  ModelConfig cfg = wiring_config();
  Rng init = Rng::fork(5, "init");
  ParamStore params = init_params(cfg, init, 0.1);
  ModelView view = ModelView::bind(params, cfg);
  Rng batching = Rng::fork(5, "batching");
  Rng dropout = Rng::fork(5, "dropout");
  TrainConfig tc;
  CHECK_THROWS_AS(run_epoch({}, view, tc, 1.0, batching, dropout), DataError);
}

TEST_CASE("dataset mean loss at zero init is ln(vocab size)") {
  ModelConfig cfg = wiring_config();
  cfg.dropout = 0.0;
  ParamStore params;
  Rng init = Rng::fork(5, "init");
  params = init_params(cfg, init, 0.0);   // range 0: uniform predictions
  ModelView view = ModelView::bind(params, cfg);

  double loss = dataset_mean_loss(wiring_data(), view);
  CHECK(loss == doctest::Approx(std::log(9.0)).epsilon(1e-12));

  CHECK_THROWS_AS(dataset_mean_loss({}, view), DataError);
}

TEST_CASE("checkpoint round-trips metadata and tensors bit-exactly") {
  testutil::TempDir dir;
  const std::string path = dir.path("model.ckpt");

  Checkpoint meta = sample_meta();
  Rng init = Rng::fork(13, "init");
  ParamStore params = init_params(meta.model, init, 0.1);
  save_checkpoint(path, meta, params);

  LoadedCheckpoint loaded = load_checkpoint(path);

  CHECK(loaded.meta.version == kCheckpointVersion);
  CHECK(loaded.meta.epoch == 3);
  CHECK(loaded.meta.lr == 0.175);
  CHECK(loaded.meta.vocab_fingerprint == meta.vocab_fingerprint);
  CHECK(loaded.meta.valid_ppl_history == meta.valid_ppl_history);
  REQUIRE(loaded.meta.rng_states.size() == 2);
  CHECK(loaded.meta.rng_states[0].name == "init");
  CHECK(loaded.meta.rng_states[0].algorithm == "mt19937_64");
  CHECK(loaded.meta.rng_states[0].seed == 7);
  CHECK(loaded.meta.rng_states[0].position == 120);
  CHECK(loaded.meta.rng_states[1].position == 55);

  CHECK(variant_name(loaded.meta.model.variant) ==
        variant_name(meta.model.variant));
  CHECK(loaded.meta.model.precision == Precision::kF32);
  CHECK(loaded.meta.model.shared_recurrent);
  CHECK(loaded.meta.model.context_as_cell_init);
  CHECK(loaded.meta.model.schema.types.size() == 1);
  CHECK(loaded.meta.model.schema.types[0].values ==
        std::vector<std::string>{"a", "b"});
  CHECK(loaded.meta.train.initial_lr == 0.7);
  CHECK(loaded.meta.train.seed == 99);
  CHECK(loaded.meta.train.lr_compare_best);

  CHECK(same_tensors(params, loaded.params));
}

TEST_CASE("checkpoint header is readable json after the length prefix") {
  testutil::TempDir dir;
  const std::string path = dir.path("model.ckpt");
  Checkpoint meta = sample_meta();
  Rng init = Rng::fork(13, "init");
  ParamStore params = init_params(meta.model, init, 0.1);
  save_checkpoint(path, meta, params);

  std::string bytes = read_bytes(path);
  REQUIRE(bytes.size() > 8);
  std::uint64_t header_len = 0;
  for (int i = 0; i < 8; ++i) {
    header_len |= static_cast<std::uint64_t>(
                      static_cast<unsigned char>(bytes[static_cast<size_t>(i)]))
                  << (8 * i);
  }
  REQUIRE(bytes.size() >= 8 + header_len);
  ordered_json header = ordered_json::parse(bytes.substr(8, header_len));
  CHECK(header.at("format") == "ctxgen-checkpoint");
  CHECK(header.at("version") == kCheckpointVersion);
  CHECK(header.at("epoch") == 3);
  CHECK(header.at("tensor_count") == params.entries().size());
}

TEST_CASE("checkpoint with a future version is refused") {
  testutil::TempDir dir;
  const std::string path = dir.path("model.ckpt");
  Checkpoint meta = sample_meta();
  Rng init = Rng::fork(13, "init");
  ParamStore params = init_params(meta.model, init, 0.1);
  save_checkpoint(path, meta, params);

  // patch the version digit in place so the header length stays valid
  std::string bytes = read_bytes(path);
  const std::string needle = "\"version\": 1";
  auto pos = bytes.find(needle);
  REQUIRE(pos != std::string::npos);
  bytes[pos + needle.size() - 1] = '9';
  write_bytes(path, bytes);

  CHECK_THROWS_AS(load_checkpoint(path), CheckpointVersionError);
}

TEST_CASE("checkpoint fingerprint gate") {
  testutil::TempDir dir;
  const std::string path = dir.path("model.ckpt");
  Checkpoint meta = sample_meta();
  Rng init = Rng::fork(13, "init");
  ParamStore params = init_params(meta.model, init, 0.1);
  save_checkpoint(path, meta, params);

  CHECK_NOTHROW(load_checkpoint(path, meta.vocab_fingerprint));
  CHECK_NOTHROW(load_checkpoint(path));   // 0 skips the check
  CHECK_THROWS_AS(load_checkpoint(path, meta.vocab_fingerprint + 1),
                  CheckpointFingerprintError);
}

TEST_CASE("verify_vocab_fingerprint matches a real vocabulary") {
  Vocabulary vocab = build_vocab({"alpha beta", "beta gamma"}, 10);
  Checkpoint meta;
  meta.vocab_fingerprint = vocab.fingerprint();
  CHECK_NOTHROW(verify_vocab_fingerprint(meta, vocab));
  meta.vocab_fingerprint ^= 1;
  CHECK_THROWS_AS(verify_vocab_fingerprint(meta, vocab),
                  CheckpointFingerprintError);
}

TEST_CASE("corrupt checkpoints are refused, not half-loaded") {
  testutil::TempDir dir;
  const std::string path = dir.path("model.ckpt");
  Checkpoint meta = sample_meta();
  Rng init = Rng::fork(13, "init");
  ParamStore params = init_params(meta.model, init, 0.1);
  save_checkpoint(path, meta, params);
  const std::string bytes = read_bytes(path);

  SUBCASE("missing file") {
    CHECK_THROWS_AS(load_checkpoint(dir.path("nope.ckpt")), DataError);
  }
  SUBCASE("empty file") {
    write_bytes(path, "");
    CHECK_THROWS_AS(load_checkpoint(path), CheckpointCorruptError);
  }
  SUBCASE("truncated header") {
    write_bytes(path, bytes.substr(0, 20));
    CHECK_THROWS_AS(load_checkpoint(path), CheckpointCorruptError);
  }
  SUBCASE("truncated tensor payload") {
    write_bytes(path, bytes.substr(0, bytes.size() - 9));
    CHECK_THROWS_AS(load_checkpoint(path), CheckpointCorruptError);
  }
  SUBCASE("trailing bytes") {
    write_bytes(path, bytes + "x");
    CHECK_THROWS_AS(load_checkpoint(path), CheckpointCorruptError);
  }
  SUBCASE("garbled header json") {
    std::string mangled = bytes;
    mangled[8] = 'X';   // first byte after the length prefix
    write_bytes(path, mangled);
    CHECK_THROWS_AS(load_checkpoint(path), CheckpointCorruptError);
  }
  SUBCASE("all corruption errors are DataErrors") {
    write_bytes(path, bytes + "x");
    CHECK_THROWS_AS(load_checkpoint(path), DataError);
  }
}

TEST_CASE("model config json round-trip preserves every field") {
  ModelConfig cfg;
  cfg.variant = Variant::kC2s;
  cfg.vocab_size = 31;
  cfg.hidden_size = 6;
  cfg.context_embed_dim = 5;
  cfg.input_embed_dim = 4;
  cfg.num_layers = 2;
  cfg.dropout = 0.25;
  cfg.precision = Precision::kF32;
  cfg.shared_recurrent = true;
  cfg.context_as_hidden_init = false;
  cfg.context_as_cell_init = true;
  cfg.schema.types.push_back({"kind", {"a", "b"}});
  cfg.schema.types.push_back({"shade", {"x", "y", "z"}});

  ModelConfig back = model_config_from_json(model_config_to_json(cfg));

  CHECK(variant_name(back.variant) == "c2s");
  CHECK(back.vocab_size == 31);
  CHECK(back.hidden_size == 6);
  CHECK(back.context_embed_dim == 5);
  CHECK(back.input_embed_dim == 4);
  CHECK(back.num_layers == 2);
  CHECK(back.dropout == 0.25);
  CHECK(back.precision == Precision::kF32);
  CHECK(back.shared_recurrent);
  CHECK_FALSE(back.context_as_hidden_init);
  CHECK(back.context_as_cell_init);
  REQUIRE(back.schema.types.size() == 2);
  CHECK(back.schema.types[1].name == "shade");
  CHECK(back.schema.types[1].values == std::vector<std::string>{"x", "y", "z"});
}

TEST_CASE("train config json round-trip preserves every field") {
  TrainConfig tc = sample_meta().train;
  TrainConfig back = train_config_from_json(train_config_to_json(tc));
  CHECK(back.batch_size == tc.batch_size);
  CHECK(back.initial_lr == tc.initial_lr);
  CHECK(back.clip_threshold == tc.clip_threshold);
  CHECK(back.init_range == tc.init_range);
  CHECK(back.max_epochs == tc.max_epochs);
  CHECK(back.seed == tc.seed);
  CHECK(back.dropout == tc.dropout);
  CHECK(back.hidden_size == tc.hidden_size);
  CHECK(back.bucket_width == tc.bucket_width);
  CHECK(back.min_lr == tc.min_lr);
  CHECK(back.lr_compare_best == tc.lr_compare_best);
}
