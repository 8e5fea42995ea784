#include <cmath>
#include <vector>

#include "ctxgen/model.hpp"
#include "ctxgen/rng.hpp"
#include "doctest.h"

using namespace ctxgen;

namespace {

// Deterministic parameter pattern mirrored by the reference computation that
// produced the frozen numbers below: tensor ordinal t (creation order),
// element k (row-major) -> ((k*3 + t*5) % 11 - 5) / 20.
void fill_pattern(ParamStore& params) {
  std::size_t t = 0;
  for (ParamStore::Entry& e : params.entries()) {
    for (std::size_t k = 0; k < e.value.size(); ++k) {
      e.value[k] =
          (static_cast<double>((k * 3 + t * 5) % 11) - 5.0) / 20.0;
    }
    ++t;
  }
}

ContextSchema one_type_schema() {
  ContextSchema schema;
  schema.types.push_back({"kind", {"a", "b", "c"}});
  return schema;
}

ModelConfig tiny_config(Variant variant) {
  ModelConfig cfg;
  cfg.variant = variant;
  cfg.vocab_size = 5;
  cfg.hidden_size = 2;
  cfg.context_embed_dim = 2;
  cfg.num_layers = 1;
  cfg.dropout = 0.0;
  if (variant != Variant::kRnnBaseline) cfg.schema = one_type_schema();
  return cfg;
}

ParamStore patterned_params(const ModelConfig& cfg) {
  Rng rng = Rng::fork(1, "init");
  ParamStore params = init_params(cfg, rng, 0.1);
  fill_pattern(params);
  return params;
}

const Example kExample{{1, 4, 2}, {1}};       // BOS w EOS, context index 1
const Example kBaselineExample{{1, 4, 2}, {}};

}  // namespace

TEST_CASE("variant names round-trip") {
  CHECK(variant_name(Variant::kRnnBaseline) == "rnn");
  CHECK(variant_name(Variant::kC2s) == "c2s");
  CHECK(variant_name(Variant::kGc2s) == "gc2s");
  CHECK(variant_from_name("gc2s") == Variant::kGc2s);
  CHECK_THROWS_AS(variant_from_name("transformer"), DataError);
}

TEST_CASE("config validation") {
  ModelConfig cfg = tiny_config(Variant::kGc2s);
  CHECK_NOTHROW(cfg.validate());

  ModelConfig small = cfg;
  small.vocab_size = 4;
  CHECK_THROWS_AS(small.validate(), ShapeError);

  ModelConfig no_ctx = cfg;
  no_ctx.schema = ContextSchema{};
  CHECK_THROWS_AS(no_ctx.validate(), ShapeError);

  ModelConfig bad_dropout = cfg;
  bad_dropout.dropout = 1.0;
  CHECK_THROWS_AS(bad_dropout.validate(), ShapeError);

  ModelConfig baseline = tiny_config(Variant::kRnnBaseline);
  CHECK_NOTHROW(baseline.validate());

  CHECK(cfg.effective_input_dim() == 2);
  cfg.input_embed_dim = 7;
  CHECK(cfg.effective_input_dim() == 7);
}

TEST_CASE("parameter creation: stable names, ranged weights, zero biases") {
  ModelConfig cfg = tiny_config(Variant::kGc2s);
  Rng rng = Rng::fork(3, "init");
  ParamStore params = init_params(cfg, rng, 0.1);

  CHECK(params.has("embed.input"));
  CHECK(params.has("encoder.embed.kind"));
  CHECK(params.has("encoder.proj.weight"));
  CHECK(params.has("encoder.proj.bias"));
  CHECK(params.has("lstm0.x.candidate"));
  CHECK(params.has("lstm0.h.forget"));
  CHECK(params.has("lstm0.b.output"));
  CHECK(params.has("gate.weight"));
  CHECK(params.has("gate.bias"));
  CHECK(params.has("output.weight"));
  CHECK(params.has("output.bias"));
  CHECK(params.entries().size() == 20);

  for (const ParamStore::Entry& e : params.entries()) {
    const bool is_bias = e.name.find(".b.") != std::string::npos ||
                         e.name.size() > 5 &&
                             e.name.substr(e.name.size() - 5) == ".bias";
    for (std::size_t k = 0; k < e.value.size(); ++k) {
      if (is_bias) {
        CHECK(e.value[k] == 0.0);
      } else {
        CHECK(std::abs(e.value[k]) <= 0.1);
      }
    }
  }

  // same stream -> same draws
  Rng rng2 = Rng::fork(3, "init");
  ParamStore again = init_params(cfg, rng2, 0.1);
  for (std::size_t i = 0; i < params.entries().size(); ++i) {
    CHECK(again.entries()[i].name == params.entries()[i].name);
    CHECK(again.entries()[i].value.data == params.entries()[i].value.data);
  }

  // baseline with a schema still creates encoder tensors (kept at zero use)
  ModelConfig baseline = tiny_config(Variant::kRnnBaseline);
  baseline.schema = one_type_schema();
  Rng rng3 = Rng::fork(3, "init");
  ParamStore base_params = init_params(baseline, rng3, 0.1);
  CHECK(base_params.has("encoder.embed.kind"));
  CHECK_FALSE(base_params.has("gate.weight"));
}

TEST_CASE("lstm step: zero parameters give the closed-form update") {
  // cand = tanh(0) = 0, i = f = o = 1/2; c' = c/2; h' = tanh(c/2)/2
  ModelConfig cfg = tiny_config(Variant::kRnnBaseline);
  cfg.hidden_size = 1;
  Rng rng = Rng::fork(1, "init");
  ParamStore params = init_params(cfg, rng, 0.0);
  ModelView view = ModelView::bind(params, cfg);

  LstmState prev{Tensor::vec({0.0}), Tensor::vec({1.0})};
  LstmStepTrace trace;
  LstmState next = lstm_step(Tensor::vec({0.3}), prev, view.layers[0], &trace);
  CHECK(next.c[0] == 0.5);
  CHECK(next.h[0] == doctest::Approx(0.23105857863000487).epsilon(1e-16));
  CHECK(trace.candidate[0] == 0.0);
  CHECK(trace.input_gate[0] == 0.5);
  CHECK(trace.forget_gate[0] == 0.5);
  CHECK(trace.output_gate[0] == 0.5);
  CHECK(trace.cell[0] == 0.5);
}

TEST_CASE("baseline forward matches the independent reference") {
  ModelConfig cfg = tiny_config(Variant::kRnnBaseline);
  ParamStore params = patterned_params(cfg);
  ModelView view = ModelView::bind(params, cfg);

  SequenceResult r = forward_sequence(kBaselineExample, view, Mode::kEval);
  CHECK(r.loss == doctest::Approx(3.0261166873701146).epsilon(1e-12));
  REQUIRE(r.target_log_probs.size() == 2);
  CHECK(r.target_log_probs[0] ==
        doctest::Approx(-1.6414456546141392).epsilon(1e-12));
  CHECK(r.target_log_probs[1] ==
        doctest::Approx(-1.3846710327559753).epsilon(1e-12));
  CHECK_FALSE(r.gate_trace.has_value());
}

TEST_CASE("context encoding matches the independent reference") {
  ModelConfig cfg = tiny_config(Variant::kGc2s);
  ParamStore params = patterned_params(cfg);
  ModelView view = ModelView::bind(params, cfg);

  Tensor h_c = encode_context({1}, view);
  REQUIRE(h_c.size() == 2);
  CHECK(h_c[0] == doctest::Approx(-0.019997333759930933).epsilon(1e-12));
  CHECK(h_c[1] == doctest::Approx(0.10708780630223662).epsilon(1e-12));

  CHECK_THROWS_AS(encode_context({}, view), ShapeError);
  CHECK_THROWS_AS(encode_context({3}, view), DataError);   // only 3 values
  CHECK_THROWS_AS(encode_context({-1}, view), DataError);

  ModelConfig baseline = tiny_config(Variant::kRnnBaseline);
  ParamStore base_params = patterned_params(baseline);
  ModelView base_view = ModelView::bind(base_params, baseline);
  CHECK_THROWS_AS(encode_context({1}, base_view), ShapeError);
}

TEST_CASE("gc2s forward matches the independent reference") {
  ModelConfig cfg = tiny_config(Variant::kGc2s);
  ParamStore params = patterned_params(cfg);
  ModelView view = ModelView::bind(params, cfg);

  SequenceResult r = forward_sequence(kExample, view, Mode::kEval);
  CHECK(r.loss == doctest::Approx(3.348955840889174).epsilon(1e-12));
  REQUIRE(r.target_log_probs.size() == 2);
  CHECK(r.target_log_probs[0] ==
        doctest::Approx(-1.5241957484647362).epsilon(1e-12));
  CHECK(r.target_log_probs[1] ==
        doctest::Approx(-1.8247600924244378).epsilon(1e-12));

  REQUIRE(r.gate_trace.has_value());
  REQUIRE(r.gate_trace->entries.size() == 2);
  CHECK(r.gate_trace->entries[0].token_id == 4);
  CHECK(r.gate_trace->entries[1].token_id == 2);
  CHECK(r.gate_trace->entries[0].mean_gate ==
        doctest::Approx(0.48694477237262396).epsilon(1e-12));
  CHECK(r.gate_trace->entries[1].mean_gate ==
        doctest::Approx(0.48655764818392805).epsilon(1e-12));
}

TEST_CASE("c2s forward matches the independent reference") {
  ModelConfig cfg = tiny_config(Variant::kC2s);
  ParamStore params = patterned_params(cfg);
  ModelView view = ModelView::bind(params, cfg);

  SequenceResult r = forward_sequence(kExample, view, Mode::kEval);
  CHECK(r.loss == doctest::Approx(3.1543646846371844).epsilon(1e-12));
  CHECK(r.target_log_probs[0] ==
        doctest::Approx(-1.4275976276248594).epsilon(1e-12));
  CHECK(r.target_log_probs[1] ==
        doctest::Approx(-1.7267670570123252).epsilon(1e-12));
  CHECK_FALSE(r.gate_trace.has_value());
}

TEST_CASE("zero-initialized model predicts uniformly: loss = L ln V") {
  for (Variant variant :
       {Variant::kRnnBaseline, Variant::kC2s, Variant::kGc2s}) {
    ModelConfig cfg = tiny_config(variant);
    cfg.vocab_size = 20;
    Rng rng = Rng::fork(1, "init");
    ParamStore params = init_params(cfg, rng, 0.0);
    ModelView view = ModelView::bind(params, cfg);

    const Example ex{{1, 7, 11, 2},
                     variant == Variant::kRnnBaseline ? std::vector<int>{}
                                                      : std::vector<int>{0}};
    SequenceResult r = forward_sequence(ex, view, Mode::kEval);
    CHECK(r.loss == doctest::Approx(3.0 * std::log(20.0)).epsilon(1e-12));
  }
}

TEST_CASE("gate saturation: large positive bias drives gates to one") {
  ModelConfig cfg = tiny_config(Variant::kGc2s);
  ParamStore params = patterned_params(cfg);
  params.value("gate.bias").fill(50.0);
  ModelView view = ModelView::bind(params, cfg);

  SequenceResult r = forward_sequence(kExample, view, Mode::kEval);
  for (const GateTraceEntry& e : r.gate_trace->entries) {
    CHECK(e.mean_gate == doctest::Approx(1.0).epsilon(1e-9));
  }

  ParamStore closed = patterned_params(cfg);
  closed.value("gate.bias").fill(-50.0);
  ModelView closed_view = ModelView::bind(closed, cfg);
  SequenceResult rc = forward_sequence(kExample, closed_view, Mode::kEval);
  for (const GateTraceEntry& e : rc.gate_trace->entries) {
    CHECK(e.mean_gate == doctest::Approx(0.0).epsilon(1e-9));
  }
}

TEST_CASE("gate and output plumbing reject wrong variants") {
  ModelConfig c2s = tiny_config(Variant::kC2s);
  ParamStore params = patterned_params(c2s);
  ModelView view = ModelView::bind(params, c2s);
  CHECK_THROWS_AS(gate_vector(Tensor::vec({0, 0}), view), ShapeError);

  Tensor h = Tensor::vec({0.1, 0.2});
  Tensor h_ctx = Tensor::vec({0.3, 0.4});
  // c2s must not receive gate inputs
  CHECK_THROWS_AS(output_distribution(h, &h_ctx, &h_ctx, view), ShapeError);
  CHECK_NOTHROW(output_distribution(h, nullptr, nullptr, view));

  ModelConfig gc2s = tiny_config(Variant::kGc2s);
  ParamStore gparams = patterned_params(gc2s);
  ModelView gview = ModelView::bind(gparams, gc2s);
  // gc2s needs both context and gate
  CHECK_THROWS_AS(output_distribution(h, nullptr, nullptr, gview), ShapeError);
  CHECK_THROWS_AS(output_distribution(h, &h_ctx, nullptr, gview), ShapeError);
}

TEST_CASE("forward validation: short sequences, bad ids, dropout rng") {
  ModelConfig cfg = tiny_config(Variant::kGc2s);
  ParamStore params = patterned_params(cfg);
  ModelView view = ModelView::bind(params, cfg);

  CHECK_THROWS_AS(forward_sequence({{1}, {1}}, view, Mode::kEval), DataError);
  CHECK_THROWS_AS(forward_sequence({{1, 9, 2}, {1}}, view, Mode::kEval),
                  DataError);
  CHECK_THROWS_AS(forward_sequence({{1, 4, 2}, {}}, view, Mode::kEval),
                  ShapeError);

  ModelConfig dropped = cfg;
  dropped.dropout = 0.5;
  ParamStore dparams = patterned_params(dropped);
  ModelView dview = ModelView::bind(dparams, dropped);
  CHECK_THROWS_AS(forward_sequence(kExample, dview, Mode::kTrain), ShapeError);
}

TEST_CASE("dropout: eval deterministic, train stochastic, rate 0 inert") {
  ModelConfig cfg = tiny_config(Variant::kGc2s);
  cfg.dropout = 0.5;
  ParamStore params = patterned_params(cfg);
  ModelView view = ModelView::bind(params, cfg);

  // eval ignores dropout entirely
  const double eval_loss = forward_sequence(kExample, view, Mode::kEval).loss;
  ModelConfig no_drop = cfg;
  no_drop.dropout = 0.0;
  ParamStore params2 = patterned_params(no_drop);
  ModelView view2 = ModelView::bind(params2, no_drop);
  CHECK(forward_sequence(kExample, view2, Mode::kEval).loss == eval_loss);

  // dropout 0 in train mode equals eval
  CHECK(forward_sequence(kExample, view2, Mode::kTrain).loss == eval_loss);

  // two different mask draws, two different losses
  Rng d1 = Rng::fork(5, "dropout");
  const double l1 = forward_sequence(kExample, view, Mode::kTrain, &d1).loss;
  const double l2 = forward_sequence(kExample, view, Mode::kTrain, &d1).loss;
  CHECK(l1 != l2);

  // same draws, same loss
  Rng d2 = Rng::fork(5, "dropout");
  CHECK(forward_sequence(kExample, view, Mode::kTrain, &d2).loss == l1);
}

TEST_CASE("shared recurrent weights behave like four equal matrices") {
  ModelConfig shared_cfg = tiny_config(Variant::kGc2s);
  shared_cfg.shared_recurrent = true;
  ParamStore shared = patterned_params(shared_cfg);
  CHECK(shared.has("lstm0.h.shared"));
  CHECK_FALSE(shared.has("lstm0.h.candidate"));
  ModelView shared_view = ModelView::bind(shared, shared_cfg);
  // all four gate refs alias one tensor
  CHECK(shared_view.layers[0].h[0].value == shared_view.layers[0].h[3].value);

  ModelConfig sep_cfg = tiny_config(Variant::kGc2s);
  ParamStore separate = patterned_params(sep_cfg);
  const Tensor shared_h = shared.value("lstm0.h.shared");
  for (const char* gate : kGateNames) {
    separate.value(std::string("lstm0.h.") + gate) = shared_h;
  }
  // align every other tensor
  for (ParamStore::Entry& e : separate.entries()) {
    if (e.name.rfind("lstm0.h.", 0) != 0 && shared.has(e.name)) {
      e.value = shared.value(e.name);
    }
  }
  ModelView sep_view = ModelView::bind(separate, sep_cfg);

  CHECK(forward_sequence(kExample, shared_view, Mode::kEval).loss ==
        forward_sequence(kExample, sep_view, Mode::kEval).loss);
}

TEST_CASE("context initial-state flags change the computation") {
  ModelConfig cfg = tiny_config(Variant::kGc2s);
  ParamStore params = patterned_params(cfg);
  const double base =
      forward_sequence(kExample, ModelView::bind(params, cfg), Mode::kEval)
          .loss;

  ModelConfig no_init = cfg;
  no_init.context_as_hidden_init = false;
  ParamStore p2 = patterned_params(no_init);
  const double without =
      forward_sequence(kExample, ModelView::bind(p2, no_init), Mode::kEval)
          .loss;
  CHECK(base != without);

  ModelConfig cell_init = cfg;
  cell_init.context_as_cell_init = true;
  ParamStore p3 = patterned_params(cell_init);
  const double with_cell =
      forward_sequence(kExample, ModelView::bind(p3, cell_init), Mode::kEval)
          .loss;
  CHECK(base != with_cell);
}

TEST_CASE("two stacked layers run and stay finite") {
  ModelConfig cfg = tiny_config(Variant::kGc2s);
  cfg.num_layers = 2;
  ParamStore params = patterned_params(cfg);
  CHECK(params.has("lstm1.x.candidate"));
  ModelView view = ModelView::bind(params, cfg);
  SequenceResult r = forward_sequence(kExample, view, Mode::kEval);
  CHECK(std::isfinite(r.loss));
  CHECK(r.loss > 0.0);
}

TEST_CASE("f32 precision: parameters and activations are rounded") {
  ModelConfig cfg = tiny_config(Variant::kGc2s);
  cfg.precision = Precision::kF32;
  Rng rng = Rng::fork(1, "init");
  ParamStore params = init_params(cfg, rng, 0.1);
  for (const ParamStore::Entry& e : params.entries()) {
    for (std::size_t k = 0; k < e.value.size(); ++k) {
      CHECK(e.value[k] ==
            static_cast<double>(static_cast<float>(e.value[k])));
    }
  }

  ModelView view = ModelView::bind(params, cfg);
  SequenceResult r = forward_sequence(kExample, view, Mode::kEval);
  CHECK(std::isfinite(r.loss));

  // f32 and f64 differ on the same patterned weights
  ModelConfig f64_cfg = cfg;
  f64_cfg.precision = Precision::kF64;
  ParamStore p64 = patterned_params(f64_cfg);
  ParamStore p32 = patterned_params(cfg);   // pattern values are f32-exact
  const double l64 =
      forward_sequence(kExample, ModelView::bind(p64, f64_cfg), Mode::kEval)
          .loss;
  const double l32 =
      forward_sequence(kExample, ModelView::bind(p32, cfg), Mode::kEval).loss;
  CHECK(l64 != l32);   // activation rounding must kick in
}

TEST_CASE("backward needs a cache from a train-mode forward") {
  ModelConfig cfg = tiny_config(Variant::kGc2s);
  ParamStore params = patterned_params(cfg);
  ModelView view = ModelView::bind(params, cfg);

  ForwardCache cache;
  forward_sequence(kExample, view, Mode::kEval, nullptr, &cache);
  CHECK_FALSE(cache.valid);
  CHECK_THROWS_AS(backward_sequence(view, cache), ShapeError);

  forward_sequence(kExample, view, Mode::kTrain, nullptr, &cache);
  CHECK(cache.valid);
  CHECK_NOTHROW(backward_sequence(view, cache));
  CHECK(params.grad_norm() > 0.0);
}
