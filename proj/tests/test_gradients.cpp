// Finite-difference validation of the hand-written BPTT. Every configuration
// axis that changes the backward path gets its own check: variants, layer
// count, shared recurrent weights, context-as-cell-init, narrow input
// embeddings, and repeated tokens (embedding gradient accumulation).
//
// Init range ±0.5 keeps every connected gradient component well above the
// central-difference noise floor (|loss|*2^-52/eps ~ 1e-11). At ±0.1 the
// recurrent weights see activations of ~1e-2 and some true gradients land
// near 1e-8, where finite differences lose every significant digit and the
// relative error is meaningless.

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "ctxgen/grad_check.hpp"
#include "ctxgen/model.hpp"
#include "ctxgen/rng.hpp"
#include "doctest.h"

using namespace ctxgen;

namespace {

constexpr double kEps = 1e-5;
constexpr double kTol = 1e-4;
constexpr double kInitRange = 0.5;
constexpr std::uint64_t kInitSeed = 7;

ContextSchema two_type_schema() {
  ContextSchema schema;
  schema.types.push_back({"kind", {"a", "b"}});
  schema.types.push_back({"shade", {"x", "y", "z"}});
  return schema;
}

ModelConfig check_config(Variant variant) {
  ModelConfig cfg;
  cfg.variant = variant;
  cfg.vocab_size = 12;
  cfg.hidden_size = 4;
  cfg.context_embed_dim = 2;
  cfg.num_layers = 1;
  cfg.dropout = 0.0;   // finite differences need a deterministic loss
  if (variant != Variant::kRnnBaseline) cfg.schema = two_type_schema();
  return cfg;
}

double run_check(const ModelConfig& cfg, const std::vector<Example>& data,
                 std::uint64_t seed = kInitSeed) {
  Rng rng = Rng::fork(seed, "init");
  ParamStore params = init_params(cfg, rng, kInitRange);

  auto loss_fn = [&](ParamStore& ps, bool with_grad) {
    ModelView view = ModelView::bind(ps, cfg);
    if (with_grad) {
      ps.zero_grads();
      double total = 0.0;
      for (const Example& ex : data) {
        ForwardCache cache;
        total += forward_sequence(ex, view, Mode::kTrain, nullptr, &cache).loss;
        backward_sequence(view, cache);
      }
      return total;
    }
    double total = 0.0;
    for (const Example& ex : data) {
      total += forward_sequence(ex, view, Mode::kEval).loss;
    }
    return total;
  };

  GradCheckResult result = grad_check(params, loss_fn, kEps);
  INFO("worst parameter: ", result.worst_param, "[", result.worst_index, "]");
  CHECK(result.max_rel_error < kTol);
  return result.max_rel_error;
}

// tokens include a repeat (4 twice) so embedding columns accumulate
const std::vector<Example> kContextData = {{{1, 4, 5, 4, 6, 2}, {1, 2}}};
const std::vector<Example> kBaselineData = {{{1, 4, 5, 4, 6, 2}, {}}};

}  // namespace

TEST_CASE("gradients: rnn baseline") {
  run_check(check_config(Variant::kRnnBaseline), kBaselineData);
}

TEST_CASE("gradients: c2s (context flows through the initial state)") {
  run_check(check_config(Variant::kC2s), kContextData);
}

TEST_CASE("gradients: gc2s (context flows through every gated step)") {
  run_check(check_config(Variant::kGc2s), kContextData);
}

TEST_CASE("gradients: gc2s with two stacked layers") {
  ModelConfig cfg = check_config(Variant::kGc2s);
  cfg.num_layers = 2;
  run_check(cfg, kContextData);
}

TEST_CASE("gradients: gc2s with one shared recurrent matrix") {
  ModelConfig cfg = check_config(Variant::kGc2s);
  cfg.shared_recurrent = true;
  run_check(cfg, kContextData);
}

TEST_CASE("gradients: gc2s with the context as cell init too") {
  ModelConfig cfg = check_config(Variant::kGc2s);
  cfg.context_as_cell_init = true;
  run_check(cfg, kContextData);
}

TEST_CASE("gradients: gc2s without context initial state") {
  // context reaches the loss only through the gated skip connections
  ModelConfig cfg = check_config(Variant::kGc2s);
  cfg.context_as_hidden_init = false;
  run_check(cfg, kContextData);
}

TEST_CASE("gradients: c2s with context as cell and hidden init") {
  ModelConfig cfg = check_config(Variant::kC2s);
  cfg.context_as_cell_init = true;
  run_check(cfg, kContextData);
}

TEST_CASE("gradients: narrow input embedding") {
  ModelConfig cfg = check_config(Variant::kGc2s);
  cfg.input_embed_dim = 3;   // embed dim != hidden size
  run_check(cfg, kContextData);
}

TEST_CASE("gradients survive a different seed") {
  run_check(check_config(Variant::kGc2s), kContextData, 99);
}

TEST_CASE("backward accumulates gradients across examples exactly") {
  ModelConfig cfg = check_config(Variant::kGc2s);
  const Example ex1{{1, 4, 5, 4, 6, 2}, {1, 2}};
  const Example ex2{{1, 6, 5, 2}, {0, 0}};

  Rng rng = Rng::fork(kInitSeed, "init");
  ParamStore params = init_params(cfg, rng, kInitRange);

  auto grads_for = [&](const std::vector<Example>& data) {
    ModelView view = ModelView::bind(params, cfg);
    params.zero_grads();
    for (const Example& ex : data) {
      ForwardCache cache;
      forward_sequence(ex, view, Mode::kTrain, nullptr, &cache);
      backward_sequence(view, cache);
    }
    std::vector<double> flat;
    for (const auto& entry : params.entries()) {
      const Tensor& g = params.grad(entry.name);
      flat.insert(flat.end(), g.data.begin(), g.data.end());
    }
    return flat;
  };

  std::vector<double> both = grads_for({ex1, ex2});
  std::vector<double> first = grads_for({ex1});
  std::vector<double> second = grads_for({ex2});

  REQUIRE(both.size() == first.size());
  std::size_t mismatches = 0;
  for (std::size_t i = 0; i < both.size(); ++i) {
    // summation order differs between the two runs, so allow a few ulps
    double expected = first[i] + second[i];
    double tol = 1e-12 * std::max(1.0, std::abs(expected));
    if (std::abs(both[i] - expected) > tol) ++mismatches;
  }
  CHECK(mismatches == 0);
}
