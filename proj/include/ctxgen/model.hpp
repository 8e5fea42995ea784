#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ctxgen/corpus.hpp"
#include "ctxgen/param_store.hpp"
#include "ctxgen/rng.hpp"
#include "ctxgen/tensor.hpp"

namespace ctxgen {

enum class Variant { kRnnBaseline, kC2s, kGc2s };

std::string variant_name(Variant v);
Variant variant_from_name(const std::string& name);

enum class Precision { kF64, kF32 };

struct ModelConfig {
  Variant variant = Variant::kGc2s;
  std::size_t vocab_size = 0;
  std::size_t hidden_size = 512;
  std::size_t context_embed_dim = 64;
  // 0 means "same as hidden_size".
  std::size_t input_embed_dim = 0;
  std::size_t num_layers = 1;
  ContextSchema schema;
  double dropout = 0.5;
  Precision precision = Precision::kF64;
  // Literal reading of the update block: one recurrent matrix shared by all
  // four gates instead of four distinct ones.
  bool shared_recurrent = false;
  // h_0 = context embedding for C2S/gC2S. Off means h_0 = 0 everywhere.
  bool context_as_hidden_init = true;
  // Alternate reading where c_0 = context embedding as well.
  bool context_as_cell_init = false;

  std::size_t effective_input_dim() const {
    return input_embed_dim == 0 ? hidden_size : input_embed_dim;
  }
  bool uses_context() const { return variant != Variant::kRnnBaseline; }
  bool gated() const { return variant == Variant::kGc2s; }
  void validate() const;
};

// Candidate transform plus the three gates, in a fixed order that every
// loop over gate parameters follows.
enum GateSlot { kCandidate = 0, kInputGate = 1, kForgetGate = 2, kOutputGate = 3 };
inline constexpr const char* kGateNames[4] = {"candidate", "input", "forget",
                                              "output"};

// Mutable handles into a ParamStore for one model, bound once so the
// per-step code never does name lookups.
struct ParamRef {
  Tensor* value = nullptr;
  Tensor* grad = nullptr;
};

struct LstmLayerView {
  ParamRef x[4];  // input weights per gate, hidden x in_dim
  ParamRef h[4];  // recurrent weights per gate (may all alias one tensor)
  ParamRef b[4];  // biases per gate
};

struct ModelView {
  const ModelConfig* config = nullptr;
  ParamStore* store = nullptr;

  ParamRef embed_input;               // in_dim x V
  std::vector<ParamRef> ctx_embed;    // d x K_i per context type
  ParamRef enc_w;                     // N x (K*d)
  ParamRef enc_b;                     // N
  std::vector<LstmLayerView> layers;
  ParamRef gate_w;                    // N x N, gC2S only
  ParamRef gate_b;                    // N, gC2S only
  ParamRef out_w;                     // V x N
  ParamRef out_b;                     // V

  static ModelView bind(ParamStore& store, const ModelConfig& config);
};

// Creates all learnable tensors for the config in a stable order: weights
// drawn Uniform(-init_range, init_range) from the given stream, biases zero.
ParamStore init_params(const ModelConfig& config, Rng& init_rng,
                       double init_range);

struct LstmState {
  Tensor h;
  Tensor c;
};

struct LstmStepTrace {
  Tensor pre_candidate, pre_input, pre_forget, pre_output;
  Tensor candidate, input_gate, forget_gate, output_gate;
  Tensor cell, cell_tanh, hidden;
};

// One cell update:
//   cand = tanh(Wx_c x + Wh_c h + b_c)
//   i    = sigma(Wx_i x + Wh_i h + b_i)
//   f    = sigma(Wx_f x + Wh_f h + b_f)
//   c'   = f (*) c + i (*) cand
//   o    = sigma(Wx_o x + Wh_o h + b_o)
//   h'   = o (*) tanh(c')
LstmState lstm_step(const Tensor& x, const LstmState& prev,
                    const LstmLayerView& layer, LstmStepTrace* trace = nullptr);

// h_C = tanh(W_enc concat(e_1..e_K) + b_enc), where e_i is the column of
// E_i selected by the i-th context index.
Tensor encode_context(const std::vector<int>& ctx_indices,
                      const ModelView& view);

// m = sigma(V h + b); gC2S only.
Tensor gate_vector(const Tensor& h, const ModelView& view);

// softmax((O s + bias) / T) with s = h, or s = h + m (*) h_ctx for gC2S.
// h_ctx and gate_m must be both present or both absent.
Tensor output_distribution(const Tensor& h, const Tensor* h_ctx,
                           const Tensor* gate_m, const ModelView& view,
                           double temperature = 1.0);

struct GateTraceEntry {
  int token_id = 0;
  Tensor gate;
  double mean_gate = 0.0;
};

// Per target position: the gate vector active when that token was predicted.
struct GateTrace {
  std::vector<GateTraceEntry> entries;
};

enum class Mode { kTrain, kEval };

struct SequenceResult {
  double loss = 0.0;                       // sum of per-target -log p
  std::vector<double> target_log_probs;    // per target position
  std::optional<GateTrace> gate_trace;     // gC2S only
};

// Everything backward_sequence needs, captured by a train-mode forward.
struct ForwardCache {
  bool valid = false;
  std::vector<int> tokens;
  std::vector<int> contexts;

  Tensor context_concat;
  Tensor context_h;

  struct Step {
    std::vector<Tensor> layer_inputs;    // post-dropout input per layer
    std::vector<Tensor> input_masks;     // scaled dropout masks per layer
    std::vector<LstmStepTrace> layers;
    Tensor output_mask;                  // scaled hidden->output mask
    Tensor top_dropped;
    Tensor gate_m;                       // gC2S only
    Tensor output_sum;                   // s fed to the output embedding
    Tensor probs;
    int target = 0;
  };
  std::vector<Step> steps;
  std::vector<LstmState> init_states;
};

// Teacher-forced pass over one example. Train mode draws dropout masks from
// `dropout_rng` (required when dropout > 0); eval mode is deterministic.
// Pass `cache` to capture state for backward_sequence.
SequenceResult forward_sequence(const Example& example, const ModelView& view,
                                Mode mode, Rng* dropout_rng = nullptr,
                                ForwardCache* cache = nullptr);

// Exact BPTT gradients of the cached sequence loss, accumulated into the
// store's gradient buffers.
void backward_sequence(const ModelView& view, const ForwardCache& cache);

}  // namespace ctxgen
