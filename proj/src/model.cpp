/*
 * Forward pass, per target step t (teacher forcing):
 *
 *   context encoder (when the variant uses contexts):
 *     e_i  = column of E_i selected by the i-th context value
 *     h_C  = tanh(W_enc [e_1; ...; e_K] + b_enc)
 *
 *   decoder, layer by layer (layer 0 reads the word embedding, layer l > 0
 *   reads the freshly updated hidden state of layer l-1):
 *     cand = tanh(Wx_c x + Wh_c h + b_c)
 *     i    = sigma(Wx_i x + Wh_i h + b_i)
 *     f    = sigma(Wx_f x + Wh_f h + b_f)
 *     c'   = f (*) c + i (*) cand
 *     o    = sigma(Wx_o x + Wh_o h + b_o)
 *     h'   = o (*) tanh(c')
 *
 *   output (top-layer h'):
 *     s    = h'                        baseline / C2S
 *     m    = sigma(V h' + b_g)
 *     s    = h' + m (*) h_C            gC2S skip-connection
 *     p    = softmax(O s + b_out)
 *
 * h_0 is h_C for C2S/gC2S (per layer) and 0 for the baseline; c_0 is 0
 * unless context_as_cell_init. Dropout hits the input->hidden path (every
 * layer's input) and the hidden->output path (h' inside s), with inverted
 * scaling; the recurrence and the gate read the undropped hidden state.
 *
 * backward_sequence is the exact reverse-mode transpose of the above,
 * including the flows into h_C through the initial states and through the
 * gated skip-connection at every step.
 */

#include "ctxgen/model.hpp"

#include <cmath>
#include <utility>

namespace ctxgen {

std::string variant_name(Variant v) {
  switch (v) {
    case Variant::kRnnBaseline: return "rnn";
    case Variant::kC2s: return "c2s";
    case Variant::kGc2s: return "gc2s";
  }
  return "?";
}

Variant variant_from_name(const std::string& name) {
  if (name == "rnn") return Variant::kRnnBaseline;
  if (name == "c2s") return Variant::kC2s;
  if (name == "gc2s") return Variant::kGc2s;
  throw DataError("unknown variant '" + name + "' (expected rnn|c2s|gc2s)");
}

void ModelConfig::validate() const {
  if (vocab_size < Vocabulary::kNumSpecials + 1) {
    throw ShapeError("vocab_size must be at least 5 (4 specials plus content)");
  }
  if (hidden_size < 1) throw ShapeError("hidden_size must be >= 1");
  if (context_embed_dim < 1) throw ShapeError("context_embed_dim must be >= 1");
  if (num_layers < 1) throw ShapeError("num_layers must be >= 1");
  if (!(dropout >= 0.0 && dropout < 1.0)) {
    throw ShapeError("dropout must be in [0, 1)");
  }
  if (uses_context() && schema.empty()) {
    throw ShapeError(variant_name(variant) +
                     " requires at least one context type");
  }
  for (const ContextType& t : schema.types) {
    if (t.cardinality() < 1) {
      throw ShapeError("context type '" + t.name + "' has no values");
    }
  }
}

namespace {

ParamRef bind_ref(ParamStore& store, const std::string& name) {
  return ParamRef{&store.value(name), &store.grad(name)};
}

std::string layer_param(std::size_t layer, const char* group,
                        const char* gate) {
  return "lstm" + std::to_string(layer) + "." + group + "." + gate;
}

Tensor draw_uniform(std::vector<std::size_t> shape, Rng& rng, double range) {
  Tensor t(std::move(shape));
  for (double& v : t.data) v = rng.uniform(-range, range);
  return t;
}

void add_to_column(Tensor& m, std::size_t col, const Tensor& v) {
  for (std::size_t r = 0; r < m.rows(); ++r) m.at(r, col) += v[r];
}

// Inverted-dropout mask: 1/(1-rate) with probability 1-rate, else 0.
Tensor draw_mask(std::size_t dim, double rate, Rng& rng) {
  const double keep = 1.0 - rate;
  Tensor mask({dim});
  for (std::size_t i = 0; i < dim; ++i) {
    mask[i] = rng.uniform01() < keep ? 1.0 / keep : 0.0;
  }
  return mask;
}

}  // namespace

ParamStore init_params(const ModelConfig& config, Rng& init_rng,
                       double init_range) {
  config.validate();
  const std::size_t n = config.hidden_size;
  const std::size_t v = config.vocab_size;
  const std::size_t e = config.effective_input_dim();
  const std::size_t d = config.context_embed_dim;

  ParamStore store;
  auto weight = [&](const std::string& name, std::vector<std::size_t> shape) {
    store.add(name, draw_uniform(std::move(shape), init_rng, init_range));
  };
  auto bias = [&](const std::string& name, std::size_t dim) {
    store.add(name, Tensor::zeros({dim}));
  };

  weight("embed.input", {e, v});
  // Encoder parameters exist whenever a schema is given, even for the
  // baseline variant that ignores them; their gradients simply stay zero.
  if (!config.schema.empty()) {
    for (const ContextType& t : config.schema.types) {
      weight("encoder.embed." + t.name, {d, t.cardinality()});
    }
    weight("encoder.proj.weight", {n, config.schema.type_count() * d});
    bias("encoder.proj.bias", n);
  }
  for (std::size_t l = 0; l < config.num_layers; ++l) {
    const std::size_t in_dim = l == 0 ? e : n;
    for (const char* gate : kGateNames) {
      weight(layer_param(l, "x", gate), {n, in_dim});
    }
    if (config.shared_recurrent) {
      weight(layer_param(l, "h", "shared"), {n, n});
    } else {
      for (const char* gate : kGateNames) {
        weight(layer_param(l, "h", gate), {n, n});
      }
    }
    for (const char* gate : kGateNames) {
      bias(layer_param(l, "b", gate), n);
    }
  }
  if (config.gated()) {
    weight("gate.weight", {n, n});
    bias("gate.bias", n);
  }
  weight("output.weight", {v, n});
  bias("output.bias", v);

  if (config.precision == Precision::kF32) {
    for (auto& entry : store.entries()) round_to_f32(entry.value);
  }
  return store;
}

ModelView ModelView::bind(ParamStore& store, const ModelConfig& config) {
  config.validate();
  ModelView view;
  view.config = &config;
  view.store = &store;
  view.embed_input = bind_ref(store, "embed.input");
  if (!config.schema.empty()) {
    for (const ContextType& t : config.schema.types) {
      view.ctx_embed.push_back(bind_ref(store, "encoder.embed." + t.name));
    }
    view.enc_w = bind_ref(store, "encoder.proj.weight");
    view.enc_b = bind_ref(store, "encoder.proj.bias");
  }
  for (std::size_t l = 0; l < config.num_layers; ++l) {
    LstmLayerView layer;
    for (int g = 0; g < 4; ++g) {
      layer.x[g] = bind_ref(store, layer_param(l, "x", kGateNames[g]));
      layer.h[g] = config.shared_recurrent
                       ? bind_ref(store, layer_param(l, "h", "shared"))
                       : bind_ref(store, layer_param(l, "h", kGateNames[g]));
      layer.b[g] = bind_ref(store, layer_param(l, "b", kGateNames[g]));
    }
    view.layers.push_back(layer);
  }
  if (config.gated()) {
    view.gate_w = bind_ref(store, "gate.weight");
    view.gate_b = bind_ref(store, "gate.bias");
  }
  view.out_w = bind_ref(store, "output.weight");
  view.out_b = bind_ref(store, "output.bias");
  return view;
}

LstmState lstm_step(const Tensor& x, const LstmState& prev,
                    const LstmLayerView& layer, LstmStepTrace* trace) {
  LstmStepTrace local;
  LstmStepTrace& tr = trace ? *trace : local;

  auto pre = [&](GateSlot g) {
    Tensor p = affine(*layer.x[g].value, x, *layer.b[g].value);
    add_scaled(p, matvec(*layer.h[g].value, prev.h));
    return p;
  };

  tr.pre_candidate = pre(kCandidate);
  tr.pre_input = pre(kInputGate);
  tr.pre_forget = pre(kForgetGate);
  tr.pre_output = pre(kOutputGate);

  tr.candidate = tanh_vec(tr.pre_candidate);
  tr.input_gate = sigmoid_vec(tr.pre_input);
  tr.forget_gate = sigmoid_vec(tr.pre_forget);
  tr.output_gate = sigmoid_vec(tr.pre_output);

  tr.cell = add(emul(tr.forget_gate, prev.c), emul(tr.input_gate, tr.candidate));
  tr.cell_tanh = tanh_vec(tr.cell);
  tr.hidden = emul(tr.output_gate, tr.cell_tanh);

  return LstmState{tr.hidden, tr.cell};
}

namespace {

Tensor encode_context_impl(const std::vector<int>& ctx_indices,
                           const ModelView& view, Tensor* concat_out) {
  const ModelConfig& cfg = *view.config;
  if (ctx_indices.size() != cfg.schema.type_count()) {
    throw ShapeError("expected " + std::to_string(cfg.schema.type_count()) +
                     " context indices, got " +
                     std::to_string(ctx_indices.size()));
  }
  const std::size_t d = cfg.context_embed_dim;
  Tensor concat({cfg.schema.type_count() * d});
  for (std::size_t i = 0; i < ctx_indices.size(); ++i) {
    const ContextType& type = cfg.schema.types[i];
    const int idx = ctx_indices[i];
    if (idx < 0 || static_cast<std::size_t>(idx) >= type.cardinality()) {
      throw DataError("context index " + std::to_string(idx) +
                      " out of range for type '" + type.name + "'");
    }
    const Tensor& embed = *view.ctx_embed[i].value;
    for (std::size_t r = 0; r < d; ++r) {
      concat[i * d + r] = embed.at(r, static_cast<std::size_t>(idx));
    }
  }
  Tensor h = tanh_vec(affine(*view.enc_w.value, concat, *view.enc_b.value));
  if (concat_out) *concat_out = std::move(concat);
  return h;
}

}  // namespace

Tensor encode_context(const std::vector<int>& ctx_indices,
                      const ModelView& view) {
  if (!view.config->uses_context()) {
    throw ShapeError("the baseline variant has no context encoder");
  }
  return encode_context_impl(ctx_indices, view, nullptr);
}

Tensor gate_vector(const Tensor& h, const ModelView& view) {
  if (!view.config->gated()) {
    throw ShapeError("gate_vector requires the gc2s variant");
  }
  return sigmoid_vec(affine(*view.gate_w.value, h, *view.gate_b.value));
}

Tensor output_distribution(const Tensor& h, const Tensor* h_ctx,
                           const Tensor* gate_m, const ModelView& view,
                           double temperature) {
  if ((h_ctx == nullptr) != (gate_m == nullptr)) {
    throw ShapeError("output_distribution needs h_ctx and gate_m together");
  }
  if (view.config->gated() && h_ctx == nullptr) {
    throw ShapeError("gc2s output needs the context and gate vectors");
  }
  if (!view.config->gated() && h_ctx != nullptr) {
    throw ShapeError(variant_name(view.config->variant) +
                     " output takes no gated context");
  }
  Tensor s = h;
  if (h_ctx) add_scaled(s, emul(*gate_m, *h_ctx));
  Tensor logits = affine(*view.out_w.value, s, *view.out_b.value);
  return softmax_with_temperature(logits, temperature);
}

SequenceResult forward_sequence(const Example& example, const ModelView& view,
                                Mode mode, Rng* dropout_rng,
                                ForwardCache* cache) {
  const ModelConfig& cfg = *view.config;
  const std::size_t n = cfg.hidden_size;
  const std::size_t num_layers = cfg.num_layers;
  const bool f32 = cfg.precision == Precision::kF32;

  if (example.tokens.size() < 2) {
    throw DataError("sequence needs at least BOS and one target token");
  }
  for (int id : example.tokens) {
    if (id < 0 || static_cast<std::size_t>(id) >= cfg.vocab_size) {
      throw DataError("token id " + std::to_string(id) +
                      " outside vocabulary of size " +
                      std::to_string(cfg.vocab_size));
    }
  }

  const bool train = mode == Mode::kTrain;
  const bool use_dropout = train && cfg.dropout > 0.0;
  if (use_dropout && dropout_rng == nullptr) {
    throw ShapeError("train-mode forward with dropout > 0 needs a dropout rng");
  }

  Tensor context_concat;
  Tensor context_h;
  if (cfg.uses_context()) {
    context_h = encode_context_impl(example.contexts, view, &context_concat);
    if (f32) round_to_f32(context_h);
  }

  std::vector<LstmState> states(num_layers);
  for (std::size_t l = 0; l < num_layers; ++l) {
    states[l].h = (cfg.uses_context() && cfg.context_as_hidden_init)
                      ? context_h
                      : Tensor::zeros({n});
    states[l].c = (cfg.uses_context() && cfg.context_as_cell_init)
                      ? context_h
                      : Tensor::zeros({n});
  }

  if (cache) {
    *cache = ForwardCache{};
    cache->valid = train;
    cache->tokens = example.tokens;
    cache->contexts = example.contexts;
    cache->context_concat = context_concat;
    cache->context_h = context_h;
    cache->init_states = states;
  }

  SequenceResult result;
  if (cfg.gated()) result.gate_trace.emplace();

  const std::size_t targets = example.target_count();
  for (std::size_t t = 0; t < targets; ++t) {
    const int input_id = example.tokens[t];
    const int target_id = example.tokens[t + 1];

    ForwardCache::Step step;
    step.target = target_id;

    Tensor layer_input = column_of(*view.embed_input.value,
                                   static_cast<std::size_t>(input_id));
    for (std::size_t l = 0; l < num_layers; ++l) {
      Tensor mask;
      if (use_dropout) {
        mask = draw_mask(layer_input.size(), cfg.dropout, *dropout_rng);
        layer_input = emul(mask, layer_input);
      }
      LstmStepTrace trace;
      LstmState next = lstm_step(layer_input, states[l], view.layers[l], &trace);
      if (f32) {
        round_to_f32(next.h);
        round_to_f32(next.c);
        trace.hidden = next.h;
        trace.cell = next.c;
      }
      if (cache) {
        step.layer_inputs.push_back(std::move(layer_input));
        step.input_masks.push_back(std::move(mask));
        step.layers.push_back(std::move(trace));
      }
      states[l] = next;
      layer_input = states[l].h;  // feeds the next layer up
    }

    const Tensor& top_h = states[num_layers - 1].h;
    Tensor top_dropped = top_h;
    Tensor output_mask;
    if (use_dropout) {
      output_mask = draw_mask(n, cfg.dropout, *dropout_rng);
      top_dropped = emul(output_mask, top_h);
    }

    Tensor gate_m;
    Tensor output_sum = top_dropped;
    if (cfg.gated()) {
      gate_m = gate_vector(top_h, view);
      if (f32) round_to_f32(gate_m);
      add_scaled(output_sum, emul(gate_m, context_h));
      double mean = 0.0;
      for (double g : gate_m.data) mean += g;
      mean /= static_cast<double>(gate_m.size());
      result.gate_trace->entries.push_back(
          GateTraceEntry{target_id, gate_m, mean});
    }

    Tensor logits = affine(*view.out_w.value, output_sum, *view.out_b.value);
    Tensor lsm = log_softmax(logits);
    const double step_lp = lsm[static_cast<std::size_t>(target_id)];
    result.target_log_probs.push_back(step_lp);
    result.loss -= step_lp;

    if (cache) {
      step.output_mask = std::move(output_mask);
      step.top_dropped = std::move(top_dropped);
      step.gate_m = std::move(gate_m);
      step.output_sum = std::move(output_sum);
      Tensor probs({lsm.size()});
      for (std::size_t i = 0; i < lsm.size(); ++i) probs[i] = std::exp(lsm[i]);
      step.probs = std::move(probs);
      cache->steps.push_back(std::move(step));
    }
  }

  if (!std::isfinite(result.loss)) {
    throw NumericError("sequence loss diverged to a non-finite value");
  }
  return result;
}

void backward_sequence(const ModelView& view, const ForwardCache& cache) {
  if (!cache.valid) {
    throw ShapeError("backward_sequence requires a train-mode forward cache");
  }
  const ModelConfig& cfg = *view.config;
  const std::size_t n = cfg.hidden_size;
  const std::size_t num_layers = cfg.num_layers;
  const std::size_t top = num_layers - 1;

  Tensor dh_ctx;
  if (cfg.uses_context()) dh_ctx = Tensor::zeros({n});

  // Gradients flowing into each layer's next-step h and c.
  std::vector<Tensor> dh(num_layers, Tensor::zeros({n}));
  std::vector<Tensor> dc(num_layers, Tensor::zeros({n}));

  for (std::size_t t = cache.steps.size(); t-- > 0;) {
    const ForwardCache::Step& step = cache.steps[t];

    // Output softmax: dlogits = p - onehot(target).
    Tensor dlogits = step.probs;
    dlogits[static_cast<std::size_t>(step.target)] -= 1.0;
    add_outer(*view.out_w.grad, dlogits, step.output_sum);
    add_scaled(*view.out_b.grad, dlogits);
    Tensor ds = matvec_transposed(*view.out_w.value, dlogits);

    // s = dropout(h_top) [+ m (*) h_C]
    Tensor dtop = step.output_mask.size() ? emul(step.output_mask, ds) : ds;
    if (cfg.gated()) {
      const Tensor& m = step.gate_m;
      Tensor dm = emul(ds, cache.context_h);
      for (std::size_t i = 0; i < n; ++i) dh_ctx[i] += ds[i] * m[i];
      Tensor dpre_gate = sigmoid_backward(m, dm);
      const Tensor& top_h = step.layers[top].hidden;
      add_outer(*view.gate_w.grad, dpre_gate, top_h);
      add_scaled(*view.gate_b.grad, dpre_gate);
      add_matvec_transposed(*view.gate_w.value, dpre_gate, dtop);
    }
    add_scaled(dh[top], dtop);

    for (std::size_t l = num_layers; l-- > 0;) {
      const LstmStepTrace& tr = step.layers[l];
      const Tensor& h_prev = t == 0 ? cache.init_states[l].h
                                    : cache.steps[t - 1].layers[l].hidden;
      const Tensor& c_prev = t == 0 ? cache.init_states[l].c
                                    : cache.steps[t - 1].layers[l].cell;

      // h' = o (*) tanh(c');  c' = f (*) c + i (*) cand
      Tensor dout_gate = emul(dh[l], tr.cell_tanh);
      Tensor dcell = dc[l];
      for (std::size_t i = 0; i < n; ++i) {
        dcell[i] += dh[l][i] * tr.output_gate[i] *
                    (1.0 - tr.cell_tanh[i] * tr.cell_tanh[i]);
      }
      Tensor dforget = emul(dcell, c_prev);
      Tensor dc_prev = emul(dcell, tr.forget_gate);
      Tensor dinput = emul(dcell, tr.candidate);
      Tensor dcand = emul(dcell, tr.input_gate);

      Tensor dpre[4];
      dpre[kCandidate] = tanh_backward(tr.candidate, dcand);
      dpre[kInputGate] = sigmoid_backward(tr.input_gate, dinput);
      dpre[kForgetGate] = sigmoid_backward(tr.forget_gate, dforget);
      dpre[kOutputGate] = sigmoid_backward(tr.output_gate, dout_gate);

      const Tensor& x = step.layer_inputs[l];
      Tensor dx = Tensor::zeros({x.size()});
      Tensor dh_prev = Tensor::zeros({n});
      const LstmLayerView& layer = view.layers[l];
      for (int g = 0; g < 4; ++g) {
        add_outer(*layer.x[g].grad, dpre[g], x);
        add_outer(*layer.h[g].grad, dpre[g], h_prev);
        add_scaled(*layer.b[g].grad, dpre[g]);
        add_matvec_transposed(*layer.x[g].value, dpre[g], dx);
        add_matvec_transposed(*layer.h[g].value, dpre[g], dh_prev);
      }

      // Undo the inverted-dropout scaling on the way down to the raw input.
      const Tensor& mask = step.input_masks[l];
      Tensor dx_raw = mask.size() ? emul(mask, dx) : std::move(dx);
      if (l == 0) {
        add_to_column(*view.embed_input.grad,
                      static_cast<std::size_t>(cache.tokens[t]), dx_raw);
      } else {
        add_scaled(dh[l - 1], dx_raw);
      }

      dh[l] = std::move(dh_prev);
      dc[l] = std::move(dc_prev);
    }
  }

  if (cfg.uses_context()) {
    for (std::size_t l = 0; l < num_layers; ++l) {
      if (cfg.context_as_hidden_init) add_scaled(dh_ctx, dh[l]);
      if (cfg.context_as_cell_init) add_scaled(dh_ctx, dc[l]);
    }
    Tensor dpre_enc = tanh_backward(cache.context_h, dh_ctx);
    add_outer(*view.enc_w.grad, dpre_enc, cache.context_concat);
    add_scaled(*view.enc_b.grad, dpre_enc);
    Tensor dconcat = matvec_transposed(*view.enc_w.value, dpre_enc);
    const std::size_t d = cfg.context_embed_dim;
    for (std::size_t i = 0; i < cfg.schema.type_count(); ++i) {
      Tensor slice({d});
      for (std::size_t r = 0; r < d; ++r) slice[r] = dconcat[i * d + r];
      add_to_column(*view.ctx_embed[i].grad,
                    static_cast<std::size_t>(cache.contexts[i]), slice);
    }
  }
}

}  // namespace ctxgen
