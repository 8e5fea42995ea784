#include "ctxgen/generation.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

#include "json.hpp"

namespace ctxgen {

void SamplingConfig::validate() const {
  if (!(temperature > 0.0)) throw ShapeError("temperature must be > 0");
  if (max_len < 1) throw ShapeError("max_len must be >= 1");
}

namespace {

// Shared eval-mode decode state: context encoding plus one LSTM state per
// layer, advanced token by token.
struct Decoder {
  const ModelView* view;
  Tensor context_h;

  explicit Decoder(const std::vector<int>& contexts, const ModelView& v)
      : view(&v) {
    const ModelConfig& cfg = *v.config;
    if (cfg.uses_context()) {
      context_h = encode_context(contexts, v);
      if (cfg.precision == Precision::kF32) round_to_f32(context_h);
    }
  }

  std::vector<LstmState> initial_states() const {
    const ModelConfig& cfg = *view->config;
    std::vector<LstmState> states(cfg.num_layers);
    for (auto& s : states) {
      s.h = (cfg.uses_context() && cfg.context_as_hidden_init)
                ? context_h
                : Tensor::zeros({cfg.hidden_size});
      s.c = (cfg.uses_context() && cfg.context_as_cell_init)
                ? context_h
                : Tensor::zeros({cfg.hidden_size});
    }
    return states;
  }

  struct StepOut {
    Tensor logits;
    Tensor gate_m;  // gC2S only
  };

  StepOut advance(std::vector<LstmState>& states, int token) const {
    const ModelConfig& cfg = *view->config;
    const bool f32 = cfg.precision == Precision::kF32;
    Tensor input = column_of(*view->embed_input.value,
                             static_cast<std::size_t>(token));
    for (std::size_t l = 0; l < cfg.num_layers; ++l) {
      states[l] = lstm_step(input, states[l], view->layers[l]);
      if (f32) {
        round_to_f32(states[l].h);
        round_to_f32(states[l].c);
      }
      input = states[l].h;
    }
    StepOut out;
    const Tensor& top_h = states[cfg.num_layers - 1].h;
    Tensor s = top_h;
    if (cfg.gated()) {
      out.gate_m = gate_vector(top_h, *view);
      if (f32) round_to_f32(out.gate_m);
      add_scaled(s, emul(out.gate_m, context_h));
    }
    out.logits = affine(*view->out_w.value, s, *view->out_b.value);
    return out;
  }
};

// Zero out the never-emitted ids and renormalize to a proper distribution.
void mask_distribution(Tensor& probs, bool mask_unk) {
  probs[Vocabulary::kPad] = 0.0;
  probs[Vocabulary::kBos] = 0.0;
  if (mask_unk) probs[Vocabulary::kUnk] = 0.0;
  double sum = 0.0;
  for (double p : probs.data) sum += p;
  if (!(sum > 0.0)) {
    throw NumericError("no probability mass left after masking");
  }
  scale(probs, 1.0 / sum);
}

bool emittable(int id, bool mask_unk) {
  if (id == Vocabulary::kPad || id == Vocabulary::kBos) return false;
  if (mask_unk && id == Vocabulary::kUnk) return false;
  return true;
}

double gate_mean(const Tensor& m) {
  double sum = 0.0;
  for (double g : m.data) sum += g;
  return sum / static_cast<double>(m.size());
}

}  // namespace

GeneratedText sample_sequence(const std::vector<int>& contexts,
                              const ModelView& view, const Vocabulary& vocab,
                              const SamplingConfig& config, Rng& rng) {
  config.validate();
  Decoder decoder(contexts, view);
  std::vector<LstmState> states = decoder.initial_states();

  GeneratedText out;
  out.contexts = contexts;
  if (view.config->gated()) out.gate_trace.emplace();

  int prev = Vocabulary::kBos;
  out.terminated_by = "max_len";
  for (std::size_t step = 0; step < config.max_len; ++step) {
    Decoder::StepOut so = decoder.advance(states, prev);
    Tensor model_lsm = log_softmax(so.logits);
    Tensor sampling =
        softmax_with_temperature(so.logits, config.temperature);
    mask_distribution(sampling, config.mask_unk);
    const int pick = static_cast<int>(sample_categorical(sampling, rng));

    out.token_ids.push_back(pick);
    const double lp = model_lsm[static_cast<std::size_t>(pick)];
    out.step_probs.push_back(std::exp(lp));
    out.logprob += lp;
    if (out.gate_trace) {
      out.gate_trace->entries.push_back(
          GateTraceEntry{pick, so.gate_m, gate_mean(so.gate_m)});
    }
    if (pick == Vocabulary::kEos) {
      out.terminated_by = "eos";
      break;
    }
    prev = pick;
  }
  out.text = detokenize(out.token_ids, vocab);
  return out;
}

GeneratedText greedy_decode(const std::vector<int>& contexts,
                            const ModelView& view, const Vocabulary& vocab,
                            std::size_t max_len, bool mask_unk) {
  if (max_len < 1) throw ShapeError("max_len must be >= 1");
  Decoder decoder(contexts, view);
  std::vector<LstmState> states = decoder.initial_states();

  GeneratedText out;
  out.contexts = contexts;
  if (view.config->gated()) out.gate_trace.emplace();

  int prev = Vocabulary::kBos;
  out.terminated_by = "max_len";
  for (std::size_t step = 0; step < max_len; ++step) {
    Decoder::StepOut so = decoder.advance(states, prev);
    Tensor model_lsm = log_softmax(so.logits);
    int pick = -1;
    double best = 0.0;
    for (std::size_t id = 0; id < model_lsm.size(); ++id) {
      if (!emittable(static_cast<int>(id), mask_unk)) continue;
      if (pick < 0 || model_lsm[id] > best) {  // strict > keeps lowest id on ties
        pick = static_cast<int>(id);
        best = model_lsm[id];
      }
    }
    out.token_ids.push_back(pick);
    out.step_probs.push_back(std::exp(best));
    out.logprob += best;
    if (out.gate_trace) {
      out.gate_trace->entries.push_back(
          GateTraceEntry{pick, so.gate_m, gate_mean(so.gate_m)});
    }
    if (pick == Vocabulary::kEos) {
      out.terminated_by = "eos";
      break;
    }
    prev = pick;
  }
  out.text = detokenize(out.token_ids, vocab);
  return out;
}

std::vector<GeneratedText> beam_search(const std::vector<int>& contexts,
                                       const ModelView& view,
                                       const Vocabulary& vocab,
                                       std::size_t beam_width,
                                       std::size_t max_len, bool mask_unk) {
  if (beam_width < 1) throw ShapeError("beam_width must be >= 1");
  if (max_len < 1) throw ShapeError("max_len must be >= 1");
  Decoder decoder(contexts, view);

  struct Beam {
    std::vector<int> tokens;
    std::vector<double> step_probs;
    double logprob = 0.0;
    std::vector<LstmState> states;
    int last = Vocabulary::kBos;
    std::optional<GateTrace> trace;
  };

  std::vector<Beam> live(1);
  live[0].states = decoder.initial_states();
  if (view.config->gated()) live[0].trace.emplace();

  struct Candidate {
    double logprob;
    std::size_t parent;
    int token;
  };

  std::vector<Beam> completed;
  std::vector<std::string> completed_reason;

  for (std::size_t step = 0; step < max_len && !live.empty(); ++step) {
    std::vector<Decoder::StepOut> outs(live.size());
    std::vector<Tensor> lsms(live.size());
    std::vector<Candidate> candidates;
    for (std::size_t b = 0; b < live.size(); ++b) {
      outs[b] = decoder.advance(live[b].states, live[b].last);
      lsms[b] = log_softmax(outs[b].logits);
      for (std::size_t id = 0; id < lsms[b].size(); ++id) {
        if (!emittable(static_cast<int>(id), mask_unk)) continue;
        candidates.push_back(
            Candidate{live[b].logprob + lsms[b][id], b, static_cast<int>(id)});
      }
    }
    std::sort(candidates.begin(), candidates.end(),
              [](const Candidate& a, const Candidate& b) {
                if (a.logprob != b.logprob) return a.logprob > b.logprob;
                if (a.parent != b.parent) return a.parent < b.parent;
                return a.token < b.token;
              });
    if (candidates.size() > beam_width) candidates.resize(beam_width);

    std::vector<Beam> next;
    for (const Candidate& c : candidates) {
      Beam child = live[c.parent];  // states already advanced this step
      child.tokens.push_back(c.token);
      const double lp = lsms[c.parent][static_cast<std::size_t>(c.token)];
      child.step_probs.push_back(std::exp(lp));
      child.logprob = c.logprob;
      child.last = c.token;
      if (child.trace) {
        child.trace->entries.push_back(GateTraceEntry{
            c.token, outs[c.parent].gate_m, gate_mean(outs[c.parent].gate_m)});
      }
      if (c.token == Vocabulary::kEos) {
        completed.push_back(std::move(child));
        completed_reason.push_back("eos");
      } else if (child.tokens.size() >= max_len) {
        completed.push_back(std::move(child));
        completed_reason.push_back("max_len");
      } else {
        next.push_back(std::move(child));
      }
    }
    live = std::move(next);
  }

  std::vector<std::size_t> order(completed.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) {
                     return completed[a].logprob > completed[b].logprob;
                   });
  if (order.size() > beam_width) order.resize(beam_width);

  std::vector<GeneratedText> results;
  for (std::size_t idx : order) {
    Beam& beam = completed[idx];
    GeneratedText g;
    g.token_ids = std::move(beam.tokens);
    g.contexts = contexts;
    g.step_probs = std::move(beam.step_probs);
    g.logprob = beam.logprob;
    g.terminated_by = completed_reason[idx];
    g.gate_trace = std::move(beam.trace);
    g.text = detokenize(g.token_ids, vocab);
    results.push_back(std::move(g));
  }
  return results;
}

std::string sample_record_line(const GeneratedText& sample,
                               const ContextSchema& schema) {
  nlohmann::ordered_json j;
  j["rating"] = nullptr;
  j["product"] = nullptr;
  for (std::size_t i = 0; i < schema.type_count(); ++i) {
    const ContextType& type = schema.types[i];
    const std::string& label =
        type.values[static_cast<std::size_t>(sample.contexts[i])];
    if (type.name == kRatingContext) {
      j["rating"] = std::stoi(label);
    } else {
      j[type.name] = label;
    }
  }
  j["text"] = sample.text;
  j["logprob"] = sample.logprob;
  j["terminated_by"] = sample.terminated_by;
  return j.dump() + "\n";
}

}  // namespace ctxgen
