#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ctxgen/model.hpp"
#include "ctxgen/rng.hpp"
#include "ctxgen/vocab.hpp"

namespace ctxgen {

struct SamplingConfig {
  double temperature = 0.7;
  std::size_t max_len = 100;
  // PAD and BOS are always masked out; UNK only behind this flag.
  bool mask_unk = false;

  void validate() const;
};

struct GeneratedText {
  std::vector<int> token_ids;        // emitted ids; ends with EOS unless truncated
  std::string text;                  // detokenized content words
  std::vector<int> contexts;
  // True model probability (temperature 1, unmasked) of each emitted token;
  // their logs sum to `logprob`.
  std::vector<double> step_probs;
  double logprob = 0.0;
  std::string terminated_by;         // "eos" | "max_len"
  std::optional<GateTrace> gate_trace;  // gC2S only
};

// Ancestral sampling: h_0 from the context encoder, BOS in, draw from the
// temperature-softened masked distribution, feed the draw back, stop at EOS
// or after max_len tokens.
GeneratedText sample_sequence(const std::vector<int>& contexts,
                              const ModelView& view, const Vocabulary& vocab,
                              const SamplingConfig& config, Rng& rng);

// Argmax at every step over the same masked distribution; ties broken by
// lowest token id.
GeneratedText greedy_decode(const std::vector<int>& contexts,
                            const ModelView& view, const Vocabulary& vocab,
                            std::size_t max_len, bool mask_unk = false);

// Plain beam over summed log-probs, no length normalization. A beam retires
// when it emits EOS or reaches max_len; result sorted by descending total
// log-prob, ties by earlier-created beam. beam_width=1 equals greedy_decode.
std::vector<GeneratedText> beam_search(const std::vector<int>& contexts,
                                       const ModelView& view,
                                       const Vocabulary& vocab,
                                       std::size_t beam_width,
                                       std::size_t max_len,
                                       bool mask_unk = false);

// One sample record as a JSON line: rating/product labels pulled from the
// schema, text, logprob, terminated_by.
std::string sample_record_line(const GeneratedText& sample,
                               const ContextSchema& schema);

}  // namespace ctxgen
