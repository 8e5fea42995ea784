// Command-line front end: build-vocab, train, sample, eval, inspect-gates,
// detect. Exit codes: 0 success, 1 usage, 2 data error, 3 numeric failure.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "ctxgen/common.hpp"
#include "ctxgen/corpus.hpp"
#include "ctxgen/evaluation.hpp"
#include "ctxgen/generation.hpp"
#include "ctxgen/model.hpp"
#include "ctxgen/pipeline.hpp"
#include "ctxgen/rng.hpp"
#include "ctxgen/training.hpp"
#include "ctxgen/vocab.hpp"

namespace {

using namespace ctxgen;
using ordered_json = nlohmann::ordered_json;

std::uint64_t file_fnv1a64(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read file '" + path + "'");
  std::string bytes((std::istreambuf_iterator<char>(in)),
                    std::istreambuf_iterator<char>());
  return fnv1a64(bytes);
}

std::string hex64(std::uint64_t v) {
  char buf[24];
  std::snprintf(buf, sizeof(buf), "0x%016llx",
                static_cast<unsigned long long>(v));
  return buf;
}

// CLI context mode -> schema type names. "sentiment" is the rating field.
std::vector<std::string> context_names_for(const std::string& mode) {
  if (mode == "none") return {};
  if (mode == "sentiment") return {kRatingContext};
  if (mode == "product") return {kProductContext};
  if (mode == "both") return {kRatingContext, kProductContext};
  throw ShapeError("unknown contexts mode '" + mode + "'");
}

OovPolicy oov_policy_for(const std::string& mode) {
  if (mode == "unk") return OovPolicy::kReplaceWithUnk;
  if (mode == "drop") return OovPolicy::kDropExample;
  throw ShapeError("unknown oov policy '" + mode + "'");
}

void write_output(const std::string& path, const std::string& content) {
  if (path.empty()) {
    std::cout << content;
    return;
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write output file '" + path + "'");
  out << content;
  if (!out) throw DataError("write failed for '" + path + "'");
}

void require_same_schema(const ContextSchema& from_corpus,
                         const ContextSchema& from_checkpoint) {
  bool same = from_corpus.type_count() == from_checkpoint.type_count();
  for (std::size_t i = 0; same && i < from_corpus.type_count(); ++i) {
    same = from_corpus.types[i].name == from_checkpoint.types[i].name &&
           from_corpus.types[i].values == from_checkpoint.types[i].values;
  }
  if (!same) {
    throw DataError(
        "corpus context values differ from the checkpoint's schema; evaluate "
        "on the corpus the model was trained on");
  }
}

const std::vector<Example>& select_split(const DatasetSplit& split,
                                         const std::string& name,
                                         std::vector<Example>& all_storage) {
  if (name == "train") return split.train;
  if (name == "valid") return split.valid;
  if (name == "test") return split.test;
  all_storage = split.train;
  all_storage.insert(all_storage.end(), split.valid.begin(),
                     split.valid.end());
  all_storage.insert(all_storage.end(), split.test.begin(), split.test.end());
  return all_storage;
}

// --- build-vocab ------------------------------------------------------------

struct BuildVocabArgs {
  std::string corpus;
  std::string out;
  std::size_t size = 20000;
  std::size_t max_words = 100;
};

int run_build_vocab(const BuildVocabArgs& args) {
  LoadStats stats;
  std::vector<RawRecord> records =
      read_corpus(args.corpus, &stats, args.max_words);
  std::vector<std::string> texts;
  texts.reserve(records.size());
  for (const RawRecord& r : records) texts.push_back(r.text);
  Vocabulary vocab = build_vocab(texts, args.size);
  vocab.save(args.out);
  std::cout << "read " << stats.loaded << " records ("
            << stats.skipped_malformed << " malformed, "
            << stats.skipped_too_long << " over " << args.max_words
            << " words skipped)\n"
            << "vocabulary of " << vocab.size() << " tokens (4 specials) -> "
            << args.out << "\n";
  return 0;
}

// --- train ------------------------------------------------------------------

struct TrainArgs {
  std::string corpus, vocab, out, log, manifest;
  std::string variant = "gc2s";
  std::string contexts = "both";
  std::string precision = "f64";
  std::string oov = "unk";
  std::size_t epochs = 10;
  std::size_t batch_size = 128;
  std::size_t hidden = 512;
  std::size_t ctx_dim = 64;
  std::size_t embed_dim = 0;
  std::size_t layers = 1;
  std::size_t max_words = 100;
  std::size_t bucket_width = 10;
  double lr = 1.0;
  double clip = 5.0;
  double init_range = 0.1;
  double dropout = 0.5;
  double min_lr = 1e-6;
  std::uint64_t seed = 1;
  bool shared_recurrent = false;
  bool lr_compare_best = false;
  bool resume = false;
  bool no_context_init = false;
  bool context_cell_init = false;
};

ordered_json make_manifest(const std::string& command,
                           const ordered_json& config,
                           const std::vector<std::pair<std::string, std::string>>& inputs,
                           const ordered_json& artifacts) {
  ordered_json m;
  m["tool"] = "ctxgen";
  m["version"] = kVersion;
  m["command"] = command;
  m["config"] = config;
  ordered_json in = ordered_json::object();
  for (const auto& [name, path] : inputs) {
    in[name] = {{"path", path}, {"fnv1a64", hex64(file_fnv1a64(path))}};
  }
  m["inputs"] = std::move(in);
  m["artifacts"] = artifacts;
  return m;
}

int run_train(TrainArgs args) {
  Variant variant = variant_from_name(args.variant);
  if (variant == Variant::kRnnBaseline && args.contexts != "none") {
    std::cerr << "warning: --variant rnn ignores --contexts "
              << args.contexts << "\n";
    args.contexts = "none";
  }
  if (variant != Variant::kRnnBaseline && args.contexts == "none") {
    throw ShapeError(args.variant + " needs at least one context; pass "
                     "--contexts sentiment|product|both or --variant rnn");
  }
  if (args.log.empty()) args.log = args.out + ".log";
  if (args.manifest.empty()) args.manifest = args.out + ".manifest.json";

  Vocabulary vocab = Vocabulary::load(args.vocab);

  LoadedCheckpoint loaded;
  if (args.resume) {
    loaded = load_checkpoint(args.out, vocab.fingerprint());
    if (loaded.meta.epoch >= args.epochs) {
      std::cout << "checkpoint already has " << loaded.meta.epoch
                << " epochs; nothing to do\n";
      return 0;
    }
  }
  const std::uint64_t split_seed =
      args.resume ? loaded.meta.train.seed : args.seed;
  const std::string contexts_mode =
      args.resume
          ? (loaded.meta.model.schema.empty()
                 ? "none"
                 : (loaded.meta.model.schema.type_count() == 2
                        ? "both"
                        : (loaded.meta.model.schema.types[0].name ==
                                   kRatingContext
                               ? "sentiment"
                               : "product")))
          : args.contexts;

  PreparedData prepared =
      prepare_data(args.corpus, vocab, context_names_for(contexts_mode),
                   split_seed, args.max_words, oov_policy_for(args.oov));
  std::cout << "loaded " << prepared.stats.loaded << " records ("
            << prepared.stats.skipped_malformed << " malformed, "
            << prepared.stats.skipped_too_long << " too long skipped); split "
            << prepared.split.train.size() << "/"
            << prepared.split.valid.size() << "/"
            << prepared.split.test.size() << " train/valid/test\n";

  ModelConfig mcfg;
  TrainConfig tcfg;
  if (args.resume) {
    require_same_schema(prepared.schema, loaded.meta.model.schema);
    mcfg = loaded.meta.model;
    tcfg = loaded.meta.train;
    tcfg.max_epochs = args.epochs;
  } else {
    mcfg.variant = variant;
    mcfg.vocab_size = vocab.size();
    mcfg.hidden_size = args.hidden;
    mcfg.context_embed_dim = args.ctx_dim;
    mcfg.input_embed_dim = args.embed_dim;
    mcfg.num_layers = args.layers;
    mcfg.schema = prepared.schema;
    mcfg.dropout = args.dropout;
    mcfg.precision =
        args.precision == "f32" ? Precision::kF32 : Precision::kF64;
    mcfg.shared_recurrent = args.shared_recurrent;
    mcfg.context_as_hidden_init = !args.no_context_init;
    mcfg.context_as_cell_init = args.context_cell_init;
    mcfg.validate();

    tcfg.batch_size = args.batch_size;
    tcfg.initial_lr = args.lr;
    tcfg.clip_threshold = args.clip;
    tcfg.init_range = args.init_range;
    tcfg.max_epochs = args.epochs;
    tcfg.seed = args.seed;
    tcfg.dropout = args.dropout;
    tcfg.hidden_size = args.hidden;
    tcfg.bucket_width = args.bucket_width;
    tcfg.min_lr = args.min_lr;
    tcfg.lr_compare_best = args.lr_compare_best;
    tcfg.validate();
  }

  // Manifest first: everything needed to reproduce the run, before the
  // long-running part starts.
  ordered_json config;
  config["contexts"] = contexts_mode;
  config["max_words"] = args.max_words;
  config["oov"] = args.oov;
  config["resume"] = args.resume;
  config["model"] = model_config_to_json(mcfg);
  config["train"] = train_config_to_json(tcfg);
  ordered_json artifacts;
  artifacts["checkpoint"] = args.out;
  artifacts["epoch_log"] = args.log;
  write_output(args.manifest,
               make_manifest("train", config,
                             {{"corpus", args.corpus}, {"vocab", args.vocab}},
                             artifacts)
                       .dump(2) +
                   "\n");

  TrainLoopOptions options;
  options.checkpoint_path = args.out;
  options.epoch_log_path = args.log;
  options.on_epoch = [](const EpochReport& r) {
    char line[192];
    std::snprintf(line, sizeof(line),
                  "epoch %3zu  train_loss %9.4f  valid_ppl %12.4f  lr %-10g "
                  "%s %.1fs\n",
                  r.epoch, r.train_loss, r.valid_ppl, r.lr,
                  r.lr_halved ? "(halving)" : "", r.wall_seconds);
    std::cout << line << std::flush;
  };

  if (!args.resume) {
    std::remove(args.log.c_str());  // fresh run, fresh log
  }

  TrainRun run =
      args.resume
          ? resume_loop(std::move(loaded), prepared.split, args.epochs, options)
          : train_loop(prepared.split, mcfg, tcfg, vocab.fingerprint(),
                       options);

  std::cout << "finished at epoch " << run.meta.epoch << "; checkpoint "
            << args.out << "\n";
  return 0;
}

// --- sample -----------------------------------------------------------------

struct SampleArgs {
  std::string checkpoint, vocab, out;
  std::string mode = "sample";
  int rating = 0;          // 0 = not given
  std::string product;
  std::size_t n = 1;
  double temperature = 0.7;
  std::size_t max_len = 100;
  std::uint64_t seed = 1;
  std::size_t beam_width = 5;
  std::size_t workers = 1;
  bool mask_unk = false;
};

std::vector<int> resolve_contexts(const ContextSchema& schema, int rating,
                                  const std::string& product) {
  std::vector<int> contexts;
  for (const ContextType& type : schema.types) {
    if (type.name == kRatingContext) {
      if (rating == 0) {
        throw ShapeError("this model is rating-conditioned; pass --rating");
      }
      const int idx = type.value_index(std::to_string(rating));
      if (idx < 0) {
        throw ShapeError("rating " + std::to_string(rating) +
                         " outside the schema values 1..5");
      }
      contexts.push_back(idx);
    } else if (type.name == kProductContext) {
      if (product.empty()) {
        throw ShapeError("this model is product-conditioned; pass --product");
      }
      const int idx = type.value_index(product);
      if (idx < 0) {
        throw ShapeError("unknown product id '" + product + "'");
      }
      contexts.push_back(idx);
    } else {
      throw ShapeError("no flag maps to context type '" + type.name + "'");
    }
  }
  if (schema.empty() && (rating != 0 || !product.empty())) {
    std::cerr << "warning: baseline model ignores --rating/--product\n";
  }
  return contexts;
}

int run_sample(const SampleArgs& args) {
  Vocabulary vocab = Vocabulary::load(args.vocab);
  LoadedCheckpoint loaded =
      load_checkpoint(args.checkpoint, vocab.fingerprint());
  const ModelConfig& cfg = loaded.meta.model;
  ModelView view = ModelView::bind(loaded.params, cfg);
  const std::vector<int> contexts =
      resolve_contexts(cfg.schema, args.rating, args.product);

  std::vector<GeneratedText> results;
  if (args.mode == "greedy") {
    if (args.n != 1) std::cerr << "warning: --mode greedy ignores --n\n";
    results.push_back(
        greedy_decode(contexts, view, vocab, args.max_len, args.mask_unk));
  } else if (args.mode == "beam") {
    if (args.n != 1) std::cerr << "warning: --mode beam ignores --n\n";
    results = beam_search(contexts, view, vocab, args.beam_width, args.max_len,
                          args.mask_unk);
  } else {
    SamplingConfig scfg;
    scfg.temperature = args.temperature;
    scfg.max_len = args.max_len;
    scfg.mask_unk = args.mask_unk;
    scfg.validate();

    results.resize(args.n);
    // Every sample draws from its own index-forked stream, so the output is
    // one fixed function of (seed, index) no matter how many workers run.
    auto sample_range = [&](std::size_t lo, std::size_t hi) {
      for (std::size_t i = lo; i < hi; ++i) {
        Rng rng = Rng::fork(args.seed, "sampling", i);
        results[i] = sample_sequence(contexts, view, vocab, scfg, rng);
      }
    };
    const std::size_t workers =
        std::max<std::size_t>(1, std::min(args.workers, args.n));
    if (workers == 1) {
      sample_range(0, args.n);
    } else {
      std::vector<std::thread> threads;
      const std::size_t base = args.n / workers;
      const std::size_t rem = args.n % workers;
      std::size_t start = 0;
      for (std::size_t w = 0; w < workers; ++w) {
        const std::size_t len = base + (w < rem ? 1 : 0);
        threads.emplace_back(sample_range, start, start + len);
        start += len;
      }
      for (auto& t : threads) t.join();
    }
  }

  std::string out;
  for (const GeneratedText& g : results) {
    out += sample_record_line(g, cfg.schema);
  }
  write_output(args.out, out);
  return 0;
}

// --- eval / inspect-gates ---------------------------------------------------

struct EvalArgs {
  std::string checkpoint, vocab, corpus, out;
  std::string split = "test";
  std::string oov = "unk";
  std::size_t bucket_width = 20;
  std::size_t workers = 1;
  std::size_t max_words = 100;
  std::size_t min_count = 1;  // inspect-gates only
  bool table = false;
};

PreparedData prepare_for_checkpoint(const EvalArgs& args,
                                    const Vocabulary& vocab,
                                    const LoadedCheckpoint& loaded) {
  std::vector<std::string> names;
  for (const ContextType& t : loaded.meta.model.schema.types) {
    names.push_back(t.name);
  }
  PreparedData prepared =
      prepare_data(args.corpus, vocab, names, loaded.meta.train.seed,
                   args.max_words, oov_policy_for(args.oov));
  require_same_schema(prepared.schema, loaded.meta.model.schema);
  return prepared;
}

int run_eval(const EvalArgs& args) {
  Vocabulary vocab = Vocabulary::load(args.vocab);
  LoadedCheckpoint loaded =
      load_checkpoint(args.checkpoint, vocab.fingerprint());
  ModelView view = ModelView::bind(loaded.params, loaded.meta.model);
  PreparedData prepared = prepare_for_checkpoint(args, vocab, loaded);

  std::vector<Example> all_storage;
  const std::vector<Example>& data =
      select_split(prepared.split, args.split, all_storage);
  PerplexityReport report =
      perplexity(data, view, args.bucket_width, args.workers);

  // Keep stdout machine readable: --table replaces the JSON there; with
  // --out the JSON goes to the file and the table may use stdout.
  if (args.out.empty() && args.table) {
    std::cout << report.to_table();
  } else {
    write_output(args.out, report.to_json().dump(2) + "\n");
    if (args.table) std::cout << report.to_table();
  }
  std::cerr << "perplexity " << report.overall_perplexity << " on "
            << data.size() << " " << args.split << " examples\n";
  return 0;
}

int run_inspect_gates(const EvalArgs& args) {
  Vocabulary vocab = Vocabulary::load(args.vocab);
  LoadedCheckpoint loaded =
      load_checkpoint(args.checkpoint, vocab.fingerprint());
  if (loaded.meta.model.variant != Variant::kGc2s) {
    throw ShapeError("inspect-gates requires a gc2s checkpoint (got " +
                     variant_name(loaded.meta.model.variant) + ")");
  }
  ModelView view = ModelView::bind(loaded.params, loaded.meta.model);
  PreparedData prepared = prepare_for_checkpoint(args, vocab, loaded);

  std::vector<Example> all_storage;
  const std::vector<Example>& data =
      select_split(prepared.split, args.split, all_storage);
  GateAttributionReport report =
      gate_attribution(data, view, vocab, args.min_count);

  if (args.out.empty() && args.table) {
    std::cout << report.to_table();
  } else {
    write_output(args.out, report.to_json().dump(2) + "\n");
    if (args.table) std::cout << report.to_table();
  }
  return 0;
}

// --- detect -----------------------------------------------------------------

struct DetectArgs {
  std::string real, fake, out;
  double l2 = 1e-4;
  std::size_t max_iter = 10000;
  bool counts = false;
  bool table = false;
};

int run_detect(const DetectArgs& args) {
  const std::vector<std::string> real_texts = read_text_lines(args.real);
  const std::vector<std::string> fake_texts = read_text_lines(args.fake);
  if (real_texts.empty()) throw DataError("no texts in '" + args.real + "'");
  if (fake_texts.empty()) throw DataError("no texts in '" + args.fake + "'");

  std::vector<std::string> texts = real_texts;
  texts.insert(texts.end(), fake_texts.begin(), fake_texts.end());
  std::vector<int> labels(real_texts.size(), 0);
  labels.insert(labels.end(), fake_texts.size(), 1);

  NgramClassifierConfig config;
  config.l2 = args.l2;
  config.count_features = args.counts;
  config.max_iterations = args.max_iter;
  NgramClassifier clf =
      train_ngram_classifier(texts, labels, {"real", "fake"}, config);
  ConfusionReport report = classify_corpus(clf, texts, labels);

  if (args.out.empty() && args.table) {
    std::cout << report.to_table();
  } else {
    write_output(args.out, report.to_json().dump(2) + "\n");
    if (args.table) std::cout << report.to_table();
  }
  std::cerr << "training accuracy " << report.accuracy << " over "
            << texts.size() << " texts (" << clf.feature_names.size()
            << " features, " << clf.iterations_run << " iterations)\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"context-conditioned LSTM review generation"};
  app.set_version_flag("--version", std::string("ctxgen ") + kVersion);
  app.require_subcommand(1);

  BuildVocabArgs bv;
  CLI::App* build_vocab_cmd =
      app.add_subcommand("build-vocab", "build a frequency vocabulary");
  build_vocab_cmd->add_option("--corpus", bv.corpus, "corpus JSONL")
      ->required();
  build_vocab_cmd->add_option("--out", bv.out, "vocabulary output path")
      ->required();
  build_vocab_cmd->add_option("--size", bv.size,
                              "max content tokens (specials excluded)")
      ->capture_default_str();
  build_vocab_cmd->add_option("--max-words", bv.max_words,
                              "skip records longer than this many words")
      ->capture_default_str();

  TrainArgs ta;
  CLI::App* train_cmd = app.add_subcommand("train", "train a model");
  train_cmd->add_option("--corpus", ta.corpus, "corpus JSONL")->required();
  train_cmd->add_option("--vocab", ta.vocab, "vocabulary file")->required();
  train_cmd->add_option("--out", ta.out, "checkpoint path")->required();
  train_cmd->add_option("--log", ta.log, "epoch log path (default <out>.log)");
  train_cmd->add_option("--manifest", ta.manifest,
                        "run manifest path (default <out>.manifest.json)");
  train_cmd->add_option("--variant", ta.variant, "model variant")
      ->check(CLI::IsMember({"rnn", "c2s", "gc2s"}))
      ->capture_default_str();
  train_cmd->add_option("--contexts", ta.contexts, "conditioning contexts")
      ->check(CLI::IsMember({"none", "sentiment", "product", "both"}))
      ->capture_default_str();
  train_cmd->add_option("--epochs", ta.epochs, "epochs to train")
      ->capture_default_str();
  train_cmd->add_option("--batch-size", ta.batch_size, "examples per batch")
      ->capture_default_str();
  train_cmd->add_option("--lr", ta.lr, "initial learning rate")
      ->capture_default_str();
  train_cmd->add_option("--clip", ta.clip, "global gradient norm threshold")
      ->capture_default_str();
  train_cmd->add_option("--init-range", ta.init_range,
                        "uniform init half-width")
      ->capture_default_str();
  train_cmd->add_option("--dropout", ta.dropout, "dropout rate")
      ->capture_default_str();
  train_cmd->add_option("--hidden", ta.hidden, "hidden units")
      ->capture_default_str();
  train_cmd->add_option("--ctx-dim", ta.ctx_dim, "context embedding size")
      ->capture_default_str();
  train_cmd->add_option("--embed-dim", ta.embed_dim,
                        "input embedding size (0 = hidden size)")
      ->capture_default_str();
  train_cmd->add_option("--layers", ta.layers, "stacked LSTM layers")
      ->capture_default_str();
  train_cmd->add_option("--seed", ta.seed, "master seed")
      ->capture_default_str();
  train_cmd->add_option("--max-words", ta.max_words,
                        "skip records longer than this many words")
      ->capture_default_str();
  train_cmd->add_option("--bucket-width", ta.bucket_width,
                        "length-bucket width for batching")
      ->capture_default_str();
  train_cmd->add_option("--min-lr", ta.min_lr, "stop once lr sinks below")
      ->capture_default_str();
  train_cmd->add_option("--precision", ta.precision, "parameter precision")
      ->check(CLI::IsMember({"f64", "f32"}))
      ->capture_default_str();
  train_cmd->add_option("--oov", ta.oov, "out-of-vocabulary policy")
      ->check(CLI::IsMember({"unk", "drop"}))
      ->capture_default_str();
  train_cmd->add_flag("--shared-recurrent", ta.shared_recurrent,
                      "one recurrent matrix shared by all gates");
  train_cmd->add_flag("--lr-compare-best", ta.lr_compare_best,
                      "halve against best perplexity so far");
  train_cmd->add_flag("--resume", ta.resume,
                      "continue training the checkpoint at --out");
  train_cmd->add_flag("--no-context-init", ta.no_context_init,
                      "do not use the context embedding as h_0");
  train_cmd->add_flag("--context-cell-init", ta.context_cell_init,
                      "also use the context embedding as c_0");

  SampleArgs sa;
  CLI::App* sample_cmd = app.add_subcommand("sample", "generate text");
  sample_cmd->add_option("--checkpoint", sa.checkpoint, "model checkpoint")
      ->required();
  sample_cmd->add_option("--vocab", sa.vocab, "vocabulary file")->required();
  sample_cmd->add_option("--out", sa.out, "samples JSONL (default stdout)");
  sample_cmd->add_option("--rating", sa.rating, "sentiment rating 1..5");
  sample_cmd->add_option("--product", sa.product, "product id");
  sample_cmd->add_option("--n", sa.n, "number of samples")
      ->capture_default_str();
  sample_cmd->add_option("--temperature", sa.temperature, "softmax divisor")
      ->capture_default_str();
  sample_cmd->add_option("--max-len", sa.max_len, "max generated tokens")
      ->capture_default_str();
  sample_cmd->add_option("--seed", sa.seed, "sampling seed")
      ->capture_default_str();
  sample_cmd->add_option("--mode", sa.mode, "decoding mode")
      ->check(CLI::IsMember({"sample", "greedy", "beam"}))
      ->capture_default_str();
  sample_cmd->add_option("--beam-width", sa.beam_width, "beams for --mode beam")
      ->capture_default_str();
  sample_cmd->add_option("--workers", sa.workers, "parallel samplers")
      ->capture_default_str();
  sample_cmd->add_flag("--mask-unk", sa.mask_unk, "never emit <unk>");

  EvalArgs ea;
  CLI::App* eval_cmd = app.add_subcommand("eval", "perplexity report");
  auto add_eval_common = [](CLI::App* cmd, EvalArgs& args) {
    cmd->add_option("--checkpoint", args.checkpoint, "model checkpoint")
        ->required();
    cmd->add_option("--vocab", args.vocab, "vocabulary file")->required();
    cmd->add_option("--corpus", args.corpus, "corpus JSONL")->required();
    cmd->add_option("--out", args.out, "report JSON path (default stdout)");
    cmd->add_option("--split", args.split, "which split to score")
        ->check(CLI::IsMember({"train", "valid", "test", "all"}))
        ->capture_default_str();
    cmd->add_option("--max-words", args.max_words,
                    "skip records longer than this many words")
        ->capture_default_str();
    cmd->add_option("--oov", args.oov, "out-of-vocabulary policy")
        ->check(CLI::IsMember({"unk", "drop"}))
        ->capture_default_str();
    cmd->add_flag("--table", args.table, "also print an aligned table");
  };
  add_eval_common(eval_cmd, ea);
  eval_cmd->add_option("--bucket-width", ea.bucket_width,
                       "review-length bucket width")
      ->capture_default_str();
  eval_cmd->add_option("--workers", ea.workers, "parallel scorers")
      ->capture_default_str();

  EvalArgs ga;
  CLI::App* gates_cmd =
      app.add_subcommand("inspect-gates", "gate attribution report");
  add_eval_common(gates_cmd, ga);
  gates_cmd->add_option("--min-count", ga.min_count,
                        "minimum occurrences per reported token")
      ->capture_default_str();

  DetectArgs da;
  CLI::App* detect_cmd =
      app.add_subcommand("detect", "train the real-vs-fake detector");
  detect_cmd->add_option("--real", da.real, "real texts (JSONL or plain)")
      ->required();
  detect_cmd->add_option("--fake", da.fake, "generated texts (JSONL or plain)")
      ->required();
  detect_cmd->add_option("--out", da.out, "report JSON path (default stdout)");
  detect_cmd->add_option("--l2", da.l2, "l2 regularization strength")
      ->capture_default_str();
  detect_cmd->add_option("--max-iter", da.max_iter, "gradient descent cap")
      ->capture_default_str();
  detect_cmd->add_flag("--counts", da.counts,
                       "count features instead of binary presence");
  detect_cmd->add_flag("--table", da.table, "also print an aligned table");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (build_vocab_cmd->parsed()) return run_build_vocab(bv);
    if (train_cmd->parsed()) return run_train(ta);
    if (sample_cmd->parsed()) return run_sample(sa);
    if (eval_cmd->parsed()) return run_eval(ea);
    if (gates_cmd->parsed()) return run_inspect_gates(ga);
    if (detect_cmd->parsed()) return run_detect(da);
  } catch (const ShapeError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 3;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
