// Python bindings: a thin veneer over the C++ core. Reports cross the
// boundary as plain dicts (via json round-trip) so the Python side stays
// free of wrapper types.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstdio>
#include <string>
#include <vector>

#include "ctxgen/corpus.hpp"
#include "ctxgen/evaluation.hpp"
#include "ctxgen/generation.hpp"
#include "ctxgen/model.hpp"
#include "ctxgen/pipeline.hpp"
#include "ctxgen/rng.hpp"
#include "ctxgen/training.hpp"
#include "ctxgen/vocab.hpp"

namespace py = pybind11;
using namespace ctxgen;

namespace {

py::object json_to_py(const nlohmann::ordered_json& j) {
  return py::module_::import("json").attr("loads")(j.dump());
}

OovPolicy oov_policy_for(const std::string& mode) {
  if (mode == "unk") return OovPolicy::kReplaceWithUnk;
  if (mode == "drop") return OovPolicy::kDropExample;
  throw ShapeError("unknown oov policy '" + mode + "'");
}

// A trained (or loaded) model plus everything needed to use it: the
// checkpoint metadata, the parameters, and the vocabulary.
struct Model {
  Checkpoint meta;
  ParamStore params;
  Vocabulary vocab;
  std::vector<EpochReport> reports;

  ModelView view() { return ModelView::bind(params, meta.model); }

  static Model train(const std::string& corpus, const std::string& vocab_path,
                     const std::string& variant,
                     const std::vector<std::string>& contexts,
                     std::size_t epochs, std::size_t hidden,
                     std::size_t ctx_dim, std::size_t embed_dim,
                     std::size_t layers, std::size_t batch_size, double lr,
                     double clip, double init_range, double dropout,
                     std::uint64_t seed, std::size_t max_words,
                     std::size_t bucket_width, double min_lr,
                     const std::string& precision, bool shared_recurrent,
                     bool lr_compare_best, const std::string& oov,
                     const std::string& checkpoint, const std::string& log) {
    Model m;
    m.vocab = Vocabulary::load(vocab_path);
    PreparedData prepared = prepare_data(corpus, m.vocab, contexts, seed,
                                         max_words, oov_policy_for(oov));

    ModelConfig mcfg;
    mcfg.variant = variant_from_name(variant);
    mcfg.vocab_size = m.vocab.size();
    mcfg.hidden_size = hidden;
    mcfg.context_embed_dim = ctx_dim;
    mcfg.input_embed_dim = embed_dim;
    mcfg.num_layers = layers;
    mcfg.schema = prepared.schema;
    mcfg.dropout = dropout;
    mcfg.precision = precision == "f32" ? Precision::kF32 : Precision::kF64;
    mcfg.shared_recurrent = shared_recurrent;
    mcfg.validate();

    TrainConfig tcfg;
    tcfg.batch_size = batch_size;
    tcfg.initial_lr = lr;
    tcfg.clip_threshold = clip;
    tcfg.init_range = init_range;
    tcfg.max_epochs = epochs;
    tcfg.seed = seed;
    tcfg.dropout = dropout;
    tcfg.hidden_size = hidden;
    tcfg.bucket_width = bucket_width;
    tcfg.min_lr = min_lr;
    tcfg.lr_compare_best = lr_compare_best;
    tcfg.validate();

    TrainLoopOptions options;
    options.checkpoint_path = checkpoint;
    options.epoch_log_path = log;
    TrainRun run = train_loop(prepared.split, mcfg, tcfg, m.vocab.fingerprint(),
                              options);
    m.meta = std::move(run.meta);
    m.params = std::move(run.params);
    m.reports = std::move(run.reports);
    return m;
  }

  static Model load(const std::string& checkpoint,
                    const std::string& vocab_path) {
    Model m;
    m.vocab = Vocabulary::load(vocab_path);
    LoadedCheckpoint loaded = load_checkpoint(checkpoint, m.vocab.fingerprint());
    m.meta = std::move(loaded.meta);
    m.params = std::move(loaded.params);
    return m;
  }

  void save(const std::string& path) const {
    save_checkpoint(path, meta, params);
  }

  std::vector<int> resolve_contexts(int rating,
                                    const std::string& product) const {
    std::vector<int> out;
    for (const ContextType& type : meta.model.schema.types) {
      const std::string label =
          type.name == kRatingContext ? std::to_string(rating) : product;
      if ((type.name == kRatingContext && rating == 0) ||
          (type.name == kProductContext && product.empty())) {
        throw ShapeError("model needs a '" + type.name + "' context value");
      }
      const int idx = type.value_index(label);
      if (idx < 0) {
        throw ShapeError("'" + label + "' is not an admissible value for "
                         "context '" + type.name + "'");
      }
      out.push_back(idx);
    }
    return out;
  }

  py::list sample(std::size_t n, int rating, const std::string& product,
                  double temperature, std::size_t max_len, std::uint64_t seed,
                  bool mask_unk, const std::string& mode,
                  std::size_t beam_width) {
    const ModelView v = view();
    const std::vector<int> contexts = resolve_contexts(rating, product);
    std::vector<GeneratedText> results;
    if (mode == "greedy") {
      results.push_back(greedy_decode(contexts, v, vocab, max_len, mask_unk));
    } else if (mode == "beam") {
      results = beam_search(contexts, v, vocab, beam_width, max_len, mask_unk);
    } else if (mode == "sample") {
      SamplingConfig scfg;
      scfg.temperature = temperature;
      scfg.max_len = max_len;
      scfg.mask_unk = mask_unk;
      scfg.validate();
      for (std::size_t i = 0; i < n; ++i) {
        Rng rng = Rng::fork(seed, "sampling", i);
        results.push_back(sample_sequence(contexts, v, vocab, scfg, rng));
      }
    } else {
      throw ShapeError("mode must be sample, greedy, or beam");
    }
    py::list out;
    py::object loads = py::module_::import("json").attr("loads");
    for (const GeneratedText& g : results) {
      py::dict record = loads(sample_record_line(g, meta.model.schema));
      record["token_ids"] = g.token_ids;
      out.append(std::move(record));
    }
    return out;
  }

  PreparedData prepare(const std::string& corpus, std::size_t max_words,
                       const std::string& oov) const {
    std::vector<std::string> names;
    for (const ContextType& t : meta.model.schema.types) names.push_back(t.name);
    PreparedData prepared = prepare_data(corpus, vocab, names, meta.train.seed,
                                         max_words, oov_policy_for(oov));
    bool same = prepared.schema.type_count() == meta.model.schema.type_count();
    for (std::size_t i = 0; same && i < prepared.schema.type_count(); ++i) {
      same = prepared.schema.types[i].name == meta.model.schema.types[i].name &&
             prepared.schema.types[i].values == meta.model.schema.types[i].values;
    }
    if (!same) {
      throw DataError("corpus context values differ from the checkpoint's "
                      "schema");
    }
    return prepared;
  }

  const std::vector<Example>& pick_split(const DatasetSplit& split,
                                         const std::string& name,
                                         std::vector<Example>& storage) const {
    if (name == "train") return split.train;
    if (name == "valid") return split.valid;
    if (name == "test") return split.test;
    if (name != "all") throw ShapeError("split must be train|valid|test|all");
    storage = split.train;
    storage.insert(storage.end(), split.valid.begin(), split.valid.end());
    storage.insert(storage.end(), split.test.begin(), split.test.end());
    return storage;
  }

  py::object perplexity_report(const std::string& corpus,
                               const std::string& split,
                               std::size_t bucket_width, std::size_t workers,
                               std::size_t max_words,
                               const std::string& oov) {
    PreparedData prepared = prepare(corpus, max_words, oov);
    std::vector<Example> storage;
    const std::vector<Example>& data =
        pick_split(prepared.split, split, storage);
    return json_to_py(
        perplexity(data, view(), bucket_width, workers).to_json());
  }

  py::object gate_report(const std::string& corpus, const std::string& split,
                         std::size_t min_count, std::size_t max_words,
                         const std::string& oov) {
    PreparedData prepared = prepare(corpus, max_words, oov);
    std::vector<Example> storage;
    const std::vector<Example>& data =
        pick_split(prepared.split, split, storage);
    return json_to_py(gate_attribution(data, view(), vocab, min_count).to_json());
  }

  py::list epoch_reports() const {
    py::list out;
    for (const EpochReport& r : reports) {
      py::dict d;
      d["epoch"] = r.epoch;
      d["train_loss"] = r.train_loss;
      d["valid_ppl"] = r.valid_ppl;
      d["lr"] = r.lr;
      d["lr_halved"] = r.lr_halved;
      out.append(std::move(d));
    }
    return out;
  }
};

py::object detect(const std::vector<std::string>& real_texts,
                  const std::vector<std::string>& fake_texts, double l2,
                  bool counts, std::size_t max_iter) {
  if (real_texts.empty() || fake_texts.empty()) {
    throw DataError("both text lists must be non-empty");
  }
  std::vector<std::string> texts = real_texts;
  texts.insert(texts.end(), fake_texts.begin(), fake_texts.end());
  std::vector<int> labels(real_texts.size(), 0);
  labels.insert(labels.end(), fake_texts.size(), 1);

  NgramClassifierConfig config;
  config.l2 = l2;
  config.count_features = counts;
  config.max_iterations = max_iter;
  NgramClassifier clf =
      train_ngram_classifier(texts, labels, {"real", "fake"}, config);
  ConfusionReport report = classify_corpus(clf, texts, labels);
  py::dict out = json_to_py(report.to_json());
  out["iterations"] = clf.iterations_run;
  out["features"] = clf.feature_names.size();
  return out;
}

}  // namespace

PYBIND11_MODULE(ctxgen, m) {
  m.doc() = "context-conditioned LSTM review generation";
  m.attr("__version__") = kVersion;

  py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
  auto data_error = py::register_exception<DataError>(m, "DataError",
                                                      PyExc_RuntimeError);
  py::register_exception<CheckpointVersionError>(m, "CheckpointVersionError",
                                                 data_error);
  py::register_exception<CheckpointFingerprintError>(
      m, "CheckpointFingerprintError", data_error);
  py::register_exception<CheckpointCorruptError>(m, "CheckpointCorruptError",
                                                 data_error);
  py::register_exception<NumericError>(m, "NumericError",
                                       PyExc_ArithmeticError);

  py::class_<Vocabulary>(m, "Vocab")
      .def_static(
          "build",
          [](const std::vector<std::string>& texts, std::size_t size) {
            return build_vocab(texts, size);
          },
          py::arg("texts"), py::arg("size") = 20000)
      .def_static("load", &Vocabulary::load, py::arg("path"))
      .def("save", &Vocabulary::save, py::arg("path"))
      .def_property_readonly("size", &Vocabulary::size)
      .def_property_readonly("fingerprint", &Vocabulary::fingerprint)
      .def_property_readonly("tokens", &Vocabulary::tokens)
      .def("token", &Vocabulary::token, py::arg("id"))
      .def("tokenize",
           [](const Vocabulary& v, const std::string& text) {
             return tokenize(text, v);
           },
           py::arg("text"))
      .def("detokenize",
           [](const Vocabulary& v, const std::vector<int>& ids) {
             return detokenize(ids, v);
           },
           py::arg("ids"));

  py::class_<Model>(m, "Model")
      .def_static("train", &Model::train, py::arg("corpus"), py::arg("vocab"),
                  py::kw_only(), py::arg("variant") = "gc2s",
                  py::arg("contexts") =
                      std::vector<std::string>{kRatingContext, kProductContext},
                  py::arg("epochs") = 5, py::arg("hidden") = 32,
                  py::arg("ctx_dim") = 16, py::arg("embed_dim") = 0,
                  py::arg("layers") = 1, py::arg("batch_size") = 32,
                  py::arg("lr") = 1.0, py::arg("clip") = 5.0,
                  py::arg("init_range") = 0.1, py::arg("dropout") = 0.0,
                  py::arg("seed") = 1, py::arg("max_words") = 100,
                  py::arg("bucket_width") = 10, py::arg("min_lr") = 1e-6,
                  py::arg("precision") = "f64",
                  py::arg("shared_recurrent") = false,
                  py::arg("lr_compare_best") = false, py::arg("oov") = "unk",
                  py::arg("checkpoint") = "", py::arg("log") = "")
      .def_static("load", &Model::load, py::arg("checkpoint"),
                  py::arg("vocab"))
      .def("save", &Model::save, py::arg("path"))
      .def("sample", &Model::sample, py::kw_only(), py::arg("n") = 1,
           py::arg("rating") = 0, py::arg("product") = "",
           py::arg("temperature") = 0.7, py::arg("max_len") = 100,
           py::arg("seed") = 1, py::arg("mask_unk") = false,
           py::arg("mode") = "sample", py::arg("beam_width") = 5)
      .def("perplexity", &Model::perplexity_report, py::arg("corpus"),
           py::kw_only(), py::arg("split") = "test",
           py::arg("bucket_width") = 20, py::arg("workers") = 1,
           py::arg("max_words") = 100, py::arg("oov") = "unk")
      .def("gate_attribution", &Model::gate_report, py::arg("corpus"),
           py::kw_only(), py::arg("split") = "test", py::arg("min_count") = 1,
           py::arg("max_words") = 100, py::arg("oov") = "unk")
      .def_property_readonly("epoch_reports", &Model::epoch_reports)
      .def_property_readonly("variant",
                             [](const Model& m) {
                               return variant_name(m.meta.model.variant);
                             })
      .def_property_readonly("epoch",
                             [](const Model& m) { return m.meta.epoch; })
      .def_property_readonly(
          "valid_ppl_history",
          [](const Model& m) { return m.meta.valid_ppl_history; });

  m.def("detect", &detect, py::arg("real_texts"), py::arg("fake_texts"),
        py::kw_only(), py::arg("l2") = 1e-4, py::arg("counts") = false,
        py::arg("max_iter") = 10000);

  m.def(
      "build_vocab_file",
      [](const std::string& corpus, const std::string& out, std::size_t size,
         std::size_t max_words) {
        LoadStats stats;
        std::vector<RawRecord> records = read_corpus(corpus, &stats, max_words);
        std::vector<std::string> texts;
        texts.reserve(records.size());
        for (const RawRecord& r : records) texts.push_back(r.text);
        Vocabulary vocab = build_vocab(texts, size);
        vocab.save(out);
        return vocab.size();
      },
      py::arg("corpus"), py::arg("out"), py::arg("size") = 20000,
      py::arg("max_words") = 100);
}
