#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "ramehr/corpus.hpp"
#include "ramehr/cotrain.hpp"
#include "ramehr/ehr.hpp"
#include "ramehr/metrics.hpp"
#include "ramehr/retrieval.hpp"
#include "ramehr/summarize.hpp"
#include "ramehr/synth.hpp"

namespace py = pybind11;
using namespace ramehr;

namespace {

TrainMode mode_from_string(const std::string& s) {
  if (s == "cotrain") return TrainMode::CoTrain;
  if (s == "aug") return TrainMode::AugOnly;
  if (s == "local") return TrainMode::LocalOnly;
  throw UsageError("unknown mode: " + s + " (expected cotrain|aug|local)");
}

HygtConfig hygt_from_dict(const py::dict& d, std::uint64_t seed) {
  HygtConfig c;
  c.dim = d.contains("dim") ? d["dim"].cast<int>() : 16;
  c.heads = d.contains("heads") ? d["heads"].cast<int>() : 2;
  c.layers = d.contains("layers") ? d["layers"].cast<int>() : 1;
  c.ffn_hidden = d.contains("ffn_hidden") ? d["ffn_hidden"].cast<int>() : 16;
  c.seed = seed;
  return c;
}

TextEncoderConfig text_from_dict(const py::dict& d, std::uint64_t seed) {
  TextEncoderConfig c;
  c.dim = d.contains("dim") ? d["dim"].cast<int>() : 16;
  c.heads = d.contains("heads") ? d["heads"].cast<int>() : 2;
  c.layers = d.contains("layers") ? d["layers"].cast<int>() : 1;
  c.ffn_hidden = d.contains("ffn_hidden") ? d["ffn_hidden"].cast<int>() : 16;
  c.tokenizer.vocab_hash_size =
      d.contains("vocab_hash_size") ? d["vocab_hash_size"].cast<int>() : 4096;
  c.tokenizer.max_len = d.contains("max_len") ? d["max_len"].cast<int>() : 48;
  c.seed = seed;
  return c;
}

py::dict report_to_dict(const EvalReport& r) {
  py::dict out;
  out["acc"] = r.acc;
  out["auroc"] = r.auroc;
  out["aupr"] = r.aupr;
  out["macro_f1"] = r.macro_f1;
  py::list per;
  for (const auto& lm : r.per_label) {
    py::dict j;
    j["name"] = lm.name;
    j["auroc"] = lm.auroc;
    j["aupr"] = lm.aupr;
    j["f1"] = lm.f1;
    per.append(j);
  }
  out["per_label"] = per;
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "retrieval-augmented EHR prediction pipeline";

  py::register_exception<UsageError>(m, "UsageError", PyExc_ValueError);
  py::register_exception<DataError>(m, "DataError", PyExc_ValueError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);

  m.def(
      "generate_benchmark",
      [](const std::string& out_dir, int patients, int labels, double rho_k, double rho_c,
         std::uint64_t seed) {
        SynthConfig c;
        c.num_patients = patients;
        c.num_labels = labels;
        c.knowledge_signal_strength = static_cast<float>(rho_k);
        c.cooccurrence_signal_strength = static_cast<float>(rho_c);
        c.seed = seed;
        save_benchmark(generate(c), out_dir);
      },
      py::arg("out_dir"), py::arg("patients") = 2000, py::arg("labels") = 5,
      py::arg("rho_k") = 0.7, py::arg("rho_c") = 0.7, py::arg("seed") = 0,
      "Generate the synthetic benchmark files (vocab/dataset/task/corpus/triplets).");

  m.def("verbalize_triplet", [](const std::string& head, const std::string& relation,
                                const std::string& tail) {
    return verbalize_triplet({head, relation, tail});
  });

  m.def(
      "ingest_corpus",
      [](const std::vector<std::string>& inputs, const std::string& out) {
        auto corpus = ingest(inputs);
        save_corpus(corpus, out);
        return corpus.size();
      },
      py::arg("inputs"), py::arg("out"),
      "Merge passage/triplet JSONL files into one corpus store; returns passage count.");

  m.def(
      "retrieve",
      [](const std::vector<std::string>& corpus_files, const std::string& query, int k, int dim,
         std::uint64_t seed) {
        auto corpus = ingest(corpus_files);
        HashEmbedder emb(dim, seed);
        auto index = build_index(corpus, emb);
        auto res = topk(index, emb, query, k);
        std::vector<std::pair<std::string, float>> hits;
        for (const auto& h : res.hits) hits.emplace_back(h.passage_id, h.score);
        return hits;
      },
      py::arg("corpus_files"), py::arg("query"), py::arg("k") = 5, py::arg("dim") = 64,
      py::arg("seed") = 0, "Dense top-k retrieval over a corpus; returns (id, score) pairs.");

  m.def(
      "summarize",
      [](const std::string& vocab_path, const std::string& task_path,
         const std::vector<std::string>& corpus_files, const std::string& cache_path, int k,
         int dim, int max_words, std::uint64_t seed) {
        auto vocab = load_vocabulary(vocab_path);
        auto task = load_task(task_path);
        auto corpus = ingest(corpus_files);
        HashEmbedder emb(dim, seed);
        auto index = build_index(corpus, emb);
        SummaryCache cache(cache_path);
        StubClient client(max_words);
        for (std::size_t i = 0; i < vocab.size(); ++i)
          summarize_code(vocab.at(i), task, corpus, index, emb, client, cache, k);
        return py::make_tuple(cache.size(), client.call_count());
      },
      py::arg("vocab"), py::arg("task"), py::arg("corpus_files"), py::arg("cache"),
      py::arg("k") = 5, py::arg("dim") = 64, py::arg("max_words") = 12, py::arg("seed") = 0,
      "Fill the summary cache with the stub client; returns (cache size, new completions).");

  m.def(
      "train_and_evaluate",
      [](const std::string& vocab_path, const std::string& dataset_path,
         const std::string& task_path, const std::string& cache_path, const std::string& mode,
         double beta, double lambda, int epochs, int batch, double lr, std::uint64_t seed,
         std::uint64_t split_seed, const py::dict& model) {
        auto vocab = load_vocabulary(vocab_path);
        auto task = load_task(task_path);
        auto ds = load_dataset(dataset_path, vocab, task);
        SummaryCache cache(cache_path);
        CoTrainConfig cfg;
        cfg.beta = static_cast<float>(beta);
        cfg.lambda = static_cast<float>(lambda);
        cfg.epochs = epochs;
        cfg.batch_size = batch;
        cfg.lr_aug = cfg.lr_local = static_cast<float>(lr);
        cfg.seed = seed;
        auto split = split_dataset(ds, SplitFractions{}, split_seed);
        Trainer trainer(split.train, split.val, split.test, vocab, task, cache, cfg,
                        hygt_from_dict(model, seed), text_from_dict(model, seed),
                        mode_from_string(mode));
        trainer.train();
        return report_to_dict(trainer.evaluate_test());
      },
      py::arg("vocab"), py::arg("dataset"), py::arg("task"), py::arg("cache"),
      py::arg("mode") = "cotrain", py::arg("beta") = 0.2, py::arg("lambda") = 1.0,
      py::arg("epochs") = 5, py::arg("batch") = 32, py::arg("lr") = 1e-3, py::arg("seed") = 0,
      py::arg("split_seed") = 0, py::arg("model") = py::dict(),
      "Train on the 80/10/10 split and return test metrics as a dict.");

  m.def("auroc", [](const std::vector<float>& s, const std::vector<std::uint8_t>& y) {
    return auroc(s, y);
  });
  m.def("aupr", [](const std::vector<float>& s, const std::vector<std::uint8_t>& y) {
    return aupr(s, y);
  });
  m.def("bce", &bce, py::arg("pred"), py::arg("target"));
  m.def("bernoulli_kl", &bernoulli_kl, py::arg("p"), py::arg("q"));
}
