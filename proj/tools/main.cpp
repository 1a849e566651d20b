// Batch entry points wiring the pipeline together:
//   synth     generate a synthetic benchmark
//   ingest    merge passage / triplet files into one corpus store
//   index     embed a corpus into a dense index
//   retrieve  top-k passages for every vocabulary code
//   summarize populate the knowledge summary cache
//   train     co-train the two models and write checkpoints
//   evaluate  score saved checkpoints on the test split
//
// Every option can come from a JSON config file (--config); explicit flags win.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <tuple>

#include <nlohmann/json.hpp>

#include "CLI11.hpp"
#include "ramehr/cotrain.hpp"
#include "ramehr/retrieval.hpp"
#include "ramehr/summarize.hpp"
#include "ramehr/synth.hpp"

using namespace ramehr;
using nlohmann::json;

namespace {

json load_config(const std::string& path) {
  if (path.empty()) return json::object();
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read config file: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw UsageError("config is not valid JSON: " + std::string(e.what()));
  }
  if (!j.is_object()) throw UsageError("config must be a JSON object");
  return j;
}

// Fills unset options from the config object; flags given on the command
// line keep their parsed values.
template <class T>
void from_config(const CLI::Option* opt, const json& cfg, const char* key, T& var) {
  if (opt->count() > 0 || !cfg.contains(key)) return;
  try {
    var = cfg.at(key).get<T>();
  } catch (const json::exception&) {
    throw UsageError(std::string("config key has the wrong type: ") + key);
  }
}

std::unique_ptr<Embedder> make_embedder(const std::string& kind, int dim, std::uint64_t seed,
                                        const std::string& embed_file) {
  if (kind == "hash") return std::make_unique<HashEmbedder>(dim, seed);
  if (kind == "file") {
    if (embed_file.empty()) throw UsageError("--embed-file is required with --embedder file");
    return std::make_unique<FileEmbedder>(embed_file);
  }
  throw UsageError("unknown embedder: " + kind);
}

std::unique_ptr<SummaryClient> make_client(const std::string& kind, const std::string& endpoint,
                                           const std::string& model,
                                           const std::string& token_env, int max_words) {
  if (kind == "stub") return std::make_unique<StubClient>(max_words);
  if (kind == "http") {
    if (endpoint.empty()) throw UsageError("--endpoint is required with --client http");
    HttpClientConfig cfg;
    cfg.endpoint = endpoint;
    cfg.model = model;
    cfg.auth_token_env = token_env;
    return std::make_unique<HttpSummaryClient>(cfg);
  }
  throw UsageError("unknown summary client: " + kind);
}

// Model sizes used by train/evaluate; small enough to train from scratch on
// one core in minutes.
HygtConfig default_hygt(std::uint64_t seed) {
  HygtConfig c;
  c.dim = 16;
  c.heads = 2;
  c.layers = 1;
  c.ffn_hidden = 16;
  c.seed = seed;
  return c;
}

TextEncoderConfig default_text(std::uint64_t seed) {
  TextEncoderConfig c;
  c.dim = 16;
  c.heads = 2;
  c.layers = 1;
  c.ffn_hidden = 16;
  c.seed = seed;
  c.tokenizer.vocab_hash_size = 4096;
  c.tokenizer.max_len = 48;
  return c;
}

TrainMode parse_mode(const std::string& s) {
  if (s == "cotrain") return TrainMode::CoTrain;
  if (s == "aug") return TrainMode::AugOnly;
  if (s == "local") return TrainMode::LocalOnly;
  throw UsageError("unknown mode: " + s + " (expected cotrain|aug|local)");
}

int run(int argc, char** argv) {
  CLI::App app{"retrieval-augmented EHR prediction pipeline"};
  app.require_subcommand(1);

  // ---- synth ----
  auto* synth = app.add_subcommand("synth", "generate a synthetic benchmark");
  struct {
    std::string config, out;
    SynthConfig cfg;
  } sy;
  auto* sy_config = synth->add_option("--config", sy.config, "JSON config file");
  synth->add_option("--out", sy.out, "output directory");
  auto* sy_pat = synth->add_option("--patients", sy.cfg.num_patients);
  auto* sy_cpt = synth->add_option("--codes-per-type", sy.cfg.codes_per_type);
  auto* sy_lab = synth->add_option("--labels", sy.cfg.num_labels);
  auto* sy_cpv = synth->add_option("--codes-per-visit", sy.cfg.codes_per_visit);
  auto* sy_vis = synth->add_option("--visits", sy.cfg.visits_per_patient);
  auto* sy_rk = synth->add_option("--rho-k", sy.cfg.knowledge_signal_strength);
  auto* sy_rc = synth->add_option("--rho-c", sy.cfg.cooccurrence_signal_strength);
  auto* sy_prev = synth->add_option("--prevalence", sy.cfg.label_prevalence);
  auto* sy_seed = synth->add_option("--seed", sy.cfg.seed);

  // ---- ingest ----
  auto* ingest_cmd = app.add_subcommand("ingest", "merge sources into a corpus store");
  struct {
    std::string config, out;
    std::vector<std::string> inputs;
  } ig;
  ingest_cmd->add_option("--config", ig.config, "JSON config file");
  auto* ig_out = ingest_cmd->add_option("--out", ig.out, "output corpus JSONL");
  auto* ig_in = ingest_cmd->add_option("inputs", ig.inputs, "passage or triplet JSONL files");

  // ---- index ----
  auto* index_cmd = app.add_subcommand("index", "embed a corpus into a dense index");
  struct {
    std::string config, index = "index.bin", ids = "index.ids";
    std::vector<std::string> corpus;
    std::string embedder = "hash", embed_file;
    int dim = 64;
    std::uint64_t seed = 0;
  } ix;
  index_cmd->add_option("--config", ix.config, "JSON config file");
  auto* ix_corpus = index_cmd->add_option("--corpus", ix.corpus, "corpus JSONL file(s)");
  auto* ix_index = index_cmd->add_option("--index", ix.index, "output index file");
  auto* ix_ids = index_cmd->add_option("--ids", ix.ids, "output passage id file");
  auto* ix_emb = index_cmd->add_option("--embedder", ix.embedder, "hash|file");
  auto* ix_file = index_cmd->add_option("--embed-file", ix.embed_file);
  auto* ix_dim = index_cmd->add_option("--dim", ix.dim);
  auto* ix_seed = index_cmd->add_option("--seed", ix.seed);

  // ---- retrieve ----
  auto* retr = app.add_subcommand("retrieve", "top-k passages for every vocabulary code");
  struct {
    std::string config, vocab, index = "index.bin", ids = "index.ids", out;
    std::string embedder = "hash", embed_file;
    int dim = 64, k = 5;
    std::uint64_t seed = 0;
  } rt;
  retr->add_option("--config", rt.config, "JSON config file");
  auto* rt_vocab = retr->add_option("--vocab", rt.vocab, "vocabulary JSONL");
  auto* rt_index = retr->add_option("--index", rt.index);
  auto* rt_ids = retr->add_option("--ids", rt.ids);
  auto* rt_out = retr->add_option("--out", rt.out, "output JSONL (default stdout)");
  auto* rt_emb = retr->add_option("--embedder", rt.embedder, "hash|file");
  auto* rt_file = retr->add_option("--embed-file", rt.embed_file);
  auto* rt_dim = retr->add_option("--dim", rt.dim);
  auto* rt_k = retr->add_option("--k", rt.k, "hits per code");
  auto* rt_seed = retr->add_option("--seed", rt.seed);

  // ---- summarize ----
  auto* summ = app.add_subcommand("summarize", "populate the knowledge summary cache");
  struct {
    std::string config, vocab, task, cache;
    std::vector<std::string> corpus;
    std::string client = "stub", endpoint, model = "default", token_env;
    std::string embedder = "hash", embed_file;
    int dim = 64, k = 5, max_words = 40;
    std::uint64_t seed = 0;
  } sm;
  summ->add_option("--config", sm.config, "JSON config file");
  auto* sm_vocab = summ->add_option("--vocab", sm.vocab);
  auto* sm_task = summ->add_option("--task", sm.task, "task JSON");
  auto* sm_cache = summ->add_option("--cache", sm.cache, "summary cache JSONL");
  auto* sm_corpus = summ->add_option("--corpus", sm.corpus, "corpus JSONL file(s)");
  auto* sm_client = summ->add_option("--client", sm.client, "stub|http");
  auto* sm_endpoint = summ->add_option("--endpoint", sm.endpoint);
  auto* sm_model = summ->add_option("--model", sm.model);
  auto* sm_token = summ->add_option("--token-env", sm.token_env);
  auto* sm_emb = summ->add_option("--embedder", sm.embedder, "hash|file");
  auto* sm_file = summ->add_option("--embed-file", sm.embed_file);
  auto* sm_dim = summ->add_option("--dim", sm.dim);
  auto* sm_k = summ->add_option("--k", sm.k);
  auto* sm_words = summ->add_option("--max-words", sm.max_words, "summary length cap (stub client)");
  auto* sm_seed = summ->add_option("--seed", sm.seed);

  // ---- train / evaluate (shared options) ----
  struct TrainOpts {
    std::string config, vocab, dataset, task, cache, out = ".";
    std::string mode = "cotrain";
    CoTrainConfig cfg;
    std::uint64_t split_seed = 0;
  };
  auto add_train_opts = [](CLI::App* cmd, TrainOpts& o,
                           std::vector<std::pair<const CLI::Option*, const char*>>& keys) {
    cmd->add_option("--config", o.config, "JSON config file");
    keys = {
        {cmd->add_option("--vocab", o.vocab), "vocab"},
        {cmd->add_option("--dataset", o.dataset), "dataset"},
        {cmd->add_option("--task", o.task), "task"},
        {cmd->add_option("--cache", o.cache), "cache"},
        {cmd->add_option("--out", o.out), "out"},
        {cmd->add_option("--mode", o.mode), "mode"},
    };
  };
  auto add_cfg_opts = [](CLI::App* cmd, CoTrainConfig& c, std::uint64_t& split_seed,
                         std::vector<std::pair<const CLI::Option*, const char*>>& keys) {
    keys.push_back({cmd->add_option("--beta", c.beta), "beta"});
    keys.push_back({cmd->add_option("--lambda", c.lambda), "lambda"});
    keys.push_back({cmd->add_option("--epochs", c.epochs), "epochs"});
    keys.push_back({cmd->add_option("--batch", c.batch_size), "batch"});
    keys.push_back({cmd->add_option("--lr-aug", c.lr_aug), "lr_aug"});
    keys.push_back({cmd->add_option("--lr-local", c.lr_local), "lr_local"});
    keys.push_back({cmd->add_option("--threshold", c.threshold), "threshold"});
    keys.push_back({cmd->add_option("--seed", c.seed), "seed"});
    keys.push_back({cmd->add_option("--split-seed", split_seed), "split_seed"});
  };

  auto* train_cmd = app.add_subcommand("train", "co-train and write checkpoints");
  TrainOpts tr;
  tr.cfg.lr_aug = 1e-3f;
  tr.cfg.lr_local = 1e-3f;
  std::vector<std::pair<const CLI::Option*, const char*>> tr_keys;
  add_train_opts(train_cmd, tr, tr_keys);
  add_cfg_opts(train_cmd, tr.cfg, tr.split_seed, tr_keys);

  auto* eval_cmd = app.add_subcommand("evaluate", "score saved checkpoints on the test split");
  TrainOpts ev;
  std::vector<std::pair<const CLI::Option*, const char*>> ev_keys;
  add_train_opts(eval_cmd, ev, ev_keys);
  add_cfg_opts(eval_cmd, ev.cfg, ev.split_seed, ev_keys);
  std::string ev_aug_ckpt, ev_local_ckpt, ev_report;
  ev_keys.push_back({eval_cmd->add_option("--aug-ckpt", ev_aug_ckpt), "aug_ckpt"});
  ev_keys.push_back({eval_cmd->add_option("--local-ckpt", ev_local_ckpt), "local_ckpt"});
  ev_keys.push_back({eval_cmd->add_option("--report", ev_report), "report"});

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  if (*synth) {
    (void)sy_config;
    json cfg = load_config(sy.config);
    if (sy.out.empty() && cfg.contains("out")) sy.out = cfg["out"].get<std::string>();
    if (sy.out.empty()) throw UsageError("synth: --out is required");
    from_config(sy_pat, cfg, "patients", sy.cfg.num_patients);
    from_config(sy_cpt, cfg, "codes_per_type", sy.cfg.codes_per_type);
    from_config(sy_lab, cfg, "labels", sy.cfg.num_labels);
    from_config(sy_cpv, cfg, "codes_per_visit", sy.cfg.codes_per_visit);
    from_config(sy_vis, cfg, "visits", sy.cfg.visits_per_patient);
    from_config(sy_rk, cfg, "rho_k", sy.cfg.knowledge_signal_strength);
    from_config(sy_rc, cfg, "rho_c", sy.cfg.cooccurrence_signal_strength);
    from_config(sy_prev, cfg, "prevalence", sy.cfg.label_prevalence);
    from_config(sy_seed, cfg, "seed", sy.cfg.seed);
    save_benchmark(generate(sy.cfg), sy.out);
    std::cerr << "wrote benchmark to " << sy.out << "\n";
    return 0;
  }

  if (*ingest_cmd) {
    json cfg = load_config(ig.config);
    from_config(ig_out, cfg, "out", ig.out);
    from_config(ig_in, cfg, "inputs", ig.inputs);
    if (ig.out.empty()) throw UsageError("ingest: --out is required");
    if (ig.inputs.empty()) throw UsageError("ingest: at least one input file is required");
    Corpus corpus = ingest(ig.inputs);
    save_corpus(corpus, ig.out);
    std::cerr << "ingested " << corpus.size() << " passages\n";
    return 0;
  }

  if (*index_cmd) {
    json cfg = load_config(ix.config);
    from_config(ix_corpus, cfg, "corpus", ix.corpus);
    from_config(ix_index, cfg, "index", ix.index);
    from_config(ix_ids, cfg, "ids", ix.ids);
    from_config(ix_emb, cfg, "embedder", ix.embedder);
    from_config(ix_file, cfg, "embed_file", ix.embed_file);
    from_config(ix_dim, cfg, "dim", ix.dim);
    from_config(ix_seed, cfg, "seed", ix.seed);
    if (ix.corpus.empty()) throw UsageError("index: --corpus is required");
    auto emb = make_embedder(ix.embedder, ix.dim, ix.seed, ix.embed_file);
    auto index = build_index(ingest(ix.corpus), *emb);
    save_index(index, ix.index, ix.ids);
    std::cerr << "indexed " << index.ids.size() << " passages\n";
    return 0;
  }

  if (*retr) {
    json cfg = load_config(rt.config);
    from_config(rt_vocab, cfg, "vocab", rt.vocab);
    from_config(rt_index, cfg, "index", rt.index);
    from_config(rt_ids, cfg, "ids", rt.ids);
    from_config(rt_out, cfg, "out", rt.out);
    from_config(rt_emb, cfg, "embedder", rt.embedder);
    from_config(rt_file, cfg, "embed_file", rt.embed_file);
    from_config(rt_dim, cfg, "dim", rt.dim);
    from_config(rt_k, cfg, "k", rt.k);
    from_config(rt_seed, cfg, "seed", rt.seed);
    if (rt.vocab.empty()) throw UsageError("retrieve: --vocab is required");
    if (rt.k < 1) throw UsageError("retrieve: k must be >= 1");
    auto vocab = load_vocabulary(rt.vocab);
    auto index = load_index(rt.index, rt.ids);
    auto emb = make_embedder(rt.embedder, rt.dim, rt.seed, rt.embed_file);
    std::ofstream file_out;
    if (!rt.out.empty()) {
      file_out.open(rt.out);
      if (!file_out) throw DataError("cannot write " + rt.out);
    }
    std::ostream& os = rt.out.empty() ? std::cout : file_out;
    for (const auto& code : vocab.codes()) {
      auto res = topk(index, *emb, code.name, rt.k);
      json hits = json::array();
      for (const auto& h : res.hits) hits.push_back({{"id", h.passage_id}, {"score", h.score}});
      os << json{{"code", code.id}, {"hits", hits}}.dump() << "\n";
    }
    return 0;
  }

  if (*summ) {
    json cfg = load_config(sm.config);
    from_config(sm_vocab, cfg, "vocab", sm.vocab);
    from_config(sm_task, cfg, "task", sm.task);
    from_config(sm_cache, cfg, "cache", sm.cache);
    from_config(sm_corpus, cfg, "corpus", sm.corpus);
    from_config(sm_client, cfg, "client", sm.client);
    from_config(sm_endpoint, cfg, "endpoint", sm.endpoint);
    from_config(sm_model, cfg, "model", sm.model);
    from_config(sm_token, cfg, "token_env", sm.token_env);
    from_config(sm_emb, cfg, "embedder", sm.embedder);
    from_config(sm_file, cfg, "embed_file", sm.embed_file);
    from_config(sm_dim, cfg, "dim", sm.dim);
    from_config(sm_k, cfg, "k", sm.k);
    from_config(sm_words, cfg, "max_words", sm.max_words);
    from_config(sm_seed, cfg, "seed", sm.seed);
    if (sm.vocab.empty() || sm.task.empty() || sm.cache.empty() || sm.corpus.empty())
      throw UsageError("summarize: --vocab, --task, --cache and --corpus are required");
    auto vocab = load_vocabulary(sm.vocab);
    auto task = load_task(sm.task);
    auto corpus = ingest(sm.corpus);
    auto emb = make_embedder(sm.embedder, sm.dim, sm.seed, sm.embed_file);
    auto index = build_index(corpus, *emb);
    auto client = make_client(sm.client, sm.endpoint, sm.model, sm.token_env, sm.max_words);
    SummaryCache cache(sm.cache);
    std::size_t fresh = 0;
    for (const auto& code : vocab.codes()) {
      bool had = cache.contains(code.id, task.name);
      summarize_code(code, task, corpus, index, *emb, *client, cache, sm.k);
      if (!had) ++fresh;
    }
    std::cerr << "cache holds " << cache.size() << " summaries (" << fresh << " new)\n";
    return 0;
  }

  auto load_inputs = [](const TrainOpts& o) {
    if (o.vocab.empty() || o.dataset.empty() || o.task.empty() || o.cache.empty())
      throw UsageError("--vocab, --dataset, --task and --cache are required");
    auto vocab = load_vocabulary(o.vocab);
    auto task = load_task(o.task);
    auto ds = load_dataset(o.dataset, vocab, task);
    return std::tuple(std::move(vocab), std::move(task), std::move(ds));
  };
  if (*train_cmd) {
    json cfg = load_config(tr.config);
    from_config(tr_keys[0].first, cfg, "vocab", tr.vocab);
    from_config(tr_keys[1].first, cfg, "dataset", tr.dataset);
    from_config(tr_keys[2].first, cfg, "task", tr.task);
    from_config(tr_keys[3].first, cfg, "cache", tr.cache);
    from_config(tr_keys[4].first, cfg, "out", tr.out);
    from_config(tr_keys[5].first, cfg, "mode", tr.mode);
    from_config(tr_keys[6].first, cfg, "beta", tr.cfg.beta);
    from_config(tr_keys[7].first, cfg, "lambda", tr.cfg.lambda);
    from_config(tr_keys[8].first, cfg, "epochs", tr.cfg.epochs);
    from_config(tr_keys[9].first, cfg, "batch", tr.cfg.batch_size);
    from_config(tr_keys[10].first, cfg, "lr_aug", tr.cfg.lr_aug);
    from_config(tr_keys[11].first, cfg, "lr_local", tr.cfg.lr_local);
    from_config(tr_keys[12].first, cfg, "threshold", tr.cfg.threshold);
    from_config(tr_keys[13].first, cfg, "seed", tr.cfg.seed);
    from_config(tr_keys[14].first, cfg, "split_seed", tr.split_seed);
    auto [vocab, task, ds] = load_inputs(tr);
    auto split = split_dataset(ds, {}, tr.split_seed);
    SummaryCache cache(tr.cache);
    Trainer trainer(split.train, split.val, split.test, vocab, task, cache, tr.cfg,
                    default_hygt(tr.cfg.seed), default_text(tr.cfg.seed), parse_mode(tr.mode));
    auto log = trainer.train();
    std::filesystem::create_directories(tr.out);
    auto in_out = [&](const char* n) { return (std::filesystem::path(tr.out) / n).string(); };
    trainer.save_checkpoints(in_out("aug.ckpt"), in_out("local.ckpt"));
    Trainer::write_log_csv(log, in_out("log.csv"));
    auto report = trainer.evaluate_test();
    std::ofstream rep(in_out("report.json"));
    rep << report.to_json() << "\n";
    std::cerr << "test auroc " << report.auroc << "\n";
    return 0;
  }

  if (*eval_cmd) {
    json cfg = load_config(ev.config);
    from_config(ev_keys[0].first, cfg, "vocab", ev.vocab);
    from_config(ev_keys[1].first, cfg, "dataset", ev.dataset);
    from_config(ev_keys[2].first, cfg, "task", ev.task);
    from_config(ev_keys[3].first, cfg, "cache", ev.cache);
    from_config(ev_keys[4].first, cfg, "out", ev.out);
    from_config(ev_keys[5].first, cfg, "mode", ev.mode);
    from_config(ev_keys[6].first, cfg, "beta", ev.cfg.beta);
    from_config(ev_keys[7].first, cfg, "lambda", ev.cfg.lambda);
    from_config(ev_keys[8].first, cfg, "epochs", ev.cfg.epochs);
    from_config(ev_keys[9].first, cfg, "batch", ev.cfg.batch_size);
    from_config(ev_keys[10].first, cfg, "lr_aug", ev.cfg.lr_aug);
    from_config(ev_keys[11].first, cfg, "lr_local", ev.cfg.lr_local);
    from_config(ev_keys[12].first, cfg, "threshold", ev.cfg.threshold);
    from_config(ev_keys[13].first, cfg, "seed", ev.cfg.seed);
    from_config(ev_keys[14].first, cfg, "split_seed", ev.split_seed);
    from_config(ev_keys[15].first, cfg, "aug_ckpt", ev_aug_ckpt);
    from_config(ev_keys[16].first, cfg, "local_ckpt", ev_local_ckpt);
    from_config(ev_keys[17].first, cfg, "report", ev_report);
    if (ev_aug_ckpt.empty() || ev_local_ckpt.empty())
      throw UsageError("evaluate: --aug-ckpt and --local-ckpt are required");
    auto [vocab, task, ds] = load_inputs(ev);
    auto split = split_dataset(ds, {}, ev.split_seed);
    SummaryCache cache(ev.cache);
    Trainer trainer(split.train, split.val, split.test, vocab, task, cache, ev.cfg,
                    default_hygt(ev.cfg.seed), default_text(ev.cfg.seed), parse_mode(ev.mode));
    trainer.load_checkpoints(ev_aug_ckpt, ev_local_ckpt);
    auto report = trainer.evaluate_test();
    if (ev_report.empty()) {
      std::cout << report.to_json() << "\n";
    } else {
      std::ofstream rep(ev_report);
      if (!rep) throw DataError("cannot write " + ev_report);
      rep << report.to_json() << "\n";
    }
    return 0;
  }

  throw UsageError("no command given");
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}
