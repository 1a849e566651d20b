#include "ramehr/synth.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <set>

#include <nlohmann/json.hpp>

namespace ramehr {

namespace {

// Inclusion probability of a signal code: kBase regardless of the label plus
// strength * kGain when the label is positive.
constexpr double kBase = 0.03;
constexpr double kGain = 0.30;
constexpr int kCooccurCodes = 2;   // strong co-occurrence codes per label
constexpr int kKnowledgeCodes = 4; // weak marker-carrying codes per label

std::string marker(int label) { return "riskword" + std::to_string(label); }

// Pronounceable random names with little character overlap between codes, so
// that 3-gram retrieval maps each name to its own passages.
std::string code_name(const char* prefix, std::mt19937_64& rng,
                      std::set<std::string>& used) {
  static const char* syl[] = {"ba", "ce", "di", "fo", "gu", "hy", "ja", "ke", "lo",
                              "mu", "ny", "pa", "qe", "ri", "so", "tu", "vy"};
  for (;;) {
    std::string name = prefix;
    for (int s = 0; s < 3; ++s) name += syl[rng() % 17];
    if (used.insert(name).second) return name;
  }
}

}  // namespace

void SynthConfig::validate() const {
  if (num_patients < 1 || codes_per_type < 1 || num_labels < 1 || codes_per_visit < 1 ||
      visits_per_patient < 1)
    throw UsageError("synth: all counts must be >= 1");
  if (knowledge_signal_strength < 0.f || knowledge_signal_strength > 1.f ||
      cooccurrence_signal_strength < 0.f || cooccurrence_signal_strength > 1.f)
    throw UsageError("synth: signal strengths must be in [0,1]");
  if (label_prevalence <= 0.f || label_prevalence >= 1.f)
    throw UsageError("synth: label_prevalence must be in (0,1)");
  if (num_labels * (kCooccurCodes + kKnowledgeCodes) > 3 * codes_per_type)
    throw UsageError("synth: not enough codes for the requested labels");
}

SynthBenchmark generate(const SynthConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(splitmix64(cfg.seed ^ 0x737970ULL));
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  SynthBenchmark out;

  struct TypeInfo {
    CodeType kind;
    const char* id_prefix;
    const char* name_prefix;
  };
  const TypeInfo types[] = {{CodeType::Disease, "SYN-D:", "d"},
                            {CodeType::Medication, "SYN-M:", "m"},
                            {CodeType::Procedure, "SYN-P:", "p"}};
  std::set<std::string> used_names;
  for (const auto& t : types)
    for (int i = 0; i < cfg.codes_per_type; ++i)
      out.vocab.add({t.id_prefix + std::to_string(i), t.kind,
                     code_name(t.name_prefix, rng, used_names)});

  // assign disjoint signal code sets per label from a shuffled pool
  std::vector<int> pool(out.vocab.size());
  std::iota(pool.begin(), pool.end(), 0);
  std::shuffle(pool.begin(), pool.end(), rng);
  std::vector<std::vector<int>> cooccur(cfg.num_labels), knowledge(cfg.num_labels);
  std::vector<int> marker_of(out.vocab.size(), -1);  // label whose marker a code carries
  std::size_t next = 0;
  for (int l = 0; l < cfg.num_labels; ++l) {
    for (int i = 0; i < kCooccurCodes; ++i) cooccur[l].push_back(pool[next++]);
    for (int i = 0; i < kKnowledgeCodes; ++i) {
      knowledge[l].push_back(pool[next]);
      marker_of[pool[next++]] = l;
    }
  }

  out.task.name = "synthetic-risk";
  out.task.num_labels = cfg.num_labels;
  out.task.description = "predict synthetic risk outcomes from visit codes";
  for (int l = 0; l < cfg.num_labels; ++l)
    out.task.label_names.push_back("risk" + std::to_string(l));

  // patients
  for (int i = 0; i < cfg.num_patients; ++i) {
    PatientRecord p;
    p.patient_id = "syn" + std::to_string(i);
    p.labels.resize(cfg.num_labels);
    for (int l = 0; l < cfg.num_labels; ++l)
      p.labels[l] = unif(rng) < cfg.label_prevalence ? 1 : 0;

    std::vector<std::set<int>> visit_codes(cfg.visits_per_patient);
    for (int v = 0; v < cfg.visits_per_patient; ++v)
      for (int c = 0; c < cfg.codes_per_visit; ++c)
        visit_codes[v].insert(static_cast<int>(rng() % out.vocab.size()));
    auto maybe_add = [&](int code, double strength, bool positive) {
      double prob = kBase + strength * kGain * (positive ? 1.0 : 0.0);
      if (unif(rng) < prob)
        visit_codes[rng() % visit_codes.size()].insert(code);
    };
    for (int l = 0; l < cfg.num_labels; ++l) {
      for (int c : cooccur[l]) maybe_add(c, cfg.cooccurrence_signal_strength, p.labels[l]);
      for (int c : knowledge[l]) maybe_add(c, cfg.knowledge_signal_strength, p.labels[l]);
    }
    for (int v = 0; v < cfg.visits_per_patient; ++v) {
      Visit visit;
      visit.timestamp_rank = v;
      for (int c : visit_codes[v]) visit.codes.push_back(out.vocab.at(c).id);
      p.visits.push_back(std::move(visit));
    }
    out.dataset.patients.push_back(std::move(p));
  }

  // corpus: two passages per code; marker codes mention their label's marker
  const SourceTag sources[] = {SourceTag::PubMed, SourceTag::Wikipedia, SourceTag::MeSH,
                               SourceTag::DrugBank};
  for (std::size_t c = 0; c < out.vocab.size(); ++c) {
    const auto& code = out.vocab.at(c);
    std::string gist;
    if (marker_of[c] >= 0) {
      std::string m = marker(marker_of[c]);
      gist = "is strongly linked with " + m + " outcomes and " + m + " cohorts " + m;
    } else {
      gist = "is a routine clinical concept without specific outcome association";
    }
    // the name appears twice so the code's own passages dominate its top-k
    out.passages.push_back({"syn:" + code.id + ":0", sources[c % 4],
                            code.name + " " + code.name + " " + gist});
    out.passages.push_back({"syn:" + code.id + ":1", sources[(c + 1) % 4],
                            "notes mention " + code.name + " " + code.name + " " + gist});
    if (marker_of[c] >= 0)
      out.triplets.push_back({code.name, "associated with",
                              marker(marker_of[c]) + " syndrome with recurrent complications"});
  }

  // oracle summaries matching the append-only cache schema
  for (std::size_t c = 0; c < out.vocab.size(); ++c) {
    const auto& code = out.vocab.at(c);
    KnowledgeSummary s;
    s.code = code.id;
    s.task = out.task.name;
    if (marker_of[c] >= 0) {
      std::string m = marker(marker_of[c]);
      s.text = m + " " + m + " " + m + " association";
    } else {
      s.text = "no specific risk association";
    }
    s.provenance = {"syn:" + code.id + ":0", "syn:" + code.id + ":1"};
    s.client_tag = "oracle";
    out.summaries.push_back(std::move(s));
  }
  return out;
}

void save_benchmark(const SynthBenchmark& bench, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  auto in_dir = [&](const char* name) { return (fs::path(dir) / name).string(); };
  save_vocabulary(bench.vocab, in_dir("vocab.jsonl"));
  save_dataset(bench.dataset, in_dir("dataset.jsonl"));
  save_task(bench.task, in_dir("task.json"));
  Corpus corpus;
  for (const auto& p : bench.passages) corpus.add(p);
  save_corpus(corpus, in_dir("corpus.jsonl"));

  using nlohmann::json;
  std::ofstream tf(in_dir("triplets.jsonl"));
  if (!tf) throw DataError("cannot write " + in_dir("triplets.jsonl"));
  for (const auto& t : bench.triplets)
    tf << json{{"head", t.head}, {"relation", t.relation}, {"tail", t.tail}}.dump() << '\n';

  std::ofstream sf(in_dir("summaries.jsonl"));
  if (!sf) throw DataError("cannot write " + in_dir("summaries.jsonl"));
  for (const auto& s : bench.summaries)
    sf << json{{"code", s.code},
               {"task", s.task},
               {"summary", s.text},
               {"provenance", s.provenance},
               {"client_tag", s.client_tag}}
              .dump()
       << '\n';
}

}  // namespace ramehr
