#pragma once

#include <string>
#include <vector>

#include "ramehr/corpus.hpp"
#include "ramehr/ehr.hpp"
#include "ramehr/summarize.hpp"

namespace ramehr {

// Synthetic benchmark with planted signal. Each label owns two disjoint code
// sets: a small set whose presence correlates strongly with the label
// (co-occurrence signal, strength rho_c) and a larger set of weakly
// correlated codes whose corpus passages all carry the label's marker token
// (knowledge signal, strength rho_k). Setting both strengths to zero removes
// any dependence between codes and labels.
struct SynthConfig {
  int num_patients = 2000;
  int codes_per_type = 120;  // for each of disease / medication / procedure
  int num_labels = 5;
  int codes_per_visit = 3;  // background codes drawn per visit
  int visits_per_patient = 2;
  float knowledge_signal_strength = 0.7f;     // rho_k in [0,1]
  float cooccurrence_signal_strength = 0.7f;  // rho_c in [0,1]
  float label_prevalence = 0.3f;
  std::uint64_t seed = 0;
  void validate() const;
};

struct SynthBenchmark {
  Vocabulary vocab;
  Dataset dataset;
  TaskSpec task;
  std::vector<Passage> passages;
  std::vector<Triplet> triplets;
  std::vector<KnowledgeSummary> summaries;  // oracle cache entries, one per code
};

SynthBenchmark generate(const SynthConfig& cfg);

// Writes vocab.jsonl, dataset.jsonl, task.json, corpus.jsonl, triplets.jsonl
// and summaries.jsonl under dir (created if absent).
void save_benchmark(const SynthBenchmark& bench, const std::string& dir);

}  // namespace ramehr
