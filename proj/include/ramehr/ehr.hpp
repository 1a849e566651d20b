#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "ramehr/common.hpp"

namespace ramehr {

enum class CodeType { Disease, Medication, Procedure };

const char* code_type_name(CodeType t);       // "disease" | "medication" | "procedure"
CodeType code_type_from_name(const std::string& s);

struct MedicalCode {
  std::string id;    // system-qualified, e.g. "ICD9:428.0"
  CodeType kind;
  std::string name;  // surface name, nonempty
};

class Vocabulary {
 public:
  int add(MedicalCode code);                 // throws DataError on duplicate id / empty name
  const MedicalCode& at(int idx) const { return codes_.at(idx); }
  const MedicalCode* find(const std::string& id) const;
  int index_of(const std::string& id) const; // -1 if absent
  std::size_t size() const { return codes_.size(); }
  const std::vector<MedicalCode>& codes() const { return codes_; }

 private:
  std::vector<MedicalCode> codes_;
  std::unordered_map<std::string, int> by_id_;
};

Vocabulary load_vocabulary(const std::string& path);
void save_vocabulary(const Vocabulary& vocab, const std::string& path);

struct Visit {
  std::vector<std::string> codes;  // set semantics: no duplicates
  int timestamp_rank = 0;
};

using LabelVector = std::vector<std::uint8_t>;

struct PatientRecord {
  std::string patient_id;
  std::vector<Visit> visits;  // ordered by strictly increasing timestamp_rank
  LabelVector labels;
};

struct TaskSpec {
  std::string name;
  int num_labels = 1;
  std::vector<std::string> label_names;
  std::string description;  // fills the summarization prompt's <task> slot
};

TaskSpec load_task(const std::string& path);
void save_task(const TaskSpec& task, const std::string& path);

struct Dataset {
  std::vector<PatientRecord> patients;
  std::size_t size() const { return patients.size(); }
};

Dataset load_dataset(const std::string& path, const Vocabulary& vocab, const TaskSpec& task);
void save_dataset(const Dataset& ds, const std::string& path);

struct SplitFractions {
  double train = 0.8, val = 0.1, test = 0.1;
};

struct DatasetSplit {
  Dataset train, val, test;
};

// Patient-level split; same seed gives the identical partition.
DatasetSplit split_dataset(const Dataset& ds, SplitFractions fractions, std::uint64_t seed);

bool operator==(const Visit& a, const Visit& b);
bool operator==(const PatientRecord& a, const PatientRecord& b);
bool operator==(const Dataset& a, const Dataset& b);

}  // namespace ramehr
