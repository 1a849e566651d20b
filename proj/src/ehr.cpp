#include "ramehr/ehr.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include <nlohmann/json.hpp>

namespace ramehr {

using nlohmann::json;

const char* code_type_name(CodeType t) {
  switch (t) {
    case CodeType::Disease: return "disease";
    case CodeType::Medication: return "medication";
    case CodeType::Procedure: return "procedure";
  }
  throw NumericError("invalid CodeType");
}

CodeType code_type_from_name(const std::string& s) {
  if (s == "disease") return CodeType::Disease;
  if (s == "medication") return CodeType::Medication;
  if (s == "procedure") return CodeType::Procedure;
  throw DataError("unknown code type: " + s);
}

int Vocabulary::add(MedicalCode code) {
  if (code.name.empty()) throw DataError("code has empty name: " + code.id);
  if (by_id_.count(code.id)) throw DataError("duplicate code id: " + code.id);
  int idx = static_cast<int>(codes_.size());
  by_id_.emplace(code.id, idx);
  codes_.push_back(std::move(code));
  return idx;
}

const MedicalCode* Vocabulary::find(const std::string& id) const {
  auto it = by_id_.find(id);
  return it == by_id_.end() ? nullptr : &codes_[it->second];
}

int Vocabulary::index_of(const std::string& id) const {
  auto it = by_id_.find(id);
  return it == by_id_.end() ? -1 : it->second;
}

Vocabulary load_vocabulary(const std::string& path) {
  Vocabulary vocab;
  auto lines = read_lines(path);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    json j;
    try {
      j = json::parse(lines[i]);
    } catch (const json::exception& e) {
      throw DataError(path + ":" + std::to_string(i + 1) + ": malformed JSON: " + e.what());
    }
    try {
      vocab.add({j.at("code").get<std::string>(),
                 code_type_from_name(j.at("type").get<std::string>()),
                 j.at("name").get<std::string>()});
    } catch (const json::exception& e) {
      throw DataError(path + ":" + std::to_string(i + 1) + ": " + e.what());
    }
  }
  return vocab;
}

void save_vocabulary(const Vocabulary& vocab, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write file: " + path);
  for (const auto& c : vocab.codes()) {
    json j{{"code", c.id}, {"type", code_type_name(c.kind)}, {"name", c.name}};
    out << j.dump() << "\n";
  }
}

TaskSpec load_task(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open file: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw DataError(path + ": malformed JSON: " + e.what());
  }
  TaskSpec t;
  t.name = j.at("name").get<std::string>();
  t.num_labels = j.at("num_labels").get<int>();
  t.label_names = j.at("label_names").get<std::vector<std::string>>();
  t.description = j.at("description").get<std::string>();
  if (t.num_labels < 1) throw DataError("task num_labels must be >= 1");
  if (static_cast<int>(t.label_names.size()) != t.num_labels)
    throw DataError("task label_names length does not match num_labels");
  return t;
}

void save_task(const TaskSpec& task, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write file: " + path);
  json j{{"name", task.name},
         {"num_labels", task.num_labels},
         {"label_names", task.label_names},
         {"description", task.description}};
  out << j.dump(2) << "\n";
}

Dataset load_dataset(const std::string& path, const Vocabulary& vocab, const TaskSpec& task) {
  Dataset ds;
  auto lines = read_lines(path);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const std::string where = path + ":" + std::to_string(i + 1);
    json j;
    try {
      j = json::parse(lines[i]);
    } catch (const json::exception& e) {
      throw DataError(where + ": malformed JSON: " + e.what());
    }
    PatientRecord rec;
    try {
      rec.patient_id = j.at("patient_id").get<std::string>();
      int rank = 0;
      for (const auto& jv : j.at("visits")) {
        Visit v;
        v.timestamp_rank = rank++;
        std::set<std::string> seen;
        for (const auto& jc : jv.at("codes")) {
          std::string id = jc.get<std::string>();
          if (!vocab.find(id))
            throw DataError(where + ": unknown code id '" + id + "'");
          if (!seen.insert(id).second)
            throw DataError(where + ": duplicate code id '" + id + "' within visit");
          v.codes.push_back(std::move(id));
        }
        rec.visits.push_back(std::move(v));
      }
      for (const auto& jl : j.at("labels")) {
        int b = jl.get<int>();
        if (b != 0 && b != 1) throw DataError(where + ": label entries must be 0 or 1");
        rec.labels.push_back(static_cast<std::uint8_t>(b));
      }
    } catch (const json::exception& e) {
      throw DataError(where + ": " + e.what());
    }
    if (rec.visits.empty()) throw DataError(where + ": patient has no visits");
    if (static_cast<int>(rec.labels.size()) != task.num_labels)
      throw DataError(where + ": label vector length " + std::to_string(rec.labels.size()) +
                      " does not match task num_labels " + std::to_string(task.num_labels));
    ds.patients.push_back(std::move(rec));
  }
  return ds;
}

void save_dataset(const Dataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write file: " + path);
  for (const auto& p : ds.patients) {
    json visits = json::array();
    for (const auto& v : p.visits) visits.push_back(json{{"codes", v.codes}});
    json labels = json::array();
    for (auto b : p.labels) labels.push_back(static_cast<int>(b));
    json j{{"patient_id", p.patient_id}, {"visits", visits}, {"labels", labels}};
    out << j.dump() << "\n";
  }
}

DatasetSplit split_dataset(const Dataset& ds, SplitFractions f, std::uint64_t seed) {
  if (f.train <= 0 || f.val <= 0 || f.test <= 0)
    throw DataError("split fractions must be positive");
  if (std::fabs(f.train + f.val + f.test - 1.0) > 1e-9)
    throw DataError("split fractions must sum to 1");
  std::vector<std::size_t> order(ds.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::size_t n = ds.size();
  std::size_t n_train = static_cast<std::size_t>(f.train * static_cast<double>(n));
  std::size_t n_val = static_cast<std::size_t>(f.val * static_cast<double>(n));
  DatasetSplit out;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& rec = ds.patients[order[i]];
    if (i < n_train) out.train.patients.push_back(rec);
    else if (i < n_train + n_val) out.val.patients.push_back(rec);
    else out.test.patients.push_back(rec);
  }
  return out;
}

bool operator==(const Visit& a, const Visit& b) {
  return a.codes == b.codes && a.timestamp_rank == b.timestamp_rank;
}
bool operator==(const PatientRecord& a, const PatientRecord& b) {
  return a.patient_id == b.patient_id && a.visits == b.visits && a.labels == b.labels;
}
bool operator==(const Dataset& a, const Dataset& b) { return a.patients == b.patients; }

}  // namespace ramehr
