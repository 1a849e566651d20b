#include "ramehr/textmodel.hpp"

#include <algorithm>
#include <sstream>

namespace ramehr {

int hash_token(const std::string& word, const TokenizerConfig& cfg) {
  return 1 + static_cast<int>(fnv1a64(word, cfg.seed) %
                              static_cast<std::uint64_t>(cfg.vocab_hash_size - 1));
}

std::vector<int> tokenize(const std::string& text, const TokenizerConfig& cfg) {
  std::vector<int> ids;
  std::istringstream in(text);
  std::string word;
  while (in >> word) ids.push_back(hash_token(word, cfg));
  return ids;
}

FlattenedDoc flatten_patient(const PatientRecord& p, CodeType kind,
                             const SummaryCache& summaries, const Vocabulary& vocab,
                             const std::string& task_name, const TokenizerConfig& cfg) {
  FlattenedDoc doc;
  doc.kind = kind;
  doc.tokens.push_back(kClsToken);
  for (auto it = p.visits.rbegin(); it != p.visits.rend(); ++it) {
    std::vector<std::string> ids;
    for (const auto& cid : it->codes) {
      const MedicalCode* c = vocab.find(cid);
      if (!c) throw DataError("code not in vocabulary: " + cid);
      if (c->kind == kind) ids.push_back(cid);
    }
    std::sort(ids.begin(), ids.end());
    for (const auto& cid : ids) {
      const MedicalCode* c = vocab.find(cid);
      std::string text = c->name;
      if (summaries.contains(cid, task_name))
        text += " " + summaries.get(cid, task_name).text;
      for (int id : tokenize(text, cfg)) {
        if (static_cast<int>(doc.tokens.size()) >= cfg.max_len) return doc;
        doc.tokens.push_back(id);
      }
    }
  }
  return doc;
}

std::vector<FlattenedDoc> flatten_all(const PatientRecord& p, const SummaryCache& summaries,
                                      const Vocabulary& vocab, const std::string& task_name,
                                      const TokenizerConfig& cfg) {
  return {flatten_patient(p, CodeType::Disease, summaries, vocab, task_name, cfg),
          flatten_patient(p, CodeType::Medication, summaries, vocab, task_name, cfg),
          flatten_patient(p, CodeType::Procedure, summaries, vocab, task_name, cfg)};
}

}  // namespace ramehr
