#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "ramehr/common.hpp"

namespace ramehr {

enum class SourceTag { PubMed, DrugBank, MeSH, Wikipedia, KG };

const char* source_tag_name(SourceTag t);
SourceTag source_tag_from_name(const std::string& s);

struct Passage {
  std::string id;
  SourceTag source;
  std::string text;  // nonempty, whitespace-normalized
};

struct Triplet {
  std::string head;
  std::string relation;
  std::string tail;
};

// Returns the sentence for a known relation; throws DataError carrying the
// relation string otherwise.
std::string verbalize_triplet(const Triplet& t);
const std::vector<std::string>& known_relations();

class Corpus {
 public:
  void add(Passage p);  // throws DataError on duplicate id or empty text
  const Passage& at(std::size_t idx) const { return passages_.at(idx); }
  const Passage* find(const std::string& id) const;
  std::size_t size() const { return passages_.size(); }
  const std::vector<Passage>& passages() const { return passages_; }

 private:
  std::vector<Passage> passages_;
  std::unordered_map<std::string, std::size_t> by_id_;
};

// Each path is either passage JSONL or triplet JSONL (verbalized, source=KG).
Corpus ingest(const std::vector<std::string>& paths);
void save_corpus(const Corpus& corpus, const std::string& path);

}  // namespace ramehr
