#include "ramehr/corpus.hpp"

#include <array>
#include <utility>

#include <nlohmann/json.hpp>

namespace ramehr {

using nlohmann::json;

const char* source_tag_name(SourceTag t) {
  switch (t) {
    case SourceTag::PubMed: return "pubmed";
    case SourceTag::DrugBank: return "drugbank";
    case SourceTag::MeSH: return "mesh";
    case SourceTag::Wikipedia: return "wikipedia";
    case SourceTag::KG: return "kg";
  }
  throw NumericError("invalid SourceTag");
}

SourceTag source_tag_from_name(const std::string& s) {
  if (s == "pubmed") return SourceTag::PubMed;
  if (s == "drugbank") return SourceTag::DrugBank;
  if (s == "mesh") return SourceTag::MeSH;
  if (s == "wikipedia") return SourceTag::Wikipedia;
  if (s == "kg") return SourceTag::KG;
  throw DataError("unknown source tag: " + s);
}

namespace {

// relation -> sentence template with [ent1]/[ent2] placeholders
const std::vector<std::pair<std::string, std::string>>& relation_templates() {
  static const std::vector<std::pair<std::string, std::string>> table = {
      {"phenotype present", "[ent1] has the phenotype [ent2]"},
      {"carrier", "[ent1] interacts with the carrier [ent2]"},
      {"enzyme", "[ent1] interacts with the enzyme [ent2]"},
      {"target", "The target of [ent1] is [ent2]"},
      {"transporter", "[ent2] transports [ent1]"},
      {"associated with", "[ent2] is associated with [ent1]"},
      {"parent-child", "[ent2] is a subclass of [ent1]"},
      {"side effect", "[ent1] has the side effect of [ent2]"},
  };
  return table;
}

std::string replace_all(std::string s, const std::string& from, const std::string& to) {
  std::size_t pos = 0;
  while ((pos = s.find(from, pos)) != std::string::npos) {
    s.replace(pos, from.size(), to);
    pos += to.size();
  }
  return s;
}

}  // namespace

const std::vector<std::string>& known_relations() {
  static const std::vector<std::string> rels = [] {
    std::vector<std::string> v;
    for (const auto& [rel, tpl] : relation_templates()) v.push_back(rel);
    return v;
  }();
  return rels;
}

std::string verbalize_triplet(const Triplet& t) {
  for (const auto& [rel, tpl] : relation_templates()) {
    if (rel == t.relation) {
      std::string s = replace_all(tpl, "[ent1]", t.head);
      return replace_all(s, "[ent2]", t.tail);
    }
  }
  throw DataError("unknown relation: " + t.relation);
}

void Corpus::add(Passage p) {
  p.text = normalize_whitespace(p.text);
  if (p.text.empty()) throw DataError("passage has empty text: " + p.id);
  if (by_id_.count(p.id)) throw DataError("duplicate passage id: " + p.id);
  by_id_.emplace(p.id, passages_.size());
  passages_.push_back(std::move(p));
}

const Passage* Corpus::find(const std::string& id) const {
  auto it = by_id_.find(id);
  return it == by_id_.end() ? nullptr : &passages_[it->second];
}

Corpus ingest(const std::vector<std::string>& paths) {
  Corpus corpus;
  std::size_t kg_counter = 0;
  for (const auto& path : paths) {
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
      try {
        if (j.contains("head")) {
          Triplet t{j.at("head").get<std::string>(), j.at("relation").get<std::string>(),
                    j.at("tail").get<std::string>()};
          char id[32];
          std::snprintf(id, sizeof id, "kg:%06zu", kg_counter++);
          corpus.add({id, SourceTag::KG, verbalize_triplet(t)});
        } else {
          corpus.add({j.at("id").get<std::string>(),
                      source_tag_from_name(j.at("source").get<std::string>()),
                      j.at("text").get<std::string>()});
        }
      } catch (const json::exception& e) {
        throw DataError(where + ": " + e.what());
      } catch (const DataError& e) {
        throw DataError(where + ": " + e.what());
      }
    }
  }
  return corpus;
}

void save_corpus(const Corpus& corpus, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write file: " + path);
  for (const auto& p : corpus.passages()) {
    json j{{"id", p.id}, {"source", source_tag_name(p.source)}, {"text", p.text}};
    out << j.dump() << "\n";
  }
}

}  // namespace ramehr
