#include <algorithm>
#include <set>

#include <nlohmann/json.hpp>

#include "ramehr/hygt.hpp"

namespace ramehr {

Hypergraph build_hypergraph(const Dataset& ds) {
  if (ds.patients.empty()) throw DataError("cannot build a hypergraph from an empty dataset");
  std::set<std::string> code_set;
  for (const auto& p : ds.patients) {
    std::size_t count = 0;
    for (const auto& v : p.visits) count += v.codes.size();
    if (count == 0) throw DataError("patient has no codes: " + p.patient_id);
    for (const auto& v : p.visits)
      for (const auto& c : v.codes) code_set.insert(c);
  }
  Hypergraph g;
  for (const auto& c : code_set) {
    g.node_of[c] = static_cast<int>(g.node_codes.size());
    g.node_codes.push_back(c);
  }
  g.node_edges.resize(g.node_codes.size());
  for (const auto& p : ds.patients) {
    if (g.edge_of.count(p.patient_id))
      throw DataError("duplicate patient id in dataset: " + p.patient_id);
    int e = static_cast<int>(g.edge_patients.size());
    g.edge_of[p.patient_id] = e;
    g.edge_patients.push_back(p.patient_id);
    std::set<int> members;
    for (const auto& v : p.visits)
      for (const auto& c : v.codes) members.insert(g.node_of.at(c));
    g.edge_members.emplace_back(members.begin(), members.end());
    for (int v : g.edge_members.back()) g.node_edges[v].push_back(e);
  }
  return g;
}

std::string hypergraph_to_json(const Hypergraph& g) {
  nlohmann::json j{{"nodes", g.node_codes},
                   {"edges", g.edge_patients},
                   {"incidence", g.edge_members}};
  return j.dump(2);
}

}  // namespace ramehr
