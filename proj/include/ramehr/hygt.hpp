#pragma once

#include <map>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "ramehr/attention.hpp"
#include "ramehr/ehr.hpp"

namespace ramehr {

// Medical codes as nodes, patients as hyperedges (union of codes over the
// patient's input visits). Nodes are sorted by code id for determinism.
struct Hypergraph {
  std::vector<std::string> node_codes;           // node index -> code id
  std::unordered_map<std::string, int> node_of;  // code id -> node index
  std::vector<std::string> edge_patients;        // edge index -> patient id
  std::unordered_map<std::string, int> edge_of;  // patient id -> edge index
  std::vector<std::vector<int>> edge_members;    // sorted, duplicate-free
  std::vector<std::vector<int>> node_edges;      // incident edges per node

  std::size_t num_nodes() const { return node_codes.size(); }
  std::size_t num_edges() const { return edge_patients.size(); }
};

Hypergraph build_hypergraph(const Dataset& ds);
std::string hypergraph_to_json(const Hypergraph& g);

struct HygtConfig {
  int dim = 64;
  int heads = 4;
  int layers = 2;
  int ffn_hidden = 64;
  float init_std = 0.02f;
  std::uint64_t seed = 0;
};

template <class T>
struct HygtParams {
  HygtConfig cfg;
  Parameter<T> node_emb, edge_emb;
  std::vector<AttnBlockParams<T>> blocks;  // one per layer, shared by both directions
  ReadoutParams<T> readout;

  void init(const Hypergraph& g, int num_labels, const HygtConfig& c) {
    cfg = c;
    std::mt19937_64 rng(splitmix64(c.seed));
    T std = static_cast<T>(c.init_std);
    node_emb = {"hygt.node_emb",
                Tensor<T>::randn(static_cast<int>(g.num_nodes()), c.dim, rng, std)};
    // zero-init so a fresh model scores patients by incidence alone
    edge_emb = {"hygt.edge_emb", Tensor<T>::zeros(static_cast<int>(g.num_edges()), c.dim)};
    blocks.resize(c.layers);
    for (int l = 0; l < c.layers; ++l)
      blocks[l].init("hygt.layer" + std::to_string(l), c.dim, c.heads, c.ffn_hidden, rng, std);
    readout.init("hygt.readout", c.dim, c.dim, num_labels, rng, std);
  }

  std::vector<Parameter<T>*> params() {
    std::vector<Parameter<T>*> out{&node_emb, &edge_emb};
    for (auto& b : blocks) b.collect(out);
    readout.collect(out);
    return out;
  }
};

// One full alternating update over explicit embedding matrices; used by the
// layer-level tests. X: [num_nodes, d], E: [num_edges, d].
template <class T>
std::pair<typename Tape<T>::Ref, typename Tape<T>::Ref> hygt_layer(
    Tape<T>& tape, typename Tape<T>::Ref x, typename Tape<T>::Ref e, const Hypergraph& g,
    AttnBlockParams<T>& block) {
  using Ref = typename Tape<T>::Ref;
  std::vector<Ref> new_edge_rows;
  for (std::size_t ei = 0; ei < g.num_edges(); ++ei) {
    Ref own = tape.gather_rows(e, {static_cast<int>(ei)});
    Ref members = tape.gather_rows(x, g.edge_members[ei]);
    Ref seq = tape.concat_rows({own, members});
    new_edge_rows.push_back(tape.slice_rows(self_att_block(tape, seq, block), 0, 1));
  }
  std::vector<Ref> new_node_rows;
  for (std::size_t vi = 0; vi < g.num_nodes(); ++vi) {
    Ref own = tape.gather_rows(x, {static_cast<int>(vi)});
    Ref incident = tape.gather_rows(e, g.node_edges[vi]);
    Ref seq = tape.concat_rows({own, incident});
    new_node_rows.push_back(tape.slice_rows(self_att_block(tape, seq, block), 0, 1));
  }
  return {tape.concat_rows(new_node_rows), tape.concat_rows(new_edge_rows)};
}

// Stacked forward for a batch of patients, computing only the receptive field
// of the requested hyperedges. Returns sigmoid probabilities [batch, labels].
template <class T>
typename Tape<T>::Ref hygt_forward_probs(Tape<T>& tape, const Hypergraph& g,
                                         HygtParams<T>& p,
                                         const std::vector<int>& patient_edges) {
  using Ref = typename Tape<T>::Ref;
  const int L = p.cfg.layers;
  for (int e : patient_edges)
    if (e < 0 || e >= static_cast<int>(g.num_edges()))
      throw DataError("unknown patient edge index " + std::to_string(e));

  // needed[l] = element sets whose layer-l embeddings must be computed
  std::vector<std::set<int>> need_edges(L + 1), need_nodes(L + 1);
  need_edges[L].insert(patient_edges.begin(), patient_edges.end());
  for (int l = L; l >= 1; --l) {
    for (int e : need_edges[l]) {
      if (l - 1 >= 1) {
        need_edges[l - 1].insert(e);
        for (int v : g.edge_members[e]) need_nodes[l - 1].insert(v);
      }
    }
    for (int v : need_nodes[l]) {
      if (l - 1 >= 1) {
        need_nodes[l - 1].insert(v);
        for (int e : g.node_edges[v]) need_edges[l - 1].insert(e);
      }
    }
  }

  Ref x0 = tape.param(p.node_emb);
  Ref e0 = tape.param(p.edge_emb);
  // layer-l single-row refs for computed elements
  std::map<int, Ref> x_prev, e_prev;
  auto node_row = [&](int l, int v) -> Ref {
    if (l == 0) return tape.gather_rows(x0, {v});
    return x_prev.at(v);
  };
  auto edge_row = [&](int l, int e) -> Ref {
    if (l == 0) return tape.gather_rows(e0, {e});
    return e_prev.at(e);
  };

  for (int l = 1; l <= L; ++l) {
    std::map<int, Ref> x_next, e_next;
    for (int e : need_edges[l]) {
      std::vector<Ref> parts{edge_row(l - 1, e)};
      if (l == 1) {
        parts.push_back(tape.gather_rows(x0, g.edge_members[e]));
      } else {
        for (int v : g.edge_members[e]) parts.push_back(node_row(l - 1, v));
      }
      Ref seq = tape.concat_rows(parts);
      e_next[e] = tape.slice_rows(self_att_block(tape, seq, p.blocks[l - 1]), 0, 1);
    }
    for (int v : need_nodes[l]) {
      std::vector<Ref> parts{node_row(l - 1, v)};
      if (l == 1) {
        parts.push_back(tape.gather_rows(e0, g.node_edges[v]));
      } else {
        for (int e : g.node_edges[v]) parts.push_back(edge_row(l - 1, e));
      }
      Ref seq = tape.concat_rows(parts);
      x_next[v] = tape.slice_rows(self_att_block(tape, seq, p.blocks[l - 1]), 0, 1);
    }
    x_prev = std::move(x_next);
    e_prev = std::move(e_next);
  }

  std::vector<Ref> reps;
  for (int e : patient_edges) reps.push_back(e_prev.at(e));
  Ref rep = tape.concat_rows(reps);
  return tape.sigmoid(p.readout.apply(tape, rep));
}

// Single-patient prediction by patient id.
template <class T>
std::vector<T> local_forward(const Hypergraph& g, HygtParams<T>& p,
                             const std::string& patient_id) {
  auto it = g.edge_of.find(patient_id);
  if (it == g.edge_of.end()) throw DataError("unknown patient: " + patient_id);
  Tape<T> tape;
  auto probs = hygt_forward_probs(tape, g, p, {it->second});
  return tape.val(probs).data;
}

}  // namespace ramehr
