#include <algorithm>
#include <cmath>
#include <random>

#include "doctest.h"
#include "gradcheck.hpp"
#include "ramehr/cotrain.hpp"
#include "ramehr/hygt.hpp"
#include "ramehr/textmodel.hpp"
#include "test_util.hpp"

using namespace ramehr;

namespace {

Vocabulary toy_vocab() {
  Vocabulary v;
  v.add({"D:1", CodeType::Disease, "heart failure"});
  v.add({"D:2", CodeType::Disease, "hypertension"});
  v.add({"D:3", CodeType::Disease, "diabetes"});
  v.add({"M:1", CodeType::Medication, "metformin"});
  v.add({"P:1", CodeType::Procedure, "dialysis"});
  return v;
}

PatientRecord patient(const std::string& id, std::vector<std::vector<std::string>> visits,
                      LabelVector labels) {
  PatientRecord p;
  p.patient_id = id;
  int rank = 0;
  for (auto& codes : visits) p.visits.push_back({codes, rank++});
  p.labels = std::move(labels);
  return p;
}

HygtConfig tiny_hygt(std::uint64_t seed = 3) {
  HygtConfig c;
  c.dim = 8;
  c.heads = 2;
  c.layers = 2;
  c.ffn_hidden = 8;
  c.init_std = 0.2f;
  c.seed = seed;
  return c;
}

TextEncoderConfig tiny_text(std::uint64_t seed = 4) {
  TextEncoderConfig c;
  c.dim = 8;
  c.heads = 2;
  c.layers = 1;
  c.ffn_hidden = 8;
  c.init_std = 0.2f;
  c.seed = seed;
  c.tokenizer.vocab_hash_size = 256;
  c.tokenizer.max_len = 16;
  return c;
}

}  // namespace

TEST_CASE("build_hypergraph: nodes, edges, incidence") {
  Dataset ds;
  ds.patients.push_back(patient("p1", {{"D:1", "D:2"}}, {1}));
  ds.patients.push_back(patient("p2", {{"D:2"}, {"D:3"}}, {0}));
  auto g = build_hypergraph(ds);
  CHECK(g.num_nodes() == 3);
  CHECK(g.num_edges() == 2);
  CHECK(g.edge_members[0].size() == 2);
  CHECK(g.edge_members[1].size() == 2);
  int shared = g.node_of.at("D:2");
  CHECK(g.node_edges[shared].size() == 2);
}

TEST_CASE("build_hypergraph: code order does not matter") {
  Dataset a, b;
  a.patients.push_back(patient("p1", {{"D:1", "D:2", "D:3"}}, {1}));
  b.patients.push_back(patient("p1", {{"D:3", "D:1", "D:2"}}, {1}));
  auto ga = build_hypergraph(a), gb = build_hypergraph(b);
  CHECK(ga.node_codes == gb.node_codes);
  CHECK(ga.edge_members == gb.edge_members);
}

TEST_CASE("build_hypergraph: patient with no codes is an error") {
  Dataset ds;
  PatientRecord p;
  p.patient_id = "px";
  p.labels = {0};
  ds.patients.push_back(p);
  CHECK_THROWS_WITH_AS(build_hypergraph(ds), doctest::Contains("px"), DataError);
}

TEST_CASE("hygt_layer: shapes preserved and member order irrelevant") {
  Dataset ds;
  ds.patients.push_back(patient("p1", {{"D:1", "D:2"}}, {1}));
  ds.patients.push_back(patient("p2", {{"D:2", "D:3"}}, {0}));
  auto g = build_hypergraph(ds);
  std::mt19937_64 rng(11);
  AttnBlockParams<double> block;
  block.init("b", 8, 2, 8, rng, 0.3);
  Tape<double> tape;
  auto x = tape.constant(Tensor<double>::randn(3, 8, rng, 0.5));
  auto e = tape.constant(Tensor<double>::randn(2, 8, rng, 0.5));
  auto [x1, e1] = hygt_layer(tape, x, e, g, block);
  auto xv = tape.val(x1), ev = tape.val(e1);
  CHECK(xv.rows == 3);
  CHECK(xv.cols == 8);
  CHECK(ev.rows == 2);
  CHECK(ev.cols == 8);

  // same graph with members listed in reverse produces the same edge update
  Hypergraph g2 = g;
  for (auto& m : g2.edge_members) std::reverse(m.begin(), m.end());
  auto [x2, e2] = hygt_layer(tape, x, e, g2, block);
  auto ev2 = tape.val(e2);
  for (std::size_t i = 0; i < ev.data.size(); ++i)
    CHECK(ev.data[i] == doctest::Approx(ev2.data[i]).epsilon(1e-6));
  auto xv2 = tape.val(x2);
  for (std::size_t i = 0; i < xv.data.size(); ++i)
    CHECK(std::isfinite(xv2.data[i]));
}

TEST_CASE("hygt_layer: single node, single edge, gradient check") {
  Dataset ds;
  ds.patients.push_back(patient("solo", {{"D:1"}}, {1}));
  auto g = build_hypergraph(ds);
  std::mt19937_64 rng(21);
  AttnBlockParams<double> block;
  block.init("b", 4, 2, 4, rng, 0.3);
  Parameter<double> x{"x", Tensor<double>::randn(1, 4, rng, 0.5)};
  Parameter<double> e{"e", Tensor<double>::randn(1, 4, rng, 0.5)};
  std::vector<Parameter<double>*> params{&x, &e};
  block.collect(params);
  auto res = check_gradients(params, [&](Tape<double>& t) {
    auto [xn, en] = hygt_layer(t, t.param(x), t.param(e), g, block);
    return t.mean_all(t.add(xn, en));
  });
  INFO(res.worst);
  CHECK(res.max_rel_err < 1e-4);
}

TEST_CASE("local model: probabilities in range, incidence determines output") {
  Dataset ds;
  ds.patients.push_back(patient("a", {{"D:1", "D:2"}}, {1, 0}));
  ds.patients.push_back(patient("b", {{"D:2"}, {"D:1"}}, {0, 1}));  // same code set as a
  ds.patients.push_back(patient("c", {{"D:3"}}, {0, 0}));
  auto g = build_hypergraph(ds);
  HygtParams<float> p;
  p.init(g, 2, tiny_hygt());
  auto ya = local_forward(g, p, "a");
  auto yb = local_forward(g, p, "b");
  auto yc = local_forward(g, p, "c");
  for (float v : ya) {
    CHECK(v > 0.f);
    CHECK(v < 1.f);
  }
  CHECK(ya == yb);
  CHECK(ya != yc);
  CHECK_THROWS_AS(local_forward(g, p, "nobody"), DataError);
}

TEST_CASE("local model: end-to-end gradient check on 3-node 2-edge graph") {
  Dataset ds;
  ds.patients.push_back(patient("a", {{"D:1", "D:2"}}, {1}));
  ds.patients.push_back(patient("b", {{"D:2", "D:3"}}, {0}));
  auto g = build_hypergraph(ds);
  HygtConfig c;
  c.dim = 4;
  c.heads = 2;
  c.layers = 2;
  c.ffn_hidden = 4;
  c.init_std = 0.3f;
  c.seed = 5;
  HygtParams<double> p;
  p.init(g, 2, c);
  // perturb the zero edge table so its gradient is exercised off the origin
  std::mt19937_64 rng(9);
  p.edge_emb.value = Tensor<double>::randn(2, 4, rng, 0.3);
  std::vector<double> targets{1, 0, 0, 1};
  auto res = check_gradients(p.params(), [&](Tape<double>& t) {
    auto probs = hygt_forward_probs(t, g, p, {0, 1});
    return t.bce_loss(probs, targets);
  });
  INFO(res.worst);
  CHECK(res.max_rel_err < 1e-4);
}

TEST_CASE("local model: overfits a 4-patient toy task") {
  Dataset ds;
  ds.patients.push_back(patient("a", {{"D:1"}}, {1, 0}));
  ds.patients.push_back(patient("b", {{"D:2"}}, {0, 1}));
  ds.patients.push_back(patient("c", {{"D:3"}}, {1, 1}));
  ds.patients.push_back(patient("d", {{"M:1"}}, {0, 0}));
  auto g = build_hypergraph(ds);
  HygtParams<float> p;
  p.init(g, 2, tiny_hygt(7));
  Adam<float> opt(0.02f);
  std::vector<float> targets;
  for (const auto& pr : ds.patients)
    for (auto y : pr.labels) targets.push_back(y ? 1.f : 0.f);
  double loss = 1.0;
  for (int step = 0; step < 500 && loss >= 0.05; ++step) {
    Tape<float> tape;
    auto probs = hygt_forward_probs(tape, g, p, {0, 1, 2, 3});
    auto l = tape.bce_loss(probs, targets);
    loss = tape.val(l).data[0];
    tape.backward(l);
    opt.step(p.params());
  }
  CHECK(loss < 0.05);
}

TEST_CASE("flatten_patient: reversed visit order and fallbacks") {
  TempDir tmp;
  auto vocab = toy_vocab();
  SummaryCache cache(tmp.file("cache.jsonl"));
  TokenizerConfig tok;
  tok.max_len = 32;

  auto p = patient("p1", {{"D:1"}, {"D:2"}}, {1});

  SUBCASE("latest visit first; no summary falls back to the name") {
    auto doc = flatten_patient(p, CodeType::Disease, cache, vocab, "mort", tok);
    CHECK(doc.tokens[0] == kClsToken);
    std::vector<int> want{kClsToken};
    for (std::string w : {"hypertension", "heart", "failure"})
      want.push_back(hash_token(w, tok));
    CHECK(doc.tokens == want);
  }

  SUBCASE("cached summary text is appended after the name") {
    StubClient stub;
    cache.get_or_compute("D:2", "mort", [&] {
      return KnowledgeSummary{"D:2", "mort", "high blood pressure", {}, stub.tag()};
    });
    auto doc = flatten_patient(p, CodeType::Disease, cache, vocab, "mort", tok);
    std::vector<int> want{kClsToken};
    for (std::string w : {"hypertension", "high", "blood", "pressure", "heart", "failure"})
      want.push_back(hash_token(w, tok));
    CHECK(doc.tokens == want);
  }

  SUBCASE("no codes of the kind gives a CLS-only doc") {
    auto doc = flatten_patient(p, CodeType::Procedure, cache, vocab, "mort", tok);
    CHECK(doc.tokens == std::vector<int>{kClsToken});
  }

  SUBCASE("truncated to max_len") {
    TokenizerConfig small = tok;
    small.max_len = 2;
    auto doc = flatten_patient(p, CodeType::Disease, cache, vocab, "mort", small);
    CHECK(doc.tokens.size() == 2);
    CHECK(doc.tokens[0] == kClsToken);
  }

  SUBCASE("deterministic across cache reload") {
    auto before = flatten_patient(p, CodeType::Disease, cache, vocab, "mort", tok);
    SummaryCache reloaded(tmp.file("cache.jsonl"));
    auto after = flatten_patient(p, CodeType::Disease, reloaded, vocab, "mort", tok);
    CHECK(before.tokens == after.tokens);
  }
}

TEST_CASE("augmented model: shared weights, range, bag invariance") {
  TempDir tmp;
  auto vocab = toy_vocab();
  SummaryCache cache(tmp.file("cache.jsonl"));
  auto cfg = tiny_text();
  TextEncoderParams<float> params;
  params.init(2, cfg);

  // the same parameter objects serve all three typed documents
  auto ptrs = params.params();
  CHECK(std::count(ptrs.begin(), ptrs.end(), &params.token_emb) == 1);
  auto p = patient("p1", {{"D:1", "M:1"}, {"D:2", "P:1"}}, {1, 0});
  auto docs = flatten_all(p, cache, vocab, "mort", cfg.tokenizer);
  REQUIRE(docs.size() == 3);
  CHECK(docs[0].kind == CodeType::Disease);
  CHECK(docs[2].kind == CodeType::Procedure);

  Tape<float> tape;
  auto probs = tape.val(aug_forward_probs(tape, params, {docs}));
  REQUIRE(probs.data.size() == 2);
  for (float v : probs.data) {
    CHECK(v > 0.f);
    CHECK(v < 1.f);
  }

  SUBCASE("bag encoder ignores intra-visit code order") {
    auto bag_cfg = cfg;
    bag_cfg.kind = TextEncoderKind::Bag;
    TextEncoderParams<float> bag;
    bag.init(2, bag_cfg);
    auto q = patient("p2", {{"M:1", "D:1"}, {"P:1", "D:2"}}, {1, 0});
    auto docs_p = flatten_all(p, cache, vocab, "mort", bag_cfg.tokenizer);
    auto docs_q = flatten_all(q, cache, vocab, "mort", bag_cfg.tokenizer);
    Tape<float> t2;
    auto yp = t2.val(aug_forward_probs(t2, bag, {docs_p})).data;
    auto yq = t2.val(aug_forward_probs(t2, bag, {docs_q})).data;
    CHECK(yp == yq);
  }
}

TEST_CASE("augmented model: end-to-end gradient check on a tiny doc") {
  TextEncoderConfig small;
  small.dim = 8;
  small.heads = 2;
  small.layers = 1;
  small.ffn_hidden = 8;
  small.init_std = 0.3f;
  small.seed = 12;
  small.tokenizer.vocab_hash_size = 8;
  small.tokenizer.max_len = 4;
  TextEncoderParams<double> params;
  params.init(1, small);
  std::vector<FlattenedDoc> docs{
      {CodeType::Disease, {kClsToken, 3}},
      {CodeType::Medication, {kClsToken, 5}},
      {CodeType::Procedure, {kClsToken}},
  };
  std::vector<double> targets{1};
  auto res = check_gradients(params.params(), [&](Tape<double>& t) {
    auto probs = aug_forward_probs(t, params, {docs});
    return t.bce_loss(probs, targets);
  });
  INFO(res.worst);
  CHECK(res.max_rel_err < 1e-4);
}

TEST_CASE("augmented model: overfits a 4-patient toy task") {
  TempDir tmp;
  auto vocab = toy_vocab();
  SummaryCache cache(tmp.file("cache.jsonl"));
  auto cfg = tiny_text(15);
  TextEncoderParams<float> params;
  params.init(2, cfg);
  Dataset ds;
  ds.patients.push_back(patient("a", {{"D:1"}}, {1, 0}));
  ds.patients.push_back(patient("b", {{"D:2"}}, {0, 1}));
  ds.patients.push_back(patient("c", {{"D:3"}}, {1, 1}));
  ds.patients.push_back(patient("d", {{"M:1"}}, {0, 0}));
  std::vector<std::vector<FlattenedDoc>> docs;
  std::vector<float> targets;
  for (const auto& pr : ds.patients) {
    docs.push_back(flatten_all(pr, cache, vocab, "mort", cfg.tokenizer));
    for (auto y : pr.labels) targets.push_back(y ? 1.f : 0.f);
  }
  Adam<float> opt(0.02f);
  double loss = 1.0;
  for (int step = 0; step < 500 && loss >= 0.05; ++step) {
    Tape<float> tape;
    auto probs = aug_forward_probs(tape, params, docs);
    auto l = tape.bce_loss(probs, targets);
    loss = tape.val(l).data[0];
    tape.backward(l);
    opt.step(params.params());
  }
  CHECK(loss < 0.05);
}
