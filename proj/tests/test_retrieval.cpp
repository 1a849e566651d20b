#include <doctest.h>

#include <cmath>
#include <random>

#include "ramehr/retrieval.hpp"
#include "test_util.hpp"

using namespace ramehr;

namespace {

double cosine(const std::vector<float>& a, const std::vector<float>& b) {
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return dot / std::sqrt(na * nb);
}

// Fixed-vector embedder for constructing exact retrieval cases.
class TableEmbedder : public Embedder {
 public:
  TableEmbedder(int dim, std::unordered_map<std::string, std::vector<float>> table)
      : dim_(dim), table_(std::move(table)) {}
  int dim() const override { return dim_; }
  std::vector<float> encode_query(const std::string& t) const override { return table_.at(t); }
  std::vector<float> encode_passage(const std::string& t) const override { return table_.at(t); }

 private:
  int dim_;
  std::unordered_map<std::string, std::vector<float>> table_;
};

// Brute-force oracle: full sort by (score desc, id asc) over exact dots.
std::vector<Hit> brute_force(const VectorIndex& idx, const std::vector<float>& q, int k) {
  std::vector<Hit> all;
  for (std::size_t r = 0; r < idx.ids.size(); ++r) {
    double dot = 0;
    for (int j = 0; j < idx.dim; ++j) dot += static_cast<double>(idx.matrix[r * idx.dim + j]) * q[j];
    all.push_back({idx.ids[r], static_cast<float>(dot)});
  }
  std::sort(all.begin(), all.end(), [](const Hit& a, const Hit& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.passage_id < b.passage_id;
  });
  if (static_cast<int>(all.size()) > k) all.resize(k);
  return all;
}

}  // namespace

TEST_CASE("hash embedder is deterministic, unit-norm, and similarity-sane") {
  HashEmbedder emb(32, 42);
  auto a = emb.encode_passage("heart failure");
  auto b = emb.encode_passage("heart failure");
  CHECK(a == b);
  CHECK(emb.encode_query("heart failure") == a);

  double n2 = 0;
  for (float v : a) n2 += v * v;
  CHECK(std::abs(std::sqrt(n2) - 1.0) < 1e-6);

  auto typo = emb.encode_passage("heart failur");
  auto other = emb.encode_passage("insulin");
  CHECK(cosine(a, typo) > cosine(a, other));

  auto empty = emb.encode_passage("");
  double ne = 0;
  for (float v : empty) ne += v * v;
  CHECK(std::abs(std::sqrt(ne) - 1.0) < 1e-6);

  CHECK_THROWS_AS(HashEmbedder(4, 0), UsageError);
}

TEST_CASE("build_index shape and determinism") {
  Corpus c;
  c.add({"a", SourceTag::PubMed, "first passage"});
  c.add({"b", SourceTag::PubMed, "second passage"});
  c.add({"c", SourceTag::PubMed, "third passage"});
  HashEmbedder emb(8, 1);
  auto idx = build_index(c, emb);
  CHECK(idx.ids.size() == 3);
  CHECK(idx.dim == 8);
  CHECK(idx.matrix.size() == 24);

  TempDir tmp;
  save_index(idx, tmp.file("i1.bin"), tmp.file("i1.ids"));
  auto idx2 = build_index(c, emb);
  save_index(idx2, tmp.file("i2.bin"), tmp.file("i2.ids"));
  CHECK(slurp(tmp.file("i1.bin")) == slurp(tmp.file("i2.bin")));
  CHECK(slurp(tmp.file("i1.ids")) == slurp(tmp.file("i2.ids")));

  Corpus empty;
  CHECK_THROWS_AS(build_index(empty, emb), DataError);
}

TEST_CASE("index serialization round-trips bit-exactly") {
  Corpus c;
  for (int i = 0; i < 17; ++i)
    c.add({"p" + std::to_string(i), SourceTag::MeSH, "text number " + std::to_string(i)});
  HashEmbedder emb(16, 9);
  auto idx = build_index(c, emb);
  TempDir tmp;
  save_index(idx, tmp.file("x.bin"), tmp.file("x.ids"));
  auto idx2 = load_index(tmp.file("x.bin"), tmp.file("x.ids"));
  CHECK(idx2.dim == idx.dim);
  CHECK(idx2.ids == idx.ids);
  CHECK(idx2.matrix == idx.matrix);
}

TEST_CASE("topk on orthonormal basis vectors") {
  std::unordered_map<std::string, std::vector<float>> table{
      {"P1", {1, 0, 0, 0, 0, 0, 0, 0}},
      {"P2", {0, 1, 0, 0, 0, 0, 0, 0}},
      {"q", {1, 0, 0, 0, 0, 0, 0, 0}},
  };
  TableEmbedder emb(8, table);
  Corpus c;
  c.add({"p1", SourceTag::PubMed, "P1"});
  c.add({"p2", SourceTag::PubMed, "P2"});
  auto idx = build_index(c, emb);
  auto res = topk(idx, emb, "q", 1);
  REQUIRE(res.hits.size() == 1);
  CHECK(res.hits[0].passage_id == "p1");
  CHECK(res.hits[0].score == doctest::Approx(1.0));

  // k larger than the corpus returns everything
  auto res3 = topk(idx, emb, "q", 5);
  CHECK(res3.hits.size() == 2);

  CHECK_THROWS_AS(topk(idx, emb, "q", 0), UsageError);
}

TEST_CASE("topk equals exhaustive oracle on random corpora") {
  std::mt19937_64 rng(123);
  std::uniform_real_distribution<float> unif(-1.f, 1.f);
  for (int trial = 0; trial < 25; ++trial) {
    int n = 1 + static_cast<int>(rng() % 300);
    int dim = 8;
    VectorIndex idx;
    idx.dim = dim;
    for (int i = 0; i < n; ++i) {
      char buf[16];
      std::snprintf(buf, sizeof buf, "p%05d", i);
      idx.ids.push_back(buf);
      for (int j = 0; j < dim; ++j) idx.matrix.push_back(unif(rng));
    }
    std::vector<float> q(dim);
    for (auto& v : q) v = unif(rng);
    int k = 1 + static_cast<int>(rng() % 32);
    auto got = topk_vector(idx, q, k);
    auto want = brute_force(idx, q, k);
    REQUIRE(got.hits.size() == want.size());
    for (std::size_t i = 0; i < want.size(); ++i) {
      CHECK(got.hits[i].passage_id == want[i].passage_id);
      CHECK(got.hits[i].score == want[i].score);
    }
  }
}

TEST_CASE("topk breaks score ties by ascending passage id") {
  VectorIndex idx;
  idx.dim = 2;
  for (const char* id : {"zz", "aa", "mm"}) {
    idx.ids.push_back(id);
    idx.matrix.insert(idx.matrix.end(), {1.f, 0.f});  // identical rows
  }
  auto res = topk_vector(idx, {1.f, 0.f}, 3);
  REQUIRE(res.hits.size() == 3);
  CHECK(res.hits[0].passage_id == "aa");
  CHECK(res.hits[1].passage_id == "mm");
  CHECK(res.hits[2].passage_id == "zz");
}

TEST_CASE("file embedder looks up precomputed vectors") {
  TempDir tmp;
  auto path = tmp.write("emb.jsonl",
      R"({"text":"heart failure","vector":[1.0,0.0]})" "\n"
      R"({"text":"insulin","vector":[0.0,1.0]})" "\n");
  FileEmbedder emb(path);
  CHECK(emb.dim() == 2);
  CHECK(emb.encode_query("insulin") == std::vector<float>{0.f, 1.f});
  CHECK_THROWS_AS(emb.encode_query("unknown"), DataError);
}
