#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "ramehr/common.hpp"
#include "ramehr/corpus.hpp"

namespace ramehr {

// Dual-role text embedder. Both roles return vectors of length dim().
class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual int dim() const = 0;
  virtual std::vector<float> encode_query(const std::string& text) const = 0;
  virtual std::vector<float> encode_passage(const std::string& text) const = 0;
};

// Character-3-gram feature hashing followed by a fixed-seed signed random
// projection, L2-normalized. Query and passage roles share the projection.
// Empty text maps to the uniform unit vector.
class HashEmbedder : public Embedder {
 public:
  HashEmbedder(int dim, std::uint64_t seed);  // dim >= 8
  int dim() const override { return dim_; }
  std::vector<float> encode_query(const std::string& text) const override;
  std::vector<float> encode_passage(const std::string& text) const override;

 private:
  std::vector<float> encode(const std::string& text) const;
  int dim_;
  std::uint64_t seed_;
};

// Looks up precomputed vectors by exact text; JSONL lines {"text":..,"vector":[..]}.
class FileEmbedder : public Embedder {
 public:
  explicit FileEmbedder(const std::string& path);
  int dim() const override { return dim_; }
  std::vector<float> encode_query(const std::string& text) const override;
  std::vector<float> encode_passage(const std::string& text) const override;

 private:
  const std::vector<float>& lookup(const std::string& text) const;
  int dim_ = 0;
  std::unordered_map<std::string, std::vector<float>> table_;
};

struct VectorIndex {
  std::vector<std::string> ids;   // passage ids, one per row
  int dim = 0;
  std::vector<float> matrix;      // row-major, ids.size() * dim
};

struct Hit {
  std::string passage_id;
  float score;
};

struct RetrievalResult {
  std::string query_code;
  std::vector<Hit> hits;  // scores non-increasing; ties by ascending passage id
};

VectorIndex build_index(const Corpus& corpus, const Embedder& emb);

// Exact top-k inner-product scan (f64 accumulation); query text is embedded
// with encode_query. Returns fewer than k hits when the index is smaller.
RetrievalResult topk(const VectorIndex& index, const Embedder& emb,
                     const std::string& query, int k);
RetrievalResult topk_vector(const VectorIndex& index, const std::vector<float>& qvec, int k);

// Binary format: "RAMIDX1" magic, u32 dim, u64 count, then count rows of
// little-endian f32; sibling ids file with one passage id per line.
void save_index(const VectorIndex& index, const std::string& bin_path,
                const std::string& ids_path);
VectorIndex load_index(const std::string& bin_path, const std::string& ids_path);

}  // namespace ramehr
