#include "ramehr/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include <nlohmann/json.hpp>

namespace ramehr {

HashEmbedder::HashEmbedder(int dim, std::uint64_t seed) : dim_(dim), seed_(seed) {
  if (dim < 8) throw UsageError("hash embedder dim must be >= 8");
}

std::vector<float> HashEmbedder::encode(const std::string& text) const {
  std::vector<double> acc(dim_, 0.0);
  const std::string padded = " " + text + " ";
  bool any = false;
  for (std::size_t i = 0; i + 3 <= padded.size(); ++i) {
    any = true;
    std::uint64_t g = fnv1a64(padded.substr(i, 3), seed_);
    // signed random projection: one +/-1 per output coordinate, derived from
    // the 3-gram hash so no projection matrix is materialized
    for (int j = 0; j < dim_; ++j) {
      std::uint64_t bit = splitmix64(g + 0x51ed270b0903cd3fULL * static_cast<std::uint64_t>(j));
      acc[j] += (bit & 1) ? 1.0 : -1.0;
    }
  }
  std::vector<float> out(dim_);
  if (!any) {
    float u = 1.0f / std::sqrt(static_cast<float>(dim_));
    std::fill(out.begin(), out.end(), u);
    return out;
  }
  double norm2 = 0.0;
  for (double v : acc) norm2 += v * v;
  if (norm2 == 0.0) {
    float u = 1.0f / std::sqrt(static_cast<float>(dim_));
    std::fill(out.begin(), out.end(), u);
    return out;
  }
  double inv = 1.0 / std::sqrt(norm2);
  for (int j = 0; j < dim_; ++j) out[j] = static_cast<float>(acc[j] * inv);
  return out;
}

std::vector<float> HashEmbedder::encode_query(const std::string& text) const { return encode(text); }
std::vector<float> HashEmbedder::encode_passage(const std::string& text) const { return encode(text); }

FileEmbedder::FileEmbedder(const std::string& path) {
  using nlohmann::json;
  auto lines = read_lines(path);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    json j;
    try {
      j = json::parse(lines[i]);
      auto vec = j.at("vector").get<std::vector<float>>();
      if (dim_ == 0) dim_ = static_cast<int>(vec.size());
      if (static_cast<int>(vec.size()) != dim_)
        throw DataError("inconsistent embedding dimension");
      table_[j.at("text").get<std::string>()] = std::move(vec);
    } catch (const json::exception& e) {
      throw DataError(path + ":" + std::to_string(i + 1) + ": " + e.what());
    }
  }
  if (table_.empty()) throw DataError("embedding file is empty: " + path);
}

const std::vector<float>& FileEmbedder::lookup(const std::string& text) const {
  auto it = table_.find(text);
  if (it == table_.end()) throw DataError("no precomputed embedding for text: " + text);
  return it->second;
}

std::vector<float> FileEmbedder::encode_query(const std::string& text) const { return lookup(text); }
std::vector<float> FileEmbedder::encode_passage(const std::string& text) const { return lookup(text); }

VectorIndex build_index(const Corpus& corpus, const Embedder& emb) {
  if (corpus.size() == 0) throw DataError("cannot build an index over an empty corpus");
  VectorIndex idx;
  idx.dim = emb.dim();
  idx.ids.reserve(corpus.size());
  idx.matrix.reserve(corpus.size() * static_cast<std::size_t>(idx.dim));
  for (const auto& p : corpus.passages()) {
    auto v = emb.encode_passage(p.text);
    for (float x : v) {
      if (!std::isfinite(x)) throw NumericError("non-finite embedding for passage " + p.id);
    }
    idx.ids.push_back(p.id);
    idx.matrix.insert(idx.matrix.end(), v.begin(), v.end());
  }
  return idx;
}

RetrievalResult topk_vector(const VectorIndex& index, const std::vector<float>& qvec, int k) {
  if (k <= 0) throw UsageError("k must be >= 1");
  if (static_cast<int>(qvec.size()) != index.dim)
    throw DataError("query embedding dimension mismatch");
  const std::size_t n = index.ids.size();
  std::vector<std::pair<float, std::size_t>> scored(n);
  for (std::size_t r = 0; r < n; ++r) {
    const float* row = index.matrix.data() + r * static_cast<std::size_t>(index.dim);
    double dot = 0.0;  // f64 accumulation for reproducible scores
    for (int j = 0; j < index.dim; ++j) dot += static_cast<double>(row[j]) * qvec[j];
    scored[r] = {static_cast<float>(dot), r};
  }
  auto cmp = [&](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return index.ids[a.second] < index.ids[b.second];
  };
  std::size_t kk = std::min<std::size_t>(static_cast<std::size_t>(k), n);
  std::partial_sort(scored.begin(), scored.begin() + kk, scored.end(), cmp);
  RetrievalResult res;
  res.hits.reserve(kk);
  for (std::size_t i = 0; i < kk; ++i)
    res.hits.push_back({index.ids[scored[i].second], scored[i].first});
  return res;
}

RetrievalResult topk(const VectorIndex& index, const Embedder& emb,
                     const std::string& query, int k) {
  auto res = topk_vector(index, emb.encode_query(query), k);
  res.query_code = query;
  return res;
}

namespace {
constexpr char kIndexMagic[7] = {'R', 'A', 'M', 'I', 'D', 'X', '1'};

template <class T>
void write_le(std::ofstream& out, T v) {
  // assumes little-endian host (x86/arm64); format is defined little-endian
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}
template <class T>
T read_le(std::ifstream& in) {
  T v;
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  return v;
}
}  // namespace

void save_index(const VectorIndex& index, const std::string& bin_path,
                const std::string& ids_path) {
  std::ofstream out(bin_path, std::ios::binary);
  if (!out) throw DataError("cannot write file: " + bin_path);
  out.write(kIndexMagic, sizeof kIndexMagic);
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(index.dim));
  write_le<std::uint64_t>(out, static_cast<std::uint64_t>(index.ids.size()));
  out.write(reinterpret_cast<const char*>(index.matrix.data()),
            static_cast<std::streamsize>(index.matrix.size() * sizeof(float)));
  if (!out) throw DataError("failed writing index: " + bin_path);
  std::ofstream ids(ids_path);
  if (!ids) throw DataError("cannot write file: " + ids_path);
  for (const auto& id : index.ids) ids << id << "\n";
}

VectorIndex load_index(const std::string& bin_path, const std::string& ids_path) {
  std::ifstream in(bin_path, std::ios::binary);
  if (!in) throw DataError("cannot open file: " + bin_path);
  char magic[7];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kIndexMagic, sizeof magic) != 0)
    throw DataError("bad index magic in " + bin_path);
  VectorIndex idx;
  idx.dim = static_cast<int>(read_le<std::uint32_t>(in));
  auto count = read_le<std::uint64_t>(in);
  idx.matrix.resize(count * static_cast<std::uint64_t>(idx.dim));
  in.read(reinterpret_cast<char*>(idx.matrix.data()),
          static_cast<std::streamsize>(idx.matrix.size() * sizeof(float)));
  if (!in) throw DataError("truncated index file: " + bin_path);
  idx.ids = read_lines(ids_path);
  while (!idx.ids.empty() && idx.ids.back().empty()) idx.ids.pop_back();
  if (idx.ids.size() != count)
    throw DataError("ids file row count does not match index: " + ids_path);
  return idx;
}

}  // namespace ramehr
