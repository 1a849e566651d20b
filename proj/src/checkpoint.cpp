#include <cstring>
#include <fstream>

#include "ramehr/tensor.hpp"

namespace ramehr {

namespace {
constexpr char kCkptMagic[8] = {'R', 'A', 'M', 'C', 'K', 'P', 'T', '1'};

void write_u32(std::ofstream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}
std::uint32_t read_u32(std::ifstream& in) {
  std::uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  return v;
}
}  // namespace

void save_checkpoint(const std::string& path, const std::vector<const Parameter<float>*>& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint: " + path);
  out.write(kCkptMagic, sizeof kCkptMagic);
  write_u32(out, static_cast<std::uint32_t>(params.size()));
  for (const auto* p : params) {
    write_u32(out, static_cast<std::uint32_t>(p->name.size()));
    out.write(p->name.data(), static_cast<std::streamsize>(p->name.size()));
    write_u32(out, static_cast<std::uint32_t>(p->value.rows));
    write_u32(out, static_cast<std::uint32_t>(p->value.cols));
    out.write(reinterpret_cast<const char*>(p->value.data.data()),
              static_cast<std::streamsize>(p->value.numel() * sizeof(float)));
  }
  if (!out) throw DataError("failed writing checkpoint: " + path);
}

void load_checkpoint(const std::string& path, const std::vector<Parameter<float>*>& params) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint: " + path);
  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kCkptMagic, sizeof magic) != 0)
    throw DataError("bad checkpoint magic in " + path);
  std::uint32_t count = read_u32(in);
  std::unordered_map<std::string, Parameter<float>*> by_name;
  for (auto* p : params) by_name[p->name] = p;
  std::size_t matched = 0;
  for (std::uint32_t i = 0; i < count; ++i) {
    std::uint32_t name_len = read_u32(in);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    std::uint32_t rows = read_u32(in), cols = read_u32(in);
    std::vector<float> data(static_cast<std::size_t>(rows) * cols);
    in.read(reinterpret_cast<char*>(data.data()),
            static_cast<std::streamsize>(data.size() * sizeof(float)));
    if (!in) throw DataError("truncated checkpoint: " + path);
    auto it = by_name.find(name);
    if (it == by_name.end()) throw DataError("checkpoint tensor not expected: " + name);
    Parameter<float>* p = it->second;
    if (p->value.rows != static_cast<int>(rows) || p->value.cols != static_cast<int>(cols))
      throw DataError("checkpoint tensor shape mismatch for " + name);
    p->value.data = std::move(data);
    ++matched;
  }
  if (matched != params.size())
    throw DataError("checkpoint is missing " + std::to_string(params.size() - matched) +
                    " expected tensors: " + path);
}

}  // namespace ramehr
