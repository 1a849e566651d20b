#pragma once

#include <string>
#include <vector>

#include "ramehr/attention.hpp"
#include "ramehr/ehr.hpp"
#include "ramehr/summarize.hpp"

namespace ramehr {

struct TokenizerConfig {
  int vocab_hash_size = 1 << 16;  // id 0 reserved for CLS
  std::uint64_t seed = 1234;
  int max_len = 512;
};

constexpr int kClsToken = 0;

int hash_token(const std::string& word, const TokenizerConfig& cfg);
std::vector<int> tokenize(const std::string& text, const TokenizerConfig& cfg);

struct FlattenedDoc {
  CodeType kind;
  std::vector<int> tokens;  // tokens[0] == kClsToken, length <= max_len
};

// Visits in reversed sequential order (most recent first); within a visit,
// codes of the requested kind in ascending code-id order, each contributing
// "name summary". A code with no cached summary falls back to its name alone.
FlattenedDoc flatten_patient(const PatientRecord& p, CodeType kind,
                             const SummaryCache& summaries, const Vocabulary& vocab,
                             const std::string& task_name, const TokenizerConfig& cfg);

enum class TextEncoderKind { Transformer, Bag };

struct TextEncoderConfig {
  int dim = 64;
  int heads = 4;
  int layers = 2;
  int ffn_hidden = 64;
  float init_std = 0.02f;
  TokenizerConfig tokenizer;
  TextEncoderKind kind = TextEncoderKind::Transformer;
  std::uint64_t seed = 0;
};

template <class T>
struct TextEncoderParams {
  TextEncoderConfig cfg;
  Parameter<T> token_emb, pos_emb;
  std::vector<AttnBlockParams<T>> blocks;  // weights shared across the 3 code types
  ReadoutParams<T> readout;                // over the 3 concatenated CLS vectors

  void init(int num_labels, const TextEncoderConfig& c) {
    cfg = c;
    std::mt19937_64 rng(splitmix64(c.seed ^ 0x9d2c5680ULL));
    T std = static_cast<T>(c.init_std);
    token_emb = {"aug.token_emb", Tensor<T>::randn(c.tokenizer.vocab_hash_size, c.dim, rng, std)};
    pos_emb = {"aug.pos_emb", Tensor<T>::randn(c.tokenizer.max_len, c.dim, rng, std)};
    blocks.resize(c.layers);
    for (int l = 0; l < c.layers; ++l)
      blocks[l].init("aug.layer" + std::to_string(l), c.dim, c.heads, c.ffn_hidden, rng, std);
    readout.init("aug.readout", 3 * c.dim, c.dim, num_labels, rng, std);
  }

  std::vector<Parameter<T>*> params() {
    std::vector<Parameter<T>*> out{&token_emb, &pos_emb};
    for (auto& b : blocks) b.collect(out);
    readout.collect(out);
    return out;
  }
};

// Per-tape leaf refs for the big embedding tables, created once per forward
// batch so the tables are not copied per document.
template <class T>
struct AugTapeRefs {
  typename Tape<T>::Ref token_emb, pos_emb;
  static AugTapeRefs make(Tape<T>& tape, TextEncoderParams<T>& p) {
    return {tape.param(p.token_emb), tape.param(p.pos_emb)};
  }
};

template <class T>
typename Tape<T>::Ref encode_doc(Tape<T>& tape, TextEncoderParams<T>& p,
                                 const AugTapeRefs<T>& refs, const FlattenedDoc& doc) {
  using Ref = typename Tape<T>::Ref;
  if (doc.tokens.empty() || doc.tokens[0] != kClsToken)
    throw DataError("flattened document must start with CLS");
  Ref emb = tape.gather_rows(refs.token_emb, doc.tokens);
  if (p.cfg.kind == TextEncoderKind::Bag) return tape.mean_rows(emb);
  Ref pos = tape.slice_rows(refs.pos_emb, 0, static_cast<int>(doc.tokens.size()));
  Ref x = tape.add(emb, pos);
  for (auto& block : p.blocks) x = self_att_block(tape, x, block);
  return tape.slice_rows(x, 0, 1);  // CLS position
}

// docs must be the (disease, medication, procedure) triple for one patient;
// the same encoder parameters are applied to all three.
template <class T>
typename Tape<T>::Ref aug_forward_probs_one(Tape<T>& tape, TextEncoderParams<T>& p,
                                            const AugTapeRefs<T>& refs,
                                            const std::vector<FlattenedDoc>& docs) {
  if (docs.size() != 3) throw DataError("expected one document per code type");
  std::vector<typename Tape<T>::Ref> cls;
  for (const auto& d : docs) cls.push_back(encode_doc(tape, p, refs, d));
  auto h = tape.concat_cols(cls);
  return tape.sigmoid(p.readout.apply(tape, h));
}

// Batched: one row of probabilities per patient.
template <class T>
typename Tape<T>::Ref aug_forward_probs(Tape<T>& tape, TextEncoderParams<T>& p,
                                        const std::vector<std::vector<FlattenedDoc>>& docs) {
  AugTapeRefs<T> refs = AugTapeRefs<T>::make(tape, p);
  std::vector<typename Tape<T>::Ref> rows;
  for (const auto& d : docs) rows.push_back(aug_forward_probs_one(tape, p, refs, d));
  return tape.concat_rows(rows);
}

// Flatten all three typed documents for a patient.
std::vector<FlattenedDoc> flatten_all(const PatientRecord& p, const SummaryCache& summaries,
                                      const Vocabulary& vocab, const std::string& task_name,
                                      const TokenizerConfig& cfg);

}  // namespace ramehr
