#pragma once

#include <random>
#include <string>
#include <vector>

#include "ramehr/tensor.hpp"

namespace ramehr {

// One pre-norm-free transformer block:
//   Y   = LayerNorm(S + concat_heads(SA_i(S)))
//   out = LayerNorm(Y + FFN(Y)),  FFN = two-layer MLP with ReLU
// with SA_i the scaled dot-product attention over h heads of width d/h.
template <class T>
struct AttnBlockParams {
  int dim = 0, heads = 0, ffn_hidden = 0;
  // Head i's projections live in columns [i*dim/heads, (i+1)*dim/heads).
  Parameter<T> wq, wk, wv;
  Parameter<T> ffn_w1, ffn_b1, ffn_w2, ffn_b2;
  Parameter<T> ln1_gain, ln1_bias, ln2_gain, ln2_bias;

  void init(const std::string& prefix, int d, int h, int f, std::mt19937_64& rng, T init_std) {
    if (h < 1 || d % h != 0) throw UsageError("model dim must be divisible by heads");
    dim = d;
    heads = h;
    ffn_hidden = f;
    wq = {prefix + ".wq", Tensor<T>::randn(d, d, rng, init_std)};
    wk = {prefix + ".wk", Tensor<T>::randn(d, d, rng, init_std)};
    wv = {prefix + ".wv", Tensor<T>::randn(d, d, rng, init_std)};
    ffn_w1 = {prefix + ".ffn_w1", Tensor<T>::randn(d, f, rng, init_std)};
    ffn_b1 = {prefix + ".ffn_b1", Tensor<T>::zeros(1, f)};
    ffn_w2 = {prefix + ".ffn_w2", Tensor<T>::randn(f, d, rng, init_std)};
    ffn_b2 = {prefix + ".ffn_b2", Tensor<T>::zeros(1, d)};
    ln1_gain = {prefix + ".ln1_gain", Tensor<T>::full(1, d, T(1))};
    ln1_bias = {prefix + ".ln1_bias", Tensor<T>::zeros(1, d)};
    ln2_gain = {prefix + ".ln2_gain", Tensor<T>::full(1, d, T(1))};
    ln2_bias = {prefix + ".ln2_bias", Tensor<T>::zeros(1, d)};
  }

  void collect(std::vector<Parameter<T>*>& out) {
    for (auto* p : {&wq, &wk, &wv, &ffn_w1, &ffn_b1, &ffn_w2, &ffn_b2, &ln1_gain, &ln1_bias,
                    &ln2_gain, &ln2_bias})
      out.push_back(p);
  }
};

template <class T>
typename Tape<T>::Ref self_att_block(Tape<T>& tape, typename Tape<T>::Ref s,
                                     AttnBlockParams<T>& p) {
  using Ref = typename Tape<T>::Ref;
  Ref multi = tape.attention(s, tape.param(p.wq), tape.param(p.wk), tape.param(p.wv), p.heads);
  Ref y = tape.layer_norm(tape.add(s, multi), tape.param(p.ln1_gain), tape.param(p.ln1_bias),
                          static_cast<T>(1e-5));
  Ref h = tape.relu(tape.add_bias(tape.matmul(y, tape.param(p.ffn_w1)), tape.param(p.ffn_b1)));
  Ref ffn = tape.add_bias(tape.matmul(h, tape.param(p.ffn_w2)), tape.param(p.ffn_b2));
  return tape.layer_norm(tape.add(y, ffn), tape.param(p.ln2_gain), tape.param(p.ln2_bias),
                         static_cast<T>(1e-5));
}

// Readout MLP shared by both models: relu(x*w1 + b1)*w2 + b2.
template <class T>
struct ReadoutParams {
  Parameter<T> w1, b1, w2, b2;
  void init(const std::string& prefix, int in_dim, int hidden, int out_dim,
            std::mt19937_64& rng, T init_std) {
    w1 = {prefix + ".w1", Tensor<T>::randn(in_dim, hidden, rng, init_std)};
    b1 = {prefix + ".b1", Tensor<T>::zeros(1, hidden)};
    w2 = {prefix + ".w2", Tensor<T>::randn(hidden, out_dim, rng, init_std)};
    b2 = {prefix + ".b2", Tensor<T>::zeros(1, out_dim)};
  }
  void collect(std::vector<Parameter<T>*>& out) {
    for (auto* p : {&w1, &b1, &w2, &b2}) out.push_back(p);
  }
  typename Tape<T>::Ref apply(Tape<T>& tape, typename Tape<T>::Ref x) {
    auto h = tape.relu(tape.add_bias(tape.matmul(x, tape.param(w1)), tape.param(b1)));
    return tape.add_bias(tape.matmul(h, tape.param(w2)), tape.param(b2));
  }
};

}  // namespace ramehr
