#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "ramehr/common.hpp"

namespace ramehr {

// Rank-2 row-major tensor; scalars are [1,1], vectors [1,n].
template <class T>
struct Tensor {
  int rows = 0, cols = 0;
  std::vector<T> data;

  Tensor() = default;
  Tensor(int r, int c) : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, T(0)) {}
  Tensor(int r, int c, std::vector<T> d) : rows(r), cols(c), data(std::move(d)) {
    if (data.size() != static_cast<std::size_t>(r) * c)
      throw NumericError("tensor data length does not match shape");
  }

  static Tensor zeros(int r, int c) { return Tensor(r, c); }
  static Tensor full(int r, int c, T v) {
    Tensor t(r, c);
    std::fill(t.data.begin(), t.data.end(), v);
    return t;
  }
  template <class Rng>
  static Tensor randn(int r, int c, Rng& rng, T stddev) {
    Tensor t(r, c);
    std::normal_distribution<double> dist(0.0, static_cast<double>(stddev));
    for (auto& v : t.data) v = static_cast<T>(dist(rng));
    return t;
  }

  std::size_t numel() const { return data.size(); }
  T& at(int i, int j) { return data[static_cast<std::size_t>(i) * cols + j]; }
  T at(int i, int j) const { return data[static_cast<std::size_t>(i) * cols + j]; }
  bool same_shape(const Tensor& o) const { return rows == o.rows && cols == o.cols; }
};

template <class T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;  // empty until a backward pass touches it

  Parameter() = default;
  Parameter(std::string n, Tensor<T> v) : name(std::move(n)), value(std::move(v)) {}
  void zero_grad() { grad = Tensor<T>(); }
};

namespace detail {
template <class T>
void check_finite(const Tensor<T>& t, const char* op) {
  for (T v : t.data) {
    if (!std::isfinite(static_cast<double>(v)))
      throw NumericError(std::string("non-finite value produced by op ") + op);
  }
}

// C += A*B with f64 accumulation. ta/tb transpose the respective operand.
template <class T>
void matmul_acc(const Tensor<T>& a, bool ta, const Tensor<T>& b, bool tb, Tensor<T>& c) {
  int m = ta ? a.cols : a.rows;
  int k = ta ? a.rows : a.cols;
  int kb = tb ? b.cols : b.rows;
  int n = tb ? b.rows : b.cols;
  if (k != kb) throw NumericError("matmul inner dimension mismatch");
  if (c.rows != m || c.cols != n) throw NumericError("matmul output shape mismatch");
  std::vector<double> acc(n);
  std::vector<T> arow_buf(ta ? k : 0);
  for (int i = 0; i < m; ++i) {
    const T* arow;
    if (ta) {
      for (int p = 0; p < k; ++p) arow_buf[p] = a.at(p, i);
      arow = arow_buf.data();
    } else {
      arow = a.data.data() + static_cast<std::size_t>(i) * a.cols;
    }
    std::fill(acc.begin(), acc.end(), 0.0);
    if (!tb) {
      for (int p = 0; p < k; ++p) {
        const double av = static_cast<double>(arow[p]);
        const T* brow = b.data.data() + static_cast<std::size_t>(p) * b.cols;
        for (int j = 0; j < n; ++j) acc[j] += av * static_cast<double>(brow[j]);
      }
    } else {
      for (int j = 0; j < n; ++j) {
        const T* brow = b.data.data() + static_cast<std::size_t>(j) * b.cols;
        double s = 0.0;
        for (int p = 0; p < k; ++p)
          s += static_cast<double>(arow[p]) * static_cast<double>(brow[p]);
        acc[j] = s;
      }
    }
    T* crow = c.data.data() + static_cast<std::size_t>(i) * c.cols;
    for (int j = 0; j < n; ++j) crow[j] += static_cast<T>(acc[j]);
  }
}
}  // namespace detail

// Reverse-mode tape. Ops append nodes in topological order; backward replays
// them once in reverse and is an error to call twice without a new forward.
template <class T>
class Tape {
 public:
  using Ref = int;

  Ref constant(Tensor<T> value) { return push(std::move(value), false, nullptr); }

  Ref param(Parameter<T>& p) {
    Parameter<T>* pp = &p;
    Ref r = push(p.value, true, nullptr);
    nodes_[r].back = [this, r, pp]() {
      if (pp->grad.numel() == 0) pp->grad = Tensor<T>::zeros(pp->value.rows, pp->value.cols);
      const Tensor<T>& g = nodes_[r].grad;
      for (std::size_t i = 0; i < g.numel(); ++i) pp->grad.data[i] += g.data[i];
    };
    return r;
  }

  const Tensor<T>& val(Ref r) const { return nodes_[r].value; }
  const Tensor<T>& grad(Ref r) const { return nodes_[r].grad; }

  Ref matmul(Ref a, Ref b) { return matmul_impl(a, false, b, false, "matmul"); }
  // a * b^T, used for attention scores
  Ref matmul_nt(Ref a, Ref b) { return matmul_impl(a, false, b, true, "matmul_nt"); }

  Ref add(Ref a, Ref b) {
    const auto& av = val(a);
    const auto& bv = val(b);
    if (!av.same_shape(bv)) throw NumericError("add shape mismatch");
    Tensor<T> out = av;
    for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] += bv.data[i];
    Ref r = make(std::move(out), {a, b}, "add");
    set_back(r, [this, r, a, b]() {
      accumulate(a, nodes_[r].grad);
      accumulate(b, nodes_[r].grad);
    });
    return r;
  }

  // a[m,n] + bias[1,n] broadcast over rows
  Ref add_bias(Ref a, Ref b) {
    const auto& av = val(a);
    const auto& bv = val(b);
    if (bv.rows != 1 || bv.cols != av.cols) throw NumericError("add_bias shape mismatch");
    Tensor<T> out = av;
    for (int i = 0; i < av.rows; ++i)
      for (int j = 0; j < av.cols; ++j) out.at(i, j) += bv.at(0, j);
    Ref r = make(std::move(out), {a, b}, "add_bias");
    set_back(r, [this, r, a, b]() {
      const auto& g = nodes_[r].grad;
      accumulate(a, g);
      Tensor<T> gb = Tensor<T>::zeros(1, g.cols);
      for (int j = 0; j < g.cols; ++j) {
        double s = 0.0;
        for (int i = 0; i < g.rows; ++i) s += static_cast<double>(g.at(i, j));
        gb.at(0, j) = static_cast<T>(s);
      }
      accumulate(b, gb);
    });
    return r;
  }

  Ref mul(Ref a, Ref b) {
    const auto& av = val(a);
    const auto& bv = val(b);
    if (!av.same_shape(bv)) throw NumericError("mul shape mismatch");
    Tensor<T> out = av;
    for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] *= bv.data[i];
    Ref r = make(std::move(out), {a, b}, "mul");
    set_back(r, [this, r, a, b]() {
      const auto& g = nodes_[r].grad;
      Tensor<T> ga = g, gb = g;
      for (std::size_t i = 0; i < g.numel(); ++i) {
        ga.data[i] = g.data[i] * val(b).data[i];
        gb.data[i] = g.data[i] * val(a).data[i];
      }
      accumulate(a, ga);
      accumulate(b, gb);
    });
    return r;
  }

  Ref scale(Ref a, T c) {
    Tensor<T> out = val(a);
    for (auto& v : out.data) v *= c;
    Ref r = make(std::move(out), {a}, "scale");
    set_back(r, [this, r, a, c]() {
      Tensor<T> g = nodes_[r].grad;
      for (auto& v : g.data) v *= c;
      accumulate(a, g);
    });
    return r;
  }

  Ref relu(Ref a) {
    Tensor<T> out = val(a);
    for (auto& v : out.data) v = v > T(0) ? v : T(0);
    Ref r = make(std::move(out), {a}, "relu");
    set_back(r, [this, r, a]() {
      Tensor<T> g = nodes_[r].grad;
      const auto& x = val(a);
      for (std::size_t i = 0; i < g.numel(); ++i)
        if (x.data[i] <= T(0)) g.data[i] = T(0);
      accumulate(a, g);
    });
    return r;
  }

  Ref sigmoid(Ref a) {
    Tensor<T> out = val(a);
    for (auto& v : out.data) v = static_cast<T>(1.0 / (1.0 + std::exp(-static_cast<double>(v))));
    Ref r = make(std::move(out), {a}, "sigmoid");
    set_back(r, [this, r, a]() {
      Tensor<T> g = nodes_[r].grad;
      const auto& s = nodes_[r].value;
      for (std::size_t i = 0; i < g.numel(); ++i)
        g.data[i] *= s.data[i] * (T(1) - s.data[i]);
      accumulate(a, g);
    });
    return r;
  }

  Ref softmax_rows(Ref a) {
    const auto& x = val(a);
    Tensor<T> out(x.rows, x.cols);
    for (int i = 0; i < x.rows; ++i) {
      double mx = -1e300;
      for (int j = 0; j < x.cols; ++j) mx = std::max(mx, static_cast<double>(x.at(i, j)));
      double sum = 0.0;
      for (int j = 0; j < x.cols; ++j) {
        double e = std::exp(static_cast<double>(x.at(i, j)) - mx);
        out.at(i, j) = static_cast<T>(e);
        sum += e;
      }
      for (int j = 0; j < x.cols; ++j) out.at(i, j) = static_cast<T>(out.at(i, j) / sum);
    }
    Ref r = make(std::move(out), {a}, "softmax_rows");
    set_back(r, [this, r, a]() {
      const auto& g = nodes_[r].grad;
      const auto& y = nodes_[r].value;
      Tensor<T> gx(g.rows, g.cols);
      for (int i = 0; i < g.rows; ++i) {
        double dot = 0.0;
        for (int j = 0; j < g.cols; ++j)
          dot += static_cast<double>(g.at(i, j)) * static_cast<double>(y.at(i, j));
        for (int j = 0; j < g.cols; ++j)
          gx.at(i, j) = static_cast<T>(static_cast<double>(y.at(i, j)) *
                                       (static_cast<double>(g.at(i, j)) - dot));
      }
      accumulate(a, gx);
    });
    return r;
  }

  // Per-row standardization (population variance, f64) then affine.
  Ref layer_norm(Ref x, Ref gain, Ref bias, T eps) {
    if (eps <= T(0)) throw NumericError("layer_norm eps must be positive");
    const auto& xv = val(x);
    const auto& gv = val(gain);
    const auto& bv = val(bias);
    if (gv.rows != 1 || gv.cols != xv.cols || bv.rows != 1 || bv.cols != xv.cols)
      throw NumericError("layer_norm gain/bias shape mismatch");
    int n = xv.cols;
    Tensor<T> out(xv.rows, n), xhat(xv.rows, n);
    std::vector<double> inv_std(xv.rows);
    for (int i = 0; i < xv.rows; ++i) {
      double mu = 0.0;
      for (int j = 0; j < n; ++j) mu += static_cast<double>(xv.at(i, j));
      mu /= n;
      double var = 0.0;
      for (int j = 0; j < n; ++j) {
        double d = static_cast<double>(xv.at(i, j)) - mu;
        var += d * d;
      }
      var /= n;
      double istd = 1.0 / std::sqrt(var + static_cast<double>(eps));
      inv_std[i] = istd;
      for (int j = 0; j < n; ++j) {
        double h = (static_cast<double>(xv.at(i, j)) - mu) * istd;
        xhat.at(i, j) = static_cast<T>(h);
        out.at(i, j) = static_cast<T>(h * static_cast<double>(gv.at(0, j)) +
                                      static_cast<double>(bv.at(0, j)));
      }
    }
    Ref r = make(std::move(out), {x, gain, bias}, "layer_norm");
    auto xhat_s = std::make_shared<Tensor<T>>(std::move(xhat));
    auto istd_s = std::make_shared<std::vector<double>>(std::move(inv_std));
    set_back(r, [this, r, x, gain, bias, xhat_s, istd_s]() {
      const auto& g = nodes_[r].grad;
      const auto& gv = val(gain);
      int n = g.cols;
      Tensor<T> ggain = Tensor<T>::zeros(1, n), gbias = Tensor<T>::zeros(1, n);
      Tensor<T> gx(g.rows, n);
      for (int j = 0; j < n; ++j) {
        double sg = 0.0, sb = 0.0;
        for (int i = 0; i < g.rows; ++i) {
          sg += static_cast<double>(g.at(i, j)) * static_cast<double>(xhat_s->at(i, j));
          sb += static_cast<double>(g.at(i, j));
        }
        ggain.at(0, j) = static_cast<T>(sg);
        gbias.at(0, j) = static_cast<T>(sb);
      }
      for (int i = 0; i < g.rows; ++i) {
        double mean_dh = 0.0, mean_dh_h = 0.0;
        for (int j = 0; j < n; ++j) {
          double dh = static_cast<double>(g.at(i, j)) * static_cast<double>(gv.at(0, j));
          mean_dh += dh;
          mean_dh_h += dh * static_cast<double>(xhat_s->at(i, j));
        }
        mean_dh /= n;
        mean_dh_h /= n;
        for (int j = 0; j < n; ++j) {
          double dh = static_cast<double>(g.at(i, j)) * static_cast<double>(gv.at(0, j));
          gx.at(i, j) = static_cast<T>(
              (*istd_s)[i] * (dh - mean_dh - static_cast<double>(xhat_s->at(i, j)) * mean_dh_h));
        }
      }
      accumulate(x, gx);
      accumulate(gain, ggain);
      accumulate(bias, gbias);
    });
    return r;
  }

  Ref concat_rows(const std::vector<Ref>& parts) {
    if (parts.empty()) throw NumericError("concat_rows needs at least one input");
    int cols = val(parts[0]).cols, rows = 0;
    for (Ref p : parts) {
      if (val(p).cols != cols) throw NumericError("concat_rows column mismatch");
      rows += val(p).rows;
    }
    Tensor<T> out(rows, cols);
    int off = 0;
    for (Ref p : parts) {
      const auto& v = val(p);
      std::copy(v.data.begin(), v.data.end(),
                out.data.begin() + static_cast<std::size_t>(off) * cols);
      off += v.rows;
    }
    Ref r = make(std::move(out), parts, "concat_rows");
    auto parts_s = std::make_shared<std::vector<Ref>>(parts);
    set_back(r, [this, r, parts_s]() {
      const auto& g = nodes_[r].grad;
      int off = 0;
      for (Ref p : *parts_s) {
        const auto& v = val(p);
        Tensor<T> gp(v.rows, v.cols);
        std::copy(g.data.begin() + static_cast<std::size_t>(off) * g.cols,
                  g.data.begin() + static_cast<std::size_t>(off + v.rows) * g.cols,
                  gp.data.begin());
        accumulate(p, gp);
        off += v.rows;
      }
    });
    return r;
  }

  Ref concat_cols(const std::vector<Ref>& parts) {
    if (parts.empty()) throw NumericError("concat_cols needs at least one input");
    int rows = val(parts[0]).rows, cols = 0;
    for (Ref p : parts) {
      if (val(p).rows != rows) throw NumericError("concat_cols row mismatch");
      cols += val(p).cols;
    }
    Tensor<T> out(rows, cols);
    int off = 0;
    for (Ref p : parts) {
      const auto& v = val(p);
      for (int i = 0; i < rows; ++i)
        std::copy(v.data.begin() + static_cast<std::size_t>(i) * v.cols,
                  v.data.begin() + static_cast<std::size_t>(i + 1) * v.cols,
                  out.data.begin() + static_cast<std::size_t>(i) * cols + off);
      off += v.cols;
    }
    Ref r = make(std::move(out), parts, "concat_cols");
    auto parts_s = std::make_shared<std::vector<Ref>>(parts);
    set_back(r, [this, r, parts_s]() {
      const auto& g = nodes_[r].grad;
      int off = 0;
      for (Ref p : *parts_s) {
        const auto& v = val(p);
        Tensor<T> gp(v.rows, v.cols);
        for (int i = 0; i < v.rows; ++i)
          std::copy(g.data.begin() + static_cast<std::size_t>(i) * g.cols + off,
                    g.data.begin() + static_cast<std::size_t>(i) * g.cols + off + v.cols,
                    gp.data.begin() + static_cast<std::size_t>(i) * v.cols);
        accumulate(p, gp);
        off += v.cols;
      }
    });
    return r;
  }

  Ref slice_rows(Ref a, int r0, int r1) {
    const auto& v = val(a);
    if (r0 < 0 || r1 > v.rows || r0 >= r1) throw NumericError("slice_rows out of range");
    Tensor<T> out(r1 - r0, v.cols);
    std::copy(v.data.begin() + static_cast<std::size_t>(r0) * v.cols,
              v.data.begin() + static_cast<std::size_t>(r1) * v.cols, out.data.begin());
    Ref r = make(std::move(out), {a}, "slice_rows");
    set_back(r, [this, r, a, r0]() {
      const auto& g = nodes_[r].grad;
      const auto& v = val(a);
      Tensor<T> ga = Tensor<T>::zeros(v.rows, v.cols);
      std::copy(g.data.begin(), g.data.end(),
                ga.data.begin() + static_cast<std::size_t>(r0) * v.cols);
      accumulate(a, ga);
    });
    return r;
  }

  // Embedding lookup: gather with scatter-add gradient.
  Ref gather_rows(Ref a, std::vector<int> indices) {
    const auto& v = val(a);
    Tensor<T> out(static_cast<int>(indices.size()), v.cols);
    for (std::size_t i = 0; i < indices.size(); ++i) {
      int idx = indices[i];
      if (idx < 0 || idx >= v.rows) throw NumericError("gather_rows index out of range");
      std::copy(v.data.begin() + static_cast<std::size_t>(idx) * v.cols,
                v.data.begin() + static_cast<std::size_t>(idx + 1) * v.cols,
                out.data.begin() + i * v.cols);
    }
    Ref r = make(std::move(out), {a}, "gather_rows");
    auto idx_s = std::make_shared<std::vector<int>>(std::move(indices));
    set_back(r, [this, r, a, idx_s]() {
      const auto& g = nodes_[r].grad;
      const auto& v = val(a);
      Tensor<T> ga = Tensor<T>::zeros(v.rows, v.cols);
      for (std::size_t i = 0; i < idx_s->size(); ++i) {
        T* dst = ga.data.data() + static_cast<std::size_t>((*idx_s)[i]) * v.cols;
        const T* src = g.data.data() + i * g.cols;
        for (int j = 0; j < g.cols; ++j) dst[j] += src[j];
      }
      accumulate(a, ga);
    });
    return r;
  }

  // Mean over axis 0: [m,n] -> [1,n].
  Ref mean_rows(Ref a) {
    const auto& v = val(a);
    Tensor<T> out(1, v.cols);
    for (int j = 0; j < v.cols; ++j) {
      double s = 0.0;
      for (int i = 0; i < v.rows; ++i) s += static_cast<double>(v.at(i, j));
      out.at(0, j) = static_cast<T>(s / v.rows);
    }
    Ref r = make(std::move(out), {a}, "mean_rows");
    set_back(r, [this, r, a]() {
      const auto& g = nodes_[r].grad;
      const auto& v = val(a);
      Tensor<T> ga(v.rows, v.cols);
      for (int i = 0; i < v.rows; ++i)
        for (int j = 0; j < v.cols; ++j) ga.at(i, j) = g.at(0, j) / static_cast<T>(v.rows);
      accumulate(a, ga);
    });
    return r;
  }

  Ref mean_all(Ref a) {
    const auto& v = val(a);
    double s = 0.0;
    for (T x : v.data) s += static_cast<double>(x);
    Tensor<T> out(1, 1);
    out.data[0] = static_cast<T>(s / static_cast<double>(v.numel()));
    Ref r = make(std::move(out), {a}, "mean_all");
    set_back(r, [this, r, a]() {
      const auto& v = val(a);
      T g = nodes_[r].grad.data[0] / static_cast<T>(v.numel());
      Tensor<T> ga = Tensor<T>::full(v.rows, v.cols, g);
      accumulate(a, ga);
    });
    return r;
  }

  // Scaled dot-product attention over h heads in one node:
  //   out = concat_i softmax(Q_i K_i^T / sqrt(d/h)) V_i,  Q=s*wq, K=s*wk, V=s*wv
  // wq/wk/wv are [d,d] with head i occupying columns [i*d/h, (i+1)*d/h).
  // Fused so long sequences cost one tape node instead of a dozen.
  Ref attention(Ref s, Ref wq, Ref wk, Ref wv, int heads) {
    const auto& sv = val(s);
    const int d = sv.cols, n = sv.rows;
    if (heads < 1 || d % heads != 0) throw NumericError("attention: heads must divide dim");
    for (Ref w : {wq, wk, wv})
      if (val(w).rows != d || val(w).cols != d) throw NumericError("attention weight shape");
    const int dh = d / heads;
    const double inv = 1.0 / std::sqrt(static_cast<double>(dh));

    Tensor<T> q(n, d), k(n, d), v(n, d);
    detail::matmul_acc(sv, false, val(wq), false, q);
    detail::matmul_acc(sv, false, val(wk), false, k);
    detail::matmul_acc(sv, false, val(wv), false, v);

    auto head_cols = [dh](const Tensor<T>& src, int h0) {
      Tensor<T> out(src.rows, dh);
      for (int i = 0; i < src.rows; ++i)
        std::copy(src.data.begin() + static_cast<std::size_t>(i) * src.cols + h0 * dh,
                  src.data.begin() + static_cast<std::size_t>(i) * src.cols + (h0 + 1) * dh,
                  out.data.begin() + static_cast<std::size_t>(i) * dh);
      return out;
    };
    auto put_cols = [dh](Tensor<T>& dst, const Tensor<T>& src, int h0) {
      for (int i = 0; i < src.rows; ++i)
        std::copy(src.data.begin() + static_cast<std::size_t>(i) * dh,
                  src.data.begin() + static_cast<std::size_t>(i + 1) * dh,
                  dst.data.begin() + static_cast<std::size_t>(i) * dst.cols + h0 * dh);
    };

    Tensor<T> out(n, d);
    auto attn = std::make_shared<std::vector<Tensor<T>>>();  // per-head softmax rows
    attn->reserve(heads);
    for (int h = 0; h < heads; ++h) {
      Tensor<T> qh = head_cols(q, h), kh = head_cols(k, h), vh = head_cols(v, h);
      Tensor<T> scores(n, n);
      detail::matmul_acc(qh, false, kh, true, scores);
      for (int i = 0; i < n; ++i) {
        double mx = -1e300;
        for (int j = 0; j < n; ++j)
          mx = std::max(mx, static_cast<double>(scores.at(i, j)) * inv);
        double sum = 0.0;
        for (int j = 0; j < n; ++j) {
          double e = std::exp(static_cast<double>(scores.at(i, j)) * inv - mx);
          scores.at(i, j) = static_cast<T>(e);
          sum += e;
        }
        for (int j = 0; j < n; ++j)
          scores.at(i, j) = static_cast<T>(static_cast<double>(scores.at(i, j)) / sum);
      }
      Tensor<T> oh(n, dh);
      detail::matmul_acc(scores, false, vh, false, oh);
      put_cols(out, oh, h);
      attn->push_back(std::move(scores));
    }

    Ref r = make(std::move(out), {s, wq, wk, wv}, "attention");
    auto qkv = std::make_shared<std::array<Tensor<T>, 3>>(
        std::array<Tensor<T>, 3>{std::move(q), std::move(k), std::move(v)});
    set_back(r, [this, r, s, wq, wk, wv, heads, dh, inv, attn, qkv, head_cols, put_cols]() {
      const auto& g = nodes_[r].grad;
      const auto& sv = val(s);
      const int n = sv.rows, d = sv.cols;
      Tensor<T> dq(n, d), dk(n, d), dv(n, d);
      for (int h = 0; h < heads; ++h) {
        Tensor<T> gh = head_cols(g, h);
        Tensor<T> qh = head_cols((*qkv)[0], h), kh = head_cols((*qkv)[1], h),
                  vh = head_cols((*qkv)[2], h);
        const Tensor<T>& a = (*attn)[h];
        Tensor<T> da(n, n), dvh(n, dh);
        detail::matmul_acc(gh, false, vh, true, da);
        detail::matmul_acc(a, true, gh, false, dvh);
        // softmax rows backward, then the 1/sqrt(dh) score scaling
        Tensor<T> dz(n, n);
        for (int i = 0; i < n; ++i) {
          double dot = 0.0;
          for (int j = 0; j < n; ++j)
            dot += static_cast<double>(da.at(i, j)) * static_cast<double>(a.at(i, j));
          for (int j = 0; j < n; ++j)
            dz.at(i, j) = static_cast<T>(static_cast<double>(a.at(i, j)) *
                                         (static_cast<double>(da.at(i, j)) - dot) * inv);
        }
        Tensor<T> dqh(n, dh), dkh(n, dh);
        detail::matmul_acc(dz, false, kh, false, dqh);
        detail::matmul_acc(dz, true, qh, false, dkh);
        put_cols(dq, dqh, h);
        put_cols(dk, dkh, h);
        put_cols(dv, dvh, h);
      }
      Tensor<T> ds = Tensor<T>::zeros(n, d);
      detail::matmul_acc(dq, false, val(wq), true, ds);
      detail::matmul_acc(dk, false, val(wk), true, ds);
      detail::matmul_acc(dv, false, val(wv), true, ds);
      accumulate(s, ds);
      for (auto [w, dw] : {std::pair{wq, &dq}, {wk, &dk}, {wv, &dv}}) {
        Tensor<T> g_w = Tensor<T>::zeros(d, d);
        detail::matmul_acc(sv, true, *dw, false, g_w);
        accumulate(w, g_w);
      }
    });
    return r;
  }

  // Mean binary cross-entropy against constant targets; probabilities are
  // clamped to [1e-7, 1-1e-7] and the gradient is zero in the clamped region.
  Ref bce_loss(Ref probs, const std::vector<T>& targets) {
    const auto& p = val(probs);
    if (p.numel() != targets.size()) throw DataError("bce target length mismatch");
    const double lo = 1e-7, hi = 1.0 - 1e-7;
    double s = 0.0;
    for (std::size_t i = 0; i < targets.size(); ++i) {
      double pc = std::clamp(static_cast<double>(p.data[i]), lo, hi);
      double y = static_cast<double>(targets[i]);
      s += -(y * std::log(pc) + (1.0 - y) * std::log(1.0 - pc));
    }
    Tensor<T> out(1, 1);
    out.data[0] = static_cast<T>(s / static_cast<double>(targets.size()));
    Ref r = make(std::move(out), {probs}, "bce_loss");
    auto t_s = std::make_shared<std::vector<T>>(targets);
    set_back(r, [this, r, probs, t_s, lo, hi]() {
      const auto& p = val(probs);
      double g = static_cast<double>(nodes_[r].grad.data[0]) / static_cast<double>(t_s->size());
      Tensor<T> gp(p.rows, p.cols);
      for (std::size_t i = 0; i < p.numel(); ++i) {
        double pv = static_cast<double>(p.data[i]);
        if (pv < lo || pv > hi) {
          gp.data[i] = T(0);
          continue;
        }
        double y = static_cast<double>((*t_s)[i]);
        gp.data[i] = static_cast<T>(g * (pv - y) / (pv * (1.0 - pv)));
      }
      accumulate(probs, gp);
    });
    return r;
  }

  // Mean per-label Bernoulli KL(p || q) with q a constant (detached) target.
  Ref kl_const(Ref probs, const std::vector<T>& q) {
    const auto& p = val(probs);
    if (p.numel() != q.size()) throw DataError("kl target length mismatch");
    const double lo = 1e-7, hi = 1.0 - 1e-7;
    double s = 0.0;
    for (std::size_t i = 0; i < q.size(); ++i) {
      double pc = std::clamp(static_cast<double>(p.data[i]), lo, hi);
      double qc = std::clamp(static_cast<double>(q[i]), lo, hi);
      s += pc * std::log(pc / qc) + (1.0 - pc) * std::log((1.0 - pc) / (1.0 - qc));
    }
    Tensor<T> out(1, 1);
    out.data[0] = static_cast<T>(s / static_cast<double>(q.size()));
    Ref r = make(std::move(out), {probs}, "kl_const");
    auto q_s = std::make_shared<std::vector<T>>(q);
    set_back(r, [this, r, probs, q_s, lo, hi]() {
      const auto& p = val(probs);
      double g = static_cast<double>(nodes_[r].grad.data[0]) / static_cast<double>(q_s->size());
      Tensor<T> gp(p.rows, p.cols);
      for (std::size_t i = 0; i < p.numel(); ++i) {
        double pv = static_cast<double>(p.data[i]);
        if (pv < lo || pv > hi) {
          gp.data[i] = T(0);
          continue;
        }
        double qc = std::clamp(static_cast<double>((*q_s)[i]), lo, hi);
        gp.data[i] = static_cast<T>(g * (std::log(pv / qc) - std::log((1.0 - pv) / (1.0 - qc))));
      }
      accumulate(probs, gp);
    });
    return r;
  }

  // Mean per-label Bernoulli KL(p || q) with gradient flowing into both
  // arguments; used by the coupled-blend training variant.
  Ref kl_div(Ref p_ref, Ref q_ref) {
    const auto& p = val(p_ref);
    const auto& q = val(q_ref);
    if (!p.same_shape(q)) throw DataError("kl_div shape mismatch");
    const double lo = 1e-7, hi = 1.0 - 1e-7;
    double s = 0.0;
    for (std::size_t i = 0; i < p.numel(); ++i) {
      double pc = std::clamp(static_cast<double>(p.data[i]), lo, hi);
      double qc = std::clamp(static_cast<double>(q.data[i]), lo, hi);
      s += pc * std::log(pc / qc) + (1.0 - pc) * std::log((1.0 - pc) / (1.0 - qc));
    }
    Tensor<T> out(1, 1);
    out.data[0] = static_cast<T>(s / static_cast<double>(p.numel()));
    Ref r = make(std::move(out), {p_ref, q_ref}, "kl_div");
    set_back(r, [this, r, p_ref, q_ref, lo, hi]() {
      const auto& p = val(p_ref);
      const auto& q = val(q_ref);
      double g = static_cast<double>(nodes_[r].grad.data[0]) / static_cast<double>(p.numel());
      Tensor<T> gp(p.rows, p.cols), gq(q.rows, q.cols);
      for (std::size_t i = 0; i < p.numel(); ++i) {
        double pv = std::clamp(static_cast<double>(p.data[i]), lo, hi);
        double qv = std::clamp(static_cast<double>(q.data[i]), lo, hi);
        bool p_clamped = static_cast<double>(p.data[i]) < lo || static_cast<double>(p.data[i]) > hi;
        bool q_clamped = static_cast<double>(q.data[i]) < lo || static_cast<double>(q.data[i]) > hi;
        gp.data[i] = p_clamped ? T(0)
                               : static_cast<T>(g * (std::log(pv / qv) -
                                                     std::log((1.0 - pv) / (1.0 - qv))));
        gq.data[i] = q_clamped ? T(0)
                               : static_cast<T>(g * ((1.0 - pv) / (1.0 - qv) - pv / qv));
      }
      accumulate(p_ref, gp);
      accumulate(q_ref, gq);
    });
    return r;
  }

  void backward(Ref root) {
    if (consumed_)
      throw NumericError("tape already consumed by a backward pass; rebuild the forward graph");
    if (nodes_[root].value.numel() != 1)
      throw NumericError("backward root must be a scalar");
    consumed_ = true;
    grad_of(root).data[0] = T(1);
    for (Ref r = root; r >= 0; --r) {
      auto& n = nodes_[r];
      if (!n.requires_grad || n.grad.numel() == 0 || !n.back) continue;
      n.back();
    }
  }

  std::size_t num_nodes() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    bool requires_grad = false;
    std::function<void()> back;
  };

  Ref push(Tensor<T> value, bool requires_grad, std::function<void()> back) {
    nodes_.push_back(Node{std::move(value), Tensor<T>(), requires_grad, std::move(back)});
    return static_cast<Ref>(nodes_.size() - 1);
  }

  Ref make(Tensor<T> value, const std::vector<Ref>& parents, const char* op) {
    detail::check_finite(value, op);
    bool rg = false;
    for (Ref p : parents) rg = rg || nodes_[p].requires_grad;
    return push(std::move(value), rg, nullptr);
  }

  void set_back(Ref r, std::function<void()> f) {
    if (nodes_[r].requires_grad) nodes_[r].back = std::move(f);
  }

  Tensor<T>& grad_of(Ref r) {
    auto& n = nodes_[r];
    if (n.grad.numel() == 0) n.grad = Tensor<T>::zeros(n.value.rows, n.value.cols);
    return n.grad;
  }

  void accumulate(Ref r, const Tensor<T>& g) {
    if (!nodes_[r].requires_grad) return;
    auto& dst = grad_of(r);
    for (std::size_t i = 0; i < g.numel(); ++i) dst.data[i] += g.data[i];
  }

  Ref matmul_impl(Ref a, bool ta, Ref b, bool tb, const char* op) {
    const auto& av = val(a);
    const auto& bv = val(b);
    int m = ta ? av.cols : av.rows;
    int n = tb ? bv.rows : bv.cols;
    Tensor<T> out = Tensor<T>::zeros(m, n);
    detail::matmul_acc(av, ta, bv, tb, out);
    Ref r = make(std::move(out), {a, b}, op);
    set_back(r, [this, r, a, b, tb]() {
      const auto& g = nodes_[r].grad;
      const auto& av = val(a);
      const auto& bv = val(b);
      Tensor<T> ga = Tensor<T>::zeros(av.rows, av.cols);
      Tensor<T> gb = Tensor<T>::zeros(bv.rows, bv.cols);
      if (!tb) {  // C = A*B: dA = dC*B^T, dB = A^T*dC
        detail::matmul_acc(g, false, bv, true, ga);
        detail::matmul_acc(av, true, g, false, gb);
      } else {  // C = A*B^T: dA = dC*B, dB = dC^T*A
        detail::matmul_acc(g, false, bv, false, ga);
        detail::matmul_acc(g, true, av, false, gb);
      }
      accumulate(a, ga);
      accumulate(b, gb);
    });
    return r;
  }

  std::vector<Node> nodes_;
  bool consumed_ = false;
};

// Bias-corrected adaptive-moment optimizer.
template <class T>
class Adam {
 public:
  explicit Adam(T lr, T beta1 = T(0.9), T beta2 = T(0.999), T eps = T(1e-8))
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(const std::vector<Parameter<T>*>& params) {
    ++t_;
    double bc1 = 1.0 - std::pow(static_cast<double>(beta1_), static_cast<double>(t_));
    double bc2 = 1.0 - std::pow(static_cast<double>(beta2_), static_cast<double>(t_));
    for (Parameter<T>* p : params) {
      auto& [m, v] = moments_[p->name];
      if (m.empty()) {
        m.assign(p->value.numel(), 0.0);
        v.assign(p->value.numel(), 0.0);
      }
      bool has_grad = p->grad.numel() != 0;
      for (std::size_t i = 0; i < p->value.numel(); ++i) {
        double g = has_grad ? static_cast<double>(p->grad.data[i]) : 0.0;
        if (!std::isfinite(g))
          throw NumericError("non-finite gradient for parameter " + p->name);
        m[i] = static_cast<double>(beta1_) * m[i] + (1.0 - static_cast<double>(beta1_)) * g;
        v[i] = static_cast<double>(beta2_) * v[i] + (1.0 - static_cast<double>(beta2_)) * g * g;
        double mhat = m[i] / bc1, vhat = v[i] / bc2;
        p->value.data[i] -= static_cast<T>(static_cast<double>(lr_) * mhat /
                                           (std::sqrt(vhat) + static_cast<double>(eps_)));
      }
      p->zero_grad();
    }
  }

  long step_count() const { return t_; }
  T learning_rate() const { return lr_; }

 private:
  T lr_, beta1_, beta2_, eps_;
  long t_ = 0;
  std::unordered_map<std::string, std::pair<std::vector<double>, std::vector<double>>> moments_;
};

// Checkpoint: "RAMCKPT1" magic, u32 tensor count, then per tensor
// {u32 name_len, name, u32 rows, u32 cols, f32 data little-endian}.
void save_checkpoint(const std::string& path, const std::vector<const Parameter<float>*>& params);
void load_checkpoint(const std::string& path, const std::vector<Parameter<float>*>& params);

}  // namespace ramehr
