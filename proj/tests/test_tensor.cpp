#include <doctest.h>

#include <random>

#include "gradcheck.hpp"
#include "ramehr/tensor.hpp"

using namespace ramehr;
using TapeF = Tape<float>;
using TapeD = Tape<double>;

TEST_CASE("matmul identity and small product") {
  TapeF tape;
  auto x = tape.constant(Tensor<float>(2, 2, {1, 2, 3, 4}));
  auto eye = tape.constant(Tensor<float>(2, 2, {1, 0, 0, 1}));
  auto ix = tape.matmul(eye, x);
  CHECK(tape.val(ix).data == std::vector<float>{1, 2, 3, 4});

  auto ones = tape.constant(Tensor<float>(2, 1, {1, 1}));
  auto prod = tape.matmul(x, ones);
  CHECK(tape.val(prod).data == std::vector<float>{3, 7});

  auto bad = tape.constant(Tensor<float>(3, 1, {1, 1, 1}));
  CHECK_THROWS_AS(tape.matmul(x, bad), NumericError);
}

TEST_CASE("softmax rows: uniform, closed form, shift invariance") {
  TapeF tape;
  auto c = tape.constant(Tensor<float>(1, 4, {2, 2, 2, 2}));
  auto sc = tape.softmax_rows(c);
  for (float v : tape.val(sc).data) CHECK(v == doctest::Approx(0.25));

  auto x = tape.constant(Tensor<float>(1, 2, {0.f, std::log(3.f)}));
  auto sx = tape.softmax_rows(x);
  CHECK(tape.val(sx).data[0] == doctest::Approx(0.25));
  CHECK(tape.val(sx).data[1] == doctest::Approx(0.75));

  auto shifted = tape.constant(Tensor<float>(1, 2, {5.f, 5.f + std::log(3.f)}));
  auto ss = tape.softmax_rows(shifted);
  CHECK(tape.val(ss).data[0] == doctest::Approx(tape.val(sx).data[0]));
  CHECK(tape.val(ss).data[1] == doctest::Approx(tape.val(sx).data[1]));
}

TEST_CASE("layer_norm standardizes rows") {
  std::mt19937_64 rng(5);
  TapeF tape;
  auto x = tape.constant(Tensor<float>::randn(4, 16, rng, 2.f));
  auto gain = tape.constant(Tensor<float>::full(1, 16, 1.f));
  auto bias = tape.constant(Tensor<float>::zeros(1, 16));
  auto y = tape.layer_norm(x, gain, bias, 1e-6f);
  const auto& v = tape.val(y);
  for (int i = 0; i < 4; ++i) {
    double mean = 0, var = 0;
    for (int j = 0; j < 16; ++j) mean += v.at(i, j);
    mean /= 16;
    for (int j = 0; j < 16; ++j) var += (v.at(i, j) - mean) * (v.at(i, j) - mean);
    var /= 16;
    CHECK(std::abs(mean) < 1e-5);
    CHECK(std::abs(var - 1.0) < 1e-3);
  }

  // constant row maps to zeros
  TapeF t2;
  auto cx = t2.constant(Tensor<float>::full(1, 8, 3.5f));
  auto g2 = t2.constant(Tensor<float>::full(1, 8, 1.f));
  auto b2 = t2.constant(Tensor<float>::zeros(1, 8));
  auto cy = t2.layer_norm(cx, g2, b2, 1e-5f);
  for (float u : t2.val(cy).data) CHECK(std::abs(u) < 1e-3);
}

TEST_CASE("backward twice without re-forward is an error") {
  Parameter<float> w{"w", Tensor<float>(1, 1, {2.f})};
  TapeF tape;
  auto loss = tape.mean_all(tape.mul(tape.param(w), tape.param(w)));
  tape.backward(loss);
  CHECK(w.grad.data[0] == doctest::Approx(4.f));
  CHECK_THROWS_AS(tape.backward(loss), NumericError);
}

TEST_CASE("adam: zero grad is a fixed point; first step size ~ lr; deterministic") {
  Parameter<float> w{"w", Tensor<float>(1, 3, {1.f, -2.f, 0.5f})};
  Adam<float> opt(0.01f);
  auto before = w.value.data;
  opt.step({&w});  // no grad set
  CHECK(w.value.data == before);

  // first step with nonzero scalar grad moves by ~lr (bias correction)
  Parameter<float> s{"s", Tensor<float>(1, 1, {0.f})};
  s.grad = Tensor<float>(1, 1, {0.37f});
  Adam<float> opt2(0.05f);
  opt2.step({&s});
  CHECK(std::abs(std::abs(s.value.data[0]) - 0.05f) < 0.05f * 0.01f);

  // two identical runs are bit-identical after 10 steps
  auto run = []() {
    std::mt19937_64 rng(11);
    Parameter<float> p{"p", Tensor<float>::randn(4, 4, rng, 1.f)};
    Adam<float> o(0.01f);
    for (int i = 0; i < 10; ++i) {
      p.grad = Tensor<float>(4, 4);
      for (std::size_t j = 0; j < 16; ++j) p.grad.data[j] = 0.1f * p.value.data[j];
      o.step({&p});
    }
    return p.value.data;
  };
  CHECK(run() == run());

  Parameter<float> bad{"bad", Tensor<float>(1, 1, {0.f})};
  bad.grad = Tensor<float>(1, 1, {std::numeric_limits<float>::quiet_NaN()});
  Adam<float> opt3(0.01f);
  CHECK_THROWS_AS(opt3.step({&bad}), NumericError);
}

TEST_CASE("gradient checks for every differentiable op") {
  std::mt19937_64 rng(17);
  auto randp = [&](const char* name, int r, int c) {
    return Parameter<double>{name, Tensor<double>::randn(r, c, rng, 1.0)};
  };

  SUBCASE("matmul") {
    auto a = randp("a", 4, 3);
    auto b = randp("b", 3, 2);
    auto res = check_gradients({&a, &b}, [&](TapeD& t) {
      return t.mean_all(t.matmul(t.param(a), t.param(b)));
    });
    CHECK(res.max_rel_err < 1e-4);
  }
  SUBCASE("matmul_nt") {
    auto a = randp("a", 3, 4);
    auto b = randp("b", 5, 4);
    auto res = check_gradients({&a, &b}, [&](TapeD& t) {
      return t.mean_all(t.matmul_nt(t.param(a), t.param(b)));
    });
    CHECK(res.max_rel_err < 1e-4);
  }
  SUBCASE("add_bias and mul") {
    auto a = randp("a", 3, 4);
    auto b = randp("b", 1, 4);
    auto c = randp("c", 3, 4);
    auto res = check_gradients({&a, &b, &c}, [&](TapeD& t) {
      return t.mean_all(t.mul(t.add_bias(t.param(a), t.param(b)), t.param(c)));
    });
    CHECK(res.max_rel_err < 1e-4);
  }
  SUBCASE("relu sigmoid softmax chain") {
    auto a = randp("a", 3, 5);
    auto res = check_gradients({&a}, [&](TapeD& t) {
      return t.mean_all(t.softmax_rows(t.sigmoid(t.relu(t.param(a)))));
    });
    CHECK(res.max_rel_err < 1e-4);
  }
  SUBCASE("layer_norm") {
    auto x = randp("x", 3, 8);
    auto g = randp("g", 1, 8);
    auto b = randp("b", 1, 8);
    auto res = check_gradients({&x, &g, &b}, [&](TapeD& t) {
      auto y = t.layer_norm(t.param(x), t.param(g), t.param(b), 1e-5);
      return t.mean_all(t.mul(y, y));
    });
    CHECK(res.max_rel_err < 1e-4);
  }
  SUBCASE("concat slice gather mean") {
    auto a = randp("a", 4, 3);
    auto b = randp("b", 2, 3);
    auto res = check_gradients({&a, &b}, [&](TapeD& t) {
      auto cat = t.concat_rows({t.param(a), t.param(b)});
      auto gathered = t.gather_rows(cat, {0, 5, 2, 2});
      auto cols = t.concat_cols({gathered, gathered});
      auto sl = t.slice_rows(cols, 1, 3);
      return t.mean_all(t.mean_rows(sl));
    });
    CHECK(res.max_rel_err < 1e-4);
  }
  SUBCASE("fused multi-head attention") {
    auto s = randp("s", 5, 6);
    auto wq = randp("wq", 6, 6);
    auto wk = randp("wk", 6, 6);
    auto wv = randp("wv", 6, 6);
    for (int heads : {1, 2, 3}) {
      auto res = check_gradients({&s, &wq, &wk, &wv}, [&](TapeD& t) {
        auto y = t.attention(t.param(s), t.param(wq), t.param(wk), t.param(wv), heads);
        return t.mean_all(t.mul(y, y));
      });
      CHECK(res.max_rel_err < 1e-4);
    }
  }
  SUBCASE("fused attention matches the composed ops") {
    auto s = randp("s", 4, 6);
    auto wq = randp("wq", 6, 6);
    auto wk = randp("wk", 6, 6);
    auto wv = randp("wv", 6, 6);
    const int heads = 2, dh = 3;
    TapeD t;
    auto fused = t.attention(t.param(s), t.param(wq), t.param(wk), t.param(wv), heads);
    std::vector<TapeD::Ref> parts;
    for (int h = 0; h < heads; ++h) {
      auto col = [&](const Parameter<double>& w) {
        Tensor<double> sub(6, dh);
        for (int i = 0; i < 6; ++i)
          for (int j = 0; j < dh; ++j) sub.at(i, j) = w.value.at(i, h * dh + j);
        return t.constant(sub);
      };
      auto q = t.matmul(t.param(s), col(wq));
      auto k = t.matmul(t.param(s), col(wk));
      auto v = t.matmul(t.param(s), col(wv));
      auto a = t.softmax_rows(t.scale(t.matmul_nt(q, k), 1.0 / std::sqrt(double(dh))));
      parts.push_back(t.matmul(a, v));
    }
    const auto& ref = t.val(t.concat_cols(parts));
    const auto& got = t.val(fused);
    for (std::size_t i = 0; i < ref.data.size(); ++i)
      CHECK(got.data[i] == doctest::Approx(ref.data[i]).epsilon(1e-9));
  }
  SUBCASE("bce and kl against sigmoid outputs") {
    auto a = randp("a", 1, 6);
    std::vector<double> y{1, 0, 1, 1, 0, 0};
    std::vector<double> q{0.3, 0.6, 0.2, 0.9, 0.5, 0.1};
    auto res = check_gradients({&a}, [&](TapeD& t) {
      auto p = t.sigmoid(t.param(a));
      auto l1 = t.bce_loss(p, y);
      auto l2 = t.kl_const(p, q);
      return t.add(l1, t.scale(l2, 0.7));
    });
    CHECK(res.max_rel_err < 1e-4);
  }
}
