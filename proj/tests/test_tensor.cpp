#include <doctest.h>

#include <cmath>

#include "crosstvr/errors.hpp"
#include "crosstvr/ops.hpp"
#include "crosstvr/rng.hpp"

using namespace crosstvr;

namespace {

TensorD random_matrix(std::size_t r, std::size_t c, Rng& rng, double scale = 1.0) {
  std::vector<double> v(r * c);
  for (auto& x : v) x = scale * rng.normal();
  return TensorD::from({r, c}, std::move(v));
}

}  // namespace

TEST_CASE("matmul") {
  SUBCASE("identity") {
    const auto i2 = TensorF::from({2, 2}, {1, 0, 0, 1});
    const auto m = TensorF::from({2, 2}, {3, 4, 5, 6});
    const auto out = ops::matmul(i2, m);
    CHECK(std::vector<float>(out.data().begin(), out.data().end()) == std::vector<float>{3, 4, 5, 6});
  }
  SUBCASE("1x1") { CHECK(ops::matmul(TensorF::from({1, 1}, {2}), TensorF::from({1, 1}, {3})).item() == 6.0f); }
  SUBCASE("triple loop oracle") {
    Rng rng(3);
    const auto a = random_matrix(3, 4, rng);
    const auto b = random_matrix(4, 2, rng);
    const auto out = ops::matmul(a, b);
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 2; ++j) {
        double s = 0;
        for (std::size_t k = 0; k < 4; ++k) s += a[i * 4 + k] * b[k * 2 + j];
        CHECK(out[i * 2 + j] == doctest::Approx(s).epsilon(1e-6));
      }
    const auto nt = ops::matmul_nt(a, ops::transpose(b));
    for (std::size_t i = 0; i < 6; ++i) CHECK(nt[i] == doctest::Approx(out[i]).epsilon(1e-12));
  }
  SUBCASE("shape mismatch names both shapes") {
    try {
      ops::matmul(TensorF::zeros({2, 3}), TensorF::zeros({2, 3}));
      FAIL("expected ShapeError");
    } catch (const ShapeError& e) {
      const std::string what = e.what();
      CHECK(what.find("2×3") != std::string::npos);
    }
  }
}

TEST_CASE("softmax") {
  auto probs = [](std::vector<float> x) {
    const Shape shape{x.size()};
    const auto s = ops::softmax_lastdim(TensorF::from(shape, std::move(x)));
    return std::vector<float>(s.data().begin(), s.data().end());
  };
  CHECK(probs({0, 0}) == std::vector<float>{0.5f, 0.5f});
  CHECK(probs({1000, 1000}) == std::vector<float>{0.5f, 0.5f});
  const auto p = probs({std::log(2.0f), 0});
  CHECK(p[0] == doctest::Approx(2.0 / 3).epsilon(1e-6));
  CHECK(p[1] == doctest::Approx(1.0 / 3).epsilon(1e-6));

  SUBCASE("rows sum to one for magnitudes up to 1e4") {
    Rng rng(9);
    const auto x = random_matrix(20, 7, rng, 1e4);
    const auto s = ops::softmax_lastdim(x);
    for (std::size_t r = 0; r < 20; ++r) {
      double total = 0;
      for (std::size_t c = 0; c < 7; ++c) {
        CHECK(s[r * 7 + c] >= 0.0);
        CHECK(s[r * 7 + c] <= 1.0);
        total += s[r * 7 + c];
      }
      CHECK(total == doctest::Approx(1.0).epsilon(1e-6));
    }
  }
}

TEST_CASE("layernorm") {
  const auto ones = TensorD::from({3}, {1, 1, 1});
  const auto zeros = TensorD::from({3}, {0, 0, 0});
  const auto flat = ops::layernorm(TensorD::from({1, 3}, {5, 5, 5}), ones, zeros, 1e-5);
  for (auto v : flat.data()) CHECK(v == 0.0);

  const auto pm = ops::layernorm(TensorD::from({1, 2}, {1, -1}), TensorD::from({2}, {1, 1}),
                                 TensorD::from({2}, {0, 0}), 1e-12);
  CHECK(pm[0] == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(pm[1] == doctest::Approx(-1.0).epsilon(1e-9));

  const auto affine = ops::layernorm(TensorD::from({2, 2}, {3, -8, 0.5, 2}), TensorD::from({2}, {0, 0}),
                                     TensorD::from({2}, {7, 7}), 1e-5);
  for (auto v : affine.data()) CHECK(v == 7.0);
}

TEST_CASE("scaled dot attention") {
  Rng rng(4);
  SUBCASE("single key returns its value row") {
    const auto q = random_matrix(3, 4, rng);
    const auto k = random_matrix(1, 4, rng);
    const auto v = random_matrix(1, 4, rng);
    const auto out = ops::scaled_dot_attention(q, k, v);
    for (std::size_t r = 0; r < 3; ++r)
      for (std::size_t c = 0; c < 4; ++c) CHECK(out[r * 4 + c] == v[c]);
  }
  SUBCASE("identical keys average the values") {
    const auto q = random_matrix(2, 4, rng);
    const auto key = random_matrix(1, 4, rng);
    const auto k = ops::concat_rows<double>({key, key, key});
    const auto v = random_matrix(3, 4, rng);
    const auto out = ops::scaled_dot_attention(q, k, v);
    for (std::size_t c = 0; c < 4; ++c) {
      const double mean = (v[c] + v[4 + c] + v[8 + c]) / 3;
      CHECK(out[c] == doctest::Approx(mean).epsilon(1e-12));
      CHECK(out[4 + c] == doctest::Approx(mean).epsilon(1e-12));
    }
  }
  SUBCASE("composition oracle and weight rows") {
    const auto q = random_matrix(2, 4, rng);
    const auto k = random_matrix(5, 4, rng);
    const auto v = random_matrix(5, 4, rng);
    ops::AttentionTrace<double> trace;
    const auto out = ops::scaled_dot_attention(q, k, v, &trace);
    const auto expected = ops::matmul(ops::softmax_lastdim(ops::scale(ops::matmul_nt(q, k), 0.5)), v);
    for (std::size_t i = 0; i < 8; ++i) CHECK(out[i] == doctest::Approx(expected[i]).epsilon(1e-12));
    REQUIRE(trace.weights.size() == 1);
    for (std::size_t r = 0; r < 2; ++r) {
      double s = 0;
      for (std::size_t c = 0; c < 5; ++c) s += trace.weights[0][r * 5 + c];
      CHECK(s == doctest::Approx(1.0).epsilon(1e-6));
    }
  }
  SUBCASE("outputs lie in the convex hull of the value rows") {
    for (int trial = 0; trial < 50; ++trial) {
      const auto q = random_matrix(3, 4, rng, 3.0);
      const auto k = random_matrix(6, 4, rng, 3.0);
      const auto v = random_matrix(6, 4, rng);
      const auto out = ops::scaled_dot_attention(q, k, v);
      for (std::size_t c = 0; c < 4; ++c) {
        double lo = INFINITY, hi = -INFINITY;
        for (std::size_t r = 0; r < 6; ++r) {
          lo = std::min(lo, v[r * 4 + c]);
          hi = std::max(hi, v[r * 4 + c]);
        }
        for (std::size_t r = 0; r < 3; ++r) {
          CHECK(out[r * 4 + c] >= lo - 1e-12);
          CHECK(out[r * 4 + c] <= hi + 1e-12);
        }
      }
    }
  }
  SUBCASE("width mismatch") {
    CHECK_THROWS_AS(ops::scaled_dot_attention(random_matrix(2, 4, rng), random_matrix(3, 5, rng),
                                              random_matrix(3, 4, rng)),
                    ShapeError);
  }
}

TEST_CASE("cross entropy") {
  CHECK(ops::cross_entropy(TensorD::from({2}, {40, -40}), 0).item() == doctest::Approx(0.0));
  CHECK(ops::cross_entropy(TensorD::from({2}, {0, 0}), 1).item() == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(ops::cross_entropy(TensorD::from({2}, {1, 3}), 0).item() ==
        doctest::Approx(2 + std::log1p(std::exp(-2.0))).epsilon(1e-12));
  CHECK(ops::cross_entropy(TensorD::from({2}, {1, 3}), 0).item() == doctest::Approx(2.1269).epsilon(1e-4));
  CHECK_THROWS_AS(ops::cross_entropy(TensorD::from({2}, {0, 0}), 2), std::out_of_range);
  CHECK_THROWS_AS(ops::cross_entropy(TensorD::from({1}, {0}), 0), ShapeError);
}

TEST_CASE("backward") {
  SUBCASE("sum gives ones") {
    const auto x = TensorD::from({2, 3, 2}, std::vector<double>(12, 0.25), true);
    Tape<double> tape;
    TensorD loss;
    {
      TapeScope<double> scope(tape);
      loss = ops::sum(x);
    }
    backward(loss, tape);
    for (auto g : x.grad()) CHECK(g == 1.0);
  }
  SUBCASE("unused leaf keeps a zero grad") {
    const auto x = TensorD::from({2}, {1, 2}, true);
    const auto unused = TensorD::from({3}, {1, 2, 3}, true);
    Tape<double> tape;
    TensorD loss;
    {
      TapeScope<double> scope(tape);
      loss = ops::sum(ops::mul(x, x));
    }
    backward(loss, tape);
    CHECK(x.grad()[1] == 4.0);
    for (auto g : unused.grad()) CHECK(g == 0.0);
  }
  SUBCASE("non-scalar loss is rejected") {
    const auto x = TensorD::from({2}, {1, 2}, true);
    Tape<double> tape;
    TensorD out;
    {
      TapeScope<double> scope(tape);
      out = ops::scale(x, 2.0);
    }
    CHECK_THROWS_AS(backward(out, tape), ShapeError);
  }
  SUBCASE("no active tape records nothing") {
    const auto x = TensorD::from({2}, {1, 2}, true);
    Tape<double> tape;
    const auto y = ops::sum(x);
    CHECK(tape.size() == 0);
  }
  SUBCASE("replay is bit-identical") {
    Rng rng(12);
    auto a = TensorD::from({3, 3}, std::vector<double>(9, 0.0), true);
    auto data = a.mutable_data();
    for (auto& v : data) v = rng.normal();
    std::vector<double> first, second;
    for (auto* grads : {&first, &second}) {
      a.zero_grad();
      Tape<double> tape;
      TensorD loss;
      {
        TapeScope<double> scope(tape);
        loss = ops::sum(ops::gelu(ops::matmul(a, ops::softmax_lastdim(a))));
      }
      backward(loss, tape);
      grads->assign(a.grad().begin(), a.grad().end());
      grads->push_back(loss.item());
    }
    CHECK(first == second);
  }
}

TEST_CASE("frozen tensors reject writes") {
  auto t = TensorF::from({2}, {1, 2});
  t.freeze();
  CHECK(t.frozen());
  CHECK_THROWS_AS(t.mutable_data(), FrozenError);
}
