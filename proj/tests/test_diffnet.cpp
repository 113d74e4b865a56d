#include <doctest.h>

#include <sstream>

#include "prdf/diffnet.hpp"
#include "support.hpp"

using namespace prdf;
using namespace testsupport;

TEST_CASE("forward pass agrees with a naive matmul") {
  Rng rng(11);
  for (auto act : {Activation::identity, Activation::relu, Activation::tanh}) {
    Classifier m = random_model(5, {7, 4}, 3, act, rng);
    for (int k = 0; k < 10; ++k) {
      Vec x = random_point(5, rng);
      Vec a = forward_logits(m, x), b = naive_logits(m, x);
      for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-14));
    }
  }
}

TEST_CASE("probabilities form a distribution and predict is the argmax") {
  Rng rng(3);
  Classifier m = random_model(4, {6}, 5, Activation::tanh, rng, 2.0);
  for (int k = 0; k < 20; ++k) {
    Vec x = random_point(4, rng);
    Vec p = probabilities(m, x);
    double s = 0.0;
    for (double v : p) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
      s += v;
    }
    CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(predict(m, x) == argmax(p));
  }
}

TEST_CASE("argmax breaks ties toward the lowest index") {
  CHECK(argmax(Vec{1.0, 3.0, 3.0}) == 1);
  CHECK(argmax(Vec{2.0, 2.0}) == 0);
}

TEST_CASE("cross-entropy of equal logits is log K") {
  DenseLayer l;
  l.weights = Matrix(4, 3);
  l.bias = Vec(4, 0.25);
  Classifier m({l});
  CHECK(cross_entropy(m, Vec{0.1, 0.2, 0.3}, 2) == doctest::Approx(std::log(4.0)).epsilon(1e-14));
}

TEST_CASE("cross-entropy is finite for extreme logits") {
  Classifier m = linear_binary({1e4}, 0.0);
  double l = cross_entropy(m, Vec{1.0}, 0);
  CHECK(std::isfinite(l));
  CHECK(l == doctest::Approx(1e4).epsilon(1e-12));
  CHECK(cross_entropy(m, Vec{1.0}, 1) >= 0.0);
}

TEST_CASE("logistic input gradient has the closed form -(1 - s(z)) w") {
  const Vec w{0.7, -1.3, 2.1};
  const double b = -0.4;
  Classifier m = linear_binary(w, b);
  const Vec x{0.2, 0.5, 0.9};
  const double z = dot(w, x) + b;
  const double s = 1.0 / (1.0 + std::exp(-z));
  auto lg = loss_and_input_grad(m, x, 1);
  CHECK(lg.loss == doctest::Approx(std::log1p(std::exp(-z))).epsilon(1e-13));
  for (std::size_t i = 0; i < 3; ++i) CHECK(lg.grad[i] == doctest::Approx(-(1.0 - s) * w[i]).epsilon(1e-12));
}

TEST_CASE("linear parameter gradient is (softmax - onehot) x^T") {
  Rng rng(5);
  Classifier m = random_model(3, {}, 4, Activation::identity, rng);
  const Vec x{0.3, 0.6, 0.1};
  const std::size_t y = 2;
  Vec p = probabilities(m, x);
  p[y] -= 1.0;
  ParamGrad g = param_grad(m, x, y);
  REQUIRE(g.size() == 1);
  for (std::size_t r = 0; r < 4; ++r) {
    CHECK(g[0].bias[r] == doctest::Approx(p[r]).epsilon(1e-13));
    for (std::size_t c = 0; c < 3; ++c) CHECK(g[0].weights(r, c) == doctest::Approx(p[r] * x[c]).epsilon(1e-13));
  }
}

TEST_CASE("input and parameter gradients match central differences") {
  Rng rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    Classifier m = random_model(6, {8, 5}, 3, Activation::tanh, rng, 1.5);
    Vec x = random_point(6, rng);
    const std::size_t y = trial % 3;
    Vec fd = fd_gradient([&](const Vec& v) { return naive_ce(m, v, y); }, x);
    CHECK(rel_err(input_grad(m, x, y), fd) < 1e-6);

    ParamGrad pg = param_grad(m, x, y);
    for (std::size_t l = 0; l < m.layers().size(); ++l) {
      Vec theta = m.layers()[l].weights.data;
      Vec fdw = fd_gradient(
          [&](const Vec& t) {
            Classifier mm = m;
            mm.layers()[l].weights.data = t;
            return naive_ce(mm, x, y);
          },
          theta);
      CHECK(rel_err(pg[l].weights.data, fdw) < 1e-6);
      Vec fdb = fd_gradient(
          [&](const Vec& t) {
            Classifier mm = m;
            mm.layers()[l].bias = t;
            return naive_ce(mm, x, y);
          },
          m.layers()[l].bias);
      CHECK(rel_err(pg[l].bias, fdb) < 1e-6);
    }
  }
}

TEST_CASE("relu gradients match central differences away from kinks") {
  Rng rng(23);
  int checked = 0;
  for (int trial = 0; trial < 30; ++trial) {
    Classifier m = random_model(4, {6}, 2, Activation::relu, rng);
    Vec x = random_point(4, rng);
    const auto& l0 = m.layers()[0];
    bool near_kink = false;
    for (std::size_t r = 0; r < l0.weights.rows; ++r)
      near_kink |= std::abs(dot(l0.weights.row(r), x) + l0.bias[r]) < 1e-4;
    if (near_kink) continue;
    ++checked;
    Vec fd = fd_gradient([&](const Vec& v) { return naive_ce(m, v, 0); }, x);
    CHECK(rel_err(input_grad(m, x, 0), fd) < 1e-6);
  }
  CHECK(checked > 20);
}

TEST_CASE("dimension mismatch is rejected") {
  Rng rng(1);
  Classifier m = random_model(3, {}, 2, Activation::identity, rng);
  CHECK_THROWS_AS(forward_logits(m, Vec{0.1, 0.2}), std::invalid_argument);
  CHECK_THROWS_AS(input_grad(m, Vec{0.1, 0.2, 0.3, 0.4}, 0), std::invalid_argument);
}

TEST_CASE("model text round trip is exact") {
  Rng rng(2);
  Classifier m = random_model(5, {4, 3}, 3, Activation::tanh, rng);
  std::stringstream ss;
  save_model(m, ss);
  Classifier back = load_model(ss);
  CHECK(back == m);
  std::stringstream again;
  save_model(back, again);
  std::stringstream first;
  save_model(m, first);
  CHECK(again.str() == first.str());
}

TEST_CASE("load_model rejects unknown headers and activations") {
  std::stringstream bad("PRDF v9\n");
  CHECK_THROWS(load_model(bad));
  std::stringstream act("PRDF v1\n1 2 1\n2 1 sigmoid\n1\n1\n0 0\n");
  CHECK_THROWS(load_model(act));
}

TEST_CASE("tape: mean and neg_log chain") {
  GradTape t;
  Vec a{0.2}, b{0.6};
  auto na = t.leaf(a), nb = t.leaf(b);
  std::vector<GradTape::Node> xs{na, nb};
  auto m = t.mean(xs);
  auto r = t.neg_log(m);
  t.backward(r);
  CHECK(t.scalar(r) == doctest::Approx(-std::log(0.4)));
  CHECK(t.grad(na)[0] == doctest::Approx(-0.5 / 0.4));
  CHECK(t.grad(nb)[0] == doctest::Approx(-0.5 / 0.4));
}
