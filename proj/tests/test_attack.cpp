#include <doctest.h>

#include "prdf/attack.hpp"
#include "support.hpp"

using namespace prdf;
using namespace testsupport;

namespace {

PgdConfig fixed_cfg(double eps, std::size_t steps, bool random_start) { return {steps, eps / 4.0, random_start, 1}; }

}  // namespace

TEST_CASE("zero-step PGD without random start returns the input") {
  Rng rng(1), model_rng(2);
  Classifier m = random_model(3, {4}, 2, Activation::tanh, model_rng);
  Vec x{0.3, 0.4, 0.5};
  CHECK(pgd(m, x, 0, PerturbSpec::matched(Norm::linf, 0.1), fixed_cfg(0.1, 0, false), rng) == x);
  CHECK(pgd(m, x, 0, PerturbSpec::matched(Norm::l2, 0.1), fixed_cfg(0.1, 0, false), rng) == x);
}

TEST_CASE("linf PGD on a linear model reaches the loss-increasing corner") {
  const Vec w{0.8, -1.5, 0.3, 2.0};
  Classifier m = linear_binary(w, 0.1);
  const Vec x{0.4, 0.5, 0.6, 0.45};
  const double eps = 0.1;
  Rng rng(3);
  for (Label y : {Label{0}, Label{1}}) {
    const double dir = y == 1 ? -1.0 : 1.0;
    for (int t = 0; t < 10; ++t) {
      Vec xa = pgd(m, x, y, PerturbSpec::matched(Norm::linf, eps), PgdConfig::defaults({Norm::linf, eps, eps}), rng);
      for (std::size_t i = 0; i < w.size(); ++i) CHECK(xa[i] == doctest::Approx(x[i] + dir * eps * (w[i] > 0 ? 1 : -1)).epsilon(1e-14));
    }
  }
}

TEST_CASE("l2 PGD on a linear model moves eps along the normalized gradient") {
  const Vec w{0.8, -1.5, 0.3};
  Classifier m = linear_binary(w, 0.0);
  const Vec x{0.4, 0.5, 0.6};
  const double eps = 0.2;
  const PerturbSpec spec = PerturbSpec::matched(Norm::l2, eps);
  Rng rng(4);
  const double nw = norm2(w);
  Vec xa = pgd(m, x, 1, spec, fixed_cfg(eps, 20, false), rng);
  for (std::size_t i = 0; i < 3; ++i) CHECK(xa[i] == doctest::Approx(x[i] - eps * w[i] / nw).epsilon(1e-12));
  // with a random start the orthogonal residue decays geometrically
  Vec xr = pgd(m, x, 1, spec, PgdConfig::defaults(spec), rng);
  Vec target(3);
  for (std::size_t i = 0; i < 3; ++i) target[i] = x[i] - eps * w[i] / nw;
  CHECK(norm2(sub(xr, target)) < 0.05 * eps);
}

TEST_CASE("PGD outputs stay inside the eps-ball and the unit cube") {
  Rng rng(5);
  for (int t = 0; t < 60; ++t) {
    Classifier m = random_model(5, {6}, 3, Activation::tanh, rng, 2.0);
    Vec x = random_point(5, rng);
    const Norm p = t % 2 ? Norm::l2 : Norm::linf;
    const PerturbSpec spec = PerturbSpec::matched(p, p == Norm::l2 ? 0.5 : 0.2);
    PgdTrace tr = pgd_trace(m, x, t % 3, spec, PgdConfig::defaults(spec), rng);
    REQUIRE(tr.states.size() == 21);
    for (const Vec& s : tr.states) {
      CHECK(in_unit_cube(s));
      CHECK(distance(s, x, p) <= spec.eps * (1.0 + 1e-12));
    }
  }
}

TEST_CASE("loss along a linear-model PGD trace never decreases") {
  Rng rng(6);
  for (int t = 0; t < 20; ++t) {
    Vec w = random_point(4, rng, -2.0, 2.0);
    Classifier m = linear_binary(w, 0.0);
    Vec x = random_point(4, rng, 0.3, 0.7);
    const Norm p = t % 2 ? Norm::l2 : Norm::linf;
    const PerturbSpec spec = PerturbSpec::matched(p, 0.15);
    PgdTrace tr = pgd_trace(m, x, 1, spec, PgdConfig::defaults(spec), rng);
    for (std::size_t k = 1; k < tr.states.size(); ++k)
      CHECK(cross_entropy(m, tr.states[k], 1) >= cross_entropy(m, tr.states[k - 1], 1) - 1e-12);
  }
}

TEST_CASE("first restart candidate equals plain PGD with the same stream") {
  Rng mr(7);
  Classifier m = random_model(4, {5}, 2, Activation::tanh, mr);
  Vec x{0.2, 0.4, 0.6, 0.8};
  const PerturbSpec spec = PerturbSpec::matched(Norm::linf, 0.1);
  PgdConfig cfg = PgdConfig::defaults(spec);
  cfg.restarts = 5;
  Rng a(99), b(99);
  auto cands = pgd_candidates(m, x, 0, spec, cfg, a);
  CHECK(cands.size() == 5);
  CHECK(cands.front() == pgd(m, x, 0, spec, PgdConfig::defaults(spec), b));
  Rng c(99), d(99);
  PgdConfig one = cfg;
  one.restarts = 1;
  CHECK(pgd_restarts(m, x, 0, spec, one, c) == pgd(m, x, 0, spec, one, d));
}

TEST_CASE("more restarts never lower the attack success on nested seed schedules") {
  Rng mr(8);
  Classifier m = random_model(4, {8}, 2, Activation::tanh, mr, 2.5);
  const PerturbSpec spec = PerturbSpec::matched(Norm::linf, 0.08);
  PgdConfig one = PgdConfig::defaults(spec), ten = one;
  ten.restarts = 10;
  int s1 = 0, s10 = 0;
  for (std::size_t i = 0; i < 80; ++i) {
    Rng xr(1000 + i);
    Vec x = random_point(4, xr);
    const Label y = predict(m, x);
    Rng a = derive_stream(5, "attack", i), b = derive_stream(5, "attack", i);
    const bool w1 = predict(m, pgd_restarts(m, x, y, spec, one, a)) != y;
    const bool w10 = predict(m, pgd_restarts(m, x, y, spec, ten, b)) != y;
    s1 += w1;
    s10 += w10;
    CHECK((!w1 || w10));
  }
  CHECK(s10 >= s1);
}

TEST_CASE("strongest candidate prefers misclassification, then loss, then index") {
  std::vector<CandidateScore> s{{false, 5.0}, {true, 0.9}, {true, 1.2}, {true, 1.2}};
  CHECK(strongest_candidate(s) == 2);
  std::vector<CandidateScore> none{{false, 0.3}, {false, 0.7}};
  CHECK(strongest_candidate(none) == 1);
}

TEST_CASE("randomized PGD with sigma 0 is plain PGD") {
  Rng mr(9);
  Classifier m = random_model(3, {4}, 2, Activation::tanh, mr);
  Vec x{0.3, 0.6, 0.5};
  for (Norm p : {Norm::linf, Norm::l2}) {
    const PerturbSpec spec = PerturbSpec::matched(p, 0.2);
    for (std::size_t M : {1u, 7u}) {
      Rng a(42), b(42);
      CHECK(randomized_pgd(m, x, 1, spec, PgdConfig::defaults(spec), 0.0, M, a) ==
            pgd(m, x, 1, spec, PgdConfig::defaults(spec), b));
      CHECK(a() == b());
    }
  }
}

TEST_CASE("smoothed loss gradient matches differences under common random numbers") {
  Rng rng(10);
  for (int t = 0; t < 10; ++t) {
    Classifier m = random_model(4, {6}, 3, Activation::tanh, rng, 1.5);
    Vec x = random_point(4, rng);
    auto noise = draw_gaussian_noise(4, 0.3, 5, rng);
    Vec fd = fd_gradient([&](const Vec& v) { return smoothed_loss_and_grad(m, v, 1, noise).loss; }, x);
    CHECK(rel_err(smoothed_loss_and_grad(m, x, 1, noise).grad, fd) < 1e-6);
  }
}

TEST_CASE("smoothed loss estimator variance shrinks like 1/M") {
  Rng rng(11);
  Classifier m = random_model(3, {5}, 2, Activation::tanh, rng, 2.0);
  Vec x{0.4, 0.5, 0.6};
  auto variance = [&](std::size_t M) {
    double s = 0.0, s2 = 0.0;
    for (int t = 0; t < 1000; ++t) {
      const double l = smoothed_loss_and_grad(m, x, 0, draw_gaussian_noise(3, 0.5, M, rng)).loss;
      s += l;
      s2 += l * l;
    }
    return s2 / 1000.0 - (s / 1000.0) * (s / 1000.0);
  };
  const double v1 = variance(1), v16 = variance(16);
  // -log of a mean is not a mean, so allow a generous band around 16
  CHECK(v1 / v16 > 8.0);
  CHECK(v1 / v16 < 32.0);
}

TEST_CASE("PGD config validation") {
  CHECK_THROWS(PgdConfig{10, 0.0, true, 1}.validate());
  CHECK_THROWS(PgdConfig{10, 0.1, true, 0}.validate());
  CHECK_NOTHROW(PgdConfig{0, 0.1, false, 1}.validate());
}
