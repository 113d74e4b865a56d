// End-to-end acceptance checks. One PASS/FAIL line per criterion; the exit
// status is non-zero when any criterion fails.

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <sstream>
#include <string>

#include "oracles.hpp"
#include "prdf/pipeline.hpp"
#include "support.hpp"

using namespace prdf;
using namespace testsupport;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string printf_str(const char* fmt, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, fmt, args...);
  return buf;
}

double max_of(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, x);
  return m;
}

const EvalRow& row_of(const EvalReport& r, TrainMode mode, bool preempt) {
  for (const auto& row : r.rows)
    if (row.model == mode && row.preempt == preempt) return row;
  throw std::logic_error("row missing");
}

// 1. Input and parameter gradients against central differences.
Outcome gradient_oracle() {
  Rng rng(1001);
  double worst = 0.0;
  const Activation acts[] = {Activation::tanh, Activation::identity, Activation::tanh};
  for (int t = 0; t < 100; ++t) {
    const std::size_t dim = 2 + t % 7;
    const std::size_t classes = 2 + t % 3;
    std::vector<std::size_t> hidden;
    for (int l = 0; l < t % 3; ++l) hidden.push_back(3 + (t + l) % 6);
    Classifier m = random_model(dim, hidden, classes, acts[t % 3], rng, 1.5);
    const Vec x = random_point(dim, rng);
    const Label y = t % classes;
    auto ce = [&](const Classifier& mm, const Vec& v) { return naive_ce(mm, v, y); };
    worst = std::max(worst, rel_err(input_grad(m, x, y), fd_gradient([&](const Vec& v) { return ce(m, v); }, x)));
    const ParamGrad pg = param_grad(m, x, y);
    for (std::size_t l = 0; l < m.layers().size(); ++l) {
      const Vec fw = fd_gradient(
          [&](const Vec& th) {
            Classifier mm = m;
            mm.layers()[l].weights.data = th;
            return ce(mm, x);
          },
          m.layers()[l].weights.data);
      const Vec fb = fd_gradient(
          [&](const Vec& th) {
            Classifier mm = m;
            mm.layers()[l].bias = th;
            return ce(mm, x);
          },
          m.layers()[l].bias);
      worst = std::max({worst, rel_err(pg[l].weights.data, fw), rel_err(pg[l].bias, fb)});
    }
  }
  return {worst < 1e-4, printf_str("100 models, worst rel err %.3g (< 1e-4)", worst)};
}

// 2. Normalized-step Jacobian formula against differences; identity on linear models.
Outcome jacobian_check() {
  Rng rng(1002);
  double worst = 0.0;
  for (int t = 0; t < 20; ++t) {
    const std::size_t dim = 2 + t % 7;
    Classifier m = random_model(dim, {6}, 2 + t % 2, Activation::tanh, rng, 1.5);
    const auto jc = lemma2_jacobian(m, random_point(dim, rng), t % 2, 0.05);
    worst = std::max(worst, jc.max_abs_diff);
  }
  double linear_dev = 0.0;
  for (int t = 0; t < 10; ++t) {
    const std::size_t dim = 2 + t % 7;
    Vec w = random_point(dim, rng, -2.0, 2.0);
    Classifier lin = linear_binary(w, 0.1 * t - 0.5);
    const auto jc = lemma2_jacobian(lin, random_point(dim, rng), t % 2, 0.05);
    for (std::size_t i = 0; i < dim; ++i)
      for (std::size_t j = 0; j < dim; ++j)
        linear_dev = std::max(linear_dev, std::abs(jc.analytic_jacobian(i, j) - (i == j ? 1.0 : 0.0)));
  }
  // The Hessian inside the formula is itself a central difference, so the
  // linear identity holds to that roundoff.
  return {worst < 1e-3 && linear_dev < 1e-10,
          printf_str("20 tanh models, max abs err %.3g (< 1e-3); linear |J - I| %.3g (< 1e-10)", worst, linear_dev)};
}

// 3. Jacobian-transpose norm bound on random draws.
Outcome prop1_bound() {
  Rng rng(1003);
  std::uniform_real_distribution<double> ku(0.05, 1.0), au(0.0, 0.2);
  std::size_t violations = 0;
  double min_slack = INFINITY;
  for (int t = 0; t < 200; ++t) {
    const std::size_t dim = 2 + t % 7;
    Classifier m = random_model(dim, {2 + std::size_t(t % 6)}, 2 + t % 3, Activation::tanh, rng, 2.0);
    const Vec x = random_point(dim, rng);
    const Vec a = random_point(dim, rng, -1.0, 1.0);
    const auto r = prop1_bound_check(m, x, t % 2, au(rng), a, ku(rng));
    violations += !r.satisfied;
    min_slack = std::min(min_slack, r.slack);
  }
  return {violations == 0, printf_str("200 draws, %zu violations, min slack %.3g", violations, min_slack)};
}

ExperimentConfig toy_config() {
  ExperimentConfig c;  // gauss2, dim 8, 1000 per class, linf eps 0.15, delta = eps
  c.trace_points = 0;
  return c;
}

// 4. A small worst-case loss keeps the prediction of robustified toy points.
Outcome lemma1_check(const EvalReport& r) {
  std::size_t n = 0, satisfied = 0, unsound = 0;
  for (const auto& l : r.lemma1) {
    ++n;
    satisfied += l.report.satisfied;
    unsound += !l.report.sound();
  }
  const double f = n ? double(satisfied) / double(n) : 0.0;
  return {n > 0 && unsound == 0 && f >= 0.95,
          printf_str("%zu points, %zu satisfied (%.3f >= 0.95), %zu with a changed prediction", n, satisfied, f,
                     unsound)};
}

// 5. Robustification effectiveness on the toy pipeline.
Outcome effectiveness(const EvalReport& r, double seconds) {
  const EvalRow& pre_ours = row_of(r, TrainMode::preempt_robust, true);
  const EvalRow& adv_none = row_of(r, TrainMode::adversarial, false);
  const EvalRow& pre_none = row_of(r, TrainMode::preempt_robust, false);
  const double gap = pre_ours.grey_pgd - adv_none.grey_pgd;
  const bool ok = gap >= 0.20 && pre_none.clean >= adv_none.clean && seconds < 300.0;
  return {ok, printf_str("grey PGD robustified %.3f vs adversarial %.3f (gap %.3f >= 0.20); clean %.3f vs %.3f; "
                         "%.1f s",
                         pre_ours.grey_pgd, adv_none.grey_pgd, gap, pre_none.clean, adv_none.clean, seconds)};
}

// 6. Closed-form optimum on binary linear classifiers.
Outcome linear_oracle() {
  Rng rng(1006);
  double worst_l2 = 0.0, worst_inf = 0.0;
  for (int t = 0; t < 10; ++t) {
    const std::size_t dim = 2 + t % 5;
    const Vec w = random_point(dim, rng, -2.0, 2.0);
    const Classifier m = linear_binary(w, 0.2 * (t % 3) - 0.2);
    const Vec x = random_point(dim, rng, 0.35, 0.65);
    const double sgn = predict(m, x) == 1 ? 1.0 : -1.0;
    {
      const PerturbSpec spec = PerturbSpec::matched(Norm::l2, 0.2);
      RobustifyConfig cfg = RobustifyConfig::defaults(spec);
      cfg.lr = 0.5;
      Rng r(t);
      const Vec xr = robustify(m, x, spec, cfg, r);
      Vec opt = x;
      axpy(sgn * spec.delta / norm2(w), w, opt);
      worst_l2 = std::max(worst_l2, norm2(sub(xr, opt)));
    }
    {
      const PerturbSpec spec = PerturbSpec::matched(Norm::linf, 0.1);
      Rng r(t);
      const Vec xr = robustify(m, x, spec, RobustifyConfig::defaults(spec), r);
      Vec opt = x;
      for (std::size_t i = 0; i < dim; ++i)
        opt[i] = std::clamp(x[i] + sgn * spec.delta * (w[i] > 0 ? 1.0 : w[i] < 0 ? -1.0 : 0.0), 0.0, 1.0);
      worst_inf = std::max(worst_inf, norm_inf(sub(xr, opt)));
    }
  }
  return {worst_l2 < 1e-3 && worst_inf < 1e-3,
          printf_str("10 models, l2 error %.3g, linf error %.3g (< 1e-3)", worst_l2, worst_inf)};
}

// 7. White-box reconstruction distances with random-start robustification.
Outcome whitebox_semantics() {
  ExperimentConfig c;
  c.p = Norm::l2;
  c.eps = {0.5};
  c.init = InitMode::random_in_delta_ball;
  c.eval_points = 100;
  c.trace_points = 0;
  const EvalReport r = run_pipeline(c);
  bool ok = true;
  std::string detail;
  for (TrainMode m : {TrainMode::adversarial, TrainMode::preempt_robust}) {
    std::size_t far = 0, n = 0;
    for (const auto& d : r.distances) {
      if (d.model != m) continue;
      ++n;
      far += d.verdict.recon_dist > 0.75 * c.eps[0];
    }
    const double f = n ? double(far) / double(n) : 0.0;
    const double white = row_of(r, m, true).white_pgd, grey_none = row_of(r, m, false).grey_pgd;
    ok = ok && n > 0 && f >= 0.5 && white >= grey_none;
    detail += printf_str("%s: far %.2f (>= 0.5), white %.3f >= grey-none %.3f; ", train_mode_name(m).c_str(), f,
                         white, grey_none);
  }
  return {ok, detail};
}

// 8. Exact update gradients explode where first-order ones stay finite.
Outcome exploding_gradients() {
  const PerturbSpec spec = PerturbSpec::matched(Norm::l2, 0.5);
  std::size_t exploded = 0, fo_finite = 0;
  double best = 0.0;
  for (std::uint64_t s = 0; s < 5; ++s) {
    const Dataset ds = gen_dataset(DatasetKind::gauss2, 200, 8, 100 + s);
    Rng rng(100 + s);
    const Classifier init = Classifier::random_mlp(8, std::vector<std::size_t>{16, 16}, 2, Activation::tanh, rng, 6.0);
    TrainConfig tc = TrainConfig::defaults(TrainMode::plain, spec);
    tc.epochs = 10;
    const Classifier m = train(init, ds.subset(ds.train), {}, tc, rng).model;
    RobustifyConfig rc = RobustifyConfig::defaults(spec);
    rc.max_iter = 30;
    double fo = 0.0, ex = 0.0;
    bool finite = true, aborted = false;
    for (std::uint64_t k = 0; k < 10; ++k) {
      const Vec& x = ds.examples[ds.test[k]].x;
      Rng a = derive_stream(s, "defend", k), b = derive_stream(s, "defend", k);
      rc.grad_mode = GradMode::first_order;
      const RobustifyResult r1 = robustify_traced(m, x, spec, rc, a);
      rc.grad_mode = GradMode::exact;
      const RobustifyResult r2 = robustify_traced(m, x, spec, rc, b);
      finite = finite && !r1.aborted && all_finite(r1.grad_norms);
      aborted = aborted || r2.aborted || !all_finite(r2.grad_norms);
      fo = std::max(fo, max_of(r1.grad_norms));
      ex = std::max(ex, max_of(r2.grad_norms));
    }
    const double ratio = aborted ? INFINITY : ex / fo;
    best = std::max(best, ratio);
    exploded += ratio >= 10.0;
    fo_finite += finite;
  }
  return {exploded >= 1 && fo_finite == 5,
          printf_str("%zu of 5 runs with exact/first-order max >= 10 (largest %.3g); first-order finite in %zu of 5",
                     exploded, best, fo_finite)};
}

// 9. Smoothing: bound oracle, soundness, certified accuracy direction.
Outcome smoothing() {
  double worst = 0.0;
  const std::size_t ns[] = {20, 100, 1000, 10000, 20000};
  const double alphas[] = {0.001, 0.01, 0.05};
  std::size_t configs = 0;
  for (int t = 0; t < 50; ++t) {
    const std::size_t n = ns[t % 5];
    const std::size_t k = (t % 2 == 0) ? n - (t * 7) % (n / 10 + 1) : (n * (1 + t % 9)) / 10;
    const double a = alphas[t % 3];
    worst = std::max(worst, std::abs(clopper_pearson_lower(k, n, a) - exact_lower_bound(k, n, a)));
    ++configs;
  }
  const bool a_ok = worst < 1e-10;

  ExperimentConfig c;
  c.smooth = true;
  c.eval_points = 0;
  c.smooth_points = 300;
  c.smooth_eps = 0.5;
  c.sigma = 0.25;
  const EvalReport r = run_pipeline(c);
  SmoothConfig sc;
  sc.sigma = c.sigma;
  sc.n_pred = c.n_pred;
  sc.n_cert = c.n_cert;
  sc.samples = c.smooth_samples;
  sc.conf_alpha = c.conf_alpha;
  std::size_t certified = 0, attacks = 0, suspected = 0, flips = 0;
  for (std::size_t i = 0; i < r.certificates.size(); ++i) {
    const CertRecord& cr = r.certificates[i];
    if (cr.robustified || cr.cert.abstain || !(cr.cert.radius > 0.0)) continue;
    ++certified;
    Rng rng = derive_stream(c.seed, "soundness", cr.example_id);
    const SoundnessResult s =
        soundness_check(r.smooth_model, r.smooth_points.originals[i].x, cr.cert, sc, 50, 20000, rng);
    attacks += s.attacks;
    suspected += s.suspected;
    flips += s.flips;
  }
  const bool b_ok = certified >= 200 && flips == 0;
  const SmoothRow& raw = r.smooth_rows.at(0);
  const SmoothRow& rob = r.smooth_rows.at(1);
  const bool c_ok = rob.certified > raw.certified;
  return {a_ok && b_ok && c_ok,
          printf_str("(a) %zu configs, worst |diff| %.3g; (b) %zu certified, %zu attacks, %zu 50-vote "
                     "disagreements, %zu confirmed flips; (c) certified@%.2g %.3f robustified vs %.3f raw",
                     configs, worst, certified, attacks, suspected, flips, c.smooth_eps, rob.certified,
                     raw.certified)};
}

// 10. Degenerate settings reproduce the simpler operations bit for bit.
Outcome degeneracies() {
  const Dataset ds = gen_dataset(DatasetKind::gauss2, 60, 4, 1010);
  const auto data = ds.subset(ds.train);
  Rng mr(1010);
  const Classifier init = random_model(4, {6}, 2, Activation::relu, mr);
  const PerturbSpec spec = PerturbSpec::matched(Norm::linf, 0.1);
  auto run = [&](TrainConfig cfg) {
    cfg.epochs = 3;
    cfg.batch_size = 16;
    Rng rng(77);
    return train(init, data, {}, cfg, rng);
  };
  auto same = [](const TrainResult& a, const TrainResult& b) {
    if (!(a.model == b.model) || a.history.size() != b.history.size()) return false;
    for (std::size_t i = 0; i < a.history.size(); ++i)
      if (a.history[i].loss != b.history[i].loss || a.history[i].acc != b.history[i].acc) return false;
    return true;
  };
  TrainConfig adv = TrainConfig::defaults(TrainMode::adversarial, spec);
  TrainConfig pre = TrainConfig::defaults(TrainMode::preempt_robust, {Norm::linf, 0.1, 0.0});
  pre.inner_min_steps = 0;
  const bool pre_adv = same(run(pre), run(adv));
  TrainConfig adv0 = adv;
  adv0.inner_max_steps = 0;
  const bool adv_plain = same(run(adv0), run(TrainConfig::defaults(TrainMode::plain, spec)));

  bool smooth_ok = true;
  SmoothConfig s0;
  s0.sigma = 0.0;
  Rng pr(1011);
  const Classifier m = random_model(4, {6}, 3, Activation::tanh, pr, 2.0);
  for (int t = 0; t < 20; ++t) {
    const Vec x = random_point(4, pr);
    Rng a(t), b(t);
    smooth_ok = smooth_ok && smoothed_predict(m, x, s0, a) == predict(m, x);
    for (Label y = 0; y < 3; ++y) smooth_ok = smooth_ok && smoothed_soft(m, x, y, s0, a).prob == probabilities(m, x)[y];
    const PerturbSpec l2 = PerturbSpec::matched(Norm::l2, 0.2);
    const PgdConfig pc = PgdConfig::defaults(l2);
    Rng c(t), d(t);
    smooth_ok = smooth_ok && randomized_pgd(m, x, 0, l2, pc, 0.0, 5, c) == pgd(m, x, 0, l2, pc, d);
    RobustifyConfig rc = RobustifyConfig::defaults(l2);
    rc.max_iter = 10;
    Rng e(t), f(t);
    smooth_ok = smooth_ok && robustify_smoothed(m, x, l2, rc, s0, e) == robustify(m, x, l2, rc, f);
    smooth_ok = smooth_ok && e() == f();
  }
  return {pre_adv && adv_plain && smooth_ok,
          printf_str("preempt(L=0, delta=0) == adversarial: %s; adversarial(K=0) == plain: %s; sigma 0 == base: %s",
                     pre_adv ? "yes" : "no", adv_plain ? "yes" : "no", smooth_ok ? "yes" : "no")};
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

// 11. Two selftest runs with the same seed write identical CSV bytes.
Outcome determinism() {
  namespace fs = std::filesystem;
  const fs::path base = fs::temp_directory_path() / "prdf_acceptance_selftest";
  fs::remove_all(base);
  const ExperimentConfig cfg = selftest_config();
  for (const char* run : {"a", "b"}) emit_report(run_pipeline(cfg), (base / run).string(), false);
  std::size_t files = 0, differ = 0;
  for (const auto& entry : fs::directory_iterator(base / "a")) {
    const auto name = entry.path().filename();
    ++files;
    if (!fs::exists(base / "b" / name) || slurp(entry.path()) != slurp(base / "b" / name)) ++differ;
  }
  fs::remove_all(base);
  const bool checks = check_report(run_pipeline(cfg), cfg).ok;
  return {files > 0 && differ == 0 && checks,
          printf_str("%zu files compared, %zu differ; structural checks %s", files, differ, checks ? "pass" : "fail")};
}

}  // namespace

// Optional arguments select criteria by number; no arguments runs all.
int main(int argc, char** argv) {
  using clock = std::chrono::steady_clock;
  std::vector<int> only;
  for (int i = 1; i < argc; ++i) only.push_back(std::atoi(argv[i]));
  auto wanted = [&](int id) { return only.empty() || std::find(only.begin(), only.end(), id) != only.end(); };
  int failures = 0, ran = 0;
  auto report = [&](int id, const std::function<Outcome()>& f) {
    if (!wanted(id)) return;
    ++ran;
    const auto t0 = clock::now();
    Outcome o;
    try {
      o = f();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double s = std::chrono::duration<double>(clock::now() - t0).count();
    std::printf("AC%d %s %s [%.1f s]\n", id, o.pass ? "PASS" : "FAIL", o.detail.c_str(), s);
    std::fflush(stdout);
    failures += !o.pass;
  };

  report(1, gradient_oracle);
  report(2, jacobian_check);
  report(3, prop1_bound);

  EvalReport toy;
  double toy_seconds = 0.0;
  if (wanted(4) || wanted(5)) {
    const auto t0 = clock::now();
    try {
      toy = run_pipeline(toy_config());
    } catch (const std::exception& e) {
      std::printf("toy pipeline failed: %s\n", e.what());
    }
    toy_seconds = std::chrono::duration<double>(clock::now() - t0).count();
  }
  report(4, [&] { return lemma1_check(toy); });
  report(5, [&] { return effectiveness(toy, toy_seconds); });
  report(6, linear_oracle);
  report(7, whitebox_semantics);
  report(8, exploding_gradients);
  report(9, smoothing);
  report(10, degeneracies);
  report(11, determinism);
  std::printf("%d of %d criteria failed\n", failures, ran);
  return failures == 0 ? 0 : 1;
}
