#include "prdf/smooth.hpp"

#include <boost/math/special_functions/beta.hpp>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <stdexcept>

namespace prdf {

void SmoothConfig::validate() const {
  if (!(sigma >= 0.0)) throw std::invalid_argument("SmoothConfig: sigma must be >= 0");
  if (n_pred < 1 || n_cert < 1 || samples < 1) throw std::invalid_argument("SmoothConfig: sample counts must be >= 1");
  if (!(conf_alpha > 0.0 && conf_alpha < 1.0)) throw std::invalid_argument("SmoothConfig: conf_alpha must lie in (0, 1)");
}

Vote smoothed_vote(const Classifier& model, std::span<const double> x, double sigma, std::size_t n, Rng& rng) {
  require_same_dim(x.size(), model.input_dim(), "smoothed_vote");
  Vote v;
  v.counts.assign(model.num_classes(), 0);
  if (sigma == 0.0) {
    v.counts[predict(model, x)] = n;
  } else {
    std::normal_distribution<double> gauss(0.0, 1.0);
    Vec xn(x.size());
    for (std::size_t s = 0; s < n; ++s) {
      for (std::size_t i = 0; i < x.size(); ++i) xn[i] = x[i] + sigma * gauss(rng);
      ++v.counts[predict(model, xn)];
    }
  }
  for (std::size_t c = 1; c < v.counts.size(); ++c)
    if (v.counts[c] > v.counts[v.label]) v.label = c;
  return v;
}

Label smoothed_predict(const Classifier& model, std::span<const double> x, const SmoothConfig& cfg, Rng& rng) {
  cfg.validate();
  return smoothed_vote(model, x, cfg.sigma, cfg.n_pred, rng).label;
}

SoftEstimate smoothed_soft_fixed(const Classifier& model, std::span<const double> x, Label y,
                                 std::span<const Vec> noise) {
  require_same_dim(x.size(), model.input_dim(), "smoothed_soft");
  if (noise.empty()) throw std::invalid_argument("smoothed_soft: need at least one noise sample");
  if (y >= model.num_classes()) throw std::invalid_argument("smoothed_soft: class index out of range");
  GradTape tape;
  auto xn = tape.leaf(x);
  std::vector<GradTape::Node> probs;
  for (const Vec& xi : noise) probs.push_back(tape.softmax_at(record_forward(model, tape, tape.add(xn, tape.leaf(xi))), y));
  auto m = tape.mean(probs);
  tape.backward(m);
  return {tape.scalar(m), tape.grad(xn)};
}

SoftEstimate smoothed_soft(const Classifier& model, std::span<const double> x, Label y, const SmoothConfig& cfg,
                           Rng& rng) {
  cfg.validate();
  if (cfg.sigma == 0.0) {
    SoftEstimate s = smoothed_soft_fixed(model, x, y, std::vector<Vec>{Vec(x.size(), 0.0)});
    s.prob = probabilities(model, x)[y];
    return s;
  }
  return smoothed_soft_fixed(model, x, y, draw_gaussian_noise(x.size(), cfg.sigma, cfg.samples, rng));
}

RobustifyResult robustify_smoothed_traced(const Classifier& model, std::span<const double> x_o,
                                          const PerturbSpec& spec, const RobustifyConfig& rcfg,
                                          const SmoothConfig& scfg, Rng& rng) {
  scfg.validate();
  if (scfg.sigma == 0.0) return robustify_traced(model, x_o, spec, rcfg, rng);
  if (rcfg.grad_mode != GradMode::first_order)
    throw std::invalid_argument("robustify_smoothed: only first-order update gradients are supported");
  require_same_dim(x_o.size(), model.input_dim(), "robustify_smoothed");
  const Label y = smoothed_predict(model, x_o, scfg, rng);
  detail::InnerAttack inner = [&](std::span<const double> center, Rng& r) {
    return randomized_pgd_trace(model, center, y, spec, rcfg.inner, scfg.sigma, scfg.samples, r);
  };
  detail::OuterGradient outer = [&](std::span<const double>, std::span<const PgdTrace> batch) {
    Vec g(x_o.size(), 0.0);
    for (const auto& t : batch) {
      const auto noise = draw_gaussian_noise(x_o.size(), scfg.sigma, scfg.samples, rng);
      axpy(1.0 / double(batch.size()), smoothed_loss_and_grad(model, t.final_point(), y, noise).grad, g);
    }
    return g;
  };
  return detail::bilevel_loop(x_o, spec, rcfg, -1.0, inner, outer, rng);
}

Vec robustify_smoothed(const Classifier& model, std::span<const double> x_o, const PerturbSpec& spec,
                       const RobustifyConfig& rcfg, const SmoothConfig& scfg, Rng& rng) {
  RobustifyResult r = robustify_smoothed_traced(model, x_o, spec, rcfg, scfg, rng);
  if (r.aborted) throw NumericalError("robustify_smoothed: " + r.diagnostic);
  return std::move(r.x);
}

double clopper_pearson_lower(std::size_t k, std::size_t n, double alpha) {
  if (n == 0 || k > n) throw std::invalid_argument("clopper_pearson_lower: need 0 <= k <= n, n >= 1");
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("clopper_pearson_lower: alpha must lie in (0, 1)");
  if (k == 0) return 0.0;
  return boost::math::ibeta_inv(double(k), double(n - k + 1), alpha);
}

double normal_quantile(double p) {
  if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("normal_quantile: p must lie in [0, 1]");
  if (p == 0.0) return -std::numeric_limits<double>::infinity();
  if (p == 1.0) return std::numeric_limits<double>::infinity();
  // Acklam's rational approximation.
  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                                 1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                                 6.680131188771972e+01,  -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                                 -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                                 3.754408661907416e+00};
  constexpr double lo = 0.02425;
  if (p < lo) {
    const double q = std::sqrt(-2.0 * std::log(p));
    return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  if (p > 1.0 - lo) {
    const double q = std::sqrt(-2.0 * std::log(1.0 - p));
    return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  const double q = p - 0.5;
  const double r = q * q;
  return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
         (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
}

Certificate certificate_from_counts(Label predicted, std::size_t count, std::size_t n, double sigma, double alpha) {
  Certificate c;
  c.predicted = predicted;
  c.count = count;
  c.n = n;
  c.pA_lower = clopper_pearson_lower(count, n, alpha);
  c.abstain = !(c.pA_lower > 0.5);
  c.radius = c.abstain ? 0.0 : sigma * normal_quantile(c.pA_lower);
  return c;
}

Certificate certify(const Classifier& model, std::span<const double> x, const SmoothConfig& cfg, Rng& rng) {
  cfg.validate();
  Rng select = fork(rng);
  Rng estimate = fork(rng);
  const Label top = smoothed_vote(model, x, cfg.sigma, cfg.n_pred, select).label;
  const Vote v = smoothed_vote(model, x, cfg.sigma, cfg.n_cert, estimate);
  return certificate_from_counts(top, v.counts[top], cfg.n_cert, cfg.sigma, cfg.conf_alpha);
}

CertSummary cert_eval(const Classifier& model, std::span<const Example> examples, std::span<const Vec> points,
                      std::span<const std::size_t> ids, double eps, bool robustified, const SmoothConfig& cfg,
                      std::uint64_t seed) {
  if (points.size() != examples.size() || ids.size() != examples.size())
    throw std::invalid_argument("cert_eval: examples, points and ids must have equal length");
  CertSummary s;
  std::size_t certified = 0, correct = 0, abstained = 0;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    Rng r = derive_stream(seed, "certify", ids[i]);
    CertRecord rec;
    rec.example_id = ids[i];
    rec.robustified = robustified;
    rec.cert = certify(model, points[i], cfg, r);
    rec.correct = !rec.cert.abstain && rec.cert.predicted == examples[i].y;
    if (rec.cert.abstain) ++abstained;
    if (rec.correct) ++correct;
    if (rec.correct && rec.cert.radius >= eps) ++certified;
    s.records.push_back(rec);
  }
  if (!examples.empty()) {
    const double n = double(examples.size());
    s.certified_acc = double(certified) / n;
    s.clean_acc = double(correct) / n;
    s.abstain_rate = double(abstained) / n;
  }
  return s;
}

void write_cert_csv(std::ostream& out, std::span<const CertRecord> records) {
  out << "example_id,robustified,predicted,correct,pA_lower,radius,abstain\n";
  char buf[160];
  for (const auto& r : records) {
    std::snprintf(buf, sizeof buf, "%zu,%d,%zu,%d,%.10g,%.10g,%d\n", r.example_id, r.robustified ? 1 : 0,
                  r.cert.predicted, r.correct ? 1 : 0, r.cert.pA_lower, r.cert.radius, r.cert.abstain ? 1 : 0);
    out << buf;
  }
}

SoundnessResult soundness_check(const Classifier& model, std::span<const double> x, const Certificate& cert,
                                const SmoothConfig& cfg, std::size_t attacks, std::size_t confirm_votes, Rng& rng) {
  SoundnessResult res;
  if (cert.abstain || !(cert.radius > 0.0)) return res;
  const PerturbSpec spec{Norm::l2, 0.95 * cert.radius, 0.0};
  const PgdConfig pc = PgdConfig::defaults(spec);
  for (std::size_t a = 0; a < attacks; ++a) {
    const Vec xa = randomized_pgd(model, x, cert.predicted, spec, pc, cfg.sigma, cfg.samples, rng);
    ++res.attacks;
    if (smoothed_predict(model, xa, cfg, rng) == cert.predicted) continue;
    ++res.suspected;
    if (smoothed_vote(model, xa, cfg.sigma, confirm_votes, rng).label != cert.predicted) ++res.flips;
  }
  return res;
}

}  // namespace prdf
