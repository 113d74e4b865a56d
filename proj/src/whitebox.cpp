#include "prdf/whitebox.hpp"

#include <cstdio>
#include <ostream>
#include <stdexcept>

namespace prdf {

void WhiteboxConfig::validate() const {
  if (eps_prime_fractions.empty()) throw std::invalid_argument("WhiteboxConfig: empty eps' grid");
  for (double f : eps_prime_fractions)
    if (!(f > 0.0 && f <= 1.0)) throw std::invalid_argument("WhiteboxConfig: every eps' must lie in (0, eps]");
  if (restarts < 1) throw std::invalid_argument("WhiteboxConfig: restarts must be >= 1");
}

Vec reconstruct(const Classifier& model, std::span<const double> x_r, const PerturbSpec& spec,
                const RobustifyConfig& cfg, Rng& rng) {
  require_same_dim(x_r.size(), model.input_dim(), "reconstruct");
  const Label y = predict(model, x_r);
  RobustifyConfig rc = cfg;
  rc.init = InitMode::at_original;
  detail::InnerAttack inner = [&](std::span<const double> center, Rng& r) {
    return pgd_trace(model, center, y, spec, rc.inner, r);
  };
  detail::OuterGradient outer = [&](std::span<const double> center, std::span<const PgdTrace> batch) {
    return update_gradient(model, center, batch, y, rc.grad_mode, spec, rc.inner);
  };
  RobustifyResult r = detail::bilevel_loop(x_r, spec, rc, +1.0, inner, outer, rng);
  if (r.aborted) throw NumericalError("reconstruct: " + r.diagnostic);
  return std::move(r.x);
}

WhiteboxResult whitebox_attack(const Classifier& model, std::span<const double> x_r, Label y_o,
                               const PerturbSpec& spec, const WhiteboxConfig& cfg, Rng& rng) {
  cfg.validate();
  WhiteboxResult out;
  out.reconstruction = reconstruct(model, x_r, spec, cfg.recon, rng);
  for (double f : cfg.eps_prime_fractions) {
    PerturbSpec s = spec;
    s.eps = f * spec.eps;
    PgdConfig pc = PgdConfig::defaults(s);
    pc.steps = cfg.recon.inner.steps;
    pc.restarts = cfg.restarts;
    out.candidates.push_back({s.eps, pgd_restarts(model, out.reconstruction, y_o, s, pc, rng)});
  }
  return out;
}

WhiteboxVerdict eval_whitebox(const WhiteboxResult& result, std::span<const double> x_o, Label y_o,
                              const Classifier& model, double eps, Norm p) {
  WhiteboxVerdict v;
  v.recon_dist = distance(result.reconstruction, x_o, p);
  for (const auto& c : result.candidates) {
    CandidateVerdict cv;
    cv.eps_prime = c.eps_prime;
    cv.attack_dist = distance(c.x, x_o, p);
    cv.misclassified = predict(model, c.x) != y_o;
    cv.valid = cv.misclassified && cv.attack_dist <= eps;
    if (cv.valid) v.robust = false;
    v.candidates.push_back(cv);
  }
  return v;
}

DistanceStats distance_stats(std::span<const WhiteboxVerdict> verdicts, double eps) {
  DistanceStats s;
  std::size_t near = 0, outside = 0;
  for (const auto& v : verdicts) {
    s.recon_dists.push_back(v.recon_dist);
    if (v.recon_dist >= 0.9 * eps && v.recon_dist <= 1.1 * eps) ++near;
    for (const auto& c : v.candidates) {
      s.attack_dists.push_back(c.attack_dist);
      if (c.attack_dist > eps) ++outside;
    }
  }
  if (!s.recon_dists.empty()) s.frac_recon_near_boundary = double(near) / double(s.recon_dists.size());
  if (!s.attack_dists.empty()) s.frac_attack_outside = double(outside) / double(s.attack_dists.size());
  return s;
}

void write_distances_csv(std::ostream& out, std::span<const WhiteboxVerdict> verdicts,
                         std::span<const std::size_t> example_ids) {
  out << "example_id,recon_dist,eps_prime,attack_dist,misclassified,valid\n";
  char buf[160];
  for (std::size_t i = 0; i < verdicts.size(); ++i) {
    for (const auto& c : verdicts[i].candidates) {
      std::snprintf(buf, sizeof buf, "%zu,%.10g,%.10g,%.10g,%d,%d\n", example_ids[i], verdicts[i].recon_dist,
                    c.eps_prime, c.attack_dist, c.misclassified ? 1 : 0, c.valid ? 1 : 0);
      out << buf;
    }
  }
}

std::vector<std::size_t> distance_histogram(std::span<const double> dists, double eps) {
  const double width = eps / 20.0;
  std::vector<std::size_t> counts(41, 0);
  for (double d : dists) {
    const auto bucket = static_cast<std::size_t>(d / width);
    ++counts[std::min<std::size_t>(bucket, 40)];
  }
  return counts;
}

}  // namespace prdf
