#include "prdf/attack.hpp"

#include <stdexcept>

namespace prdf {

void PgdConfig::validate() const {
  if (!(step_size > 0.0) && steps > 0) throw std::invalid_argument("PgdConfig: step_size must be > 0");
  if (restarts < 1) throw std::invalid_argument("PgdConfig: restarts must be >= 1");
}

PgdTrace pgd_walk(const GradFn& grad, std::span<const double> center, double radius, Norm p, double alpha,
                  std::size_t steps, std::span<const double> eta) {
  require_same_dim(center.size(), eta.size(), "pgd_walk");
  PgdTrace trace;
  trace.eta.assign(eta.begin(), eta.end());
  trace.states.reserve(steps + 1);
  Vec x = add(center, eta);
  clamp_unit(x);
  trace.states.push_back(x);
  for (std::size_t t = 0; t < steps; ++t) {
    StepResult s = signed_step(x, grad(x), alpha, p);
    x = project_ball(s.x, center, radius, p);
    clamp_unit(x);
    trace.degenerate.push_back(s.degenerate);
    trace.states.push_back(x);
  }
  return trace;
}

Vec draw_start(std::size_t dim, double radius, Norm p, bool random_start, Rng& rng) {
  return random_start ? sample_uniform_ball(dim, radius, p, rng) : Vec(dim, 0.0);
}

PgdTrace pgd_trace(const Classifier& model, std::span<const double> x, Label y, const PerturbSpec& spec,
                   const PgdConfig& cfg, Rng& rng) {
  cfg.validate();
  require_same_dim(x.size(), model.input_dim(), "pgd");
  const Vec eta = draw_start(x.size(), spec.eps, spec.p, cfg.random_start, rng);
  GradFn g = [&](std::span<const double> v) { return input_grad(model, v, y); };
  return pgd_walk(g, x, spec.eps, spec.p, cfg.step_size, cfg.steps, eta);
}

Vec pgd(const Classifier& model, std::span<const double> x, Label y, const PerturbSpec& spec,
        const PgdConfig& cfg, Rng& rng) {
  return pgd_trace(model, x, y, spec, cfg, rng).final_point();
}

std::vector<Vec> pgd_candidates(const Classifier& model, std::span<const double> x, Label y,
                                const PerturbSpec& spec, const PgdConfig& cfg, Rng& rng) {
  cfg.validate();
  std::vector<Vec> out;
  out.reserve(cfg.restarts);
  for (std::size_t r = 0; r < cfg.restarts; ++r) out.push_back(pgd(model, x, y, spec, cfg, rng));
  return out;
}

std::size_t strongest_candidate(std::span<const CandidateScore> scores) {
  if (scores.empty()) throw std::invalid_argument("strongest_candidate: no candidates");
  std::size_t best = 0;
  for (std::size_t i = 1; i < scores.size(); ++i) {
    if (scores[i].misclassified != scores[best].misclassified) {
      if (scores[i].misclassified) best = i;
    } else if (scores[i].loss > scores[best].loss) {
      best = i;
    }
  }
  return best;
}

Vec pgd_restarts(const Classifier& model, std::span<const double> x, Label y, const PerturbSpec& spec,
                 const PgdConfig& cfg, Rng& rng) {
  std::vector<Vec> cands = pgd_candidates(model, x, y, spec, cfg, rng);
  std::vector<CandidateScore> scores;
  scores.reserve(cands.size());
  for (const Vec& c : cands) scores.push_back({predict(model, c) != y, cross_entropy(model, c, y)});
  return cands[strongest_candidate(scores)];
}

std::vector<Vec> draw_gaussian_noise(std::size_t dim, double sigma, std::size_t count, Rng& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<Vec> out(count, Vec(dim));
  for (auto& v : out)
    for (double& e : v) e = sigma * gauss(rng);
  return out;
}

LossAndGrad smoothed_loss_and_grad(const Classifier& model, std::span<const double> x, Label y,
                                   std::span<const Vec> noise) {
  require_same_dim(x.size(), model.input_dim(), "smoothed_loss_and_grad");
  if (noise.empty()) throw std::invalid_argument("smoothed_loss_and_grad: need at least one noise sample");
  if (y >= model.num_classes()) throw std::invalid_argument("smoothed_loss_and_grad: class index out of range");
  GradTape tape;
  auto xn = tape.leaf(x);
  std::vector<GradTape::Node> probs;
  probs.reserve(noise.size());
  for (const Vec& xi : noise) {
    auto shifted = tape.add(xn, tape.leaf(xi));
    probs.push_back(tape.softmax_at(record_forward(model, tape, shifted), y));
  }
  auto loss = tape.neg_log(tape.mean(probs));
  tape.backward(loss);
  return {tape.scalar(loss), tape.grad(xn)};
}

PgdTrace randomized_pgd_trace(const Classifier& model, std::span<const double> x, Label y,
                              const PerturbSpec& spec, const PgdConfig& cfg, double sigma, std::size_t samples,
                              Rng& rng) {
  if (!(sigma >= 0.0)) throw std::invalid_argument("randomized_pgd: sigma must be >= 0");
  if (samples < 1) throw std::invalid_argument("randomized_pgd: need at least one noise sample per step");
  if (sigma == 0.0) return pgd_trace(model, x, y, spec, cfg, rng);
  cfg.validate();
  require_same_dim(x.size(), model.input_dim(), "randomized_pgd");
  const Vec eta = draw_start(x.size(), spec.eps, spec.p, cfg.random_start, rng);
  GradFn g = [&](std::span<const double> v) {
    const auto noise = draw_gaussian_noise(v.size(), sigma, samples, rng);
    return smoothed_loss_and_grad(model, v, y, noise).grad;
  };
  return pgd_walk(g, x, spec.eps, spec.p, cfg.step_size, cfg.steps, eta);
}

Vec randomized_pgd(const Classifier& model, std::span<const double> x, Label y, const PerturbSpec& spec,
                   const PgdConfig& cfg, double sigma, std::size_t samples, Rng& rng) {
  return randomized_pgd_trace(model, x, y, spec, cfg, sigma, samples, rng).final_point();
}

}  // namespace prdf
