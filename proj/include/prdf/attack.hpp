#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "prdf/diffnet.hpp"
#include "prdf/geometry.hpp"

namespace prdf {

/// Gradient of the objective a PGD walk ascends.
using GradFn = std::function<Vec(std::span<const double>)>;

struct PgdConfig {
  std::size_t steps = 20;   // T
  double step_size = 0.0;   // alpha
  bool random_start = true;
  std::size_t restarts = 1;

  /// T = 20, alpha = eps / 4.
  static PgdConfig defaults(const PerturbSpec& spec) { return {20, spec.eps / 4.0, true, 1}; }
  void validate() const;
};

/// All iterates of one PGD run: states[0] is the (clamped) random start,
/// states[t] the point after step t.
struct PgdTrace {
  Vec eta;
  std::vector<Vec> states;
  std::vector<bool> degenerate;  // per step, l2 direction undefined

  const Vec& final_point() const { return states.back(); }
};

/// x_0 = clamp(center + eta); x_t = clamp(Proj_{center,radius}(step(x_{t-1}))).
PgdTrace pgd_walk(const GradFn& grad, std::span<const double> center, double radius, Norm p, double alpha,
                  std::size_t steps, std::span<const double> eta);

/// The random-start offset used by a PGD run (zero when random_start is off).
Vec draw_start(std::size_t dim, double radius, Norm p, bool random_start, Rng& rng);

/// Untargeted T-step PGD maximizing the loss of label y inside B_eps(x).
PgdTrace pgd_trace(const Classifier& model, std::span<const double> x, Label y, const PerturbSpec& spec,
                   const PgdConfig& cfg, Rng& rng);
Vec pgd(const Classifier& model, std::span<const double> x, Label y, const PerturbSpec& spec,
        const PgdConfig& cfg, Rng& rng);

/// `cfg.restarts` independent PGD runs drawn sequentially from rng. The first
/// candidate is exactly what pgd() would return with the same rng.
std::vector<Vec> pgd_candidates(const Classifier& model, std::span<const double> x, Label y,
                                const PerturbSpec& spec, const PgdConfig& cfg, Rng& rng);

struct CandidateScore {
  bool misclassified = false;
  double loss = 0.0;
};

/// Index of the strongest candidate: misclassified beats correctly
/// classified, then higher loss wins, then lower index.
std::size_t strongest_candidate(std::span<const CandidateScore> scores);

Vec pgd_restarts(const Classifier& model, std::span<const double> x, Label y, const PerturbSpec& spec,
                 const PgdConfig& cfg, Rng& rng);

/// M draws of N(0, sigma^2 I).
std::vector<Vec> draw_gaussian_noise(std::size_t dim, double sigma, std::size_t count, Rng& rng);

/// -log(mean_m softmax(x + noise_m)[y]) and its input gradient for a fixed
/// noise realization.
LossAndGrad smoothed_loss_and_grad(const Classifier& model, std::span<const double> x, Label y,
                                   std::span<const Vec> noise);

/// PGD on the Monte-Carlo smoothed soft classifier; every step draws M fresh
/// noise samples. sigma == 0 runs pgd() itself.
PgdTrace randomized_pgd_trace(const Classifier& model, std::span<const double> x, Label y,
                              const PerturbSpec& spec, const PgdConfig& cfg, double sigma, std::size_t samples,
                              Rng& rng);
Vec randomized_pgd(const Classifier& model, std::span<const double> x, Label y, const PerturbSpec& spec,
                   const PgdConfig& cfg, double sigma, std::size_t samples, Rng& rng);

}  // namespace prdf
