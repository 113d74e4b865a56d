#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <vector>

#include "prdf/preempt.hpp"

namespace prdf {

struct WhiteboxConfig {
  RobustifyConfig recon;                                // the defender's hyperparameters, known to the adversary
  std::vector<double> eps_prime_fractions{0.25, 0.5, 0.75, 1.0};  // eps' as fractions of eps
  std::size_t restarts = 1;                             // PGD restarts per eps'

  void validate() const;
};

/// Approximate inverse of robustification: starts at x_r and ascends the
/// worst-case loss of c(x_r) inside B_delta(x_r).
Vec reconstruct(const Classifier& model, std::span<const double> x_r, const PerturbSpec& spec,
                const RobustifyConfig& cfg, Rng& rng);

struct WhiteboxCandidate {
  double eps_prime = 0.0;
  Vec x;
};

struct WhiteboxResult {
  Vec reconstruction;
  std::vector<WhiteboxCandidate> candidates;  // one per eps'
};

/// Reconstruct, then attack the reconstruction once per eps' in the grid.
WhiteboxResult whitebox_attack(const Classifier& model, std::span<const double> x_r, Label y_o,
                               const PerturbSpec& spec, const WhiteboxConfig& cfg, Rng& rng);

struct CandidateVerdict {
  double eps_prime = 0.0;
  double attack_dist = 0.0;
  bool misclassified = false;
  bool valid = false;  // misclassified and inside B_eps(x_o)
};

struct WhiteboxVerdict {
  bool robust = true;  // no candidate is a valid adversarial example
  double recon_dist = 0.0;
  std::vector<CandidateVerdict> candidates;
};

/// Robust iff every candidate is correctly classified or lies outside B_eps(x_o).
WhiteboxVerdict eval_whitebox(const WhiteboxResult& result, std::span<const double> x_o, Label y_o,
                              const Classifier& model, double eps, Norm p);

struct DistanceStats {
  std::vector<double> recon_dists;
  std::vector<double> attack_dists;
  double frac_recon_near_boundary = 0.0;  // recon distance in [0.9 eps, 1.1 eps]
  double frac_attack_outside = 0.0;       // attack distance > eps
};

DistanceStats distance_stats(std::span<const WhiteboxVerdict> verdicts, double eps);

/// CSV: example_id, recon_dist, eps_prime, attack_dist, misclassified, valid
void write_distances_csv(std::ostream& out, std::span<const WhiteboxVerdict> verdicts,
                         std::span<const std::size_t> example_ids);

/// Histogram bucket counts of width eps/20 over [0, 2 eps], plus overflow.
std::vector<std::size_t> distance_histogram(std::span<const double> dists, double eps);

}  // namespace prdf
