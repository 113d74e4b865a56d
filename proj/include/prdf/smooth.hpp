#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <vector>

#include "prdf/dataset.hpp"
#include "prdf/preempt.hpp"

namespace prdf {

struct SmoothConfig {
  double sigma = 0.25;
  std::size_t n_pred = 50;      // votes for the prediction / class selection
  std::size_t n_cert = 10000;   // votes for the certification estimate
  std::size_t samples = 5;      // M, noise draws per randomized-PGD step
  double conf_alpha = 0.001;

  void validate() const;
};

struct Vote {
  Label label = 0;                  // majority, lowest index on ties
  std::vector<std::size_t> counts;  // per class
};

/// Base-classifier votes on n points x + N(0, sigma^2 I). sigma == 0 votes
/// c(x) n times without drawing.
Vote smoothed_vote(const Classifier& model, std::span<const double> x, double sigma, std::size_t n, Rng& rng);
Label smoothed_predict(const Classifier& model, std::span<const double> x, const SmoothConfig& cfg, Rng& rng);

struct SoftEstimate {
  double prob = 0.0;
  Vec grad;  // gradient of the estimator for the drawn noise
};

/// Mean of C(x + xi_m)_y over M draws. sigma == 0 gives C(x)_y exactly.
SoftEstimate smoothed_soft(const Classifier& model, std::span<const double> x, Label y, const SmoothConfig& cfg,
                           Rng& rng);
/// Same estimator for a given noise realization.
SoftEstimate smoothed_soft_fixed(const Classifier& model, std::span<const double> x, Label y,
                                 std::span<const Vec> noise);

/// Robustification against the smoothed classifier: the inner attack is
/// randomized PGD, the outer gradient that of -log C~(x^a)_y with fresh
/// noise, and the target is the smoothed prediction at x_o. sigma == 0 runs
/// robustify() itself.
Vec robustify_smoothed(const Classifier& model, std::span<const double> x_o, const PerturbSpec& spec,
                       const RobustifyConfig& rcfg, const SmoothConfig& scfg, Rng& rng);
RobustifyResult robustify_smoothed_traced(const Classifier& model, std::span<const double> x_o,
                                          const PerturbSpec& spec, const RobustifyConfig& rcfg,
                                          const SmoothConfig& scfg, Rng& rng);

/// One-sided lower confidence bound on a binomial proportion: the p with
/// P(Bin(n, p) >= k) = alpha. Zero when k == 0.
double clopper_pearson_lower(std::size_t k, std::size_t n, double alpha);

/// Standard-normal quantile (rational approximation, |error| < 1.5e-7).
double normal_quantile(double p);

struct Certificate {
  Label predicted = 0;
  bool abstain = true;
  std::size_t count = 0;  // certification votes for `predicted`
  std::size_t n = 0;
  double pA_lower = 0.0;
  double radius = 0.0;  // l2; zero when abstaining
};

/// Radius sigma * Phi^-1(pA_lower) when pA_lower > 0.5, else abstain.
Certificate certificate_from_counts(Label predicted, std::size_t count, std::size_t n, double sigma, double alpha);

/// Selects a class with n_pred votes, then bounds its probability from n_cert
/// fresh votes. The two stages draw from independent forks of rng.
Certificate certify(const Classifier& model, std::span<const double> x, const SmoothConfig& cfg, Rng& rng);

struct CertRecord {
  std::size_t example_id = 0;
  bool robustified = false;
  Certificate cert;
  bool correct = false;  // non-abstaining and predicted == label
};

struct CertSummary {
  std::vector<CertRecord> records;
  double certified_acc = 0.0;  // correct with radius >= eps
  double clean_acc = 0.0;      // correct (abstain counts as wrong)
  double abstain_rate = 0.0;
};

/// Certifies `points[i]` against `examples[i].y`; example i draws from the
/// named stream (seed, "certify", ids[i]).
CertSummary cert_eval(const Classifier& model, std::span<const Example> examples, std::span<const Vec> points,
                      std::span<const std::size_t> ids, double eps, bool robustified, const SmoothConfig& cfg,
                      std::uint64_t seed);

/// CSV: example_id, robustified, predicted, correct, pA_lower, radius, abstain
void write_cert_csv(std::ostream& out, std::span<const CertRecord> records);

struct SoundnessResult {
  std::size_t attacks = 0;
  std::size_t suspected = 0;  // n_pred vote disagreed
  std::size_t flips = 0;      // disagreement confirmed with confirm_votes
};

/// Attacks a certified point with `attacks` randomized-PGD runs (l2 budget
/// 0.95 R) and re-predicts. A disagreeing n_pred vote is re-counted with
/// `confirm_votes` samples before it is counted as a flip.
SoundnessResult soundness_check(const Classifier& model, std::span<const double> x, const Certificate& cert,
                                const SmoothConfig& cfg, std::size_t attacks, std::size_t confirm_votes, Rng& rng);

}  // namespace prdf
