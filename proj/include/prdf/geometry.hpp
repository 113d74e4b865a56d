#pragma once

#include <span>
#include <string>

#include "prdf/diffnet.hpp"
#include "prdf/rng.hpp"
#include "prdf/vec.hpp"

namespace prdf {

enum class Norm { l2, linf };

std::string norm_name(Norm p);
Norm parse_norm(const std::string& s);

/// Threat-model budgets: adversary `eps`, defender `delta`.
struct PerturbSpec {
  Norm p = Norm::linf;
  double eps = 0.1;
  double delta = 0.1;

  /// The default experimental setting, delta == eps.
  static PerturbSpec matched(Norm p, double eps) { return {p, eps, eps}; }
  void validate() const;
};

double norm(std::span<const double> v, Norm p);
double distance(std::span<const double> a, std::span<const double> b, Norm p);

/// Projection onto the closed p-ball around `center`. Interior points are
/// returned unchanged.
Vec project_ball(std::span<const double> x, std::span<const double> center, double radius, Norm p);

/// Clamp every coordinate to [0, 1].
void clamp_unit(std::span<double> x);

/// Uniform sample from the solid p-ball of the given radius around 0.
Vec sample_uniform_ball(std::size_t dim, double radius, Norm p, Rng& rng);

/// Gradient magnitude below which an l2 step direction is undefined.
inline constexpr double kZeroGradThreshold = 1e-12;

struct StepResult {
  Vec x;
  bool degenerate = false;  // l2 step skipped on a vanishing gradient
};

/// One signed (linf) or normalized (l2) step of size alpha along `grad`.
StepResult signed_step(std::span<const double> x, std::span<const double> grad, double alpha, Norm p);

/// FGSM ascent step on the cross-entropy of label y.
StepResult fgsm_step(const Classifier& model, std::span<const double> x, Label y, double alpha, Norm p);

/// x_o + delta * tanh(w), clamped to the unit cube. Only defined for linf.
Vec tanh_reparam(std::span<const double> x_o, std::span<const double> w, double delta, Norm p = Norm::linf);

/// Elementwise d x_r / d w: delta * (1 - tanh^2(w)), zero where the clamp is active.
Vec tanh_reparam_grad(std::span<const double> x_o, std::span<const double> w, double delta, Norm p = Norm::linf);

}  // namespace prdf
