#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "prdf/attack.hpp"
#include "prdf/diffnet.hpp"
#include "prdf/geometry.hpp"

namespace prdf {

enum class InitMode { at_original, random_in_delta_ball };
enum class Optimizer { projected_gd, tanh_rmsprop };
enum class GradMode { first_order, exact };

/// Largest input dimension for which exact (second-order) update gradients are allowed.
inline constexpr std::size_t kMaxExactDim = 16;

struct RobustifyConfig {
  std::size_t max_iter = 100;  // MAXITER
  PgdConfig inner;             // T, alpha of the inner attack
  std::size_t n_samples = 1;   // N
  double lr = 0.1;             // beta
  InitMode init = InitMode::at_original;
  Optimizer optimizer = Optimizer::tanh_rmsprop;
  GradMode grad_mode = GradMode::first_order;
  double rms_decay = 0.99;
  double rms_eps = 1e-8;

  /// linf: tanh + RMSProp with beta = 0.1; l2: projected gradient descent with beta = 0.001.
  static RobustifyConfig defaults(const PerturbSpec& spec);
  void validate(const PerturbSpec& spec, std::size_t dim) const;
};

struct RobustifyResult {
  Vec x;
  std::vector<double> grad_norms;  // l2 norm of the update gradient per iteration
  bool aborted = false;
  std::string diagnostic;
};

/// Searches B_delta(x_o) for a point whose eps-neighbourhood resists PGD,
/// targeting the model's own prediction c(x_o). Throws NumericalError when
/// the update gradient turns non-finite.
Vec robustify(const Classifier& model, std::span<const double> x_o, const PerturbSpec& spec,
              const RobustifyConfig& cfg, Rng& rng);

/// Same as robustify() but records the gradient-norm trace and reports a
/// non-finite gradient through `aborted` instead of throwing.
RobustifyResult robustify_traced(const Classifier& model, std::span<const double> x_o, const PerturbSpec& spec,
                                 const RobustifyConfig& cfg, Rng& rng);

/// Mean over the batch of d loss(x^a_n, y) / d center. first_order uses the
/// loss gradient at each adversarial point; exact differentiates through the
/// whole unrolled walk.
Vec update_gradient(const Classifier& model, std::span<const double> center, std::span<const PgdTrace> batch,
                    Label y, GradMode mode, const PerturbSpec& spec, const PgdConfig& inner);

/// Reverse-mode derivative of loss(x_T) with respect to the walk's center,
/// where `grad` is the loss gradient the walk ascended. Hessian-vector
/// products come from central differences of `grad` with step
/// fd_scale * (1 + |x|).
Vec unrolled_gradient(const GradFn& grad, const PgdTrace& trace, std::span<const double> center, Norm p,
                      double alpha, double radius, double fd_scale = 1e-4);

struct Lemma1Report {
  double h_tilde = 0.0;
  double threshold = 0.6931471805599453;  // -log(0.5)
  bool satisfied = false;
  std::optional<double> implied_bound;  // 2 * h_tilde when satisfied
  bool prediction_preserved = true;     // c(x_r) == c(x_o)

  /// A satisfied report whose prediction changed would contradict the bound.
  bool sound() const { return !satisfied || prediction_preserved; }
};

Lemma1Report lemma1_report(double h_tilde, bool prediction_preserved);

/// h_tilde = max(loss(x_r), losses of every PGD restart around x_r), all
/// against label c(x_o).
Lemma1Report check_lemma1(const Classifier& model, std::span<const double> x_o, std::span<const double> x_r,
                          const PerturbSpec& spec, const PgdConfig& attack_cfg, Rng& rng);

struct JacobianCheck {
  Matrix analytic_jacobian;
  Matrix fd_jacobian;
  Matrix hessian;
  double sigma = 0.0;       // max |eigenvalue| of the Hessian
  double grad_norm = 0.0;
  double bound_factor = 1.0;  // 1 + alpha * sigma / |g|
  double projection_k = 1.0;
  double max_abs_diff = 0.0;
};

/// Compares the closed-form Jacobian of the normalized-gradient step,
/// I + alpha (I - g g^T / |g|^2) H / |g|, against a finite-difference
/// Jacobian of the step itself. Requires input_dim <= 8 and |g| >= 1e-10.
JacobianCheck lemma2_jacobian(const Classifier& model, std::span<const double> x, Label y, double alpha);

struct Prop1Check {
  bool satisfied = false;
  double lhs = 0.0;  // | k J^T a |
  double rhs = 0.0;  // (1 + alpha sigma / |g|) |a|
  double slack = 0.0;
};

Prop1Check prop1_bound_check(const Classifier& model, std::span<const double> x, Label y, double alpha,
                             std::span<const double> a, double k);

std::string init_mode_name(InitMode m);
InitMode parse_init_mode(const std::string& s);
std::string optimizer_name(Optimizer o);
Optimizer parse_optimizer(const std::string& s);
std::string grad_mode_name(GradMode g);
GradMode parse_grad_mode(const std::string& s);

namespace detail {

/// Inner attack used by one outer iteration: produces an adversarial walk
/// around `center`.
using InnerAttack = std::function<PgdTrace(std::span<const double> center, Rng& rng)>;
/// Outer gradient from a batch of walks around `center`.
using OuterGradient = std::function<Vec(std::span<const double> center, std::span<const PgdTrace> batch)>;

/// Shared bi-level loop. direction = -1 descends the outer objective
/// (robustification), +1 ascends it (reconstruction). The outer variable
/// stays inside B_delta(anchor) and the unit cube.
RobustifyResult bilevel_loop(std::span<const double> anchor, const PerturbSpec& spec, const RobustifyConfig& cfg,
                             double direction, const InnerAttack& inner, const OuterGradient& outer, Rng& rng);

}  // namespace detail

}  // namespace prdf
