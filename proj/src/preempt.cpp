#include "prdf/preempt.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>

namespace prdf {

RobustifyConfig RobustifyConfig::defaults(const PerturbSpec& spec) {
  RobustifyConfig cfg;
  cfg.inner = PgdConfig::defaults(spec);
  if (spec.p == Norm::linf) {
    cfg.optimizer = Optimizer::tanh_rmsprop;
    cfg.lr = 0.1;
  } else {
    cfg.optimizer = Optimizer::projected_gd;
    cfg.lr = 0.001;
  }
  return cfg;
}

void RobustifyConfig::validate(const PerturbSpec& spec, std::size_t dim) const {
  spec.validate();
  inner.validate();
  if (n_samples < 1) throw std::invalid_argument("RobustifyConfig: n_samples must be >= 1");
  if (!(lr > 0.0)) throw std::invalid_argument("RobustifyConfig: lr must be > 0");
  if (optimizer == Optimizer::tanh_rmsprop && spec.p != Norm::linf)
    throw std::invalid_argument("RobustifyConfig: tanh_rmsprop requires p = inf");
  if (grad_mode == GradMode::exact && dim > kMaxExactDim)
    throw std::invalid_argument("RobustifyConfig: exact update gradients are limited to input_dim <= 16");
  if (!(rms_decay >= 0.0 && rms_decay < 1.0)) throw std::invalid_argument("RobustifyConfig: rms_decay in [0,1)");
}

namespace detail {

RobustifyResult bilevel_loop(std::span<const double> anchor, const PerturbSpec& spec, const RobustifyConfig& cfg,
                             double direction, const InnerAttack& inner, const OuterGradient& outer, Rng& rng) {
  cfg.validate(spec, anchor.size());
  const std::size_t dim = anchor.size();
  const double delta = spec.delta;
  const bool use_tanh = cfg.optimizer == Optimizer::tanh_rmsprop;

  RobustifyResult res;
  res.x.assign(anchor.begin(), anchor.end());
  Vec w(dim, 0.0);
  Vec sq(dim, 0.0);

  if (cfg.init == InitMode::random_in_delta_ball) {
    const Vec eta = sample_uniform_ball(dim, delta, spec.p, rng);
    res.x = add(anchor, eta);
    clamp_unit(res.x);
    if (use_tanh && delta > 0.0) {
      for (std::size_t i = 0; i < dim; ++i) {
        const double t = std::clamp((res.x[i] - anchor[i]) / delta, -1.0 + 1e-12, 1.0 - 1e-12);
        w[i] = std::atanh(t);
      }
      res.x = tanh_reparam(anchor, w, delta);
    }
  }

  std::vector<PgdTrace> batch;
  for (std::size_t it = 0; it < cfg.max_iter; ++it) {
    batch.clear();
    for (std::size_t n = 0; n < cfg.n_samples; ++n) batch.push_back(inner(res.x, rng));
    const Vec g = outer(res.x, batch);
    const double gn = norm2(g);
    res.grad_norms.push_back(gn);
    if (!all_finite(g) || !std::isfinite(gn)) {
      res.aborted = true;
      res.diagnostic = "non-finite update gradient at iteration " + std::to_string(it);
      return res;
    }
    if (use_tanh) {
      const Vec dxdw = tanh_reparam_grad(anchor, w, delta);
      for (std::size_t i = 0; i < dim; ++i) {
        const double gw = g[i] * dxdw[i];
        sq[i] = cfg.rms_decay * sq[i] + (1.0 - cfg.rms_decay) * gw * gw;
        w[i] += direction * cfg.lr * gw / (std::sqrt(sq[i]) + cfg.rms_eps);
      }
      res.x = tanh_reparam(anchor, w, delta);
    } else {
      Vec next = res.x;
      axpy(direction * cfg.lr, g, next);
      res.x = project_ball(next, anchor, delta, spec.p);
      clamp_unit(res.x);
    }
  }
  return res;
}

}  // namespace detail

Vec unrolled_gradient(const GradFn& grad, const PgdTrace& trace, std::span<const double> center, Norm p,
                      double alpha, double radius, double fd_scale) {
  const std::size_t dim = center.size();
  const std::size_t steps = trace.states.size() - 1;
  Vec adj = grad(trace.final_point());
  Vec direct(dim, 0.0);

  for (std::size_t t = steps; t >= 1; --t) {
    const Vec& prev = trace.states[t - 1];
    const Vec g = grad(prev);
    const StepResult step = signed_step(prev, g, alpha, p);
    const Vec z = project_ball(step.x, center, radius, p);

    // Unit-cube clamp.
    for (std::size_t i = 0; i < dim; ++i)
      if (z[i] < 0.0 || z[i] > 1.0) adj[i] = 0.0;

    // Ball projection: split the adjoint between the stepped point and the center.
    Vec adj_y(dim);
    if (p == Norm::linf) {
      for (std::size_t i = 0; i < dim; ++i) {
        const bool clipped = step.x[i] < center[i] - radius || step.x[i] > center[i] + radius;
        adj_y[i] = clipped ? 0.0 : adj[i];
        if (clipped) direct[i] += adj[i];
      }
    } else {
      const Vec d = sub(step.x, center);
      const double n = norm2(d);
      if (n <= radius) {
        adj_y = adj;
      } else {
        const double k = radius / n;
        const double ua = dot(d, adj) / (n * n);
        for (std::size_t i = 0; i < dim; ++i) {
          adj_y[i] = k * (adj[i] - d[i] * ua);
          direct[i] += adj[i] - adj_y[i];
        }
      }
    }

    // Step map. For linf the sign is locally constant, so its Jacobian is I.
    // For l2 the transpose Jacobian is I + alpha H P / |g|.
    if (p == Norm::l2 && !step.degenerate) {
      const double gn = norm2(g);
      Vec v = adj_y;
      const double proj = dot(g, v) / (gn * gn);
      axpy(-proj, g, v);
      const double vn = norm2(v);
      adj = adj_y;
      if (vn > 0.0) {
        const double h = fd_scale * (1.0 + norm2(prev));
        Vec plus = prev, minus = prev;
        axpy(h / vn, v, plus);
        axpy(-h / vn, v, minus);
        const Vec gp = grad(plus);
        const Vec gm = grad(minus);
        const double s = alpha / gn * vn / (2.0 * h);
        for (std::size_t i = 0; i < dim; ++i) adj[i] += s * (gp[i] - gm[i]);
      }
    } else {
      adj = adj_y;
    }
  }

  // Random start x_0 = clamp(center + eta).
  for (std::size_t i = 0; i < dim; ++i) {
    const double s0 = center[i] + trace.eta[i];
    if (s0 < 0.0 || s0 > 1.0) adj[i] = 0.0;
    direct[i] += adj[i];
  }
  return direct;
}

Vec update_gradient(const Classifier& model, std::span<const double> center, std::span<const PgdTrace> batch,
                    Label y, GradMode mode, const PerturbSpec& spec, const PgdConfig& inner) {
  if (batch.empty()) throw std::invalid_argument("update_gradient: empty adversarial batch");
  if (mode == GradMode::exact && center.size() > kMaxExactDim)
    throw std::invalid_argument("update_gradient: exact mode refused for input_dim > 16");
  Vec sum(center.size(), 0.0);
  GradFn g = [&](std::span<const double> v) { return input_grad(model, v, y); };
  for (const PgdTrace& tr : batch) {
    const Vec part = mode == GradMode::first_order
                         ? input_grad(model, tr.final_point(), y)
                         : unrolled_gradient(g, tr, center, spec.p, inner.step_size, spec.eps);
    axpy(1.0, part, sum);
  }
  for (double& v : sum) v /= static_cast<double>(batch.size());
  return sum;
}

RobustifyResult robustify_traced(const Classifier& model, std::span<const double> x_o, const PerturbSpec& spec,
                                 const RobustifyConfig& cfg, Rng& rng) {
  require_same_dim(x_o.size(), model.input_dim(), "robustify");
  const Label y = predict(model, x_o);
  detail::InnerAttack inner = [&](std::span<const double> center, Rng& r) {
    return pgd_trace(model, center, y, spec, cfg.inner, r);
  };
  detail::OuterGradient outer = [&](std::span<const double> center, std::span<const PgdTrace> batch) {
    return update_gradient(model, center, batch, y, cfg.grad_mode, spec, cfg.inner);
  };
  return detail::bilevel_loop(x_o, spec, cfg, -1.0, inner, outer, rng);
}

Vec robustify(const Classifier& model, std::span<const double> x_o, const PerturbSpec& spec,
              const RobustifyConfig& cfg, Rng& rng) {
  RobustifyResult r = robustify_traced(model, x_o, spec, cfg, rng);
  if (r.aborted) throw NumericalError("robustify: " + r.diagnostic);
  return std::move(r.x);
}

Lemma1Report lemma1_report(double h_tilde, bool prediction_preserved) {
  Lemma1Report r;
  r.h_tilde = h_tilde;
  r.satisfied = h_tilde <= r.threshold;
  if (r.satisfied) r.implied_bound = 2.0 * h_tilde;
  r.prediction_preserved = prediction_preserved;
  return r;
}

Lemma1Report check_lemma1(const Classifier& model, std::span<const double> x_o, std::span<const double> x_r,
                          const PerturbSpec& spec, const PgdConfig& attack_cfg, Rng& rng) {
  const Label y = predict(model, x_o);
  double h = cross_entropy(model, x_r, y);
  for (const Vec& c : pgd_candidates(model, x_r, y, spec, attack_cfg, rng)) h = std::max(h, cross_entropy(model, c, y));
  return lemma1_report(h, predict(model, x_r) == y);
}

namespace {

Eigen::MatrixXd to_eigen(const Matrix& m) {
  Eigen::MatrixXd e(m.rows, m.cols);
  for (std::size_t i = 0; i < m.rows; ++i)
    for (std::size_t j = 0; j < m.cols; ++j) e(i, j) = m(i, j);
  return e;
}

Matrix from_eigen(const Eigen::MatrixXd& e) {
  Matrix m(e.rows(), e.cols());
  for (Eigen::Index i = 0; i < e.rows(); ++i)
    for (Eigen::Index j = 0; j < e.cols(); ++j) m(i, j) = e(i, j);
  return m;
}

Vec normalized_step(const Classifier& model, std::span<const double> x, Label y, double alpha) {
  const Vec g = input_grad(model, x, y);
  Vec out(x.begin(), x.end());
  axpy(alpha / norm2(g), g, out);
  return out;
}

}  // namespace

JacobianCheck lemma2_jacobian(const Classifier& model, std::span<const double> x, Label y, double alpha) {
  const std::size_t n = x.size();
  require_same_dim(n, model.input_dim(), "lemma2_jacobian");
  if (n > 8) throw std::invalid_argument("lemma2_jacobian: input_dim must be <= 8");
  const Vec g = input_grad(model, x, y);
  const double gn = norm2(g);
  if (gn < 1e-10) throw std::invalid_argument("lemma2_jacobian: loss gradient vanishes, Jacobian formula is singular");

  JacobianCheck out;
  out.grad_norm = gn;

  const double hh = 1e-4 * (1.0 + norm2(x));
  Eigen::MatrixXd H(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    Vec xp(x.begin(), x.end()), xm(x.begin(), x.end());
    xp[j] += hh;
    xm[j] -= hh;
    const Vec gp = input_grad(model, xp, y);
    const Vec gm = input_grad(model, xm, y);
    for (std::size_t i = 0; i < n; ++i) H(i, j) = (gp[i] - gm[i]) / (2.0 * hh);
  }
  H = 0.5 * (H + H.transpose()).eval();

  Eigen::VectorXd gu(n);
  for (std::size_t i = 0; i < n; ++i) gu(i) = g[i] / gn;
  const Eigen::MatrixXd P = Eigen::MatrixXd::Identity(n, n) - gu * gu.transpose();
  const Eigen::MatrixXd J = Eigen::MatrixXd::Identity(n, n) + alpha * P * H / gn;

  const double hf = 1e-5 * (1.0 + norm2(x));
  Eigen::MatrixXd Jfd(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    Vec xp(x.begin(), x.end()), xm(x.begin(), x.end());
    xp[j] += hf;
    xm[j] -= hf;
    const Vec fp = normalized_step(model, xp, y, alpha);
    const Vec fm = normalized_step(model, xm, y, alpha);
    for (std::size_t i = 0; i < n; ++i) Jfd(i, j) = (fp[i] - fm[i]) / (2.0 * hf);
  }

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(H, Eigen::EigenvaluesOnly);
  out.sigma = eig.eigenvalues().cwiseAbs().maxCoeff();
  out.bound_factor = 1.0 + alpha * out.sigma / gn;
  out.hessian = from_eigen(H);
  out.analytic_jacobian = from_eigen(J);
  out.fd_jacobian = from_eigen(Jfd);
  out.max_abs_diff = (J - Jfd).cwiseAbs().maxCoeff();
  return out;
}

Prop1Check prop1_bound_check(const Classifier& model, std::span<const double> x, Label y, double alpha,
                             std::span<const double> a, double k) {
  require_same_dim(a.size(), x.size(), "prop1_bound_check");
  if (!(k > 0.0 && k <= 1.0)) throw std::invalid_argument("prop1_bound_check: k must lie in (0, 1]");
  const JacobianCheck jc = lemma2_jacobian(model, x, y, alpha);
  const Eigen::MatrixXd J = to_eigen(jc.analytic_jacobian);
  Eigen::VectorXd av(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) av(i) = a[i];
  Prop1Check out;
  out.lhs = (k * J.transpose() * av).norm();
  out.rhs = jc.bound_factor * av.norm();
  out.slack = out.rhs - out.lhs;
  out.satisfied = out.lhs <= out.rhs + 1e-12 * std::max(1.0, out.rhs);
  return out;
}

std::string init_mode_name(InitMode m) { return m == InitMode::at_original ? "at_original" : "random_in_delta_ball"; }

InitMode parse_init_mode(const std::string& s) {
  if (s == "at_original") return InitMode::at_original;
  if (s == "random_in_delta_ball") return InitMode::random_in_delta_ball;
  throw std::invalid_argument("unknown init mode '" + s + "'");
}

std::string optimizer_name(Optimizer o) { return o == Optimizer::projected_gd ? "projected_gd" : "tanh_rmsprop"; }

Optimizer parse_optimizer(const std::string& s) {
  if (s == "projected_gd") return Optimizer::projected_gd;
  if (s == "tanh_rmsprop") return Optimizer::tanh_rmsprop;
  throw std::invalid_argument("unknown optimizer '" + s + "'");
}

std::string grad_mode_name(GradMode g) { return g == GradMode::first_order ? "first_order" : "exact"; }

GradMode parse_grad_mode(const std::string& s) {
  if (s == "first_order") return GradMode::first_order;
  if (s == "exact") return GradMode::exact;
  throw std::invalid_argument("unknown grad mode '" + s + "'");
}

}  // namespace prdf
