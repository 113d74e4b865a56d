#include "prdf/geometry.hpp"

#include <stdexcept>

namespace prdf {

std::string norm_name(Norm p) { return p == Norm::l2 ? "2" : "inf"; }

Norm parse_norm(const std::string& s) {
  if (s == "2" || s == "l2") return Norm::l2;
  if (s == "inf" || s == "linf") return Norm::linf;
  throw std::invalid_argument("unknown norm '" + s + "' (expected 2 or inf)");
}

void PerturbSpec::validate() const {
  if (!(eps > 0.0) || !std::isfinite(eps)) throw std::invalid_argument("PerturbSpec: eps must be > 0");
  if (!(delta >= 0.0) || !std::isfinite(delta)) throw std::invalid_argument("PerturbSpec: delta must be >= 0");
}

double norm(std::span<const double> v, Norm p) { return p == Norm::l2 ? norm2(v) : norm_inf(v); }

double distance(std::span<const double> a, std::span<const double> b, Norm p) {
  require_same_dim(a.size(), b.size(), "distance");
  return norm(sub(a, b), p);
}

Vec project_ball(std::span<const double> x, std::span<const double> center, double radius, Norm p) {
  require_same_dim(x.size(), center.size(), "project_ball");
  if (!(radius >= 0.0)) throw std::invalid_argument("project_ball: negative radius");
  Vec out(x.begin(), x.end());
  if (p == Norm::linf) {
    for (std::size_t i = 0; i < out.size(); ++i)
      out[i] = std::clamp(out[i], center[i] - radius, center[i] + radius);
    return out;
  }
  const Vec d = sub(x, center);
  const double n = norm2(d);
  if (n <= radius) return out;
  const double k = radius / n;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = center[i] + k * d[i];
  return out;
}

void clamp_unit(std::span<double> x) {
  for (double& v : x) v = std::clamp(v, 0.0, 1.0);
}

Vec sample_uniform_ball(std::size_t dim, double radius, Norm p, Rng& rng) {
  if (dim == 0) throw std::invalid_argument("sample_uniform_ball: dim must be >= 1");
  if (!(radius >= 0.0)) throw std::invalid_argument("sample_uniform_ball: negative radius");
  Vec out(dim, 0.0);
  if (p == Norm::linf) {
    std::uniform_real_distribution<double> u(-radius, radius);
    for (double& v : out) v = u(rng);
    return out;
  }
  std::normal_distribution<double> gauss(0.0, 1.0);
  double n = 0.0;
  do {
    for (double& v : out) v = gauss(rng);
    n = norm2(out);
  } while (n == 0.0);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  const double r = radius * std::pow(u01(rng), 1.0 / static_cast<double>(dim));
  for (double& v : out) v *= r / n;
  // Guard the last ulp so the sample never lands outside the ball.
  const double m = norm2(out);
  if (m > radius) {
    for (double& v : out) v *= radius / m;
  }
  return out;
}

StepResult signed_step(std::span<const double> x, std::span<const double> grad, double alpha, Norm p) {
  require_same_dim(x.size(), grad.size(), "signed_step");
  StepResult r{Vec(x.begin(), x.end()), false};
  if (p == Norm::linf) {
    for (std::size_t i = 0; i < r.x.size(); ++i) {
      const double s = grad[i] > 0.0 ? 1.0 : (grad[i] < 0.0 ? -1.0 : 0.0);
      r.x[i] += alpha * s;
    }
    return r;
  }
  const double n = norm2(grad);
  if (n < kZeroGradThreshold) {
    r.degenerate = true;
    return r;
  }
  for (std::size_t i = 0; i < r.x.size(); ++i) r.x[i] += alpha * grad[i] / n;
  return r;
}

StepResult fgsm_step(const Classifier& model, std::span<const double> x, Label y, double alpha, Norm p) {
  if (!(alpha > 0.0)) throw std::invalid_argument("fgsm_step: alpha must be > 0");
  return signed_step(x, input_grad(model, x, y), alpha, p);
}

Vec tanh_reparam(std::span<const double> x_o, std::span<const double> w, double delta, Norm p) {
  if (p != Norm::linf) throw std::invalid_argument("tanh_reparam: only defined for the linf ball");
  require_same_dim(x_o.size(), w.size(), "tanh_reparam");
  Vec out(x_o.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::clamp(x_o[i] + delta * std::tanh(w[i]), 0.0, 1.0);
  return out;
}

Vec tanh_reparam_grad(std::span<const double> x_o, std::span<const double> w, double delta, Norm p) {
  if (p != Norm::linf) throw std::invalid_argument("tanh_reparam_grad: only defined for the linf ball");
  require_same_dim(x_o.size(), w.size(), "tanh_reparam_grad");
  Vec out(x_o.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double t = std::tanh(w[i]);
    const double raw = x_o[i] + delta * t;
    out[i] = (raw < 0.0 || raw > 1.0) ? 0.0 : delta * (1.0 - t * t);
  }
  return out;
}

}  // namespace prdf
