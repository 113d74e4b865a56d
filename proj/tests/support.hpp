#pragma once

#include <functional>
#include <span>
#include <vector>

#include "prdf/diffnet.hpp"
#include "prdf/rng.hpp"

namespace testsupport {

using prdf::Classifier;
using prdf::Rng;
using prdf::Vec;

// MLP with random weights and biases (random_mlp leaves biases at zero).
inline Classifier random_model(std::size_t dim, std::vector<std::size_t> hidden, std::size_t classes,
                               prdf::Activation act, Rng& rng, double scale = 1.0, double bias_scale = 0.3) {
  Classifier m = Classifier::random_mlp(dim, hidden, classes, act, rng, scale);
  std::uniform_real_distribution<double> u(-bias_scale, bias_scale);
  for (auto& l : m.layers())
    for (double& b : l.bias) b = u(rng);
  return m;
}

// Two-class model whose logit difference is w.x + b.
inline Classifier linear_binary(const Vec& w, double b) {
  prdf::DenseLayer l;
  l.weights = prdf::Matrix(2, w.size());
  for (std::size_t i = 0; i < w.size(); ++i) {
    l.weights(0, i) = -0.5 * w[i];
    l.weights(1, i) = 0.5 * w[i];
  }
  l.bias = {-0.5 * b, 0.5 * b};
  return Classifier({l});
}

inline Vec random_point(std::size_t dim, Rng& rng, double lo = 0.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Vec x(dim);
  for (double& v : x) v = u(rng);
  return x;
}

inline Vec fd_gradient(const std::function<double(const Vec&)>& f, const Vec& x, double h = 1e-6) {
  Vec g(x.size());
  Vec xp = x, xm = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    xp[i] = x[i] + h;
    xm[i] = x[i] - h;
    g[i] = (f(xp) - f(xm)) / (2.0 * h);
    xp[i] = xm[i] = x[i];
  }
  return g;
}

// |a - b| / max(|a|, |b|, floor)
inline double rel_err(std::span<const double> a, std::span<const double> b, double floor = 1e-6) {
  double d = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    d += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return std::sqrt(d) / std::max({std::sqrt(na), std::sqrt(nb), floor});
}

// Straightforward forward pass written independently of the library kernels.
inline Vec naive_logits(const Classifier& m, const Vec& x) {
  Vec h = x;
  for (const auto& l : m.layers()) {
    Vec z(l.weights.rows, 0.0);
    for (std::size_t r = 0; r < l.weights.rows; ++r) {
      double s = l.bias[r];
      for (std::size_t c = 0; c < l.weights.cols; ++c) s += l.weights.data[r * l.weights.cols + c] * h[c];
      switch (l.activation) {
        case prdf::Activation::identity:
          break;
        case prdf::Activation::relu:
          s = s > 0.0 ? s : 0.0;
          break;
        case prdf::Activation::tanh:
          s = std::tanh(s);
          break;
      }
      z[r] = s;
    }
    h = z;
  }
  return h;
}

inline double naive_ce(const Classifier& m, const Vec& x, std::size_t y) {
  const Vec z = naive_logits(m, x);
  double mx = z[0];
  for (double v : z) mx = std::max(mx, v);
  double s = 0.0;
  for (double v : z) s += std::exp(v - mx);
  return mx + std::log(s) - z[y];
}

}  // namespace testsupport
