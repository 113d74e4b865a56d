#include "prdf/tape.hpp"

#include <limits>
#include <stdexcept>

namespace prdf {

void apply_activation(std::span<double> y, Activation act) {
  switch (act) {
    case Activation::identity:
      return;
    case Activation::relu:
      for (double& v : y) v = v > 0.0 ? v : 0.0;
      return;
    case Activation::tanh:
      for (double& v : y) v = std::tanh(v);
      return;
  }
}

double log_sum_exp(std::span<const double> logits) {
  double m = -std::numeric_limits<double>::infinity();
  for (double v : logits) m = std::max(m, v);
  double s = 0.0;
  for (double v : logits) s += std::exp(v - m);
  return m + std::log(s);
}

Vec softmax(std::span<const double> logits) {
  double m = -std::numeric_limits<double>::infinity();
  for (double v : logits) m = std::max(m, v);
  Vec p(logits.size());
  double s = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - m);
    s += p[i];
  }
  for (double& v : p) v /= s;
  return p;
}

GradTape::Node GradTape::push(Record r) {
  nodes_.push_back(std::move(r));
  return nodes_.size() - 1;
}

GradTape::Node GradTape::leaf(std::span<const double> value, std::size_t rows, std::size_t cols) {
  if (rows * cols != value.size()) throw std::invalid_argument("GradTape::leaf: shape does not match data");
  Record r;
  r.op = Op::leaf;
  r.rows = rows;
  r.cols = cols;
  r.value.assign(value.begin(), value.end());
  return push(std::move(r));
}

GradTape::Node GradTape::affine(Node weights, Node x, Node bias) {
  const Record& w = nodes_[weights];
  const Record& xv = nodes_[x];
  const Record& b = nodes_[bias];
  if (w.cols != xv.value.size() || w.rows != b.value.size())
    throw std::invalid_argument("GradTape::affine: shape mismatch");
  Record r;
  r.op = Op::affine;
  r.rows = w.rows;
  r.a = weights;
  r.b = x;
  r.c = bias;
  r.value.resize(w.rows);
  for (std::size_t i = 0; i < w.rows; ++i) {
    r.value[i] = dot(std::span<const double>(w.value.data() + i * w.cols, w.cols), xv.value) + b.value[i];
  }
  return push(std::move(r));
}

GradTape::Node GradTape::add(Node a, Node b) {
  if (nodes_[a].value.size() != nodes_[b].value.size())
    throw std::invalid_argument("GradTape::add: shape mismatch");
  Record r;
  r.op = Op::add;
  r.rows = nodes_[a].value.size();
  r.a = a;
  r.b = b;
  r.value = prdf::add(nodes_[a].value, nodes_[b].value);
  return push(std::move(r));
}

GradTape::Node GradTape::activate(Node x, Activation act) {
  Record r;
  r.op = Op::activate;
  r.a = x;
  r.act = act;
  r.value = nodes_[x].value;
  r.rows = r.value.size();
  apply_activation(r.value, act);
  return push(std::move(r));
}

GradTape::Node GradTape::cross_entropy(Node logits, std::size_t label) {
  const Vec& z = nodes_[logits].value;
  if (label >= z.size()) throw std::invalid_argument("GradTape::cross_entropy: label out of range");
  Record r;
  r.op = Op::cross_entropy;
  r.rows = 1;
  r.a = logits;
  r.label = label;
  // nonneg() keeps the result non-negative when lse and z[label] round to the same value.
  r.value = {nonneg(log_sum_exp(z) - z[label])};
  r.aux = softmax(z);
  return push(std::move(r));
}

GradTape::Node GradTape::softmax_at(Node logits, std::size_t label) {
  const Vec& z = nodes_[logits].value;
  if (label >= z.size()) throw std::invalid_argument("GradTape::softmax_at: label out of range");
  Record r;
  r.op = Op::softmax_at;
  r.rows = 1;
  r.a = logits;
  r.label = label;
  r.aux = softmax(z);
  r.value = {r.aux[label]};
  return push(std::move(r));
}

GradTape::Node GradTape::mean(std::span<const Node> scalars) {
  if (scalars.empty()) throw std::invalid_argument("GradTape::mean: no arguments");
  Record r;
  r.op = Op::mean;
  r.rows = 1;
  r.args.assign(scalars.begin(), scalars.end());
  double s = 0.0;
  for (Node n : scalars) s += nodes_[n].value[0];
  r.value = {s / static_cast<double>(scalars.size())};
  return push(std::move(r));
}

GradTape::Node GradTape::neg_log(Node scalar) {
  Record r;
  r.op = Op::neg_log;
  r.rows = 1;
  r.a = scalar;
  r.value = {-std::log(nodes_[scalar].value[0])};
  return push(std::move(r));
}

void GradTape::backward(Node root) {
  if (consumed_) throw std::logic_error("GradTape::backward: tape already consumed");
  consumed_ = true;
  if (nodes_[root].value.size() != 1) throw std::invalid_argument("GradTape::backward: root must be scalar");
  for (auto& n : nodes_) n.grad.assign(n.value.size(), 0.0);
  nodes_[root].grad[0] = 1.0;

  for (std::size_t idx = root + 1; idx-- > 0;) {
    Record& n = nodes_[idx];
    const Vec& g = n.grad;
    switch (n.op) {
      case Op::leaf:
        break;
      case Op::affine: {
        Record& w = nodes_[n.a];
        Record& x = nodes_[n.b];
        Record& b = nodes_[n.c];
        const std::size_t cols = w.cols;
        for (std::size_t i = 0; i < n.rows; ++i) {
          const double gi = g[i];
          if (gi == 0.0) continue;
          b.grad[i] += gi;
          double* wg = w.grad.data() + i * cols;
          const double* wv = w.value.data() + i * cols;
          for (std::size_t j = 0; j < cols; ++j) {
            wg[j] += gi * x.value[j];
            x.grad[j] += gi * wv[j];
          }
        }
        break;
      }
      case Op::add:
        axpy(1.0, g, nodes_[n.a].grad);
        axpy(1.0, g, nodes_[n.b].grad);
        break;
      case Op::activate: {
        Vec& xg = nodes_[n.a].grad;
        for (std::size_t i = 0; i < g.size(); ++i) {
          switch (n.act) {
            case Activation::identity:
              xg[i] += g[i];
              break;
            case Activation::relu:
              if (n.value[i] > 0.0) xg[i] += g[i];
              break;
            case Activation::tanh:
              xg[i] += g[i] * (1.0 - n.value[i] * n.value[i]);
              break;
          }
        }
        break;
      }
      case Op::cross_entropy: {
        Vec& zg = nodes_[n.a].grad;
        for (std::size_t j = 0; j < zg.size(); ++j)
          zg[j] += g[0] * (n.aux[j] - (j == n.label ? 1.0 : 0.0));
        break;
      }
      case Op::softmax_at: {
        Vec& zg = nodes_[n.a].grad;
        const double py = n.aux[n.label];
        for (std::size_t j = 0; j < zg.size(); ++j)
          zg[j] += g[0] * py * ((j == n.label ? 1.0 : 0.0) - n.aux[j]);
        break;
      }
      case Op::mean: {
        const double share = g[0] / static_cast<double>(n.args.size());
        for (Node a : n.args) nodes_[a].grad[0] += share;
        break;
      }
      case Op::neg_log:
        nodes_[n.a].grad[0] += -g[0] / nodes_[n.a].value[0];
        break;
    }
  }
}

}  // namespace prdf
