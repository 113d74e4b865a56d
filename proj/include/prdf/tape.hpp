#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "prdf/vec.hpp"

namespace prdf {

enum class Activation { identity, relu, tanh };

/// Reverse-mode gradient tape over dense vectors and matrices.
///
/// Nodes are appended in evaluation order, so iterating them backwards is a
/// reverse topological order. A tape is single-use: record, call backward()
/// once, read gradients.
class GradTape {
 public:
  using Node = std::size_t;

  /// Differentiable leaf. A matrix leaf is given as (rows, cols, data).
  Node leaf(std::span<const double> value, std::size_t rows, std::size_t cols);
  Node leaf(std::span<const double> value) { return leaf(value, value.size(), 1); }

  /// W x + b, with W a (rows x cols) node, x a cols-vector, b a rows-vector.
  Node affine(Node weights, Node x, Node bias);
  Node add(Node a, Node b);
  Node activate(Node x, Activation act);
  /// -log softmax(logits)[label], via log-sum-exp.
  Node cross_entropy(Node logits, std::size_t label);
  /// softmax(logits)[label]
  Node softmax_at(Node logits, std::size_t label);
  /// Arithmetic mean of scalar nodes.
  Node mean(std::span<const Node> scalars);
  /// -log(x) of a scalar node.
  Node neg_log(Node scalar);

  void backward(Node root);

  const Vec& value(Node n) const { return nodes_[n].value; }
  const Vec& grad(Node n) const { return nodes_[n].grad; }
  double scalar(Node n) const { return nodes_[n].value[0]; }
  std::size_t size() const { return nodes_.size(); }

 private:
  enum class Op { leaf, affine, add, activate, cross_entropy, softmax_at, mean, neg_log };

  struct Record {
    Op op = Op::leaf;
    std::size_t rows = 0;
    std::size_t cols = 1;
    Vec value;
    Vec grad;
    Node a = 0;
    Node b = 0;
    Node c = 0;
    std::size_t label = 0;
    Activation act = Activation::identity;
    std::vector<Node> args;
    Vec aux;  // op-specific cache (softmax probabilities)
  };

  Node push(Record r);

  std::vector<Record> nodes_;
  bool consumed_ = false;
};

/// y = act(y) in place; shared by the tape and the tape-free forward pass.
void apply_activation(std::span<double> y, Activation act);

/// Stable softmax.
Vec softmax(std::span<const double> logits);

/// Stable log-sum-exp.
double log_sum_exp(std::span<const double> logits);

}  // namespace prdf
