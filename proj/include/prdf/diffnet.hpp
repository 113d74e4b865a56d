#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "prdf/rng.hpp"
#include "prdf/tape.hpp"
#include "prdf/vec.hpp"

namespace prdf {

/// y = act(W x + b); W is (out x in).
struct DenseLayer {
  Matrix weights;
  Vec bias;
  Activation activation = Activation::identity;

  bool operator==(const DenseLayer&) const = default;
};

/// Gradient bundle with the same shape as a classifier's parameters.
struct LayerGrad {
  Matrix weights;
  Vec bias;
};
using ParamGrad = std::vector<LayerGrad>;

/// Feed-forward classifier producing logits.
class Classifier {
 public:
  Classifier() = default;
  explicit Classifier(std::vector<DenseLayer> layers);

  /// Glorot-uniform weights scaled by `scale`, zero biases. The last layer is
  /// always an identity (logit) layer.
  static Classifier random_mlp(std::size_t input_dim, std::span<const std::size_t> hidden,
                               std::size_t num_classes, Activation act, Rng& rng, double scale = 1.0);

  std::size_t input_dim() const { return input_dim_; }
  std::size_t num_classes() const { return num_classes_; }
  std::size_t num_params() const;

  const std::vector<DenseLayer>& layers() const { return layers_; }
  std::vector<DenseLayer>& layers() { return layers_; }

  ParamGrad zero_grad() const;

  bool operator==(const Classifier&) const = default;

 private:
  std::vector<DenseLayer> layers_;
  std::size_t input_dim_ = 0;
  std::size_t num_classes_ = 0;
};

/// Logits for one input. Throws std::invalid_argument on a dimension mismatch.
Vec forward_logits(const Classifier& model, std::span<const double> x);

/// Soft probabilities C(x).
Vec probabilities(const Classifier& model, std::span<const double> x);

/// Hard label c(x); ties go to the lowest class index.
Label predict(const Classifier& model, std::span<const double> x);

/// Index of the largest entry, lowest index on ties.
Label argmax(std::span<const double> v);

/// -log softmax(logits)[y].
double cross_entropy(const Classifier& model, std::span<const double> x, Label y);

struct LossAndGrad {
  double loss = 0.0;
  Vec grad;
};

/// Loss and gradient with respect to the input.
LossAndGrad loss_and_input_grad(const Classifier& model, std::span<const double> x, Label y);

Vec input_grad(const Classifier& model, std::span<const double> x, Label y);

/// Gradient of the cross-entropy with respect to every weight and bias.
ParamGrad param_grad(const Classifier& model, std::span<const double> x, Label y);

/// Records the forward pass on a tape. Parameters become leaves; their node
/// ids are appended to `param_nodes` (weights, bias per layer) when given.
GradTape::Node record_forward(const Classifier& model, GradTape& tape, GradTape::Node x,
                              std::vector<GradTape::Node>* param_nodes = nullptr);

/// Text persistence, format `PRDF v1`.
void save_model(const Classifier& model, std::ostream& out);
Classifier load_model(std::istream& in);
void save_model_file(const Classifier& model, const std::string& path);
Classifier load_model_file(const std::string& path);

std::string activation_name(Activation act);
Activation parse_activation(const std::string& name);

}  // namespace prdf
