#include "prdf/diffnet.hpp"

#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace prdf {

Classifier::Classifier(std::vector<DenseLayer> layers) : layers_(std::move(layers)) {
  if (layers_.empty()) throw std::invalid_argument("Classifier: at least one layer required");
  input_dim_ = layers_.front().weights.cols;
  std::size_t width = input_dim_;
  for (const auto& l : layers_) {
    if (l.weights.cols != width || l.bias.size() != l.weights.rows || l.weights.rows == 0 ||
        l.weights.data.size() != l.weights.rows * l.weights.cols)
      throw std::invalid_argument("Classifier: inconsistent layer shapes");
    width = l.weights.rows;
  }
  if (input_dim_ == 0) throw std::invalid_argument("Classifier: input_dim must be positive");
  num_classes_ = width;
}

Classifier Classifier::random_mlp(std::size_t input_dim, std::span<const std::size_t> hidden,
                                  std::size_t num_classes, Activation act, Rng& rng, double scale) {
  std::vector<DenseLayer> layers;
  std::size_t in = input_dim;
  auto make = [&](std::size_t out, Activation a) {
    DenseLayer l;
    l.weights = Matrix(out, in);
    l.bias.assign(out, 0.0);
    l.activation = a;
    const double limit = scale * std::sqrt(6.0 / static_cast<double>(in + out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    for (double& w : l.weights.data) w = dist(rng);
    layers.push_back(std::move(l));
    in = out;
  };
  for (std::size_t h : hidden) make(h, act);
  make(num_classes, Activation::identity);
  return Classifier(std::move(layers));
}

std::size_t Classifier::num_params() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += l.weights.data.size() + l.bias.size();
  return n;
}

ParamGrad Classifier::zero_grad() const {
  ParamGrad g;
  g.reserve(layers_.size());
  for (const auto& l : layers_) g.push_back({Matrix(l.weights.rows, l.weights.cols), Vec(l.bias.size(), 0.0)});
  return g;
}

Vec forward_logits(const Classifier& model, std::span<const double> x) {
  require_same_dim(x.size(), model.input_dim(), "forward_logits");
  Vec h(x.begin(), x.end());
  for (const auto& l : model.layers()) {
    Vec out(l.weights.rows);
    for (std::size_t i = 0; i < l.weights.rows; ++i) out[i] = dot(l.weights.row(i), h) + l.bias[i];
    apply_activation(out, l.activation);
    h = std::move(out);
  }
  return h;
}

Vec probabilities(const Classifier& model, std::span<const double> x) { return softmax(forward_logits(model, x)); }

Label argmax(std::span<const double> v) {
  Label best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

// Softmax is monotone, so the argmax over logits equals the argmax over C(x)
// except where exp() rounds distinct logits to equal probabilities; compare
// probabilities to honor the stated tie rule exactly.
Label predict(const Classifier& model, std::span<const double> x) { return argmax(probabilities(model, x)); }

static void check_label(const Classifier& model, Label y, const char* what) {
  if (y >= model.num_classes())
    throw std::invalid_argument(std::string(what) + ": class index " + std::to_string(y) + " out of range");
}

double cross_entropy(const Classifier& model, std::span<const double> x, Label y) {
  check_label(model, y, "cross_entropy");
  const Vec z = forward_logits(model, x);
  return nonneg(log_sum_exp(z) - z[y]);
}

GradTape::Node record_forward(const Classifier& model, GradTape& tape, GradTape::Node x,
                              std::vector<GradTape::Node>* param_nodes) {
  GradTape::Node h = x;
  for (const auto& l : model.layers()) {
    auto w = tape.leaf(l.weights.data, l.weights.rows, l.weights.cols);
    auto b = tape.leaf(l.bias);
    if (param_nodes) {
      param_nodes->push_back(w);
      param_nodes->push_back(b);
    }
    h = tape.affine(w, h, b);
    if (l.activation != Activation::identity) h = tape.activate(h, l.activation);
  }
  return h;
}

LossAndGrad loss_and_input_grad(const Classifier& model, std::span<const double> x, Label y) {
  require_same_dim(x.size(), model.input_dim(), "input_grad");
  check_label(model, y, "input_grad");
  GradTape tape;
  auto xn = tape.leaf(x);
  auto loss = tape.cross_entropy(record_forward(model, tape, xn), y);
  tape.backward(loss);
  return {tape.scalar(loss), tape.grad(xn)};
}

Vec input_grad(const Classifier& model, std::span<const double> x, Label y) {
  return loss_and_input_grad(model, x, y).grad;
}

ParamGrad param_grad(const Classifier& model, std::span<const double> x, Label y) {
  require_same_dim(x.size(), model.input_dim(), "param_grad");
  check_label(model, y, "param_grad");
  GradTape tape;
  auto xn = tape.leaf(x);
  std::vector<GradTape::Node> params;
  auto loss = tape.cross_entropy(record_forward(model, tape, xn, &params), y);
  tape.backward(loss);
  ParamGrad g = model.zero_grad();
  for (std::size_t i = 0; i < g.size(); ++i) {
    g[i].weights.data = tape.grad(params[2 * i]);
    g[i].bias = tape.grad(params[2 * i + 1]);
  }
  return g;
}

std::string activation_name(Activation act) {
  switch (act) {
    case Activation::identity:
      return "identity";
    case Activation::relu:
      return "relu";
    case Activation::tanh:
      return "tanh";
  }
  return "identity";
}

Activation parse_activation(const std::string& name) {
  if (name == "identity") return Activation::identity;
  if (name == "relu") return Activation::relu;
  if (name == "tanh") return Activation::tanh;
  throw std::invalid_argument("unknown activation '" + name + "'");
}

namespace {

void write_row(std::ostream& out, std::span<const double> row) {
  char buf[32];
  for (std::size_t j = 0; j < row.size(); ++j) {
    std::snprintf(buf, sizeof buf, "%.17g", row[j]);
    if (j) out << ' ';
    out << buf;
  }
  out << '\n';
}

Vec read_row(std::istream& in, std::size_t n, const char* what) {
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error(std::string("load_model: missing ") + what + " line");
  std::istringstream ls(line);
  Vec row(n);
  for (double& v : row)
    if (!(ls >> v)) throw std::runtime_error(std::string("load_model: short ") + what + " line");
  std::string extra;
  if (ls >> extra) throw std::runtime_error(std::string("load_model: trailing data on ") + what + " line");
  return row;
}

}  // namespace

void save_model(const Classifier& model, std::ostream& out) {
  out << "PRDF v1\n";
  out << model.input_dim() << ' ' << model.num_classes() << ' ' << model.layers().size() << '\n';
  for (const auto& l : model.layers()) {
    out << l.weights.rows << ' ' << l.weights.cols << ' ' << activation_name(l.activation) << '\n';
    for (std::size_t r = 0; r < l.weights.rows; ++r) write_row(out, l.weights.row(r));
    write_row(out, l.bias);
  }
}

Classifier load_model(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("load_model: empty input");
  if (line != "PRDF v1") throw std::runtime_error("load_model: unsupported header '" + line + "'");
  std::size_t input_dim = 0, num_classes = 0, num_layers = 0;
  {
    if (!std::getline(in, line)) throw std::runtime_error("load_model: missing shape line");
    std::istringstream ls(line);
    if (!(ls >> input_dim >> num_classes >> num_layers)) throw std::runtime_error("load_model: bad shape line");
  }
  std::vector<DenseLayer> layers;
  for (std::size_t k = 0; k < num_layers; ++k) {
    if (!std::getline(in, line)) throw std::runtime_error("load_model: missing layer header");
    std::istringstream ls(line);
    std::size_t rows = 0, cols = 0;
    std::string act;
    if (!(ls >> rows >> cols >> act)) throw std::runtime_error("load_model: bad layer header");
    DenseLayer l;
    l.activation = parse_activation(act);
    l.weights = Matrix(rows, cols);
    for (std::size_t r = 0; r < rows; ++r) {
      Vec row = read_row(in, cols, "weight");
      std::copy(row.begin(), row.end(), l.weights.row(r).begin());
    }
    l.bias = read_row(in, rows, "bias");
    layers.push_back(std::move(l));
  }
  Classifier model(std::move(layers));
  if (model.input_dim() != input_dim || model.num_classes() != num_classes)
    throw std::runtime_error("load_model: declared shape does not match layers");
  return model;
}

void save_model_file(const Classifier& model, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  save_model(model, out);
}

Classifier load_model_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  return load_model(in);
}

}  // namespace prdf
