#include "prdf/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <stdexcept>

#include "prdf/attack.hpp"

namespace prdf {

std::string train_mode_name(TrainMode m) {
  switch (m) {
    case TrainMode::plain:
      return "plain";
    case TrainMode::adversarial:
      return "adversarial";
    case TrainMode::preempt_robust:
      return "preempt_robust";
  }
  return "plain";
}

TrainMode parse_train_mode(const std::string& s) {
  if (s == "plain") return TrainMode::plain;
  if (s == "adversarial" || s == "adv") return TrainMode::adversarial;
  if (s == "preempt_robust" || s == "preempt") return TrainMode::preempt_robust;
  throw std::invalid_argument("unknown training mode '" + s + "'");
}

TrainConfig TrainConfig::defaults(TrainMode mode, const PerturbSpec& spec) {
  TrainConfig c;
  c.mode = mode;
  c.spec = spec;
  c.inner_min_step = spec.eps;
  c.inner_max_step = spec.eps / 4.0;
  c.checkpoint = mode == TrainMode::adversarial ? Checkpoint::best_holdout : Checkpoint::latest;
  return c;
}

void TrainConfig::validate() const {
  spec.validate();
  if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
  if (!(lr >= 0.0)) throw std::invalid_argument("TrainConfig: lr must be >= 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw std::invalid_argument("TrainConfig: momentum must lie in [0, 1)");
  if (!(weight_decay >= 0.0)) throw std::invalid_argument("TrainConfig: weight_decay must be >= 0");
  if (!(noise_sigma >= 0.0)) throw std::invalid_argument("TrainConfig: noise_sigma must be >= 0");
  if (mode != TrainMode::plain && inner_max_steps > 0 && !(inner_max_step > 0.0))
    throw std::invalid_argument("TrainConfig: inner_max_step must be > 0");
  if (mode == TrainMode::preempt_robust && inner_min_steps > 0 && !(inner_min_step > 0.0))
    throw std::invalid_argument("TrainConfig: inner_min_step must be > 0");
}

void sgd_step(Classifier& model, const ParamGrad& grad, SgdState& state, double lr, double momentum,
              double weight_decay) {
  auto& layers = model.layers();
  if (grad.size() != layers.size()) throw std::invalid_argument("sgd_step: gradient shape mismatch");
  if (state.velocity.empty()) state.velocity = model.zero_grad();
  auto update = [&](std::vector<double>& theta, const std::vector<double>& g, std::vector<double>& v) {
    if (g.size() != theta.size()) throw std::invalid_argument("sgd_step: gradient shape mismatch");
    for (std::size_t i = 0; i < theta.size(); ++i) {
      const double d = g[i] + weight_decay * theta[i];
      v[i] = momentum * v[i] + d;
      theta[i] -= lr * v[i];
    }
  };
  for (std::size_t l = 0; l < layers.size(); ++l) {
    update(layers[l].weights.data, grad[l].weights.data, state.velocity[l].weights.data);
    update(layers[l].bias, grad[l].bias, state.velocity[l].bias);
  }
}

namespace {

// k signed steps on the loss of y starting at clamp(center + eta), kept inside
// B_radius(center) and the unit cube. direction -1 descends, +1 ascends.
Vec inner_walk(const Classifier& model, std::span<const double> center, Label y, double radius, Norm p,
               double step, std::size_t k, double direction, Rng& rng) {
  Vec x(center.begin(), center.end());
  if (k == 0) return x;
  const Vec eta = sample_uniform_ball(x.size(), radius, p, rng);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] += eta[i];
  clamp_unit(x);
  for (std::size_t t = 0; t < k; ++t) {
    Vec g = input_grad(model, x, y);
    if (direction < 0) g = scaled(g, -1.0);
    x = project_ball(signed_step(x, g, step, p).x, center, radius, p);
    clamp_unit(x);
  }
  return x;
}

void accumulate(ParamGrad& acc, const ParamGrad& g, double w) {
  for (std::size_t l = 0; l < acc.size(); ++l) {
    axpy(w, g[l].weights.data, acc[l].weights.data);
    axpy(w, g[l].bias, acc[l].bias);
  }
}

struct Score {
  double loss = 0.0;
  double acc = 0.0;
};

Score clean_score(const Classifier& model, std::span<const Example> set) {
  Score s;
  for (const auto& e : set) {
    s.loss += cross_entropy(model, e.x, e.y);
    s.acc += predict(model, e.x) == e.y ? 1.0 : 0.0;
  }
  if (!set.empty()) {
    s.loss /= double(set.size());
    s.acc /= double(set.size());
  }
  return s;
}

Score pgd_score(const Classifier& model, std::span<const Example> set, const TrainConfig& cfg, std::uint64_t base) {
  Score s;
  PgdConfig pc = PgdConfig::defaults(cfg.spec);
  pc.steps = cfg.holdout_attack_steps;
  for (std::size_t i = 0; i < set.size(); ++i) {
    Rng r = derive_stream(base, "holdout-attack", i);
    const Vec xa = pgd(model, set[i].x, set[i].y, cfg.spec, pc, r);
    s.loss += cross_entropy(model, xa, set[i].y);
    s.acc += predict(model, xa) == set[i].y ? 1.0 : 0.0;
  }
  if (!set.empty()) {
    s.loss /= double(set.size());
    s.acc /= double(set.size());
  }
  return s;
}

}  // namespace

Vec training_point(const Classifier& model, const Example& e, const TrainConfig& cfg, Rng& defend, Rng& attack) {
  Vec x = e.x;
  if (cfg.mode == TrainMode::preempt_robust)
    x = inner_walk(model, e.x, e.y, cfg.spec.delta, cfg.spec.p, cfg.inner_min_step, cfg.inner_min_steps, -1.0,
                   defend);
  if (cfg.mode != TrainMode::plain)
    x = inner_walk(model, x, e.y, cfg.spec.eps, cfg.spec.p, cfg.inner_max_step, cfg.inner_max_steps, +1.0, attack);
  return x;
}

TrainResult train(const Classifier& init, std::span<const Example> data, std::span<const Example> holdout,
                  const TrainConfig& cfg, Rng& rng) {
  cfg.validate();
  for (const auto& e : data) {
    require_same_dim(e.x.size(), init.input_dim(), "train");
    if (e.y >= init.num_classes()) throw std::invalid_argument("train: label out of range");
  }
  const std::uint64_t base = rng();
  TrainResult out;
  out.model = init;
  Classifier best = init;
  double best_acc = -1.0;
  SgdState state;
  double lr = cfg.lr;
  std::uint64_t counter = 0;

  std::vector<std::size_t> order(data.size());
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle = derive_stream(base, "shuffle", epoch);
    std::shuffle(order.begin(), order.end(), shuffle);

    double loss_sum = 0.0, correct = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
      ParamGrad acc = out.model.zero_grad();
      const double w = 1.0 / double(stop - start);
      for (std::size_t b = start; b < stop; ++b, ++counter) {
        const Example& e = data[order[b]];
        Rng defend = derive_stream(base, "train-defend", counter);
        Rng attack = derive_stream(base, "train-attack", counter);
        Vec x = training_point(out.model, e, cfg, defend, attack);
        if (cfg.noise_sigma > 0.0) {
          Rng noise = derive_stream(base, "train-noise", counter);
          const Vec xi = draw_gaussian_noise(x.size(), cfg.noise_sigma, 1, noise).front();
          for (std::size_t i = 0; i < x.size(); ++i) x[i] += xi[i];
        }
        const double l = cross_entropy(out.model, x, e.y);
        if (!std::isfinite(l))
          throw NumericalError("train: non-finite loss at epoch " + std::to_string(epoch) + ", example " +
                               std::to_string(order[b]));
        loss_sum += l;
        correct += predict(out.model, x) == e.y ? 1.0 : 0.0;
        accumulate(acc, param_grad(out.model, x, e.y), w);
      }
      sgd_step(out.model, acc, state, lr, cfg.momentum, cfg.weight_decay);
    }
    if (std::find(cfg.lr_milestones.begin(), cfg.lr_milestones.end(), epoch) != cfg.lr_milestones.end())
      lr *= cfg.lr_gamma;

    const double n = data.empty() ? 1.0 : double(data.size());
    out.history.push_back({epoch, "train", loss_sum / n, correct / n});
    if (!holdout.empty()) {
      const Score c = clean_score(out.model, holdout);
      out.history.push_back({epoch, "holdout", c.loss, c.acc});
      if (cfg.checkpoint == Checkpoint::best_holdout) {
        const Score r = pgd_score(out.model, holdout, cfg, base);
        out.history.push_back({epoch, "holdout_pgd", r.loss, r.acc});
        if (r.acc > best_acc) {
          best_acc = r.acc;
          best = out.model;
          out.selected_epoch = epoch;
        }
      }
    }
  }
  if (cfg.checkpoint == Checkpoint::best_holdout && best_acc >= 0.0)
    out.model = best;
  else
    out.selected_epoch = cfg.epochs;
  return out;
}

void write_history_csv(std::ostream& out, std::span<const EpochRecord> history) {
  out << "epoch,split,loss,acc\n";
  char buf[128];
  for (const auto& r : history) {
    std::snprintf(buf, sizeof buf, "%zu,%s,%.10g,%.10g\n", r.epoch, r.split.c_str(), r.loss, r.acc);
    out << buf;
  }
}

}  // namespace prdf
