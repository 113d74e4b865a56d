#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "prdf/dataset.hpp"
#include "prdf/diffnet.hpp"
#include "prdf/geometry.hpp"

namespace prdf {

enum class TrainMode { plain, adversarial, preempt_robust };
enum class Checkpoint { latest, best_holdout };

std::string train_mode_name(TrainMode m);
TrainMode parse_train_mode(const std::string& s);

struct TrainConfig {
  TrainMode mode = TrainMode::preempt_robust;
  PerturbSpec spec;
  std::size_t epochs = 20;
  std::size_t inner_min_steps = 1;   // L, descent inside B_delta(x_o)
  double inner_min_step = 0.0;       // beta at train time
  std::size_t inner_max_steps = 10;  // K, ascent inside B_eps(x_r)
  double inner_max_step = 0.0;       // alpha
  double lr = 0.05;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  std::size_t batch_size = 32;
  std::vector<std::size_t> lr_milestones;  // epochs (1-based) after which lr *= lr_gamma
  double lr_gamma = 0.1;
  double noise_sigma = 0.0;  // Gaussian input augmentation, for smoothing base models
  Checkpoint checkpoint = Checkpoint::latest;
  std::size_t holdout_attack_steps = 10;  // PGD steps when scoring holdout checkpoints

  /// beta = eps, K = 10, alpha = eps / 4; best-on-holdout checkpoint for
  /// adversarial training, latest for the other modes.
  static TrainConfig defaults(TrainMode mode, const PerturbSpec& spec);
  void validate() const;
};

struct EpochRecord {
  std::size_t epoch = 0;
  std::string split;  // train, holdout, holdout_pgd
  double loss = 0.0;
  double acc = 0.0;
};

struct TrainResult {
  Classifier model;
  std::vector<EpochRecord> history;
  std::size_t selected_epoch = 0;
};

/// Momentum buffers, one per parameter tensor.
struct SgdState {
  ParamGrad velocity;
};

/// d = g + wd * theta; v = momentum * v + d; theta -= lr * v.
void sgd_step(Classifier& model, const ParamGrad& grad, SgdState& state, double lr, double momentum,
              double weight_decay);

/// Training input for one example: x_r by L descent steps from x_o + eta
/// inside B_delta(x_o), then K ascent steps from x_r + eta inside B_eps(x_r).
/// Zero steps leave the point untouched and draw nothing.
Vec training_point(const Classifier& model, const Example& e, const TrainConfig& cfg, Rng& defend, Rng& attack);

/// Mini-batch SGD over `data`. Every example uses its own named streams, so
/// the defender's and adversary's draws never interleave. `holdout` feeds the
/// history and the best-on-holdout checkpoint; it may be empty.
TrainResult train(const Classifier& init, std::span<const Example> data, std::span<const Example> holdout,
                  const TrainConfig& cfg, Rng& rng);

/// CSV: epoch, split, loss, acc
void write_history_csv(std::ostream& out, std::span<const EpochRecord> history);

}  // namespace prdf
