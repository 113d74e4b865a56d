#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "prdf/dataset.hpp"
#include "prdf/geometry.hpp"
#include "prdf/preempt.hpp"
#include "prdf/tape.hpp"
#include "prdf/train.hpp"

namespace prdf {

/// Malformed or inconsistent configuration. `line` is 0 when the problem is
/// not tied to one line of a file.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& msg, std::size_t line = 0)
      : std::runtime_error(line ? "line " + std::to_string(line) + ": " + msg : msg), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

struct ExperimentConfig {
  std::uint64_t seed = 1;

  // [model]
  std::vector<std::size_t> hidden{32};
  Activation activation = Activation::relu;
  double init_scale = 1.0;
  std::string load_adversarial;  // model files to load instead of training
  std::string load_preempt;

  // [train]
  DatasetKind dataset = DatasetKind::gauss2;
  std::size_t n_per_class = 1000;
  std::size_t dim = 8;
  double spread = 0.08;
  std::size_t epochs = 20;
  std::size_t batch_size = 32;
  double lr = 0.05;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  std::size_t inner_min_steps = 1;
  double inner_min_step = 0.0;  // 0: eps
  std::size_t inner_max_steps = 10;
  double inner_max_step = 0.0;  // 0: eps / 4

  // [perturb]
  Norm p = Norm::linf;
  std::vector<double> eps{0.15};
  double delta = -1.0;  // negative: delta = eps
  bool allow_delta_override = false;

  // [robustify]
  std::size_t max_iter = 100;
  std::size_t steps = 20;  // T
  double step_size = 0.0;  // 0: eps / 4
  std::size_t n_samples = 1;
  double robustify_lr = 0.0;  // 0: norm-specific default
  InitMode init = InitMode::at_original;
  std::optional<Optimizer> optimizer;  // unset: tanh_rmsprop for inf, projected_gd for 2
  GradMode grad_mode = GradMode::first_order;
  std::size_t eval_points = 200;
  bool trace_exact = false;  // also record exact-mode gradient-norm traces
  std::size_t trace_points = 5;

  // [attack]
  std::size_t attack_steps = 20;
  std::size_t restarts = 10;
  std::size_t lemma1_restarts = 10;
  std::vector<double> eps_prime{0.25, 0.5, 0.75, 1.0};
  bool whitebox = true;

  // [smooth]
  bool smooth = false;
  double sigma = 0.25;
  std::size_t n_pred = 50;
  std::size_t n_cert = 10000;
  std::size_t smooth_samples = 5;
  double conf_alpha = 0.001;
  std::size_t smooth_points = 100;
  double smooth_eps = 0.5;
  std::size_t smooth_max_iter = 50;
  double smooth_lr = 0.0;  // 0: l2 projected-GD default

  // [output]
  std::string out_dir = "out";
  bool write_models = true;

  /// Cross-field checks; throws ConfigError.
  void validate() const;

  PerturbSpec spec_for(double eps_value) const;
  TrainConfig train_config(TrainMode mode, double eps_value) const;
  RobustifyConfig robustify_config(const PerturbSpec& spec) const;
  PgdConfig attack_config(const PerturbSpec& spec, std::size_t n_restarts) const;
};

/// One `section.key` the parser understands.
struct ConfigKey {
  std::string section;  // empty for top-level keys
  std::string key;
  std::string help;
  std::function<void(ExperimentConfig&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;

  std::string dotted() const { return section.empty() ? key : section + "." + key; }
};

const std::vector<ConfigKey>& config_keys();

/// Applies `key = value` lines under `[section]` headers. `#` starts a comment.
/// Unknown sections, unknown keys and bad values are errors with line numbers.
void parse_config(std::istream& in, ExperimentConfig& cfg);
/// Applies the file on top of `base`.
ExperimentConfig load_config_file(const std::string& path, ExperimentConfig base = {});

/// Sets one dotted key (`train.epochs`), as used by command-line overrides.
void set_config_value(ExperimentConfig& cfg, const std::string& dotted, const std::string& value);

/// Every key with its current value, grouped by section. Parsing the output
/// reproduces the configuration.
void write_config(std::ostream& out, const ExperimentConfig& cfg);

/// PREEMPT_SEED, when set, replaces the root seed.
void apply_seed_env(ExperimentConfig& cfg);

}  // namespace prdf
