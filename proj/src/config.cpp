#include "prdf/config.hpp"

#include <algorithm>
#include <cerrno>
#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

namespace prdf {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

double to_double(const std::string& s) {
  const std::string t = trim(s);
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(t.c_str(), &end);
  if (t.empty() || *end != '\0' || errno == ERANGE || !std::isfinite(v))
    throw ConfigError("expected a number, got '" + s + "'");
  return v;
}

std::uint64_t to_uint(const std::string& s) {
  const std::string t = trim(s);
  std::uint64_t v = 0;
  auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (t.empty() || ec != std::errc() || p != t.data() + t.size())
    throw ConfigError("expected a non-negative integer, got '" + s + "'");
  return v;
}

bool to_bool(const std::string& s) {
  const std::string t = trim(s);
  if (t == "true" || t == "1" || t == "yes" || t == "on") return true;
  if (t == "false" || t == "0" || t == "no" || t == "off") return false;
  throw ConfigError("expected true or false, got '" + s + "'");
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt_list(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + fmt(v[i]);
  return s;
}

std::string fmt_list(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + std::to_string(v[i]);
  return s;
}

template <class T>
T rethrow_as_config(const std::string& what, const std::function<T()>& f) {
  try {
    return f();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(what + ": " + e.what());
  }
}

using E = ExperimentConfig;

ConfigKey num(std::string sec, std::string key, std::string help, double E::*field) {
  return {sec, key, help, [field](E& c, const std::string& v) { c.*field = to_double(v); },
          [field](const E& c) { return fmt(c.*field); }};
}

ConfigKey count(std::string sec, std::string key, std::string help, std::size_t E::*field) {
  return {sec, key, help, [field](E& c, const std::string& v) { c.*field = to_uint(v); },
          [field](const E& c) { return std::to_string(c.*field); }};
}

ConfigKey flag(std::string sec, std::string key, std::string help, bool E::*field) {
  return {sec, key, help, [field](E& c, const std::string& v) { c.*field = to_bool(v); },
          [field](const E& c) { return std::string(c.*field ? "true" : "false"); }};
}

ConfigKey text(std::string sec, std::string key, std::string help, std::string E::*field) {
  return {sec, key, help, [field](E& c, const std::string& v) { c.*field = trim(v); },
          [field](const E& c) { return c.*field; }};
}

template <class T>
ConfigKey choice(std::string sec, std::string key, std::string help, T E::*field, T (*parse)(const std::string&),
                 std::string (*name)(T)) {
  return {sec, key, help,
          [field, parse](E& c, const std::string& v) {
            c.*field = rethrow_as_config<T>("bad value", [&] { return parse(trim(v)); });
          },
          [field, name](const E& c) { return name(c.*field); }};
}

std::vector<ConfigKey> build_keys() {
  std::vector<ConfigKey> k;
  k.push_back({"", "seed", "root seed for every random stream",
               [](E& c, const std::string& v) { c.seed = to_uint(v); },
               [](const E& c) { return std::to_string(c.seed); }});

  k.push_back({"model", "hidden", "hidden layer widths, comma separated",
               [](E& c, const std::string& v) {
                 c.hidden.clear();
                 for (const auto& s : split_list(v)) c.hidden.push_back(to_uint(s));
               },
               [](const E& c) { return fmt_list(c.hidden); }});
  k.push_back(choice<Activation>("model", "activation", "relu, tanh or identity", &E::activation, parse_activation,
                                 activation_name));
  k.push_back(num("model", "init_scale", "scale of the Glorot-uniform initialization", &E::init_scale));
  k.push_back(text("model", "load_adversarial", "load the adversarially trained model instead of training",
                   &E::load_adversarial));
  k.push_back(text("model", "load_preempt", "load the preemptively robust model instead of training",
                   &E::load_preempt));

  k.push_back(choice<DatasetKind>("train", "dataset", "gauss2, rings or bars", &E::dataset, parse_dataset_kind,
                                  dataset_kind_name));
  k.push_back(count("train", "n_per_class", "examples per class", &E::n_per_class));
  k.push_back(count("train", "dim", "input dimension (gauss2 only)", &E::dim));
  k.push_back(num("train", "spread", "gauss2 blob standard deviation", &E::spread));
  k.push_back(count("train", "epochs", "training epochs", &E::epochs));
  k.push_back(count("train", "batch_size", "mini-batch size", &E::batch_size));
  k.push_back(num("train", "lr", "SGD learning rate", &E::lr));
  k.push_back(num("train", "momentum", "SGD momentum", &E::momentum));
  k.push_back(num("train", "weight_decay", "SGD weight decay", &E::weight_decay));
  k.push_back(count("train", "inner_min_steps", "L, defender descent steps", &E::inner_min_steps));
  k.push_back(num("train", "inner_min_step", "defender step size, 0 for eps", &E::inner_min_step));
  k.push_back(count("train", "inner_max_steps", "K, adversary ascent steps", &E::inner_max_steps));
  k.push_back(num("train", "inner_max_step", "adversary step size, 0 for eps/4", &E::inner_max_step));

  k.push_back(choice<Norm>("perturb", "p", "2 or inf", &E::p, parse_norm, norm_name));
  k.push_back({"perturb", "eps", "adversary budgets, comma separated (one setting each)",
               [](E& c, const std::string& v) {
                 c.eps.clear();
                 for (const auto& s : split_list(v)) c.eps.push_back(to_double(s));
               },
               [](const E& c) { return fmt_list(c.eps); }});
  k.push_back(num("perturb", "delta", "defender budget; negative means delta = eps", &E::delta));
  k.push_back(flag("perturb", "allow_delta_override", "permit delta != eps", &E::allow_delta_override));

  k.push_back(count("robustify", "max_iter", "outer iterations", &E::max_iter));
  k.push_back(count("robustify", "steps", "T, inner PGD steps", &E::steps));
  k.push_back(num("robustify", "step_size", "inner PGD step, 0 for eps/4", &E::step_size));
  k.push_back(count("robustify", "n_samples", "N, inner attacks per iteration", &E::n_samples));
  k.push_back(num("robustify", "lr", "beta, 0 for the norm default", &E::robustify_lr));
  k.push_back(choice<InitMode>("robustify", "init", "at_original or random_in_delta_ball", &E::init,
                               parse_init_mode, init_mode_name));
  k.push_back({"robustify", "optimizer", "auto, projected_gd or tanh_rmsprop",
               [](E& c, const std::string& v) {
                 const std::string t = trim(v);
                 if (t == "auto")
                   c.optimizer.reset();
                 else
                   c.optimizer = rethrow_as_config<Optimizer>("bad value", [&] { return parse_optimizer(t); });
               },
               [](const E& c) { return c.optimizer ? optimizer_name(*c.optimizer) : std::string("auto"); }});
  k.push_back(choice<GradMode>("robustify", "grad_mode", "first_order or exact", &E::grad_mode, parse_grad_mode,
                               grad_mode_name));
  k.push_back(count("robustify", "eval_points", "test points evaluated per setting", &E::eval_points));
  k.push_back(flag("robustify", "trace_exact", "also record exact-mode gradient norms", &E::trace_exact));
  k.push_back(count("robustify", "trace_points", "points with exact-mode traces", &E::trace_points));

  k.push_back(count("attack", "steps", "evaluation PGD steps", &E::attack_steps));
  k.push_back(count("attack", "restarts", "restarts of the strongest grey-box attack", &E::restarts));
  k.push_back(count("attack", "lemma1_restarts", "restarts when estimating the worst-case loss",
                    &E::lemma1_restarts));
  k.push_back({"attack", "eps_prime", "white-box budgets as fractions of eps",
               [](E& c, const std::string& v) {
                 c.eps_prime.clear();
                 for (const auto& s : split_list(v)) c.eps_prime.push_back(to_double(s));
               },
               [](const E& c) { return fmt_list(c.eps_prime); }});
  k.push_back(flag("attack", "whitebox", "run the reconstruction attack", &E::whitebox));

  k.push_back(flag("smooth", "enabled", "run the randomized-smoothing experiment", &E::smooth));
  k.push_back(num("smooth", "sigma", "noise level", &E::sigma));
  k.push_back(count("smooth", "n_pred", "prediction votes", &E::n_pred));
  k.push_back(count("smooth", "n_cert", "certification votes", &E::n_cert));
  k.push_back(count("smooth", "samples", "M, noise draws per randomized-PGD step", &E::smooth_samples));
  k.push_back(num("smooth", "conf_alpha", "certification failure probability", &E::conf_alpha));
  k.push_back(count("smooth", "points", "test points certified", &E::smooth_points));
  k.push_back(num("smooth", "eps", "l2 budget of the smoothing experiment", &E::smooth_eps));
  k.push_back(count("smooth", "max_iter", "outer iterations of smoothed robustification", &E::smooth_max_iter));
  k.push_back(num("smooth", "lr", "beta of smoothed robustification, 0 for default", &E::smooth_lr));

  k.push_back(text("output", "dir", "output directory", &E::out_dir));
  k.push_back(flag("output", "write_models", "save trained models", &E::write_models));
  return k;
}

const std::vector<std::string> kSections{"model", "train", "perturb", "robustify", "attack", "smooth", "output"};

const ConfigKey* find_key(const std::string& section, const std::string& key) {
  for (const auto& k : config_keys())
    if (k.section == section && k.key == key) return &k;
  return nullptr;
}

}  // namespace

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = build_keys();
  return keys;
}

void ExperimentConfig::validate() const {
  if (eps.empty()) throw ConfigError("perturb.eps: at least one budget is required");
  for (double e : eps) {
    if (!(e > 0.0)) throw ConfigError("perturb.eps: budgets must be > 0");
    if (delta >= 0.0 && delta != e && !allow_delta_override)
      throw ConfigError("perturb.delta differs from eps; set perturb.allow_delta_override = true to allow it");
  }
  if (optimizer == Optimizer::tanh_rmsprop && p != Norm::linf)
    throw ConfigError("robustify.optimizer: tanh_rmsprop requires perturb.p = inf");
  if (grad_mode == GradMode::exact && dim > kMaxExactDim && dataset == DatasetKind::gauss2)
    throw ConfigError("robustify.grad_mode: exact mode is limited to dim <= 16");
  if (batch_size == 0) throw ConfigError("train.batch_size must be >= 1");
  if (dim == 0) throw ConfigError("train.dim must be >= 1");
  if (restarts == 0 || lemma1_restarts == 0) throw ConfigError("attack restarts must be >= 1");
  if (n_samples == 0) throw ConfigError("robustify.n_samples must be >= 1");
  if (eps_prime.empty()) throw ConfigError("attack.eps_prime: at least one fraction is required");
  for (double f : eps_prime)
    if (!(f > 0.0 && f <= 1.0)) throw ConfigError("attack.eps_prime: fractions must lie in (0, 1]");
  if (smooth) {
    if (!(sigma > 0.0)) throw ConfigError("smooth.sigma must be > 0");
    if (n_pred == 0 || n_cert == 0 || smooth_samples == 0) throw ConfigError("smooth sample counts must be >= 1");
    if (!(conf_alpha > 0.0 && conf_alpha < 1.0)) throw ConfigError("smooth.conf_alpha must lie in (0, 1)");
    if (!(smooth_eps > 0.0)) throw ConfigError("smooth.eps must be > 0");
  }
  if (!(lr >= 0.0) || !(momentum >= 0.0 && momentum < 1.0) || !(weight_decay >= 0.0))
    throw ConfigError("train: lr, momentum or weight_decay out of range");
}

PerturbSpec ExperimentConfig::spec_for(double e) const { return {p, e, delta >= 0.0 ? delta : e}; }

TrainConfig ExperimentConfig::train_config(TrainMode mode, double e) const {
  TrainConfig t = TrainConfig::defaults(mode, spec_for(e));
  t.epochs = epochs;
  t.batch_size = batch_size;
  t.lr = lr;
  t.momentum = momentum;
  t.weight_decay = weight_decay;
  t.inner_min_steps = inner_min_steps;
  if (inner_min_step > 0.0) t.inner_min_step = inner_min_step;
  t.inner_max_steps = inner_max_steps;
  if (inner_max_step > 0.0) t.inner_max_step = inner_max_step;
  t.holdout_attack_steps = inner_max_steps;
  return t;
}

RobustifyConfig ExperimentConfig::robustify_config(const PerturbSpec& spec) const {
  RobustifyConfig r = RobustifyConfig::defaults(spec);
  r.max_iter = max_iter;
  r.inner.steps = steps;
  if (step_size > 0.0) r.inner.step_size = step_size;
  r.n_samples = n_samples;
  if (robustify_lr > 0.0) r.lr = robustify_lr;
  r.init = init;
  if (optimizer) r.optimizer = *optimizer;
  r.grad_mode = grad_mode;
  return r;
}

PgdConfig ExperimentConfig::attack_config(const PerturbSpec& spec, std::size_t n_restarts) const {
  PgdConfig c = PgdConfig::defaults(spec);
  c.steps = attack_steps;
  c.restarts = n_restarts;
  return c;
}

void parse_config(std::istream& in, ExperimentConfig& cfg) {
  std::string line, section;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError("unterminated section header", lineno);
      section = trim(line.substr(1, line.size() - 2));
      if (std::find(kSections.begin(), kSections.end(), section) == kSections.end())
        throw ConfigError("unknown section [" + section + "]", lineno);
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("expected 'key = value'", lineno);
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const ConfigKey* k = find_key(section, key);
    if (!k) throw ConfigError("unknown key '" + (section.empty() ? key : section + "." + key) + "'", lineno);
    try {
      k->set(cfg, value);
    } catch (const ConfigError& e) {
      throw ConfigError(k->dotted() + ": " + e.what(), lineno);
    }
  }
}

ExperimentConfig load_config_file(const std::string& path, ExperimentConfig cfg) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path);
  parse_config(in, cfg);
  return cfg;
}

void set_config_value(ExperimentConfig& cfg, const std::string& dotted, const std::string& value) {
  const auto dot = dotted.find('.');
  const std::string section = dot == std::string::npos ? "" : dotted.substr(0, dot);
  const std::string key = dot == std::string::npos ? dotted : dotted.substr(dot + 1);
  const ConfigKey* k = find_key(section, key);
  if (!k) throw ConfigError("unknown key '" + dotted + "'");
  try {
    k->set(cfg, value);
  } catch (const ConfigError& e) {
    throw ConfigError(dotted + ": " + e.what());
  }
}

void write_config(std::ostream& out, const ExperimentConfig& cfg) {
  std::string section = "\x01";
  for (const auto& k : config_keys()) {
    if (k.section != section) {
      section = k.section;
      if (!section.empty()) out << "\n[" << section << "]\n";
    }
    out << k.key << " = " << k.get(cfg) << '\n';
  }
}

void apply_seed_env(ExperimentConfig& cfg) {
  if (const char* s = std::getenv("PREEMPT_SEED"); s && *s) {
    try {
      cfg.seed = to_uint(s);
    } catch (const ConfigError& e) {
      throw ConfigError(std::string("PREEMPT_SEED: ") + e.what());
    }
  }
}

}  // namespace prdf
