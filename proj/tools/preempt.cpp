// Command-line front end: dataset generation, training, robustification,
// attacks, certification and the full evaluation pipeline.

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "prdf/config.hpp"
#include "prdf/pipeline.hpp"

using namespace prdf;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;
constexpr int kExitSelftest = 4;

struct Overrides {
  std::vector<std::string> values;
  std::vector<CLI::Option*> options;
};

Dataset data_or_generate(const ExperimentConfig& cfg, const std::string& path) {
  if (!path.empty()) return load_dataset_file(path);
  return gen_dataset(cfg.dataset, cfg.n_per_class, cfg.dim, cfg.seed, cfg.spread);
}

std::filesystem::path in_out_dir(const ExperimentConfig& cfg, const std::string& given, const char* fallback) {
  if (!given.empty()) return given;
  std::filesystem::create_directories(cfg.out_dir);
  return std::filesystem::path(cfg.out_dir) / fallback;
}

std::vector<std::size_t> first_test_ids(const Dataset& ds, std::size_t n) {
  n = std::min(n, ds.test.size());
  return {ds.test.begin(), ds.test.begin() + static_cast<std::ptrdiff_t>(n)};
}

PerturbSpec spec_at(const ExperimentConfig& cfg, std::size_t setting) {
  if (setting >= cfg.eps.size()) throw ConfigError("--setting is out of range for perturb.eps");
  return cfg.spec_for(cfg.eps[setting]);
}

SmoothConfig smooth_config(const ExperimentConfig& cfg) {
  SmoothConfig s;
  s.sigma = cfg.sigma;
  s.n_pred = cfg.n_pred;
  s.n_cert = cfg.n_cert;
  s.samples = cfg.smooth_samples;
  s.conf_alpha = cfg.conf_alpha;
  s.validate();
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Preemptive robustification experiments on small classifiers"};
  app.require_subcommand(1);

  std::string config_path;
  app.add_option("--config", config_path, "configuration file (flags override it)");
  Overrides ov;
  const auto& keys = config_keys();
  ov.values.resize(keys.size());
  for (std::size_t i = 0; i < keys.size(); ++i)
    ov.options.push_back(app.add_option("--" + keys[i].dotted(), ov.values[i], keys[i].help));

  std::size_t setting = 0;
  std::string data_path, model_path, paired_path, out_path, history_path, mode_name = "preempt_robust";

  auto* gen = app.add_subcommand("gen-data", "generate a dataset file");
  gen->add_option("--out", out_path, "dataset file (default <out_dir>/dataset.prds)");

  auto* tr = app.add_subcommand("train", "train one model");
  tr->add_option("--mode", mode_name, "plain, adversarial or preempt_robust");
  tr->add_option("--data", data_path, "dataset file (default: generate from the config)");
  tr->add_option("--setting", setting, "index into perturb.eps");
  tr->add_option("--out", out_path, "model file");
  tr->add_option("--history", history_path, "loss history CSV");

  auto* rob = app.add_subcommand("robustify", "robustify the first robustify.eval_points test points");
  rob->add_option("--model", model_path)->required();
  rob->add_option("--data", data_path);
  rob->add_option("--setting", setting);
  rob->add_option("--out", out_path, "paired originals/robustified file");

  auto* att = app.add_subcommand("attack", "grey-box PGD accuracy of raw or robustified points");
  att->add_option("--model", model_path)->required();
  att->add_option("--data", data_path);
  att->add_option("--paired", paired_path, "attack the robustified points of this file");
  att->add_option("--setting", setting);

  auto* wb = app.add_subcommand("whitebox", "reconstruction attack against robustified points");
  wb->add_option("--model", model_path)->required();
  wb->add_option("--paired", paired_path)->required();
  wb->add_option("--setting", setting);
  wb->add_option("--out", out_path, "distances CSV");

  auto* sc = app.add_subcommand("smooth-certify", "certify points under randomized smoothing");
  sc->add_option("--model", model_path)->required();
  sc->add_option("--data", data_path);
  sc->add_option("--paired", paired_path, "certify the robustified points of this file");
  sc->add_option("--out", out_path, "certification CSV");

  auto* rep = app.add_subcommand("report", "run the full pipeline and write every CSV");
  auto* st = app.add_subcommand("selftest", "small end-to-end run with structural checks");

  for (auto* sub : {gen, tr, rob, att, wb, sc, rep, st}) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : kExitConfig;
  }

  ExperimentConfig cfg = st->parsed() ? selftest_config() : ExperimentConfig{};
  try {
    if (!config_path.empty()) cfg = load_config_file(config_path, cfg);
    apply_seed_env(cfg);
    for (std::size_t i = 0; i < keys.size(); ++i)
      if (ov.options[i]->count()) set_config_value(cfg, keys[i].dotted(), ov.values[i]);
    cfg.validate();
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  }

  try {
    if (gen->parsed()) {
      const Dataset ds = data_or_generate(cfg, "");
      const auto path = in_out_dir(cfg, out_path, "dataset.prds");
      save_dataset_file(ds, path.string());
      std::cout << "wrote " << ds.examples.size() << " examples to " << path.string() << "\n";
    } else if (tr->parsed()) {
      const TrainMode mode = parse_train_mode(mode_name);
      const Dataset ds = data_or_generate(cfg, data_path);
      const PerturbSpec spec = spec_at(cfg, setting);
      Rng init_rng = derive_stream(cfg.seed, "init", setting);
      const Classifier init =
          Classifier::random_mlp(ds.dim, cfg.hidden, ds.num_classes, cfg.activation, init_rng, cfg.init_scale);
      Rng rng = derive_stream(cfg.seed, "train/" + train_mode_name(mode) + "/" + std::to_string(setting));
      const TrainResult res = train(init, ds.subset(ds.train), ds.subset(ds.test), cfg.train_config(mode, spec.eps), rng);
      const auto path = in_out_dir(cfg, out_path, ("model_" + train_mode_name(mode) + ".prdf").c_str());
      save_model_file(res.model, path.string());
      const auto hpath = in_out_dir(cfg, history_path, ("history_" + train_mode_name(mode) + ".csv").c_str());
      std::ofstream h(hpath);
      write_history_csv(h, res.history);
      std::cout << "selected epoch " << res.selected_epoch << ", model written to " << path.string() << "\n";
    } else if (rob->parsed()) {
      const Classifier model = load_model_file(model_path);
      const Dataset ds = data_or_generate(cfg, data_path);
      const PerturbSpec spec = spec_at(cfg, setting);
      const RobustifyConfig rcfg = cfg.robustify_config(spec);
      std::vector<std::size_t> ids = first_test_ids(ds, cfg.eval_points);
      std::vector<Example> originals;
      std::vector<Vec> points;
      for (std::size_t id : ids) {
        Rng defend = derive_stream(cfg.seed, "defend", id);
        originals.push_back(ds.examples[id]);
        points.push_back(robustify(model, ds.examples[id].x, spec, rcfg, defend));
      }
      const auto path = in_out_dir(cfg, out_path, "robustified.prds");
      std::ofstream out(path);
      save_paired(out, ids, originals, points);
      std::cout << "robustified " << ids.size() << " points into " << path.string() << "\n";
    } else if (att->parsed()) {
      const Classifier model = load_model_file(model_path);
      const PerturbSpec spec = spec_at(cfg, setting);
      PairedSet set;
      if (!paired_path.empty()) {
        set = load_paired_file(paired_path);
      } else {
        const Dataset ds = data_or_generate(cfg, data_path);
        for (std::size_t id : first_test_ids(ds, cfg.eval_points)) {
          set.ids.push_back(id);
          set.originals.push_back(ds.examples[id]);
          set.robustified.push_back(ds.examples[id].x);
        }
      }
      const PgdConfig single = cfg.attack_config(spec, 1), multi = cfg.attack_config(spec, cfg.restarts);
      std::size_t clean = 0, grey = 0, grey_r = 0;
      for (std::size_t i = 0; i < set.ids.size(); ++i) {
        const Vec& x = set.robustified[i];
        const Label y = set.originals[i].y;
        Rng g = derive_stream(cfg.seed, "grey", set.ids[i]);
        Rng gr = derive_stream(cfg.seed, "grey-restarts", set.ids[i]);
        clean += predict(model, x) == y;
        grey += predict(model, pgd(model, x, y, spec, single, g)) == y;
        grey_r += predict(model, pgd_restarts(model, x, y, spec, multi, gr)) == y;
      }
      const double n = std::max<std::size_t>(set.ids.size(), 1);
      std::printf("n %zu clean %.4f grey_pgd %.4f grey_pgd_restarts %.4f\n", set.ids.size(), clean / n, grey / n,
                  grey_r / n);
    } else if (wb->parsed()) {
      const Classifier model = load_model_file(model_path);
      const PerturbSpec spec = spec_at(cfg, setting);
      const PairedSet set = load_paired_file(paired_path);
      WhiteboxConfig wcfg;
      wcfg.recon = cfg.robustify_config(spec);
      wcfg.eps_prime_fractions = cfg.eps_prime;
      std::vector<WhiteboxVerdict> verdicts;
      std::size_t robust = 0;
      for (std::size_t i = 0; i < set.ids.size(); ++i) {
        Rng adv = derive_stream(cfg.seed, "whitebox", set.ids[i]);
        const auto res = whitebox_attack(model, set.robustified[i], set.originals[i].y, spec, wcfg, adv);
        verdicts.push_back(eval_whitebox(res, set.originals[i].x, set.originals[i].y, model, spec.eps, spec.p));
        robust += verdicts.back().robust;
      }
      const auto path = in_out_dir(cfg, out_path, "distances.csv");
      std::ofstream out(path);
      write_distances_csv(out, verdicts, set.ids);
      const DistanceStats ds = distance_stats(verdicts, spec.eps);
      std::printf("n %zu white_pgd %.4f recon_near_boundary %.4f attack_outside %.4f\n", set.ids.size(),
                  set.ids.empty() ? 0.0 : double(robust) / double(set.ids.size()), ds.frac_recon_near_boundary,
                  ds.frac_attack_outside);
    } else if (sc->parsed()) {
      const Classifier model = load_model_file(model_path);
      const SmoothConfig scfg = smooth_config(cfg);
      PairedSet set;
      bool robustified = false;
      if (!paired_path.empty()) {
        set = load_paired_file(paired_path);
        robustified = true;
      } else {
        const Dataset ds = data_or_generate(cfg, data_path);
        for (std::size_t id : first_test_ids(ds, cfg.smooth_points)) {
          set.ids.push_back(id);
          set.originals.push_back(ds.examples[id]);
          set.robustified.push_back(ds.examples[id].x);
        }
      }
      const CertSummary s =
          cert_eval(model, set.originals, set.robustified, set.ids, cfg.smooth_eps, robustified, scfg, cfg.seed);
      const auto path = in_out_dir(cfg, out_path, "cert.csv");
      std::ofstream out(path);
      write_cert_csv(out, s.records);
      std::printf("n %zu certified@%g %.4f clean %.4f abstain %.4f\n", set.ids.size(), cfg.smooth_eps,
                  s.certified_acc, s.clean_acc, s.abstain_rate);
    } else if (rep->parsed()) {
      const EvalReport r = run_pipeline(cfg, &std::cerr);
      emit_report(r, cfg.out_dir, cfg.write_models);
      write_report_csv(std::cout, r);
    } else if (st->parsed()) {
      const EvalReport r = run_pipeline(cfg, nullptr);
      emit_report(r, cfg.out_dir, cfg.write_models);
      const SelftestResult res = check_report(r, cfg);
      for (const auto& f : res.failures) std::cout << "FAIL " << f << "\n";
      std::cout << (res.ok ? "selftest PASS" : "selftest FAIL") << "\n";
      return res.ok ? 0 : kExitSelftest;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const NumericalError& e) {
    std::cerr << "numerical abort: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
