#include "prdf/pipeline.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <ostream>
#include <sstream>

namespace prdf {

namespace {

std::string tag(const char* what, TrainMode mode, std::size_t setting) {
  return std::string(what) + "/" + train_mode_name(mode) + "/" + std::to_string(setting);
}

double frac(std::size_t k, std::size_t n) { return n ? static_cast<double>(k) / static_cast<double>(n) : 0.0; }

Classifier obtain_model(const ExperimentConfig& cfg, const Dataset& ds, TrainMode mode, std::size_t setting,
                        std::vector<EpochRecord>& history, std::ostream* log) {
  const std::string& path = mode == TrainMode::adversarial ? cfg.load_adversarial : cfg.load_preempt;
  if (!path.empty()) {
    Classifier m = load_model_file(path);
    if (m.input_dim() != ds.dim || m.num_classes() != ds.num_classes)
      throw ConfigError("model file " + path + " does not match the dataset shape");
    if (log) *log << "loaded " << train_mode_name(mode) << " model from " << path << "\n";
    return m;
  }
  Rng init_rng = derive_stream(cfg.seed, "init", setting);
  const Classifier init =
      Classifier::random_mlp(ds.dim, cfg.hidden, ds.num_classes, cfg.activation, init_rng, cfg.init_scale);
  const auto train_set = ds.subset(ds.train);
  const auto holdout = ds.subset(ds.test);
  Rng rng = derive_stream(cfg.seed, tag("train", mode, setting));
  TrainResult res = train(init, train_set, holdout, cfg.train_config(mode, cfg.eps[setting]), rng);
  if (log) {
    *log << "trained " << train_mode_name(mode) << " (eps " << cfg.eps[setting] << "), selected epoch "
         << res.selected_epoch << "\n";
  }
  history = std::move(res.history);
  return std::move(res.model);
}

bool correct(const Classifier& model, std::span<const double> x, Label y) { return predict(model, x) == y; }

void evaluate_model(const ExperimentConfig& cfg, const Dataset& ds, const std::vector<std::size_t>& eval_ids,
                    std::size_t setting, TrainMode mode, const Classifier& model, EvalReport& rep,
                    std::ostream* log) {
  const PerturbSpec spec = cfg.spec_for(cfg.eps[setting]);
  const RobustifyConfig rcfg = cfg.robustify_config(spec);
  const PgdConfig single = cfg.attack_config(spec, 1);
  const PgdConfig multi = cfg.attack_config(spec, cfg.restarts);
  const PgdConfig lemma_cfg = cfg.attack_config(spec, cfg.lemma1_restarts);
  WhiteboxConfig wcfg;
  wcfg.recon = rcfg;
  wcfg.eps_prime_fractions = cfg.eps_prime;
  wcfg.restarts = 1;

  const bool extra_exact = cfg.trace_exact && cfg.grad_mode != GradMode::exact && ds.dim <= kMaxExactDim;

  struct Counts {
    std::size_t clean = 0, grey = 0, grey_r = 0, white = 0;
  } none, ours;

  RobustifiedSet rset;
  rset.setting = setting;
  rset.model = mode;

  for (std::size_t k = 0; k < eval_ids.size(); ++k) {
    const std::size_t id = eval_ids[k];
    const Example& e = ds.examples[id];

    // No preemption: x_r = x_o.
    {
      none.clean += correct(model, e.x, e.y);
      Rng g = derive_stream(cfg.seed, tag("grey-none", mode, setting), id);
      const bool grey_ok = correct(model, pgd(model, e.x, e.y, spec, single, g), e.y);
      none.grey += grey_ok;
      Rng gr = derive_stream(cfg.seed, tag("grey-restarts-none", mode, setting), id);
      none.grey_r += correct(model, pgd_restarts(model, e.x, e.y, spec, multi, gr), e.y);
      // Without a defender the white-box adversary is the grey-box one.
      none.white += grey_ok;
    }

    // Preemptive robustification with the defender's secret stream.
    Rng defend = derive_stream(cfg.seed, tag("defend", mode, setting), id);
    RobustifyResult rob = robustify_traced(model, e.x, spec, rcfg, defend);
    if (rob.aborted) {
      throw NumericalError("robustification aborted (" + train_mode_name(mode) + ", example " +
                           std::to_string(id) + "): " + rob.diagnostic);
    }
    const Vec& x_r = rob.x;
    ours.clean += correct(model, x_r, e.y);
    Rng g = derive_stream(cfg.seed, tag("grey-ours", mode, setting), id);
    ours.grey += correct(model, pgd(model, x_r, e.y, spec, single, g), e.y);
    Rng gr = derive_stream(cfg.seed, tag("grey-restarts-ours", mode, setting), id);
    ours.grey_r += correct(model, pgd_restarts(model, x_r, e.y, spec, multi, gr), e.y);

    if (cfg.whitebox) {
      Rng adv = derive_stream(cfg.seed, tag("whitebox", mode, setting), id);
      const WhiteboxResult wb = whitebox_attack(model, x_r, e.y, spec, wcfg, adv);
      DistanceRecord d{setting, mode, id, eval_whitebox(wb, e.x, e.y, model, spec.eps, spec.p)};
      ours.white += d.verdict.robust;
      rep.distances.push_back(std::move(d));
    }

    Rng lr = derive_stream(cfg.seed, tag("lemma1", mode, setting), id);
    rep.lemma1.push_back({setting, mode, id, check_lemma1(model, e.x, x_r, spec, lemma_cfg, lr)});

    if (k < cfg.trace_points) {
      rep.gradnorms.push_back({setting, mode, id, rcfg.grad_mode, false, rob.grad_norms});
      if (extra_exact) {
        RobustifyConfig ex = rcfg;
        ex.grad_mode = GradMode::exact;
        Rng d2 = derive_stream(cfg.seed, tag("defend", mode, setting), id);
        RobustifyResult r2 = robustify_traced(model, e.x, spec, ex, d2);
        rep.gradnorms.push_back({setting, mode, id, GradMode::exact, r2.aborted, std::move(r2.grad_norms)});
      }
    }

    rset.ids.push_back(id);
    rset.originals.push_back(e);
    rset.points.push_back(x_r);
  }

  const std::size_t n = eval_ids.size();
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (int pre = 0; pre < 2; ++pre) {
    const Counts& c = pre ? ours : none;
    EvalRow row;
    row.setting = setting;
    row.p = spec.p;
    row.eps = spec.eps;
    row.delta = spec.delta;
    row.model = mode;
    row.preempt = pre == 1;
    row.n = n;
    row.clean = frac(c.clean, n);
    row.grey_pgd = frac(c.grey, n);
    row.grey_pgd_restarts = frac(c.grey_r, n);
    row.white_pgd = cfg.whitebox ? frac(c.white, n) : nan;
    rep.rows.push_back(row);
    if (log) {
      *log << train_mode_name(mode) << (pre ? " ours" : " none") << " eps " << spec.eps << ": clean " << row.clean
           << " grey " << row.grey_pgd << " grey_restarts " << row.grey_pgd_restarts << " white " << row.white_pgd
           << "\n";
    }
  }
  rep.robustified.push_back(std::move(rset));
}

void run_smoothing(const ExperimentConfig& cfg, const Dataset& ds, EvalReport& rep, std::ostream* log) {
  const PerturbSpec spec = PerturbSpec::matched(Norm::l2, cfg.smooth_eps);
  Rng init_rng = derive_stream(cfg.seed, "init/smooth");
  const Classifier init =
      Classifier::random_mlp(ds.dim, cfg.hidden, ds.num_classes, cfg.activation, init_rng, cfg.init_scale);
  TrainConfig tcfg = cfg.train_config(TrainMode::plain, cfg.smooth_eps);
  tcfg.spec = spec;
  tcfg.noise_sigma = cfg.sigma;
  Rng train_rng = derive_stream(cfg.seed, "train/smooth");
  rep.smooth_model = train(init, ds.subset(ds.train), {}, tcfg, train_rng).model;
  const Classifier& model = rep.smooth_model;

  RobustifyConfig rcfg = RobustifyConfig::defaults(spec);
  rcfg.max_iter = cfg.smooth_max_iter;
  rcfg.inner.steps = cfg.steps;
  if (cfg.smooth_lr > 0.0) rcfg.lr = cfg.smooth_lr;
  SmoothConfig scfg;
  scfg.sigma = cfg.sigma;
  scfg.n_pred = cfg.n_pred;
  scfg.n_cert = cfg.n_cert;
  scfg.samples = cfg.smooth_samples;
  scfg.conf_alpha = cfg.conf_alpha;
  const PgdConfig attack = cfg.attack_config(spec, 1);

  const std::size_t n = std::min(cfg.smooth_points, ds.test.size());
  RobustifiedSet& set = rep.smooth_points;
  set.ids.assign(ds.test.begin(), ds.test.begin() + static_cast<std::ptrdiff_t>(n));
  for (std::size_t id : set.ids) {
    const Example& e = ds.examples[id];
    Rng defend = derive_stream(cfg.seed, "smooth-defend", id);
    RobustifyResult r = robustify_smoothed_traced(model, e.x, spec, rcfg, scfg, defend);
    if (r.aborted) throw NumericalError("smoothed robustification aborted (example " + std::to_string(id) + ")");
    set.originals.push_back(e);
    set.points.push_back(std::move(r.x));
  }

  for (int robust = 0; robust < 2; ++robust) {
    const std::vector<Vec> pts = [&] {
      if (robust) return set.points;
      std::vector<Vec> raw;
      for (const auto& e : set.originals) raw.push_back(e.x);
      return raw;
    }();
    std::size_t clean = 0, grey = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t id = set.ids[i];
      const Label y = set.originals[i].y;
      Rng pr = derive_stream(cfg.seed, "smooth-predict", id, robust);
      clean += smoothed_predict(model, pts[i], scfg, pr) == y;
      Rng ar = derive_stream(cfg.seed, "smooth-grey", id, robust);
      const Vec adv = randomized_pgd(model, pts[i], y, spec, attack, scfg.sigma, scfg.samples, ar);
      grey += smoothed_predict(model, adv, scfg, ar) == y;
    }
    const CertSummary cs = cert_eval(model, set.originals, pts, set.ids, spec.eps, robust == 1, scfg, cfg.seed);
    rep.certificates.insert(rep.certificates.end(), cs.records.begin(), cs.records.end());
    SmoothRow row{robust == 1, n, frac(clean, n), frac(grey, n), cs.certified_acc, cs.abstain_rate};
    rep.smooth_rows.push_back(row);
    if (log) {
      *log << "smoothed " << (robust ? "ours" : "none") << ": clean " << row.smoothed_clean << " grey "
           << row.grey_randomized_pgd << " certified@" << spec.eps << " " << row.certified << "\n";
    }
  }
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::ofstream open_out(const std::filesystem::path& p) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  return out;
}

}  // namespace

double EvalReport::lemma1_satisfied_fraction(std::size_t setting, TrainMode model) const {
  std::size_t k = 0, n = 0;
  for (const auto& r : lemma1) {
    if (r.setting != setting || r.model != model) continue;
    ++n;
    k += r.report.satisfied;
  }
  return frac(k, n);
}

EvalReport run_pipeline(const ExperimentConfig& cfg, std::ostream* log) {
  cfg.validate();
  EvalReport rep;
  rep.seed = cfg.seed;
  {
    std::ostringstream snap;
    snap << "# unit_cube_clamp = true\n";
    write_config(snap, cfg);
    rep.config_snapshot = snap.str();
  }

  const Dataset ds = gen_dataset(cfg.dataset, cfg.n_per_class, cfg.dim, cfg.seed, cfg.spread);
  if (cfg.grad_mode == GradMode::exact && ds.dim > kMaxExactDim)
    throw ConfigError("robustify.grad_mode: exact mode is limited to dim <= 16");
  const std::size_t n_eval = std::min(cfg.eval_points, ds.test.size());
  const std::vector<std::size_t> eval_ids(ds.test.begin(), ds.test.begin() + static_cast<std::ptrdiff_t>(n_eval));
  if (log) {
    *log << "dataset " << dataset_kind_name(ds.kind) << ": " << ds.train.size() << " train, " << ds.test.size()
         << " test, evaluating " << n_eval << "\n";
  }

  for (std::size_t s = 0; s < cfg.eps.size(); ++s) {
    for (TrainMode mode : {TrainMode::adversarial, TrainMode::preempt_robust}) {
      TrainedModel tm{s, mode, {}, {}};
      tm.model = obtain_model(cfg, ds, mode, s, tm.history, log);
      evaluate_model(cfg, ds, eval_ids, s, mode, tm.model, rep, log);
      rep.models.push_back(std::move(tm));
    }
  }
  if (cfg.smooth) run_smoothing(cfg, ds, rep, log);
  return rep;
}

void write_report_csv(std::ostream& out, const EvalReport& r) {
  out << "setting,norm,eps,delta,model,preemption,n,clean,grey_pgd,grey_pgd_restarts,white_pgd\n";
  for (const auto& row : r.rows) {
    out << row.setting << ',' << norm_name(row.p) << ',' << fmt(row.eps) << ',' << fmt(row.delta) << ','
        << train_mode_name(row.model) << ',' << (row.preempt ? "ours" : "none") << ',' << row.n << ','
        << fmt(row.clean) << ',' << fmt(row.grey_pgd) << ',' << fmt(row.grey_pgd_restarts) << ','
        << fmt(row.white_pgd) << '\n';
  }
}

void write_distances_records_csv(std::ostream& out, const EvalReport& r) {
  out << "setting,model,example_id,recon_dist,eps_prime,attack_dist,misclassified,valid\n";
  for (const auto& d : r.distances) {
    for (const auto& c : d.verdict.candidates) {
      out << d.setting << ',' << train_mode_name(d.model) << ',' << d.example_id << ',' << fmt(d.verdict.recon_dist)
          << ',' << fmt(c.eps_prime) << ',' << fmt(c.attack_dist) << ',' << int(c.misclassified) << ','
          << int(c.valid) << '\n';
    }
  }
}

void write_lemma1_csv(std::ostream& out, const EvalReport& r) {
  out << "setting,model,example_id,h_tilde,satisfied,implied_bound,prediction_preserved\n";
  for (const auto& l : r.lemma1) {
    out << l.setting << ',' << train_mode_name(l.model) << ',' << l.example_id << ',' << fmt(l.report.h_tilde)
        << ',' << int(l.report.satisfied) << ',' << (l.report.implied_bound ? fmt(*l.report.implied_bound) : "")
        << ',' << int(l.report.prediction_preserved) << '\n';
  }
}

void write_gradnorm_csv(std::ostream& out, const EvalReport& r) {
  out << "setting,model,example_id,grad_mode,aborted,iter,grad_norm\n";
  for (const auto& g : r.gradnorms) {
    for (std::size_t t = 0; t < g.norms.size(); ++t) {
      out << g.setting << ',' << train_mode_name(g.model) << ',' << g.example_id << ',' << grad_mode_name(g.mode)
          << ',' << int(g.aborted) << ',' << t << ',' << fmt(g.norms[t]) << '\n';
    }
  }
}

void write_smooth_csv(std::ostream& out, const EvalReport& r) {
  out << "preemption,n,smoothed_clean,grey_randomized_pgd,certified,abstain_rate\n";
  for (const auto& s : r.smooth_rows) {
    out << (s.robustified ? "ours" : "none") << ',' << s.n << ',' << fmt(s.smoothed_clean) << ','
        << fmt(s.grey_randomized_pgd) << ',' << fmt(s.certified) << ',' << fmt(s.abstain_rate) << '\n';
  }
}

void emit_report(const EvalReport& report, const std::string& dir, bool write_models) {
  namespace fs = std::filesystem;
  const fs::path root(dir);
  fs::create_directories(root);
  {
    auto out = open_out(root / "report.csv");
    write_report_csv(out, report);
  }
  {
    auto out = open_out(root / "distances.csv");
    write_distances_records_csv(out, report);
  }
  {
    auto out = open_out(root / "lemma1.csv");
    write_lemma1_csv(out, report);
  }
  {
    auto out = open_out(root / "gradnorm.csv");
    write_gradnorm_csv(out, report);
  }
  {
    auto out = open_out(root / "config.snapshot");
    out << report.config_snapshot;
  }
  for (const auto& m : report.models) {
    const std::string stem = train_mode_name(m.mode) + "_" + std::to_string(m.setting);
    if (!m.history.empty()) {
      auto out = open_out(root / ("history_" + stem + ".csv"));
      write_history_csv(out, m.history);
    }
    if (write_models) save_model_file(m.model, (root / ("model_" + stem + ".prdf")).string());
  }
  for (const auto& rs : report.robustified) {
    auto out = open_out(root / ("robustified_" + train_mode_name(rs.model) + "_" + std::to_string(rs.setting) +
                                ".prds"));
    save_paired(out, rs.ids, rs.originals, rs.points);
  }
  if (!report.smooth_rows.empty()) {
    {
      auto out = open_out(root / "smooth_report.csv");
      write_smooth_csv(out, report);
    }
    {
      auto out = open_out(root / "cert.csv");
      write_cert_csv(out, report.certificates);
    }
    auto out = open_out(root / "robustified_smooth.prds");
    save_paired(out, report.smooth_points.ids, report.smooth_points.originals, report.smooth_points.points);
    if (write_models) save_model_file(report.smooth_model, (root / "model_smooth.prdf").string());
  }
}

ExperimentConfig selftest_config() {
  ExperimentConfig c;
  c.seed = 7;
  c.hidden = {8};
  c.dim = 4;
  c.n_per_class = 48;
  c.epochs = 3;
  c.batch_size = 16;
  c.eps = {0.15};
  c.max_iter = 15;
  c.steps = 5;
  c.attack_steps = 5;
  c.restarts = 3;
  c.lemma1_restarts = 3;
  c.eval_points = 12;
  c.trace_exact = true;
  c.trace_points = 2;
  c.smooth = true;
  c.n_pred = 20;
  c.n_cert = 400;
  c.smooth_samples = 3;
  c.smooth_points = 6;
  c.smooth_max_iter = 5;
  c.out_dir = "selftest_out";
  c.write_models = false;
  return c;
}

SelftestResult check_report(const EvalReport& r, const ExperimentConfig& cfg) {
  SelftestResult res;
  auto fail = [&](std::string msg) {
    res.ok = false;
    res.failures.push_back(std::move(msg));
  };
  if (r.rows.size() != 4 * cfg.eps.size()) fail("report has " + std::to_string(r.rows.size()) + " rows");
  for (const auto& row : r.rows) {
    for (double a : {row.clean, row.grey_pgd, row.grey_pgd_restarts}) {
      if (!(a >= 0.0 && a <= 1.0)) fail("accuracy outside [0, 1]");
    }
    if (cfg.whitebox && !(row.white_pgd >= 0.0 && row.white_pgd <= 1.0)) fail("white-box accuracy outside [0, 1]");
    if (!row.preempt && cfg.whitebox && row.white_pgd != row.grey_pgd)
      fail("no-preemption row: white-box accuracy differs from grey-box");
  }
  for (const auto& l : r.lemma1) {
    if (!l.report.sound()) fail("worst-case-loss check violated at example " + std::to_string(l.example_id));
  }
  for (const auto& rs : r.robustified) {
    const PerturbSpec spec = cfg.spec_for(cfg.eps[rs.setting]);
    for (std::size_t i = 0; i < rs.points.size(); ++i) {
      if (!in_unit_cube(rs.points[i])) fail("robustified point leaves the unit cube");
      if (distance(rs.points[i], rs.originals[i].x, spec.p) > spec.delta * (1.0 + 1e-9) + 1e-12)
        fail("robustified point leaves the defender ball");
    }
  }
  for (const auto& g : r.gradnorms) {
    if (g.mode == GradMode::first_order && !all_finite(g.norms)) fail("non-finite first-order gradient norm");
  }
  if (cfg.smooth && r.smooth_rows.size() != 2) fail("smoothing rows missing");
  return res;
}

}  // namespace prdf
