#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "prdf/config.hpp"
#include "prdf/smooth.hpp"
#include "prdf/train.hpp"
#include "prdf/whitebox.hpp"

namespace prdf {

/// One row of the evaluation table.
struct EvalRow {
  std::size_t setting = 0;  // index into cfg.eps
  Norm p = Norm::linf;
  double eps = 0.0;
  double delta = 0.0;
  TrainMode model = TrainMode::adversarial;
  bool preempt = false;
  std::size_t n = 0;
  double clean = 0.0;
  double grey_pgd = 0.0;
  double grey_pgd_restarts = 0.0;
  double white_pgd = 0.0;  // NaN when the white-box attack is disabled
};

struct DistanceRecord {
  std::size_t setting = 0;
  TrainMode model = TrainMode::adversarial;
  std::size_t example_id = 0;
  WhiteboxVerdict verdict;
};

struct Lemma1Record {
  std::size_t setting = 0;
  TrainMode model = TrainMode::adversarial;
  std::size_t example_id = 0;
  Lemma1Report report;
};

struct GradNormRecord {
  std::size_t setting = 0;
  TrainMode model = TrainMode::adversarial;
  std::size_t example_id = 0;
  GradMode mode = GradMode::first_order;
  bool aborted = false;
  std::vector<double> norms;
};

struct SmoothRow {
  bool robustified = false;
  std::size_t n = 0;
  double smoothed_clean = 0.0;
  double grey_randomized_pgd = 0.0;
  double certified = 0.0;  // at radius eps
  double abstain_rate = 0.0;
};

/// Evaluated originals and their robustified versions for one (setting, model).
struct RobustifiedSet {
  std::size_t setting = 0;
  TrainMode model = TrainMode::adversarial;
  std::vector<std::size_t> ids;
  std::vector<Example> originals;
  std::vector<Vec> points;
};

struct TrainedModel {
  std::size_t setting = 0;
  TrainMode mode = TrainMode::adversarial;
  Classifier model;
  std::vector<EpochRecord> history;  // empty when loaded from a file
};

struct EvalReport {
  std::uint64_t seed = 0;
  std::string config_snapshot;  // write_config output; parses back to the same run
  bool unit_cube_clamp = true;  // every x_r and attack iterate is clamped to [0, 1]
  std::vector<EvalRow> rows;
  std::vector<DistanceRecord> distances;
  std::vector<Lemma1Record> lemma1;
  std::vector<GradNormRecord> gradnorms;
  std::vector<TrainedModel> models;
  std::vector<RobustifiedSet> robustified;
  std::vector<SmoothRow> smooth_rows;
  std::vector<CertRecord> certificates;
  Classifier smooth_model;  // meaningful when smooth_rows is non-empty
  RobustifiedSet smooth_points;

  /// Fraction of worst-case-loss records for (setting, model) below log 2.
  double lemma1_satisfied_fraction(std::size_t setting, TrainMode model) const;
};

/// The experiment: per budget, train (or load) an adversarial and a
/// preemptively robust model and evaluate both with and without
/// robustification. Progress goes to `log` when given.
EvalReport run_pipeline(const ExperimentConfig& cfg, std::ostream* log = nullptr);

/// report.csv, distances.csv, lemma1.csv, gradnorm.csv, config.snapshot,
/// training histories and models, and smooth_report.csv / cert.csv when the
/// smoothing experiment ran. Creates `dir` if needed.
void emit_report(const EvalReport& report, const std::string& dir, bool write_models = true);

void write_report_csv(std::ostream& out, const EvalReport& r);
void write_distances_records_csv(std::ostream& out, const EvalReport& r);
void write_lemma1_csv(std::ostream& out, const EvalReport& r);
void write_gradnorm_csv(std::ostream& out, const EvalReport& r);
void write_smooth_csv(std::ostream& out, const EvalReport& r);

/// Small end-to-end configuration used by `selftest`.
ExperimentConfig selftest_config();

struct SelftestResult {
  bool ok = true;
  std::vector<std::string> failures;
};

/// Structural checks on a finished report: row count, the None-row identity
/// between grey- and white-box accuracy, worst-case-loss soundness, feasibility.
SelftestResult check_report(const EvalReport& r, const ExperimentConfig& cfg);

}  // namespace prdf
