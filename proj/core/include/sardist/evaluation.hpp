#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "sardist/raster_store.hpp"

namespace sardist {

/// Flat scores and labels for the two-image protocol: the first H·W entries
/// (row-major) come from the held-out pre-event frame and are all negative,
/// the next H·W come from the post-event frame and carry the truth mask.
struct LabeledMetricSet {
  std::vector<double> scores;
  std::vector<std::uint8_t> labels;

  std::size_t positives() const;
  /// Throws ValidationError unless sizes agree and both classes are present.
  void validate() const;
};

LabeledMetricSet build_labeled_set(const DisturbanceMap& pre_metric, const DisturbanceMap& post_metric,
                                   const Mask& truth);

struct PrPoint {
  double tau = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

struct EvalReport {
  /// Ascending tau; a pixel is predicted positive when score > tau.
  std::vector<PrPoint> pr_points;
  double pr_auc = 0.0;
  double best_f1 = 0.0;
  double best_tau = 0.0;
  /// Thresholds dropped because nothing scored above them (precision undefined).
  std::size_t skipped_points = 0;
};

/// Precision-recall analysis with strict thresholding.
///
/// Candidate thresholds sit between consecutive unique scores (midpoints) plus
/// one just below the minimum. The curve keeps at most max_points of them,
/// evenly spaced in rank, and always the best-F1 threshold. PR-AUC is the
/// trapezoidal area over recall of the kept points, starting from recall 0 at
/// the precision of the highest kept threshold.
EvalReport pr_curve(const LabeledMetricSet& set, std::size_t max_points = 512);

struct F1Row {
  double tau = 0.0;
  /// tau as a fraction of the largest score.
  double tau_normalized = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  /// 0 when nothing is predicted positive.
  double f1 = 0.0;
};

std::vector<F1Row> f1_vs_threshold(const LabeledMetricSet& set, std::span<const double> thresholds);

/// `count` evenly spaced thresholds from 0 to the largest score.
std::vector<double> uniform_thresholds(const LabeledMetricSet& set, std::size_t count = 101);

/// Writes pr_curve.csv, f1_vs_tau.csv, pr_curve.svg, f1_vs_tau.svg and summary.json.
void emit_report(const EvalReport& report, const std::vector<F1Row>& f1_table, const std::filesystem::path& out_dir);

}  // namespace sardist
