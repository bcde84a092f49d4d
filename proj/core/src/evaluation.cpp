#include "sardist/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <string>

#include "json.hpp"

namespace sardist {

std::size_t LabeledMetricSet::positives() const {
  return static_cast<std::size_t>(std::count_if(labels.begin(), labels.end(), [](auto b) { return b != 0; }));
}

void LabeledMetricSet::validate() const {
  if (scores.size() != labels.size()) throw ValidationError("labeled set: scores/labels length mismatch");
  const std::size_t pos = positives();
  if (pos == 0) throw ValidationError("labeled set: no positive samples");
  if (pos == labels.size()) throw ValidationError("labeled set: no negative samples");
  for (double s : scores)
    if (!std::isfinite(s)) throw ValidationError("labeled set: non-finite score");
}

LabeledMetricSet build_labeled_set(const DisturbanceMap& pre, const DisturbanceMap& post, const Mask& truth) {
  if (pre.values.dims() != post.values.dims() || truth.dims() != post.values.dims()) {
    throw ShapeError("build_labeled_set: pre " + shape_string(pre.values.dims()) + ", post " +
                     shape_string(post.values.dims()) + ", truth " + shape_string(truth.dims()));
  }
  LabeledMetricSet set;
  const std::size_t n = truth.size();
  set.scores.reserve(2 * n);
  set.labels.reserve(2 * n);
  for (std::size_t i = 0; i < n; ++i) {
    set.scores.push_back(pre.values[i]);
    set.labels.push_back(0);
  }
  for (std::size_t i = 0; i < n; ++i) {
    set.scores.push_back(post.values[i]);
    set.labels.push_back(truth[i] ? 1 : 0);
  }
  set.validate();
  return set;
}

namespace {

struct Counted {
  double tau;
  std::size_t tp;
  std::size_t fp;
};

PrPoint to_point(const Counted& c, std::size_t positives) {
  PrPoint p;
  p.tau = c.tau;
  p.precision = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
  p.recall = static_cast<double>(c.tp) / static_cast<double>(positives);
  p.f1 = c.tp == 0 ? 0.0 : 2.0 * p.precision * p.recall / (p.precision + p.recall);
  return p;
}

double threshold_between(double lower, double upper) {
  const double mid = lower + (upper - lower) / 2.0;
  return (mid > lower && mid < upper) ? mid : lower;
}

}  // namespace

EvalReport pr_curve(const LabeledMetricSet& set, std::size_t max_points) {
  set.validate();
  if (max_points < 2) throw ValidationError("pr_curve: max_points must be ≥ 2");
  const std::size_t n = set.scores.size(), positives = set.positives();

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return set.scores[a] > set.scores[b]; });

  // Descending sweep: after absorbing every sample equal to a unique score u,
  // the counts describe the threshold just below u.
  std::vector<Counted> descending;
  std::size_t tp = 0, fp = 0;
  for (std::size_t k = 0; k < n;) {
    const double u = set.scores[order[k]];
    while (k < n && set.scores[order[k]] == u) {
      (set.labels[order[k]] ? tp : fp) += 1;
      ++k;
    }
    const double tau = k < n ? threshold_between(set.scores[order[k]], u)
                             : std::nextafter(u, -std::numeric_limits<double>::infinity());
    descending.push_back({tau, tp, fp});
  }

  EvalReport report;
  report.skipped_points = 1;  // the threshold at the maximum score predicts nothing
  std::vector<PrPoint> all;
  all.reserve(descending.size());
  for (auto it = descending.rbegin(); it != descending.rend(); ++it) all.push_back(to_point(*it, positives));

  std::size_t best = 0;
  for (std::size_t i = 0; i < all.size(); ++i)
    if (all[i].f1 > all[best].f1) best = i;
  report.best_f1 = all[best].f1;
  report.best_tau = all[best].tau;

  std::vector<std::size_t> keep;
  if (all.size() <= max_points) {
    keep.resize(all.size());
    std::iota(keep.begin(), keep.end(), std::size_t{0});
  } else {
    const std::size_t slots = max_points - 1;
    for (std::size_t i = 0; i < slots; ++i) keep.push_back(i * (all.size() - 1) / (slots - 1));
    keep.push_back(best);
    std::sort(keep.begin(), keep.end());
    keep.erase(std::unique(keep.begin(), keep.end()), keep.end());
  }
  for (std::size_t i : keep) report.pr_points.push_back(all[i]);

  // Ascending tau means descending recall; integrate from the top threshold.
  const auto& pts = report.pr_points;
  double prev_recall = 0.0, prev_precision = pts.back().precision, area = 0.0;
  for (auto it = pts.rbegin(); it != pts.rend(); ++it) {
    area += (it->recall - prev_recall) * (it->precision + prev_precision) / 2.0;
    prev_recall = it->recall;
    prev_precision = it->precision;
  }
  report.pr_auc = area;
  return report;
}

std::vector<F1Row> f1_vs_threshold(const LabeledMetricSet& set, std::span<const double> thresholds) {
  set.validate();
  const std::size_t positives = set.positives();
  std::vector<double> pos_scores, neg_scores;
  for (std::size_t i = 0; i < set.scores.size(); ++i) (set.labels[i] ? pos_scores : neg_scores).push_back(set.scores[i]);
  std::sort(pos_scores.begin(), pos_scores.end());
  std::sort(neg_scores.begin(), neg_scores.end());
  const double max_score = std::max(pos_scores.back(), neg_scores.back());

  std::vector<F1Row> rows;
  for (double tau : thresholds) {
    const auto above = [tau](const std::vector<double>& v) {
      return static_cast<std::size_t>(v.end() - std::upper_bound(v.begin(), v.end(), tau));
    };
    const std::size_t tp = above(pos_scores), fp = above(neg_scores);
    F1Row row;
    row.tau = tau;
    row.tau_normalized = max_score > 0.0 ? tau / max_score : 0.0;
    row.recall = static_cast<double>(tp) / static_cast<double>(positives);
    row.precision = tp + fp == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
    row.f1 = tp == 0 ? 0.0 : 2.0 * row.precision * row.recall / (row.precision + row.recall);
    rows.push_back(row);
  }
  return rows;
}

std::vector<double> uniform_thresholds(const LabeledMetricSet& set, std::size_t count) {
  set.validate();
  const double max_score = *std::max_element(set.scores.begin(), set.scores.end());
  std::vector<double> out;
  for (std::size_t i = 0; i < count; ++i) {
    if (count == 1) out.push_back(0.0);
    else if (i + 1 == count) out.push_back(max_score);
    else out.push_back(max_score * static_cast<double>(i) / static_cast<double>(count - 1));
  }
  return out;
}

namespace {

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string coord(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw StorageError("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw StorageError("write failed for '" + path.string() + "'");
}

// Static line plot of (x, y) in [0, x_max] × [0, 1], optional star marker.
std::string line_plot(const std::string& title, const std::string& x_label, const std::string& y_label,
                      const std::vector<std::pair<double, double>>& xy, double x_max,
                      const std::pair<double, double>* star) {
  constexpr double width = 480, height = 360, left = 60, right = 20, top = 40, bottom = 50;
  const double pw = width - left - right, ph = height - top - bottom;
  if (!(x_max > 0.0)) x_max = 1.0;
  auto px = [&](double x) { return left + pw * std::clamp(x / x_max, 0.0, 1.0); };
  auto py = [&](double y) { return top + ph * (1.0 - std::clamp(y, 0.0, 1.0)); };

  std::ostringstream svg;
  svg << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" viewBox=\"0 0 " << width << ' ' << height << "\">\n"
      << "<rect x=\"0\" y=\"0\" width=\"" << width << "\" height=\"" << height << "\" fill=\"white\"/>\n"
      << "<text x=\"" << width / 2 << "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\">"
      << title << "</text>\n"
      << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << pw << "\" height=\"" << ph
      << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double f = k / 4.0;
    svg << "<text x=\"" << coord(left - 6) << "\" y=\"" << coord(py(f) + 4)
        << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"10\">" << coord(f) << "</text>\n"
        << "<text x=\"" << coord(px(f * x_max)) << "\" y=\"" << coord(top + ph + 14)
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"10\">" << coord(f * x_max) << "</text>\n";
  }
  svg << "<text x=\"" << coord(left + pw / 2) << "\" y=\"" << coord(height - 12)
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">" << x_label << "</text>\n"
      << "<text x=\"16\" y=\"" << coord(top + ph / 2) << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
      << "font-size=\"12\" transform=\"rotate(-90 16 " << coord(top + ph / 2) << ")\">" << y_label << "</text>\n";
  svg << "<polyline fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"1.5\" points=\"";
  for (std::size_t i = 0; i < xy.size(); ++i) svg << (i ? " " : "") << coord(px(xy[i].first)) << ',' << coord(py(xy[i].second));
  svg << "\"/>\n";
  if (star) {
    const double cx = px(star->first), cy = py(star->second);
    svg << "<polygon fill=\"#d62728\" stroke=\"black\" stroke-width=\"0.5\" points=\"";
    for (int k = 0; k < 10; ++k) {
      const double r = k % 2 == 0 ? 8.0 : 3.5;
      const double a = -M_PI / 2 + k * M_PI / 5;
      svg << (k ? " " : "") << coord(cx + r * std::cos(a)) << ',' << coord(cy + r * std::sin(a));
    }
    svg << "\"/>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace

void emit_report(const EvalReport& report, const std::vector<F1Row>& f1_table, const std::filesystem::path& out_dir) {
  if (report.pr_points.empty()) throw ValidationError("emit_report: empty report");
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw StorageError("cannot create '" + out_dir.string() + "': " + ec.message());

  std::string pr = "tau,precision,recall,f1\n";
  for (const auto& p : report.pr_points) pr += num(p.tau) + "," + num(p.precision) + "," + num(p.recall) + "," + num(p.f1) + "\n";
  write_file(out_dir / "pr_curve.csv", pr);

  std::string f1 = "tau,tau_normalized,f1\n";
  for (const auto& r : f1_table) f1 += num(r.tau) + "," + num(r.tau_normalized) + "," + num(r.f1) + "\n";
  write_file(out_dir / "f1_vs_tau.csv", f1);

  std::vector<std::pair<double, double>> pr_xy;
  std::pair<double, double> best{0.0, 0.0};
  for (const auto& p : report.pr_points) {
    pr_xy.emplace_back(p.recall, p.precision);
    if (p.tau == report.best_tau) best = {p.recall, p.precision};
  }
  std::sort(pr_xy.begin(), pr_xy.end());
  write_file(out_dir / "pr_curve.svg",
             line_plot("Precision-recall (AUC " + coord(report.pr_auc * 100.0) + "%)", "recall", "precision", pr_xy, 1.0, &best));

  std::vector<std::pair<double, double>> f1_xy;
  double best_f1 = -1.0;
  std::pair<double, double> f1_star{0.0, 0.0};
  for (const auto& r : f1_table) {
    f1_xy.emplace_back(r.tau_normalized, r.f1);
    if (r.f1 > best_f1) best_f1 = r.f1, f1_star = {r.tau_normalized, r.f1};
  }
  write_file(out_dir / "f1_vs_tau.svg",
             line_plot("F1 vs threshold", "threshold / max threshold", "F1", f1_xy, 1.0, f1_table.empty() ? nullptr : &f1_star));

  nlohmann::json summary = {{"pr_auc", report.pr_auc},
                            {"best_f1", report.best_f1},
                            {"best_tau", report.best_tau},
                            {"curve_points", report.pr_points.size()},
                            {"skipped_points", report.skipped_points}};
  write_file(out_dir / "summary.json", summary.dump(2) + "\n");
}

}  // namespace sardist
