#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>
#include <string>

#include "doctest.h"
#include "json.hpp"
#include "sardist/evaluation.hpp"
#include "support.hpp"

using namespace sardist;

namespace {

// Trapezoidal PR-AUC over every distinct strict threshold, highest first,
// starting from recall 0 at the precision of the highest threshold that predicts anything.
double exhaustive_auc(const LabeledMetricSet& set) {
  std::vector<double> taus = set.scores;
  std::sort(taus.begin(), taus.end(), std::greater<>());
  taus.erase(std::unique(taus.begin(), taus.end()), taus.end());
  taus.push_back(-std::numeric_limits<double>::infinity());
  const double positives = static_cast<double>(set.positives());
  double area = 0.0, prev_r = 0.0, prev_p = -1.0;
  for (double tau : taus) {
    double tp = 0, fp = 0;
    for (std::size_t i = 0; i < set.scores.size(); ++i)
      if (set.scores[i] > tau) (set.labels[i] ? tp : fp) += 1;
    if (tp + fp == 0) continue;
    const double p = tp / (tp + fp), r = tp / positives;
    if (prev_p < 0) prev_p = p;
    area += (r - prev_r) * (p + prev_p) / 2;
    prev_r = r;
    prev_p = p;
  }
  return area;
}

double best_f1_oracle(const LabeledMetricSet& set) {
  double best = 0.0;
  for (double tau : set.scores) {
    for (double t : {tau, -std::numeric_limits<double>::infinity()}) {
      double tp = 0, fp = 0;
      for (std::size_t i = 0; i < set.scores.size(); ++i)
        if (set.scores[i] > t) (set.labels[i] ? tp : fp) += 1;
      if (tp == 0) continue;
      const double p = tp / (tp + fp), r = tp / static_cast<double>(set.positives());
      best = std::max(best, 2 * p * r / (p + r));
    }
  }
  return best;
}

LabeledMetricSet random_set(std::size_t n, double prevalence, double shift, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  LabeledMetricSet set;
  for (std::size_t i = 0; i < n; ++i) {
    const bool pos = u(rng) < prevalence;
    set.labels.push_back(pos);
    set.scores.push_back(u(rng) + (pos ? shift : 0.0));
  }
  return set;
}

// Minimal XML checker: balanced tags, quoted attributes, only known entities.
bool well_formed_xml(const std::string& text) {
  std::vector<std::string> stack;
  std::size_t i = 0;
  bool root_seen = false;
  while (i < text.size()) {
    if (text[i] == '&') {
      const std::size_t semi = text.find(';', i);
      if (semi == std::string::npos) return false;
      const std::string ent = text.substr(i, semi - i + 1);
      if (ent != "&amp;" && ent != "&lt;" && ent != "&gt;" && ent != "&quot;" && ent != "&apos;") return false;
      i = semi + 1;
      continue;
    }
    if (text[i] != '<') {
      if (stack.empty() && !std::isspace(static_cast<unsigned char>(text[i]))) return false;
      ++i;
      continue;
    }
    if (text.compare(i, 2, "<?") == 0) {
      const std::size_t end = text.find("?>", i);
      if (end == std::string::npos) return false;
      i = end + 2;
      continue;
    }
    const bool closing = text.compare(i, 2, "</") == 0;
    std::size_t j = i + (closing ? 2 : 1);
    std::string name;
    while (j < text.size() && (std::isalnum(static_cast<unsigned char>(text[j])) || text[j] == '-' || text[j] == ':'))
      name += text[j++];
    if (name.empty()) return false;
    bool self_closing = false;
    while (j < text.size() && text[j] != '>') {
      if (text[j] == '"') {
        const std::size_t q = text.find('"', j + 1);
        if (q == std::string::npos) return false;
        if (text.substr(j + 1, q - j - 1).find('<') != std::string::npos) return false;
        j = q + 1;
      } else if (text[j] == '/' && j + 1 < text.size() && text[j + 1] == '>') {
        self_closing = true;
        ++j;
      } else if (text[j] == '<') {
        return false;
      } else {
        ++j;
      }
    }
    if (j >= text.size()) return false;
    if (closing) {
      if (stack.empty() || stack.back() != name) return false;
      stack.pop_back();
    } else if (!self_closing) {
      if (stack.empty()) {
        if (root_seen) return false;
        root_seen = true;
      }
      stack.push_back(name);
    } else if (stack.empty()) {
      return false;
    }
    i = j + 1;
  }
  return root_seen && stack.empty();
}

std::size_t line_count(const std::filesystem::path& p) {
  const auto bytes = testing::read_bytes(p);
  return static_cast<std::size_t>(std::count(bytes.begin(), bytes.end(), '\n'));
}

}  // namespace

TEST_SUITE("evaluation") {
  TEST_CASE("labeled set layout") {
    DisturbanceMap pre{TensorD({2, 3}), MetricUnits::standard_deviations}, post = pre;
    for (std::size_t i = 0; i < 6; ++i) pre.values[i] = 10.0 + static_cast<double>(i), post.values[i] = static_cast<double>(i);
    Mask truth({2, 3}, 0);
    truth(0, 1) = truth(1, 2) = 1;
    const LabeledMetricSet set = build_labeled_set(pre, post, truth);
    REQUIRE(set.scores.size() == 12);
    CHECK(set.positives() == 2);
    for (std::size_t i = 0; i < 6; ++i) {
      CHECK(set.scores[i] == pre.values[i]);
      CHECK(set.labels[i] == 0);
      CHECK(set.scores[6 + i] == post.values[i]);
      CHECK(set.labels[6 + i] == truth[i]);
    }
  }

  TEST_CASE("labeled set errors") {
    const DisturbanceMap m{TensorD({2, 2}, 1.0), MetricUnits::standard_deviations};
    CHECK_THROWS_AS(build_labeled_set(m, m, Mask({2, 2}, 0)), ValidationError);
    CHECK_THROWS_AS(build_labeled_set(m, m, Mask({2, 3}, 1)), ShapeError);
    CHECK_THROWS_AS(build_labeled_set(m, DisturbanceMap{TensorD({3, 2}), MetricUnits::decibels}, Mask({2, 2}, 1)),
                    ShapeError);
    LabeledMetricSet all_pos{{0.1, 0.2}, {1, 1}};
    CHECK_THROWS_AS(pr_curve(all_pos), ValidationError);
    LabeledMetricSet nan_score{{0.1, std::nan("")}, {1, 0}};
    CHECK_THROWS_AS(pr_curve(nan_score), ValidationError);
    CHECK_THROWS_AS(pr_curve(LabeledMetricSet{{0.1, 0.2}, {1, 0}}, 1), ValidationError);
  }

  TEST_CASE("hand case") {
    const LabeledMetricSet set{{0.9, 0.8, 0.7, 0.6}, {1, 0, 1, 0}};
    const EvalReport r = pr_curve(set);
    CHECK(std::abs(r.best_f1 - 0.8) < 1e-12);
    CHECK(r.best_tau > 0.6);
    CHECK(r.best_tau <= 0.7);
    CHECK(std::abs(r.pr_auc - exhaustive_auc(set)) < 1e-12);
    CHECK(std::abs(r.pr_auc - (0.5 + 0.25 * (0.5 + 2.0 / 3.0))) < 1e-12);
    CHECK(r.pr_points.size() == 4);
    CHECK(r.skipped_points == 1);
  }

  TEST_CASE("perfect separation") {
    const LabeledMetricSet set{{0.1, 0.2, 0.3, 0.8, 0.9}, {0, 0, 0, 1, 1}};
    const EvalReport r = pr_curve(set);
    CHECK(r.pr_auc == 1.0);
    CHECK(r.best_f1 == 1.0);
    CHECK(r.best_tau > 0.3);
    CHECK(r.best_tau < 0.8);
  }

  TEST_CASE("identical scores collapse to one operating point") {
    const LabeledMetricSet set{{0.5, 0.5, 0.5, 0.5, 0.5}, {1, 0, 0, 1, 0}};
    const EvalReport r = pr_curve(set);
    REQUIRE(r.pr_points.size() == 1);
    CHECK(r.pr_points[0].precision == doctest::Approx(0.4));
    CHECK(r.pr_points[0].recall == 1.0);
    CHECK(r.pr_points[0].tau < 0.5);
  }

  TEST_CASE("downsampled AUC tracks the exhaustive oracle on 10^4 scores") {
    for (std::uint64_t seed : {1, 2, 3}) {
      const LabeledMetricSet set = random_set(10000, 0.2, 0.4, seed);
      const EvalReport r = pr_curve(set, 512);
      CHECK(r.pr_points.size() <= 513);
      CHECK(std::abs(r.pr_auc - exhaustive_auc(set)) < 0.005);
      CHECK(r.pr_auc >= 0.0);
      CHECK(r.pr_auc <= 1.0);
    }
  }

  TEST_CASE("full curve equals the exhaustive oracle when nothing is dropped") {
    const LabeledMetricSet set = random_set(300, 0.3, 0.2, 4);
    const EvalReport r = pr_curve(set, 10000);
    CHECK(std::abs(r.pr_auc - exhaustive_auc(set)) < 1e-12);
    CHECK(std::abs(r.best_f1 - best_f1_oracle(set)) < 1e-12);
  }

  TEST_CASE("random scores have AUC near the prevalence") {
    const LabeledMetricSet set = random_set(10000, 0.5, 0.0, 5);
    CHECK(std::abs(pr_curve(set).pr_auc - 0.5) < 0.05);
  }

  TEST_CASE("best point is on the curve and recall falls with tau") {
    const LabeledMetricSet set = random_set(5000, 0.1, 0.3, 6);
    const EvalReport r = pr_curve(set, 64);
    bool found = false;
    for (std::size_t k = 0; k < r.pr_points.size(); ++k) {
      if (r.pr_points[k].tau == r.best_tau && r.pr_points[k].f1 == r.best_f1) found = true;
      if (k) {
        CHECK(r.pr_points[k].tau > r.pr_points[k - 1].tau);
        CHECK(r.pr_points[k].recall <= r.pr_points[k - 1].recall);
      }
    }
    CHECK(found);
    CHECK(std::abs(r.best_f1 - best_f1_oracle(set)) < 1e-12);
  }

  TEST_CASE("f1 table conventions") {
    const LabeledMetricSet set = random_set(2000, 0.3, 0.3, 7);
    const double max_score = *std::max_element(set.scores.begin(), set.scores.end());
    const std::vector<double> taus = {0.0, 0.25, 0.5, max_score, max_score + 1.0};
    const auto rows = f1_vs_threshold(set, taus);
    REQUIRE(rows.size() == 5);
    CHECK(rows[0].recall == 1.0);
    CHECK(rows[3].f1 == 0.0);
    CHECK(rows[4].f1 == 0.0);
    CHECK(rows[3].tau_normalized == 1.0);
    CHECK(rows[1].tau_normalized == doctest::Approx(0.25 / max_score));

    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> u(0.0, 1.6);
    for (int trial = 0; trial < 200; ++trial) {
      double a = u(rng), b = u(rng);
      if (a > b) std::swap(a, b);
      const std::vector<double> pair = {a, b};
      const auto r = f1_vs_threshold(set, pair);
      CHECK(r[0].recall >= r[1].recall);
    }

    const auto uniform = uniform_thresholds(set, 101);
    REQUIRE(uniform.size() == 101);
    CHECK(uniform.front() == 0.0);
    CHECK(uniform.back() == max_score);
  }

  TEST_CASE("f1 table agrees with the curve at the best threshold") {
    const LabeledMetricSet set = random_set(1000, 0.2, 0.5, 9);
    const EvalReport r = pr_curve(set);
    const std::vector<double> tau = {r.best_tau};
    CHECK(f1_vs_threshold(set, tau)[0].f1 == doctest::Approx(r.best_f1).epsilon(1e-14));
  }

  TEST_CASE("report files are deterministic and well formed") {
    const LabeledMetricSet set = random_set(3000, 0.2, 0.4, 10);
    const EvalReport r = pr_curve(set, 128);
    const auto table = f1_vs_threshold(set, uniform_thresholds(set));
    testing::TempDir a, b;
    emit_report(r, table, a.path());
    emit_report(r, table, b.path());
    for (const char* name : {"pr_curve.csv", "f1_vs_tau.csv", "pr_curve.svg", "f1_vs_tau.svg", "summary.json"}) {
      CHECK(testing::read_bytes(a / name) == testing::read_bytes(b / name));
    }
    CHECK(line_count(a / "pr_curve.csv") == r.pr_points.size() + 1);
    CHECK(line_count(a / "f1_vs_tau.csv") == table.size() + 1);
    const auto header = testing::read_bytes(a / "pr_curve.csv");
    CHECK(std::string(header.begin(), header.begin() + 24) == "tau,precision,recall,f1\n");
    for (const char* name : {"pr_curve.svg", "f1_vs_tau.svg"}) {
      const auto bytes = testing::read_bytes(a / name);
      const std::string svg(bytes.begin(), bytes.end());
      CHECK(well_formed_xml(svg));
      CHECK(svg.find("<script") == std::string::npos);
    }
    const auto summary_bytes = testing::read_bytes(a / "summary.json");
    const auto summary = nlohmann::json::parse(std::string(summary_bytes.begin(), summary_bytes.end()));
    CHECK(summary["pr_auc"].get<double>() == r.pr_auc);
    CHECK(summary["curve_points"].get<std::size_t>() == r.pr_points.size());
  }

  TEST_CASE("xml checker rejects broken documents") {
    CHECK(well_formed_xml("<a><b x=\"1\"/></a>"));
    CHECK_FALSE(well_formed_xml("<a><b></a></b>"));
    CHECK_FALSE(well_formed_xml("<a x=\"1></a>"));
    CHECK_FALSE(well_formed_xml("<a>&nbsp;</a>"));
    CHECK_FALSE(well_formed_xml("<a></a><b></b>"));
  }
}
