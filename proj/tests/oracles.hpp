// Test-only oracles, kept independent of the library implementations they
// verify: brute-force metric enumeration, direct dense evaluations of the
// attention/GRU formulas, and plain-loop statistics.
#pragma once

#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include "secure/data.hpp"

namespace oracles {

// Video-level AP by explicit frame scans at every observed threshold:
// a positive is a true positive at q when some frame at or before tau has
// p_t >= q; a negative is a false positive when any frame has p_t >= q.
// Trapezoid over the descending-threshold sweep, anchored at (0,1).
inline double brute_force_ap(const std::vector<std::vector<double>>& probs,
                             const std::vector<secure::VideoLabel>& labels) {
  std::set<double> threshold_set;
  for (const auto& p : probs) threshold_set.insert(p.begin(), p.end());

  double area = 0.0;
  double prev_recall = 0.0, prev_precision = 1.0;
  for (auto it = threshold_set.rbegin(); it != threshold_set.rend(); ++it) {
    const double q = *it;
    int tp = 0, fp = 0, fn = 0;
    for (std::size_t v = 0; v < probs.size(); ++v) {
      if (labels[v].l_v == 1) {
        bool alarmed = false;
        for (std::size_t t = 0; t < probs[v].size(); ++t) {
          if (t + 1 > labels[v].tau) break;
          if (probs[v][t] >= q) {
            alarmed = true;
            break;
          }
        }
        alarmed ? ++tp : ++fn;
      } else {
        bool alarmed = false;
        for (double p : probs[v]) {
          if (p >= q) {
            alarmed = true;
            break;
          }
        }
        if (alarmed) ++fp;
      }
    }
    const double precision =
        (tp + fp) == 0 ? 1.0 : static_cast<double>(tp) / (tp + fp);
    const double recall = static_cast<double>(tp) / (tp + fn);
    area += (recall - prev_recall) * (precision + prev_precision) * 0.5;
    prev_recall = recall;
    prev_precision = precision;
  }
  return area;
}

// mTTA by explicit scans: at each observed threshold, the alarm is the first
// frame strictly exceeding it at or before tau; thresholds with no alarmed
// positive are skipped.
inline double brute_force_mtta(const std::vector<std::vector<double>>& probs,
                               const std::vector<secure::VideoLabel>& labels) {
  std::set<double> threshold_set;
  for (const auto& p : probs) threshold_set.insert(p.begin(), p.end());

  double sum = 0.0;
  int counted = 0;
  for (const double q : threshold_set) {
    double tta = 0.0;
    int alarmed = 0;
    for (std::size_t v = 0; v < probs.size(); ++v) {
      if (labels[v].l_v != 1) continue;
      for (std::size_t t = 0; t < probs[v].size(); ++t) {
        if (t + 1 > labels[v].tau) break;
        if (probs[v][t] > q) {
          tta += (static_cast<double>(labels[v].tau) -
                  static_cast<double>(t + 1)) /
                 labels[v].fps;
          ++alarmed;
          break;
        }
      }
    }
    if (alarmed > 0) {
      sum += tta / alarmed;
      ++counted;
    }
  }
  return counted > 0 ? sum / counted : 0.0;
}

// Dense scaled dot-product attention evaluated directly from the formula.
inline std::vector<double> direct_attention(
    const std::vector<double>& query, const std::vector<std::vector<double>>& keys,
    const std::vector<std::vector<double>>& values) {
  const std::size_t n = keys.size();
  const std::size_t d = query.size();
  std::vector<double> scores(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) scores[i] += keys[i][j] * query[j];
    scores[i] /= std::sqrt(static_cast<double>(d));
  }
  const double mx = *std::max_element(scores.begin(), scores.end());
  double z = 0.0;
  for (double& s : scores) {
    s = std::exp(s - mx);
    z += s;
  }
  for (double& s : scores) s /= z;
  std::vector<double> out(values[0].size(), 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < out.size(); ++j)
      out[j] += scores[i] * values[i][j];
  }
  return out;
}

inline double mse(const std::vector<double>& a, const std::vector<double>& b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    acc += (a[i] - b[i]) * (a[i] - b[i]);
  return acc / static_cast<double>(a.size());
}

}  // namespace oracles
