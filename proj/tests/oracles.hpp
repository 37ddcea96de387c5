#pragma once

// Test-only oracles, written independently of the library implementations
// they check: brute-force entropy partitioning, central finite differences,
// and exhaustive saliency scoring. Kept deliberately naive (no prefix sums,
// no shared helpers) so a bug in the library cannot hide here.

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <vector>

#include "binshield/models.hpp"
#include "binshield/types.hpp"

namespace oracle {

using binshield::Labels;
using binshield::Matrix;
using binshield::Real;
using binshield::Vector;

inline Real entropy_of(const std::vector<int>& labels) {
  std::map<int, int> counts;
  for (int y : labels) counts[y]++;
  Real h = 0.0;
  for (const auto& [cls, count] : counts) {
    const Real p = Real(count) / Real(labels.size());
    h -= p * std::log2(p);
  }
  return h;
}

inline int classes_in(const std::vector<int>& labels) {
  return int(std::set<int>(labels.begin(), labels.end()).size());
}

struct Part {
  std::vector<Real> x;
  std::vector<int> y;
};

// Boundary midpoints: adjacent distinct values whose groups are not both
// pure with one shared class.
inline std::vector<Real> boundary_points(const Part& part) {
  std::vector<std::pair<Real, int>> sorted;
  for (size_t i = 0; i < part.x.size(); ++i) sorted.emplace_back(part.x[i], part.y[i]);
  std::sort(sorted.begin(), sorted.end());

  std::vector<Real> points;
  for (size_t i = 0; i + 1 < sorted.size(); ++i) {
    if (sorted[i].first == sorted[i + 1].first) continue;
    const Real left_value = sorted[i].first;
    const Real right_value = sorted[i + 1].first;
    std::set<int> left_classes, right_classes;
    for (const auto& [v, y] : sorted) {
      if (v == left_value) left_classes.insert(y);
      if (v == right_value) right_classes.insert(y);
    }
    const bool both_pure_same = left_classes.size() == 1 && right_classes.size() == 1 &&
                                *left_classes.begin() == *right_classes.begin();
    if (!both_pure_same) points.push_back(0.5 * (left_value + right_value));
  }
  return points;
}

struct BestCut {
  bool found = false;
  Real cut = 0.0;
  Real gain = 0.0;
  Part left, right;
};

// Exhaustive search over boundary points; ties keep the smallest cut, and
// improvements below 1e-12 count as ties (the documented convention).
inline BestCut best_cut_exhaustive(const Part& part) {
  BestCut best;
  const Real parent = entropy_of(part.y);
  for (Real cut : boundary_points(part)) {
    Part left, right;
    for (size_t i = 0; i < part.x.size(); ++i) {
      if (part.x[i] < cut) {
        left.x.push_back(part.x[i]);
        left.y.push_back(part.y[i]);
      } else {
        right.x.push_back(part.x[i]);
        right.y.push_back(part.y[i]);
      }
    }
    const Real n = Real(part.x.size());
    const Real gain = parent - (Real(left.x.size()) / n) * entropy_of(left.y) -
                      (Real(right.x.size()) / n) * entropy_of(right.y);
    if (!best.found || gain > best.gain + 1e-12) {
      best.found = true;
      best.cut = cut;
      best.gain = gain;
      best.left = left;
      best.right = right;
    }
  }
  return best;
}

inline Real mdl_threshold_of(const Part& part, const BestCut& cut) {
  const Real n = Real(part.x.size());
  const Real delta = std::log2(std::pow(3.0, classes_in(part.y)) - 2.0) -
                     (Real(classes_in(part.y)) * entropy_of(part.y) -
                      Real(classes_in(cut.left.y)) * entropy_of(cut.left.y) -
                      Real(classes_in(cut.right.y)) * entropy_of(cut.right.y));
  return std::log2(n - 1.0) / n + delta / n;
}

inline void mdlp_cuts_exhaustive(const Part& part, std::vector<Real>& cuts) {
  if (part.x.size() < 2) return;
  const BestCut best = best_cut_exhaustive(part);
  if (!best.found) return;
  if (best.gain <= mdl_threshold_of(part, best)) return;
  cuts.push_back(best.cut);
  mdlp_cuts_exhaustive(best.left, cuts);
  mdlp_cuts_exhaustive(best.right, cuts);
}

inline std::vector<Real> mdlp_oracle(const std::vector<Real>& x, const std::vector<int>& y) {
  Part part{x, y};
  std::vector<Real> cuts;
  mdlp_cuts_exhaustive(part, cuts);
  std::sort(cuts.begin(), cuts.end());
  return cuts;
}

// Central finite differences of the cross-entropy loss.
inline Vector finite_difference_gradient(const binshield::TrainedModel& model, const Vector& x,
                                         int y, Real step = 1e-5) {
  Vector g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Vector hi = x, lo = x;
    hi[i] += step;
    lo[i] -= step;
    g[i] = (binshield::cross_entropy(model, hi, y) - binshield::cross_entropy(model, lo, y)) /
           (2.0 * step);
  }
  return g;
}

inline Real max_relative_error(const Vector& a, const Vector& b) {
  Real worst = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    const Real scale = std::max({std::abs(a[i]), std::abs(b[i]), Real(1e-6)});
    worst = std::max(worst, std::abs(a[i] - b[i]) / scale);
  }
  return worst;
}

// Probability Jacobian by central differences, for saliency checks.
inline Matrix finite_difference_jacobian(const binshield::TrainedModel& model, const Vector& x,
                                         Real step = 1e-5) {
  Matrix J(model.class_count, x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Vector hi = x, lo = x;
    hi[i] += step;
    lo[i] -= step;
    const Vector p_hi = binshield::predict_proba(model, hi.transpose()).row(0).transpose();
    const Vector p_lo = binshield::predict_proba(model, lo.transpose()).row(0).transpose();
    J.col(i) = (p_hi - p_lo) / (2.0 * step);
  }
  return J;
}

}  // namespace oracle
