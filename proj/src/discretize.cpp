#include "binshield/discretize.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "binshield/errors.hpp"

namespace binshield {

std::string to_string(Encoding e) {
  switch (e) {
    case Encoding::BinIndex: return "bin-index";
    case Encoding::BinMidpoint: return "bin-midpoint";
    case Encoding::OneHot: return "one-hot";
  }
  return "?";
}

std::string to_string(BinMethod m) {
  switch (m) {
    case BinMethod::EqualWidth: return "EW";
    case BinMethod::EqualFrequency: return "EF";
    case BinMethod::Mdlp: return "MDL";
    case BinMethod::EntropyBins: return "EBD";
    case BinMethod::None: return "none";
  }
  return "?";
}

int DiscretizationScheme::encoded_width() const {
  if (encoding != Encoding::OneHot) return feature_count();
  int width = 0;
  for (const auto& bins : features) width += bins.bin_count();
  return width;
}

void DiscretizationScheme::validate() const {
  for (const auto& bins : features) {
    if (!(bins.train_min <= bins.train_max))
      throw InvalidSpec("training range inverted");
    for (size_t i = 0; i < bins.cuts.size(); ++i) {
      if (i > 0 && !(bins.cuts[i - 1] < bins.cuts[i]))
        throw InvalidSpec("cut points must be strictly increasing");
      if (bins.cuts[i] < bins.train_min || bins.cuts[i] > bins.train_max)
        throw InvalidSpec("cut point outside training range");
    }
  }
}

int bin_index(const FeatureBins& bins, Real x) {
  // number of cuts <= x; exact-cut values go to the bin above
  auto it = std::upper_bound(bins.cuts.begin(), bins.cuts.end(), x);
  return int(it - bins.cuts.begin());
}

Real bin_midpoint(const FeatureBins& bins, int bin) {
  const int k = bins.bin_count();
  const Real lower = bin == 0 ? bins.train_min : bins.cuts[size_t(bin) - 1];
  const Real upper = bin == k - 1 ? bins.train_max : bins.cuts[size_t(bin)];
  return 0.5 * (lower + upper);
}

namespace {

std::vector<Real> column_sorted(const Matrix& X, int col) {
  if (X.rows() == 0) throw EmptyColumn(col);
  std::vector<Real> v(static_cast<size_t>(X.rows()));
  for (Eigen::Index r = 0; r < X.rows(); ++r) v[size_t(r)] = X(r, col);
  std::sort(v.begin(), v.end());
  return v;
}

DiscretizationScheme make_scheme(BinMethod method, Encoding encoding, int d) {
  DiscretizationScheme scheme;
  scheme.method = method;
  scheme.encoding = encoding;
  scheme.features.resize(size_t(d));
  return scheme;
}

// Shannon entropy (base 2) of the labels addressed by [begin, end) of `order`.
Real entropy(const std::vector<int>& counts, int total) {
  if (total == 0) return 0.0;
  Real h = 0.0;
  for (int c : counts) {
    if (c == 0) continue;
    const Real p = Real(c) / Real(total);
    h -= p * std::log2(p);
  }
  return h;
}

int classes_present(const std::vector<int>& counts) {
  int k = 0;
  for (int c : counts) k += c > 0 ? 1 : 0;
  return k;
}

// One feature column sorted by (value, label) with label counts available
// for any prefix; shared by the MDLP and EBD fitters.
struct SortedColumn {
  std::vector<Real> values;
  std::vector<int> labels;
  int class_count;

  static SortedColumn build(const Matrix& X, int col, const Labels& y, int class_count) {
    SortedColumn sc;
    sc.class_count = class_count;
    const int n = int(X.rows());
    std::vector<int> order(static_cast<size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
      if (X(a, col) != X(b, col)) return X(a, col) < X(b, col);
      return y[size_t(a)] < y[size_t(b)];
    });
    sc.values.reserve(size_t(n));
    sc.labels.reserve(size_t(n));
    for (int idx : order) {
      sc.values.push_back(X(idx, col));
      sc.labels.push_back(y[size_t(idx)]);
    }
    return sc;
  }

  std::vector<int> count_range(int begin, int end) const {
    std::vector<int> counts(size_t(class_count), 0);
    for (int i = begin; i < end; ++i) counts[size_t(labels[size_t(i)])]++;
    return counts;
  }
};

struct Candidate {
  int split_pos;  // first index of the right part
  Real cut;       // midpoint between adjacent distinct values
};

// Boundary points: midpoints between adjacent distinct values whose value
// groups are not both pure with the same class.
std::vector<Candidate> boundary_candidates(const SortedColumn& sc, int begin, int end) {
  std::vector<Candidate> out;
  int group_start = begin;
  int prev_start = -1;
  for (int i = begin; i < end; ++i) {
    const bool last_in_group = i + 1 == end || sc.values[size_t(i + 1)] != sc.values[size_t(i)];
    if (!last_in_group) continue;
    if (prev_start >= 0) {
      bool skip = true;
      const int prev_label = sc.labels[size_t(prev_start)];
      for (int j = prev_start; j < group_start && skip; ++j)
        if (sc.labels[size_t(j)] != prev_label) skip = false;
      for (int j = group_start; j <= i && skip; ++j)
        if (sc.labels[size_t(j)] != prev_label) skip = false;
      if (!skip)
        out.push_back({group_start,
                       0.5 * (sc.values[size_t(group_start) - 1] + sc.values[size_t(group_start)])});
    }
    prev_start = group_start;
    group_start = i + 1;
  }
  return out;
}

struct SplitChoice {
  bool found = false;
  Candidate candidate{};
  Real gain = 0.0;
  std::vector<int> left_counts;
  std::vector<int> right_counts;
};

// Best information-gain split of [begin, end); ties resolve to the smaller cut.
SplitChoice best_split(const SortedColumn& sc, int begin, int end) {
  SplitChoice choice;
  const auto candidates = boundary_candidates(sc, begin, end);
  if (candidates.empty()) return choice;

  const int total = end - begin;
  const std::vector<int> total_counts = sc.count_range(begin, end);
  const Real parent_entropy = entropy(total_counts, total);

  std::vector<int> left(size_t(sc.class_count), 0);
  int cursor = begin;
  for (const Candidate& cand : candidates) {
    for (; cursor < cand.split_pos; ++cursor) left[size_t(sc.labels[size_t(cursor)])]++;
    std::vector<int> right(static_cast<size_t>(sc.class_count));
    for (size_t c = 0; c < right.size(); ++c) right[c] = total_counts[c] - left[c];
    const int n_left = cand.split_pos - begin;
    const int n_right = total - n_left;
    const Real gain = parent_entropy - (Real(n_left) / total) * entropy(left, n_left) -
                      (Real(n_right) / total) * entropy(right, n_right);
    if (!choice.found || gain > choice.gain + 1e-12) {
      choice.found = true;
      choice.candidate = cand;
      choice.gain = gain;
      choice.left_counts = left;
      choice.right_counts = right;
    }
  }
  return choice;
}

// Fayyad-Irani MDL acceptance threshold for a proposed split.
Real mdl_threshold(const SortedColumn& sc, int begin, int end, const SplitChoice& split) {
  const int n = end - begin;
  const std::vector<int> total_counts = sc.count_range(begin, end);
  const int c = classes_present(total_counts);
  const int c1 = classes_present(split.left_counts);
  const int c2 = classes_present(split.right_counts);
  const int n_left = split.candidate.split_pos - begin;
  const int n_right = n - n_left;
  const Real delta = std::log2(std::pow(3.0, c) - 2.0) -
                     (Real(c) * entropy(total_counts, n) -
                      Real(c1) * entropy(split.left_counts, n_left) -
                      Real(c2) * entropy(split.right_counts, n_right));
  return std::log2(Real(n) - 1.0) / Real(n) + delta / Real(n);
}

void mdlp_recurse(const SortedColumn& sc, int begin, int end, std::vector<Real>& cuts) {
  if (end - begin < 2) return;
  const SplitChoice split = best_split(sc, begin, end);
  if (!split.found) return;
  if (split.gain <= mdl_threshold(sc, begin, end, split)) return;
  cuts.push_back(split.candidate.cut);
  mdlp_recurse(sc, begin, split.candidate.split_pos, cuts);
  mdlp_recurse(sc, split.candidate.split_pos, end, cuts);
}

void check_labels(const Matrix& X, const Labels& y) {
  if (Eigen::Index(y.size()) != X.rows())
    throw LabelMismatch("label count does not match row count");
  if (y.empty()) throw LabelMismatch("labels are empty");
}

}  // namespace

DiscretizationScheme fit_equal_width(const Matrix& X, int k, Encoding encoding) {
  if (k < 1) throw InvalidSpec("bin count must be >= 1");
  DiscretizationScheme scheme = make_scheme(BinMethod::EqualWidth, encoding, int(X.cols()));
  for (int f = 0; f < int(X.cols()); ++f) {
    if (X.rows() == 0) throw EmptyColumn(f);
    FeatureBins& bins = scheme.features[size_t(f)];
    bins.train_min = X.col(f).minCoeff();
    bins.train_max = X.col(f).maxCoeff();
    const Real width = (bins.train_max - bins.train_min) / Real(k);
    if (width > 0.0) {
      for (int i = 1; i < k; ++i) {
        const Real cut = bins.train_min + Real(i) * width;
        if (bins.cuts.empty() || cut > bins.cuts.back()) bins.cuts.push_back(cut);
      }
    }
  }
  scheme.validate();
  return scheme;
}

DiscretizationScheme fit_equal_frequency(const Matrix& X, int k, Encoding encoding) {
  if (k < 1) throw InvalidSpec("bin count must be >= 1");
  DiscretizationScheme scheme = make_scheme(BinMethod::EqualFrequency, encoding, int(X.cols()));
  for (int f = 0; f < int(X.cols()); ++f) {
    const std::vector<Real> sorted = column_sorted(X, f);
    FeatureBins& bins = scheme.features[size_t(f)];
    bins.train_min = sorted.front();
    bins.train_max = sorted.back();
    const auto n = double(sorted.size());
    for (int i = 1; i < k; ++i) {
      // upper order statistic at the interpolation position, so cuts are
      // always observed values and collapsed bins stay within the
      // distinct-value count
      const auto pos = size_t(std::ceil((n - 1.0) * double(i) / double(k)));
      const Real cut = sorted[pos];
      if (cut <= bins.train_min) continue;  // empty bottom bin
      if (bins.cuts.empty() || cut > bins.cuts.back()) bins.cuts.push_back(cut);
    }
  }
  scheme.validate();
  return scheme;
}

DiscretizationScheme fit_mdlp(const Matrix& X, const Labels& y, Encoding encoding) {
  check_labels(X, y);
  const int C = 1 + *std::max_element(y.begin(), y.end());
  DiscretizationScheme scheme = make_scheme(BinMethod::Mdlp, encoding, int(X.cols()));
  for (int f = 0; f < int(X.cols()); ++f) {
    const SortedColumn sc = SortedColumn::build(X, f, y, C);
    FeatureBins& bins = scheme.features[size_t(f)];
    bins.train_min = sc.values.front();
    bins.train_max = sc.values.back();
    mdlp_recurse(sc, 0, int(sc.values.size()), bins.cuts);
    std::sort(bins.cuts.begin(), bins.cuts.end());
  }
  scheme.validate();
  return scheme;
}

DiscretizationScheme fit_entropy_bins(const Matrix& X, const Labels& y, int max_bins,
                                      Encoding encoding) {
  if (max_bins < 1) throw InvalidSpec("max_bins must be >= 1");
  check_labels(X, y);
  const int C = 1 + *std::max_element(y.begin(), y.end());
  DiscretizationScheme scheme = make_scheme(BinMethod::EntropyBins, encoding, int(X.cols()));
  for (int f = 0; f < int(X.cols()); ++f) {
    const SortedColumn sc = SortedColumn::build(X, f, y, C);
    FeatureBins& bins = scheme.features[size_t(f)];
    bins.train_min = sc.values.front();
    bins.train_max = sc.values.back();

    const int n = int(sc.values.size());
    std::vector<std::pair<int, int>> intervals = {{0, n}};
    while (int(intervals.size()) < max_bins) {
      // split the interval whose best cut removes the most total entropy
      int best_interval = -1;
      SplitChoice best;
      Real best_weighted = 0.0;
      for (int i = 0; i < int(intervals.size()); ++i) {
        const auto [begin, end] = intervals[size_t(i)];
        const SplitChoice split = best_split(sc, begin, end);
        if (!split.found) continue;
        const Real weighted = split.gain * Real(end - begin) / Real(n);
        if (best_interval < 0 || weighted > best_weighted + 1e-12) {
          best_interval = i;
          best = split;
          best_weighted = weighted;
        }
      }
      if (best_interval < 0 || !(best_weighted > 0.0)) break;
      const auto [begin, end] = intervals[size_t(best_interval)];
      bins.cuts.push_back(best.candidate.cut);
      intervals[size_t(best_interval)] = {begin, best.candidate.split_pos};
      intervals.insert(intervals.begin() + best_interval + 1, {best.candidate.split_pos, end});
    }
    std::sort(bins.cuts.begin(), bins.cuts.end());
  }
  scheme.validate();
  return scheme;
}

DiscretizationScheme fit_scheme(const DiscretizerSpec& spec, const Matrix& X, const Labels& y) {
  switch (spec.method) {
    case BinMethod::EqualWidth: return fit_equal_width(X, spec.bins, spec.encoding);
    case BinMethod::EqualFrequency: return fit_equal_frequency(X, spec.bins, spec.encoding);
    case BinMethod::Mdlp: return fit_mdlp(X, y, spec.encoding);
    case BinMethod::EntropyBins: return fit_entropy_bins(X, y, spec.bins, spec.encoding);
    case BinMethod::None: break;
  }
  throw InvalidSpec("fit_scheme requires a concrete binning method");
}

Matrix apply_scheme(const DiscretizationScheme& scheme, const Matrix& X) {
  if (int(X.cols()) != scheme.feature_count())
    throw DimensionMismatch("input width does not match scheme");
  const int n = int(X.rows());
  Matrix out = Matrix::Zero(n, scheme.encoded_width());
  int offset = 0;
  for (int f = 0; f < scheme.feature_count(); ++f) {
    const FeatureBins& bins = scheme.features[size_t(f)];
    for (int r = 0; r < n; ++r) {
      const int b = bin_index(bins, X(r, f));
      switch (scheme.encoding) {
        case Encoding::BinIndex:
          out(r, f) = Real(b);
          break;
        case Encoding::BinMidpoint:
          out(r, f) = bin_midpoint(bins, b);
          break;
        case Encoding::OneHot:
          out(r, offset + b) = 1.0;
          break;
      }
    }
    offset += bins.bin_count();
  }
  return out;
}

Real min_bin_width(const DiscretizationScheme& scheme) {
  Real best = std::numeric_limits<Real>::infinity();
  for (const auto& bins : scheme.features) {
    if (bins.cuts.empty()) continue;  // single bin never changes encoding
    std::vector<Real> edges;
    edges.push_back(bins.train_min);
    edges.insert(edges.end(), bins.cuts.begin(), bins.cuts.end());
    edges.push_back(bins.train_max);
    for (size_t i = 1; i < edges.size(); ++i) best = std::min(best, edges[i] - edges[i - 1]);
  }
  return best;
}

}  // namespace binshield
