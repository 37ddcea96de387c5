#pragma once

#include <string>
#include <utility>
#include <vector>

#include "binshield/types.hpp"

namespace binshield {

struct Dataset;
struct ModelSpec;
struct AttackSpec;

enum class Encoding { BinIndex, BinMidpoint, OneHot };
enum class BinMethod { EqualWidth, EqualFrequency, Mdlp, EntropyBins, None };

std::string to_string(Encoding e);
std::string to_string(BinMethod m);

/// Bins for one feature: strictly increasing interior cut points plus the
/// training range. Intervals are [edge, next_edge) with the last closed;
/// a value equal to a cut point lands in the bin above it. Out-of-range
/// values clamp to the outer bins.
struct FeatureBins {
  std::vector<Real> cuts;
  Real train_min = 0.0;
  Real train_max = 0.0;

  int bin_count() const { return int(cuts.size()) + 1; }
};

/// The learned defense artifact: per-feature bins plus an encoding mode.
struct DiscretizationScheme {
  BinMethod method = BinMethod::None;
  Encoding encoding = Encoding::OneHot;
  std::vector<FeatureBins> features;

  int feature_count() const { return int(features.size()); }
  int encoded_width() const;
  void validate() const;
};

struct DiscretizerSpec {
  BinMethod method = BinMethod::EqualWidth;
  int bins = 10;  // k for EW/EF, max_bins for EBD; ignored by MDLP
  Encoding encoding = Encoding::OneHot;
};

/// Bin index of x: the number of cut points <= x, so exact-cut values go to
/// the bin above the cut and everything clamps into [0, bin_count).
int bin_index(const FeatureBins& bins, Real x);

/// Midpoint of a bin, using train_min/train_max as the outer edges.
Real bin_midpoint(const FeatureBins& bins, int bin);

/// Cut points at min + i*(max-min)/k. A constant column yields one bin.
DiscretizationScheme fit_equal_width(const Matrix& X, int k,
                                     Encoding encoding = Encoding::OneHot);

/// Cut points at the i/k empirical quantiles, taken as the upper order
/// statistic at position (n-1)*i/k so every cut is an observed value.
/// Duplicate cuts collapse and cuts at the training minimum are dropped,
/// so the effective bin count never exceeds the distinct-value count.
DiscretizationScheme fit_equal_frequency(const Matrix& X, int k,
                                         Encoding encoding = Encoding::OneHot);

/// Fayyad-Irani recursive entropy partitioning. Candidate cuts sit at
/// midpoints between adjacent distinct values whose value groups are not
/// pure with the same single class; a cut is accepted iff
///   gain > log2(N-1)/N + delta/N,
///   delta = log2(3^c - 2) - (c*Ent(S) - c1*Ent(S1) - c2*Ent(S2)).
DiscretizationScheme fit_mdlp(const Matrix& X, const Labels& y,
                              Encoding encoding = Encoding::OneHot);

/// Greedy top-down entropy splitting: repeatedly split the interval whose
/// best cut yields the largest sample-weighted information gain, until
/// max_bins is reached or no cut has strictly positive gain.
DiscretizationScheme fit_entropy_bins(const Matrix& X, const Labels& y, int max_bins,
                                      Encoding encoding = Encoding::OneHot);

DiscretizationScheme fit_scheme(const DiscretizerSpec& spec, const Matrix& X,
                                const Labels& y);

/// Pure piecewise-constant map. BinIndex emits indices, BinMidpoint emits
/// midpoints (idempotent), OneHot emits one 0/1 block of width bin_count per
/// feature with exactly one 1.
Matrix apply_scheme(const DiscretizationScheme& scheme, const Matrix& X);

/// Smallest per-feature equal-width bin width; below half of it, a midpoint
/// sample cannot change its encoding under any perturbation.
Real min_bin_width(const DiscretizationScheme& scheme);

struct BinSearchReport {
  struct Row {
    int k = 0;
    Real acc_clean = 0.0;
    Real acc_adv = 0.0;
    Real rm = 0.0;
  };
  std::vector<Row> rows;
  int selected_k = 0;
};

/// Sweeps equal-width bin counts over k_range: for each k, fits the scheme,
/// trains the model, and measures clean/adversarial accuracy on the
/// validation split. Selects the smallest k that minimizes RM among those
/// with clean accuracy within clean_tolerance of the best.
BinSearchReport search_bin_count(const Dataset& train, const Dataset& validation,
                                 const ModelSpec& model, const AttackSpec& attack,
                                 std::pair<int, int> k_range = {1, 100},
                                 Real clean_tolerance = 0.01,
                                 Encoding encoding = Encoding::OneHot);

}  // namespace binshield
