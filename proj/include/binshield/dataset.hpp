#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "binshield/types.hpp"

namespace binshield {

/// Column naming for a tabular dataset: feature columns in order, then the
/// label column. Class names map label indices to text.
struct FeatureSchema {
  std::vector<std::string> feature_names;
  std::string label_name = "device";
  std::vector<std::string> class_names;

  void validate() const;
};

/// The seven flow attributes used as the default schema.
FeatureSchema default_flow_schema();

/// Immutable labeled feature matrix. Labels are dense class indices into
/// schema.class_names; CSV files carry the names.
struct Dataset {
  FeatureSchema schema;
  Matrix features;  // N x d, all finite
  Labels labels;    // N entries in [0, C)

  int sample_count() const { return int(features.rows()); }
  int feature_count() const { return int(features.cols()); }
  int class_count() const { return int(schema.class_names.size()); }

  void validate() const;
  std::vector<int> class_histogram() const;
};

enum class DistFamily { LogNormal, Exponential, Normal, Grid };

/// One class/feature cell of a synthetic generator: a non-negative family
/// plus optional zero-inflation (exact zeros with probability zero_prob).
/// Grid draws uniformly from {location + i * 8 * scale : i = 0..7}, giving
/// discrete per-class signatures that interleave across classes.
struct FeatureDist {
  DistFamily family = DistFamily::LogNormal;
  Real location = 0.0;
  Real scale = 1.0;
  Real zero_prob = 0.0;
};

struct SynthSpec {
  int class_count = 0;
  int samples_per_class = 0;
  std::vector<std::vector<FeatureDist>> class_feature_dists;  // [class][feature]
  Real overlap = 0.0;  // 0 = fully separated class locations, 1 = identical
  std::uint64_t seed = 0;
  FeatureSchema schema;  // class_names auto-filled when empty

  int feature_count() const {
    return class_feature_dists.empty() ? 0 : int(class_feature_dists.front().size());
  }
  void validate() const;
};

/// Pure function of the spec: identical spec (including seed) yields a
/// bit-identical Dataset.
Dataset generate_synthetic(const SynthSpec& spec);

/// CSV: UTF-8, comma-separated, one header row, decimal-point reals, final
/// column is the label. Empty schema.class_names appends labels in
/// first-seen order.
Dataset load_csv(const std::string& path, FeatureSchema schema);
void save_csv(const Dataset& data, const std::string& path);

/// Per-class train counts are round(train_fraction * n_c) clamped to
/// [1, n_c - 1]; the two parts partition the input. Deterministic per seed.
std::pair<Dataset, Dataset> stratified_split(const Dataset& data, Real train_fraction,
                                             std::uint64_t seed);

}  // namespace binshield
