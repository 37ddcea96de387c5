#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "binshield/pipeline.hpp"

namespace binshield {

/// Stacking ensemble: level-0 bases trained on differently discretized
/// inputs, level-1 meta-model trained on their out-of-fold probabilities.
struct StackSpec {
  std::vector<std::pair<DiscretizerSpec, ModelSpec>> base_configs;
  ModelSpec meta_spec;  // family LogisticRegression (EN-LR) or RandomForest (EN-RF)
  int fold_count = 5;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Default base triple {EW, MDL, EBD} sharing one base family.
StackSpec default_stack_spec(ModelFamily base_family, ModelFamily meta_family,
                             const ModelSpec& base_defaults, int ew_bins = 10,
                             int ebd_max_bins = 10);

/// Fold bookkeeping kept for leakage audits: which rows trained the base
/// fits that produced each sample's meta-feature row.
struct StackFitAudit {
  std::vector<int> fold_of_sample;                               // N
  std::vector<std::vector<std::vector<int>>> fold_base_train_rows;  // [fold][base][row]

  /// Number of samples whose meta-feature row was produced by a base fit
  /// whose training rows include the sample itself. Must be zero.
  int leakage_violations() const;
};

struct StackedModel {
  StackSpec spec;
  std::vector<Pipeline> bases;  // refit on the full training set
  TrainedModel meta;
  int class_count = 0;
  int input_dim = 0;
  StackFitAudit audit;
};

/// Meta-features are out-of-fold base probabilities: for each fold, bases
/// (scheme and model both) are refit on the remaining folds and predict the
/// held-out fold. Deterministic per seed.
StackedModel fit_stack(const StackSpec& spec, const Matrix& X, const Labels& y);

/// Concatenated base probability blocks for raw-space inputs.
Matrix stack_meta_features(const StackedModel& model, const Matrix& X);

Matrix predict_proba(const StackedModel& model, const Matrix& X);
std::vector<int> predict_labels(const StackedModel& model, const Matrix& X);
int predict_label(const StackedModel& model, const Vector& x);

}  // namespace binshield
