#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <limits>

#include "binshield/attacks.hpp"
#include "binshield/ensemble.hpp"
#include "binshield/errors.hpp"
#include "binshield/rng.hpp"

using namespace binshield;

namespace {

// well-separated clusters, one per class
void clusters(int per_class, int classes, int d, std::uint64_t seed, Matrix& X, Labels& y,
              Real scale = 0.3) {
  Rng rng(seed);
  X.resize(per_class * classes, d);
  y.clear();
  for (int r = 0; r < X.rows(); ++r) {
    const int cls = r % classes;
    for (int f = 0; f < d; ++f) X(r, f) = rng.normal(3.0 * cls + f, scale);
    y.push_back(cls);
  }
}

StackSpec dt_stack(std::uint64_t seed) {
  ModelSpec base;
  base.family = ModelFamily::DecisionTree;
  base.max_depth = 8;
  StackSpec spec = default_stack_spec(ModelFamily::DecisionTree,
                                      ModelFamily::LogisticRegression, base, 8, 8);
  spec.seed = seed;
  return spec;
}

}  // namespace

TEST_CASE("meta features concatenate one probability block per base") {
  Matrix X;
  Labels y;
  clusters(30, 4, 3, 1, X, y);
  const StackedModel stack = fit_stack(dt_stack(3), X, y);
  CHECK(stack.bases.size() == 3);
  CHECK(stack_meta_features(stack, X).cols() == 3 * 4);
  CHECK(stack.meta.input_dim == 12);
}

TEST_CASE("perfect bases make a perfect meta-model") {
  Matrix X;
  Labels y;
  clusters(40, 3, 2, 7, X, y, 0.05);  // trivially separable
  const StackedModel stack = fit_stack(dt_stack(11), X, y);
  CHECK(accuracy(predict_labels(stack, X), y) == doctest::Approx(1.0));
}

TEST_CASE("EN-LR over decision-tree bases fits and predicts") {
  Matrix X;
  Labels y;
  clusters(25, 3, 4, 21, X, y);
  const StackSpec spec = dt_stack(5);
  CHECK(spec.base_configs[0].first.method == BinMethod::EqualWidth);
  CHECK(spec.base_configs[1].first.method == BinMethod::Mdlp);
  CHECK(spec.base_configs[2].first.method == BinMethod::EntropyBins);
  CHECK(spec.meta_spec.family == ModelFamily::LogisticRegression);
  const StackedModel stack = fit_stack(spec, X, y);
  CHECK(predict_labels(stack, X).size() == size_t(X.rows()));
}

TEST_CASE("out-of-fold meta features never leak their own sample") {
  Matrix X;
  Labels y;
  clusters(35, 4, 3, 31, X, y);
  const StackedModel stack = fit_stack(dt_stack(17), X, y);
  CHECK(stack.audit.leakage_violations() == 0);
  CHECK(stack.audit.fold_of_sample.size() == size_t(X.rows()));

  SUBCASE("the auditor actually detects leakage") {
    StackFitAudit tampered = stack.audit;
    const int sample = 5;
    const int fold = tampered.fold_of_sample[size_t(sample)];
    tampered.fold_base_train_rows[size_t(fold)][0].push_back(sample);
    auto& rows = tampered.fold_base_train_rows[size_t(fold)][0];
    std::sort(rows.begin(), rows.end());
    CHECK(tampered.leakage_violations() == 1);
  }
}

TEST_CASE("every fold holds out every sample exactly once") {
  Matrix X;
  Labels y;
  clusters(30, 3, 2, 41, X, y);
  const StackSpec spec = dt_stack(23);
  const StackedModel stack = fit_stack(spec, X, y);
  for (int r = 0; r < X.rows(); ++r) {
    const int fold = stack.audit.fold_of_sample[size_t(r)];
    CHECK(fold >= 0);
    CHECK(fold < spec.fold_count);
    for (int b = 0; b < 3; ++b) {
      const auto& rows = stack.audit.fold_base_train_rows[size_t(fold)][size_t(b)];
      CHECK(!std::binary_search(rows.begin(), rows.end(), r));
    }
  }
}

TEST_CASE("stack fitting requires fold_count samples per class") {
  Matrix X(8, 2);
  X << 0, 0, 0, 1, 1, 0, 1, 1, 5, 5, 5, 6, 6, 5, 6, 6;
  const Labels y = {0, 0, 0, 0, 0, 0, 1, 1};  // class 1 has 2 < 5 samples
  CHECK_THROWS_AS(fit_stack(dt_stack(2), X, y), ClassTooSmall);
}

TEST_CASE("single-row prediction equals the batch row") {
  Matrix X;
  Labels y;
  clusters(30, 3, 3, 55, X, y);
  const StackedModel stack = fit_stack(dt_stack(29), X, y);
  const std::vector<int> batch = predict_labels(stack, X);
  for (int r = 0; r < 6; ++r)
    CHECK(predict_label(stack, X.row(r).transpose()) == batch[size_t(r)]);
}

TEST_CASE("perturbations that cross no base boundary do not move the stack") {
  Matrix X;
  Labels y;
  clusters(40, 3, 3, 61, X, y);
  const StackedModel stack = fit_stack(dt_stack(37), X, y);

  // nudge each sample by far less than any base's minimum bin width
  Real tiniest = std::numeric_limits<Real>::infinity();
  for (const auto& base : stack.bases) tiniest = std::min(tiniest, min_bin_width(*base.defense));
  REQUIRE(tiniest > 0);

  Matrix nudged = X;
  bool all_same_bins = true;
  for (int r = 0; r < X.rows(); ++r)
    for (int f = 0; f < X.cols(); ++f) {
      const Real delta = tiniest * 1e-7;
      nudged(r, f) += delta;
      for (const auto& base : stack.bases) {
        const FeatureBins& bins = base.defense->features[size_t(f)];
        if (bin_index(bins, X(r, f)) != bin_index(bins, nudged(r, f))) all_same_bins = false;
      }
    }
  if (all_same_bins) {
    CHECK(predict_labels(stack, nudged) == predict_labels(stack, X));
  } else {
    // fall back to asserting on the rows that stayed inside their bins
    const auto before = predict_labels(stack, X);
    const auto after = predict_labels(stack, nudged);
    for (int r = 0; r < X.rows(); ++r) {
      bool same = true;
      for (const auto& base : stack.bases)
        for (int f = 0; f < X.cols(); ++f) {
          const FeatureBins& bins = base.defense->features[size_t(f)];
          if (bin_index(bins, X(r, f)) != bin_index(bins, nudged(r, f))) same = false;
        }
      if (same) CHECK(before[size_t(r)] == after[size_t(r)]);
    }
  }
}

TEST_CASE("a flip of one base rarely flips the stack") {
  // samples whose perturbation crosses bin boundaries of exactly one base:
  // the other two bases' encodings pin the meta inputs, so the stack should
  // usually hold its prediction
  Matrix X;
  Labels y;
  clusters(80, 4, 5, 83, X, y, 1.2);
  const Standardizer scaler = Standardizer::fit(X);
  const Matrix Z = scaler.apply(X);

  ModelSpec base;
  base.family = ModelFamily::DecisionTree;
  base.max_depth = 8;
  StackSpec spec = default_stack_spec(ModelFamily::DecisionTree,
                                      ModelFamily::LogisticRegression, base, 10, 10);
  spec.seed = 19;
  const StackedModel stack = fit_stack(spec, Z, y);

  const AttackEnvironment env(Z, y, FeatureBox::from_data(Z), 11, 2);
  AttackSpec attack;
  attack.family = AttackFamily::Fgsm;
  attack.threat = ThreatModel::BlackBox;
  attack.substitute = ModelFamily::LogisticRegression;
  attack.epsilon = 0.15;
  const AdversarialBatch batch = craft_attack(stack, attack, Z, y, env);

  const auto stack_before = predict_labels(stack, Z);
  const auto stack_after = predict_labels(stack, batch.perturbed);
  int qualifying = 0, held = 0;
  for (int r = 0; r < Z.rows(); ++r) {
    int changed_base = -1;
    int changed_count = 0;
    for (int b = 0; b < 3; ++b) {
      const Matrix before = apply_scheme(*stack.bases[size_t(b)].defense, Z.row(r));
      const Matrix after =
          apply_scheme(*stack.bases[size_t(b)].defense, batch.perturbed.row(r));
      if (before != after) {
        ++changed_count;
        changed_base = b;
      }
    }
    if (changed_count != 1) continue;
    const Pipeline& flipped = stack.bases[size_t(changed_base)];
    if (predict_label(flipped, Vector(Z.row(r).transpose())) ==
        predict_label(flipped, Vector(batch.perturbed.row(r).transpose())))
      continue;  // encoding moved but the base held its vote
    ++qualifying;
    if (stack_before[size_t(r)] == stack_after[size_t(r)]) ++held;
  }
  REQUIRE(qualifying >= 5);
  CHECK(held * 2 > qualifying);  // majority of single-base flips are absorbed
}

TEST_CASE("stack fitting is deterministic per seed") {
  Matrix X;
  Labels y;
  clusters(30, 3, 3, 71, X, y);
  const StackedModel a = fit_stack(dt_stack(43), X, y);
  const StackedModel b = fit_stack(dt_stack(43), X, y);
  CHECK(predict_proba(a, X) == predict_proba(b, X));
  CHECK(a.audit.fold_of_sample == b.audit.fold_of_sample);
}

TEST_CASE("stack clean accuracy is never below the worst base") {
  Matrix X;
  Labels y;
  clusters(60, 4, 4, 91, X, y, 1.0);
  Matrix X_test;
  Labels y_test;
  clusters(25, 4, 4, 92, X_test, y_test, 1.0);

  const StackedModel stack = fit_stack(dt_stack(47), X, y);
  Real worst_base = 1.0;
  for (const auto& base : stack.bases)
    worst_base = std::min(worst_base, accuracy(predict_labels(base, X_test), y_test));
  CHECK(accuracy(predict_labels(stack, X_test), y_test) >= worst_base);
}

TEST_CASE("stack spec validation") {
  StackSpec spec = dt_stack(1);
  spec.fold_count = 1;
  CHECK_THROWS_AS(spec.validate(), InvalidSpec);
  spec.fold_count = 5;
  spec.meta_spec.family = ModelFamily::DecisionTree;
  CHECK_THROWS_AS(spec.validate(), InvalidSpec);
  spec.meta_spec.family = ModelFamily::RandomForest;
  spec.validate();
  spec.base_configs.resize(1);
  CHECK_THROWS_AS(spec.validate(), InvalidSpec);
}
