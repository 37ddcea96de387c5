#include "binshield/discretize.hpp"
#include "binshield/errors.hpp"
#include "binshield/evaluate.hpp"
#include "binshield/rng.hpp"

namespace binshield {

BinSearchReport search_bin_count(const Dataset& train, const Dataset& validation,
                                 const ModelSpec& model, const AttackSpec& attack,
                                 std::pair<int, int> k_range, Real clean_tolerance,
                                 Encoding encoding) {
  if (k_range.first < 1 || k_range.second < k_range.first)
    throw InvalidSpec("bin count range must satisfy 1 <= lo <= hi");
  attack.validate();

  const Standardizer scaler = Standardizer::fit(train.features);
  const Matrix train_X = scaler.apply(train.features);
  const Matrix val_X = scaler.apply(validation.features);
  const FeatureBox box = FeatureBox::from_data(train_X);
  const AttackEnvironment env(train_X, train.labels, box, derive_seed(attack.seed, 0x5ea),
                              1);

  // straight-through white-box gradients need the midpoint encoding
  const Encoding fit_encoding =
      attack.threat == ThreatModel::WhiteBox ? Encoding::BinMidpoint : encoding;

  BinSearchReport report;
  for (int k = k_range.first; k <= k_range.second; ++k) {
    Pipeline pipeline;
    pipeline.defense = fit_equal_width(train_X, k, fit_encoding);
    pipeline.model = binshield::train(model, apply_scheme(*pipeline.defense, train_X), train.labels);
    const DefendedClassifier target = std::move(pipeline);

    BinSearchReport::Row row;
    row.k = k;
    row.acc_clean = accuracy(predict_labels(target, val_X), validation.labels);
    const AdversarialBatch batch =
        craft_attack(target, attack, val_X, validation.labels, env);
    row.acc_adv = accuracy(predict_labels(target, batch.perturbed), validation.labels);
    row.rm = robustness_measure(row.acc_clean, row.acc_adv);
    report.rows.push_back(row);
  }

  // smallest k that minimizes RM among those within clean_tolerance of the best
  Real best_clean = 0.0;
  for (const auto& row : report.rows) best_clean = std::max(best_clean, row.acc_clean);
  int selected = -1;
  for (int i = 0; i < int(report.rows.size()); ++i) {
    const auto& row = report.rows[size_t(i)];
    if (row.acc_clean + 1e-12 < best_clean - clean_tolerance) continue;
    if (selected < 0 || row.rm < report.rows[size_t(selected)].rm - 1e-12) selected = i;
  }
  report.selected_k = report.rows[size_t(selected)].k;
  return report;
}

}  // namespace binshield
