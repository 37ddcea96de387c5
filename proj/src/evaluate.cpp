#include "binshield/evaluate.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>

#include "binshield/errors.hpp"
#include "binshield/rng.hpp"

namespace binshield {

Real robustness_measure(Real acc_clean, Real acc_adv) {
  if (!(acc_clean > 0.0)) throw ZeroCleanAccuracy();
  return std::abs(acc_clean - acc_adv) / acc_clean;
}

std::string to_string(DefenseKind k) {
  switch (k) {
    case DefenseKind::None: return "none";
    case DefenseKind::EqualWidth: return "EW";
    case DefenseKind::EqualFrequency: return "EF";
    case DefenseKind::Mdl: return "MDL";
    case DefenseKind::Ebd: return "EBD";
    case DefenseKind::StackLr: return "EN-LR";
    case DefenseKind::StackRf: return "EN-RF";
  }
  return "?";
}

void ExperimentConfig::validate() const {
  if (bool(csv_path) == bool(synth))
    throw ConfigInvalid("exactly one dataset source (csv or synthetic) is required");
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw ConfigInvalid("train_fraction must lie in (0,1)");
  if (families.empty()) throw ConfigInvalid("families list must be non-empty");
  if (defenses.empty()) throw ConfigInvalid("defenses list must be non-empty");
  if (attacks.empty()) throw ConfigInvalid("attacks list must be non-empty");
  if (!family_specs.empty() && family_specs.size() != families.size())
    throw ConfigInvalid("family_specs must align with families");
  if (stack_fold_count < 2) throw ConfigInvalid("stack fold_count must be >= 2");
  if (stack_bases.size() < 2) throw ConfigInvalid("stack needs at least two bases");
  if (threads < 1) throw ConfigInvalid("threads must be >= 1");
  for (const auto& attack : attacks) attack.validate();
}

Matrix predict_proba(const DefendedClassifier& c, const Matrix& X) {
  return std::visit([&](const auto& m) { return predict_proba(m, X); }, c);
}

std::vector<int> predict_labels(const DefendedClassifier& c, const Matrix& X) {
  return std::visit([&](const auto& m) { return predict_labels(m, X); }, c);
}

AdversarialBatch craft_attack(const DefendedClassifier& c, const AttackSpec& spec,
                              const Matrix& X, const Labels& y, const AttackEnvironment& env) {
  return std::visit([&](const auto& m) { return craft_attack(m, spec, X, y, env); }, c);
}

namespace {

long long elapsed_ms(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() -
                                                               start)
      .count();
}

EvaluationRecord measure(const DefendedClassifier& classifier, const AttackSpec& attack,
                         const Matrix& X_test, const Labels& y_test,
                         const AdversarialBatch& batch) {
  EvaluationRecord record;
  record.attack = attack.label();
  record.threat = to_string(attack.threat);
  record.substitute = batch.substitute_id;
  record.acc_clean = accuracy(predict_labels(classifier, X_test), y_test);
  record.acc_adv = accuracy(predict_labels(classifier, batch.perturbed), y_test);
  record.rm = robustness_measure(record.acc_clean, record.acc_adv);
  return record;
}

}  // namespace

EvaluationRecord evaluate_under_attack(const DefendedClassifier& pipeline,
                                       const AttackSpec& attack, const Matrix& X_test,
                                       const Labels& y_test, const AttackEnvironment& env) {
  const auto start = std::chrono::steady_clock::now();
  const AdversarialBatch batch = craft_attack(pipeline, attack, X_test, y_test, env);
  EvaluationRecord record = measure(pipeline, attack, X_test, y_test, batch);
  record.wall_ms = elapsed_ms(start);
  return record;
}

GridContext prepare_grid_context(const ExperimentConfig& config) {
  config.validate();
  GridContext ctx;
  Dataset full = config.csv_path ? load_csv(*config.csv_path, config.csv_schema)
                                 : generate_synthetic(*config.synth);
  auto [train, test] = stratified_split(full, config.train_fraction, derive_seed(config.seed, 2));
  ctx.train_raw = std::move(train);
  ctx.test_raw = std::move(test);
  ctx.scaler = Standardizer::fit(ctx.train_raw.features);
  ctx.train_X = ctx.scaler.apply(ctx.train_raw.features);
  ctx.test_X = ctx.scaler.apply(ctx.test_raw.features);
  ctx.box = FeatureBox::from_data(ctx.train_X);
  return ctx;
}

CellPlan plan_cell(ModelFamily family, const DefenseSpec& defense, const AttackSpec& attack) {
  const bool family_differentiable = family == ModelFamily::LogisticRegression ||
                                     family == ModelFamily::Feedforward;
  CellPlan plan;
  plan.target_encoding = defense.encoding;
  switch (attack.threat) {
    case ThreatModel::BlackBox:
      return plan;
    case ThreatModel::WhiteBoxTransfer:
      if (!family_differentiable) {
        plan.applicable = false;
        plan.reason = "transfer twin for " + to_string(family) + " is not differentiable";
      }
      return plan;
    case ThreatModel::WhiteBox:
      if (defense.is_stack()) {
        plan.applicable = false;
        plan.reason = "stacked ensemble has no end-to-end gradients";
        return plan;
      }
      if (!family_differentiable) {
        plan.applicable = false;
        plan.reason = to_string(family) + " is not differentiable";
        return plan;
      }
      // straight-through gradients quantize forward through midpoints
      if (defense.kind != DefenseKind::None) plan.target_encoding = Encoding::BinMidpoint;
      return plan;
  }
  return plan;
}

namespace {

DiscretizerSpec single_defense_spec(const DefenseSpec& defense, Encoding encoding) {
  DiscretizerSpec disc;
  disc.bins = defense.bins;
  disc.encoding = encoding;
  switch (defense.kind) {
    case DefenseKind::EqualWidth: disc.method = BinMethod::EqualWidth; break;
    case DefenseKind::EqualFrequency: disc.method = BinMethod::EqualFrequency; break;
    case DefenseKind::Mdl: disc.method = BinMethod::Mdlp; break;
    case DefenseKind::Ebd: disc.method = BinMethod::EntropyBins; break;
    default: throw ConfigInvalid("not a single-discretizer defense");
  }
  return disc;
}

// Deterministic seeds per grid cell component.
std::uint64_t cell_stream(int family_idx, int defense_idx, int encoding_idx) {
  return 1000 + std::uint64_t(family_idx) * 512 + std::uint64_t(defense_idx) * 8 +
         std::uint64_t(encoding_idx);
}

struct GridRunner {
  const ExperimentConfig& config;
  GridContext& ctx;
  AttackEnvironment env;
  std::map<std::tuple<int, int, int>, DefendedClassifier> classifiers;
  std::map<std::tuple<int, int, int>, std::pair<Real, std::vector<int>>> clean_cache;
  std::map<int, AdversarialBatch> black_batches;
  std::map<std::pair<int, int>, AdversarialBatch> transfer_batches;

  GridRunner(const ExperimentConfig& cfg, GridContext& context)
      : config(cfg),
        ctx(context),
        env(context.train_X, context.train_raw.labels, context.box,
            derive_seed(cfg.seed, 3), cfg.threads) {}

  ModelSpec family_spec(int family_idx) const {
    ModelSpec spec = config.family_specs.empty() ? ModelSpec{} : config.family_specs[size_t(family_idx)];
    spec.family = config.families[size_t(family_idx)];
    return spec;
  }

  int defense_bins(DefenseKind kind, int fallback) const {
    for (const auto& d : config.defenses)
      if (d.kind == kind) return d.bins;
    return fallback;
  }

  const DefendedClassifier& classifier(int family_idx, int defense_idx, Encoding encoding) {
    const auto key = std::make_tuple(family_idx, defense_idx, int(encoding));
    auto it = classifiers.find(key);
    if (it != classifiers.end()) return it->second;

    const DefenseSpec& defense = config.defenses[size_t(defense_idx)];
    ModelSpec spec = family_spec(family_idx);
    spec.seed = derive_seed(config.seed, cell_stream(family_idx, defense_idx, int(encoding)));

    DefendedClassifier built = Pipeline{};
    if (defense.kind == DefenseKind::None) {
      built = Pipeline{std::nullopt, train(spec, ctx.train_X, ctx.train_raw.labels)};
    } else if (defense.is_stack()) {
      StackSpec stack_spec;
      for (DefenseKind base_kind : config.stack_bases) {
        DefenseSpec base_defense;
        base_defense.kind = base_kind;
        base_defense.bins = defense_bins(base_kind, defense.bins);
        stack_spec.base_configs.emplace_back(
            single_defense_spec(base_defense, Encoding::OneHot), spec);
      }
      stack_spec.meta_spec = family_spec(family_idx);
      stack_spec.meta_spec.family = defense.kind == DefenseKind::StackLr
                                        ? ModelFamily::LogisticRegression
                                        : ModelFamily::RandomForest;
      stack_spec.fold_count = config.stack_fold_count;
      stack_spec.seed = derive_seed(config.seed, 5000 + cell_stream(family_idx, defense_idx, 0));
      built = fit_stack(stack_spec, ctx.train_X, ctx.train_raw.labels);
    } else {
      Pipeline p;
      p.defense = fit_scheme(single_defense_spec(defense, encoding), ctx.train_X,
                             ctx.train_raw.labels);
      p.model = train(spec, apply_scheme(*p.defense, ctx.train_X), ctx.train_raw.labels);
      built = std::move(p);
    }
    return classifiers.emplace(key, std::move(built)).first->second;
  }

  const std::pair<Real, std::vector<int>>& clean_of(int family_idx, int defense_idx,
                                                    Encoding encoding) {
    const auto key = std::make_tuple(family_idx, defense_idx, int(encoding));
    auto it = clean_cache.find(key);
    if (it != clean_cache.end()) return it->second;
    const DefendedClassifier& c = classifier(family_idx, defense_idx, encoding);
    std::vector<int> predictions = predict_labels(c, ctx.test_X);
    const Real acc = accuracy(predictions, ctx.test_raw.labels);
    return clean_cache.emplace(key, std::make_pair(acc, std::move(predictions))).first->second;
  }

  const AdversarialBatch& batch_for(int family_idx, int attack_idx) {
    const AttackSpec& attack = config.attacks[size_t(attack_idx)];
    if (attack.threat == ThreatModel::BlackBox) {
      auto it = black_batches.find(attack_idx);
      if (it == black_batches.end()) {
        const TrainedModel& sub = env.substitute(attack.substitute);
        it = black_batches
                 .emplace(attack_idx,
                          craft_with_source(GradientSource(sub), attack, ctx.test_X,
                                            ctx.test_raw.labels, env.box(), env.threads(),
                                            family_short_name(attack.substitute)))
                 .first;
      }
      return it->second;
    }
    if (attack.threat == ThreatModel::WhiteBoxTransfer) {
      const auto key = std::make_pair(attack_idx, family_idx);
      auto it = transfer_batches.find(key);
      if (it == transfer_batches.end()) {
        const TrainedModel& twin = env.substitute(config.families[size_t(family_idx)]);
        it = transfer_batches
                 .emplace(key, craft_with_source(GradientSource(twin), attack, ctx.test_X,
                                                 ctx.test_raw.labels, env.box(), env.threads(),
                                                 "twin:" + family_short_name(twin.spec.family)))
                 .first;
      }
      return it->second;
    }
    throw ConfigInvalid("white-box batches are per-cell");
  }

  std::vector<EvaluationRecord> run() {
    std::vector<EvaluationRecord> records;
    for (int fi = 0; fi < int(config.families.size()); ++fi) {
      const ModelFamily family = config.families[size_t(fi)];
      for (int di = 0; di < int(config.defenses.size()); ++di) {
        const DefenseSpec& defense = config.defenses[size_t(di)];
        for (int ai = 0; ai < int(config.attacks.size()); ++ai) {
          const AttackSpec& attack = config.attacks[size_t(ai)];
          EvaluationRecord record;
          record.family = to_string(family);
          record.defense = to_string(defense.kind);
          record.attack = attack.label();
          record.threat = to_string(attack.threat);
          record.seed = config.seed;
          const auto start = std::chrono::steady_clock::now();

          const CellPlan plan = plan_cell(family, defense, attack);
          if (!plan.applicable) {
            record.status = "not-applicable";
            record.note = plan.reason;
            record.wall_ms = elapsed_ms(start);
            records.push_back(std::move(record));
            continue;
          }
          try {
            const DefendedClassifier& target = classifier(fi, di, plan.target_encoding);
            const auto& [acc_clean, clean_pred] = clean_of(fi, di, plan.target_encoding);
            const AdversarialBatch* batch = nullptr;
            AdversarialBatch local;
            if (attack.threat == ThreatModel::WhiteBox) {
              local = craft_attack(target, attack, ctx.test_X, ctx.test_raw.labels, env);
              batch = &local;
            } else {
              batch = &batch_for(fi, ai);
            }
            record.substitute = batch->substitute_id;
            record.acc_clean = acc_clean;
            record.acc_adv =
                accuracy(predict_labels(target, batch->perturbed), ctx.test_raw.labels);
            record.rm = robustness_measure(record.acc_clean, record.acc_adv);
          } catch (const Error& e) {
            record.status = "error";
            record.note = e.kind();
          }
          record.wall_ms = elapsed_ms(start);
          records.push_back(std::move(record));
        }
      }
    }
    return records;
  }
};

}  // namespace

std::vector<EvaluationRecord> run_grid(const ExperimentConfig& config, GridContext& ctx) {
  config.validate();
  GridRunner runner(config, ctx);
  return runner.run();
}

std::vector<EvaluationRecord> run_grid(const ExperimentConfig& config) {
  GridContext ctx = prepare_grid_context(config);
  return run_grid(config, ctx);
}

}  // namespace binshield
