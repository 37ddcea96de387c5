#include "binshield/ensemble.hpp"

#include <algorithm>
#include <numeric>

#include "binshield/errors.hpp"
#include "binshield/rng.hpp"

namespace binshield {

void StackSpec::validate() const {
  if (base_configs.size() < 2) throw InvalidSpec("stack needs at least two base configs");
  if (fold_count < 2) throw InvalidSpec("fold_count must be >= 2");
  if (meta_spec.family != ModelFamily::LogisticRegression &&
      meta_spec.family != ModelFamily::RandomForest)
    throw InvalidSpec("meta-model must be LR (EN-LR) or RF (EN-RF)");
  for (const auto& [disc, model] : base_configs) {
    if (disc.method == BinMethod::None) throw InvalidSpec("stack bases must discretize");
    model.validate();
  }
}

StackSpec default_stack_spec(ModelFamily base_family, ModelFamily meta_family,
                             const ModelSpec& base_defaults, int ew_bins, int ebd_max_bins) {
  StackSpec spec;
  ModelSpec base = base_defaults;
  base.family = base_family;
  DiscretizerSpec ew{BinMethod::EqualWidth, ew_bins, Encoding::OneHot};
  DiscretizerSpec mdl{BinMethod::Mdlp, 0, Encoding::OneHot};
  DiscretizerSpec ebd{BinMethod::EntropyBins, ebd_max_bins, Encoding::OneHot};
  spec.base_configs = {{ew, base}, {mdl, base}, {ebd, base}};
  spec.meta_spec = base_defaults;
  spec.meta_spec.family = meta_family;
  return spec;
}

int StackFitAudit::leakage_violations() const {
  int violations = 0;
  for (size_t i = 0; i < fold_of_sample.size(); ++i) {
    const auto& per_base = fold_base_train_rows[size_t(fold_of_sample[i])];
    for (const auto& rows : per_base)
      if (std::binary_search(rows.begin(), rows.end(), int(i))) ++violations;
  }
  return violations;
}

namespace {

Matrix gather(const Matrix& X, const std::vector<int>& rows) {
  Matrix out(Eigen::Index(rows.size()), X.cols());
  for (size_t i = 0; i < rows.size(); ++i) out.row(Eigen::Index(i)) = X.row(rows[i]);
  return out;
}

Labels gather(const Labels& y, const std::vector<int>& rows) {
  Labels out;
  out.reserve(rows.size());
  for (int r : rows) out.push_back(y[size_t(r)]);
  return out;
}

Pipeline fit_base(const DiscretizerSpec& disc, ModelSpec model_spec, std::uint64_t seed,
                  const Matrix& X, const Labels& y) {
  model_spec.seed = seed;
  Pipeline base;
  base.defense = fit_scheme(disc, X, y);
  base.model = train(model_spec, apply_scheme(*base.defense, X), y);
  return base;
}

}  // namespace

StackedModel fit_stack(const StackSpec& spec, const Matrix& X, const Labels& y) {
  spec.validate();
  if (Eigen::Index(y.size()) != X.rows())
    throw DimensionMismatch("label count does not match row count");
  const int n = int(X.rows());
  const int C = 1 + *std::max_element(y.begin(), y.end());
  const int B = int(spec.base_configs.size());

  // stratified fold assignment, deterministic per seed
  std::vector<std::vector<int>> by_class(static_cast<size_t>(C));
  for (int r = 0; r < n; ++r) by_class[size_t(y[size_t(r)])].push_back(r);
  Rng rng(derive_seed(spec.seed, 0xF01d));
  StackFitAudit audit;
  audit.fold_of_sample.assign(size_t(n), 0);
  for (int c = 0; c < C; ++c) {
    auto& rows = by_class[size_t(c)];
    if (int(rows.size()) < spec.fold_count) throw ClassTooSmall(c);
    rng.shuffle(rows);
    for (size_t i = 0; i < rows.size(); ++i)
      audit.fold_of_sample[size_t(rows[i])] = int(i) % spec.fold_count;
  }
  audit.fold_base_train_rows.assign(size_t(spec.fold_count),
                                    std::vector<std::vector<int>>(size_t(B)));

  // out-of-fold meta features: bases refit per fold (schemes included, since
  // the supervised fitters see labels)
  Matrix meta_features = Matrix::Zero(n, B * C);
  for (int fold = 0; fold < spec.fold_count; ++fold) {
    std::vector<int> train_rows, held_out;
    for (int r = 0; r < n; ++r)
      (audit.fold_of_sample[size_t(r)] == fold ? held_out : train_rows).push_back(r);
    const Matrix X_fit = gather(X, train_rows);
    const Labels y_fit = gather(y, train_rows);
    const Matrix X_out = gather(X, held_out);
    for (int b = 0; b < B; ++b) {
      const auto& [disc, model_spec] = spec.base_configs[size_t(b)];
      const Pipeline base =
          fit_base(disc, model_spec, derive_seed(spec.seed, 100 + std::uint64_t(fold) * 16 + b),
                   X_fit, y_fit);
      const Matrix probs = predict_proba(base, X_out);
      for (size_t i = 0; i < held_out.size(); ++i)
        meta_features.block(held_out[i], b * C, 1, C) = probs.row(Eigen::Index(i));
      audit.fold_base_train_rows[size_t(fold)][size_t(b)] = train_rows;
    }
  }

  StackedModel stack;
  stack.spec = spec;
  stack.class_count = C;
  stack.input_dim = int(X.cols());
  stack.audit = std::move(audit);

  ModelSpec meta_spec = spec.meta_spec;
  meta_spec.seed = derive_seed(spec.seed, 7);
  stack.meta = train(meta_spec, meta_features, y);

  for (int b = 0; b < B; ++b) {
    const auto& [disc, model_spec] = spec.base_configs[size_t(b)];
    stack.bases.push_back(
        fit_base(disc, model_spec, derive_seed(spec.seed, 200 + std::uint64_t(b)), X, y));
  }
  return stack;
}

Matrix stack_meta_features(const StackedModel& model, const Matrix& X) {
  const int C = model.class_count;
  Matrix features(X.rows(), Eigen::Index(model.bases.size()) * C);
  for (size_t b = 0; b < model.bases.size(); ++b)
    features.middleCols(Eigen::Index(b) * C, C) = predict_proba(model.bases[b], X);
  return features;
}

Matrix predict_proba(const StackedModel& model, const Matrix& X) {
  return predict_proba(model.meta, stack_meta_features(model, X));
}

std::vector<int> predict_labels(const StackedModel& model, const Matrix& X) {
  return predict_labels(model.meta, stack_meta_features(model, X));
}

int predict_label(const StackedModel& model, const Vector& x) {
  return predict_labels(model, x.transpose())[0];
}

}  // namespace binshield
