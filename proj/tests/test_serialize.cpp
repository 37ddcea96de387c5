#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>

#include "binshield/attacks.hpp"
#include "binshield/ensemble.hpp"
#include "binshield/errors.hpp"
#include "binshield/rng.hpp"
#include "binshield/serialize.hpp"

using namespace binshield;
namespace fs = std::filesystem;

namespace {

void sample_data(Matrix& X, Labels& y, int n = 80, int d = 3, int C = 3) {
  Rng rng(7);
  X.resize(n, d);
  y.clear();
  for (int r = 0; r < n; ++r) {
    const int cls = r % C;
    for (int f = 0; f < d; ++f) X(r, f) = rng.normal(2.5 * cls, 0.8);
    y.push_back(cls);
  }
}

}  // namespace

TEST_CASE("reals survive the text round trip bit-exactly") {
  Rng rng(1);
  for (int i = 0; i < 200; ++i) {
    const Real v = rng.normal(0, 1) * std::pow(10.0, rng.uniform(-12, 12));
    CHECK(parse_real(format_real(v)) == v);
  }
  CHECK(parse_real(format_real(0.0)) == 0.0);
  CHECK_THROWS_AS(parse_real("12x"), IoError);
}

TEST_CASE("schemes round trip through their text format") {
  Matrix X;
  Labels y;
  sample_data(X, y);
  for (const auto& scheme :
       {fit_equal_width(X, 7, Encoding::OneHot), fit_equal_frequency(X, 5, Encoding::BinIndex),
        fit_mdlp(X, y, Encoding::BinMidpoint), fit_entropy_bins(X, y, 6, Encoding::OneHot)}) {
    const std::string text = scheme_to_text(scheme);
    const DiscretizationScheme back = scheme_from_text(text);
    CHECK(back.method == scheme.method);
    CHECK(back.encoding == scheme.encoding);
    REQUIRE(back.feature_count() == scheme.feature_count());
    for (int f = 0; f < scheme.feature_count(); ++f) {
      CHECK(back.features[size_t(f)].cuts == scheme.features[size_t(f)].cuts);
      CHECK(back.features[size_t(f)].train_min == scheme.features[size_t(f)].train_min);
      CHECK(back.features[size_t(f)].train_max == scheme.features[size_t(f)].train_max);
    }
    CHECK(scheme_to_text(back) == text);  // rewriting is byte-stable
    CHECK(apply_scheme(back, X) == apply_scheme(scheme, X));
  }
}

TEST_CASE("models of every family round trip and predict identically") {
  Matrix X;
  Labels y;
  sample_data(X, y);
  for (ModelFamily family : {ModelFamily::DecisionTree, ModelFamily::RandomForest,
                             ModelFamily::LogisticRegression, ModelFamily::Feedforward}) {
    ModelSpec spec;
    spec.family = family;
    spec.tree_count = 8;
    spec.epoch_count = 20;
    spec.seed = 9;
    const TrainedModel model = train(spec, X, y);
    const std::string text = model_to_text(model);
    const TrainedModel back = model_from_text(text);
    CHECK(back.input_dim == model.input_dim);
    CHECK(back.class_count == model.class_count);
    CHECK(back.spec.family == family);
    CHECK(model_to_text(back) == text);
    CHECK(predict_proba(back, X) == predict_proba(model, X));
  }
}

TEST_CASE("standardizer round trips") {
  Matrix X;
  Labels y;
  sample_data(X, y);
  const Standardizer scaler = Standardizer::fit(X);
  const Standardizer back = standardizer_from_text(standardizer_to_text(scaler));
  CHECK(back.mean == scaler.mean);
  CHECK(back.stddev == scaler.stddev);
}

TEST_CASE("adversarial batches round trip through csv with consistent norms") {
  Matrix X;
  Labels y;
  sample_data(X, y, 50, 4, 2);
  const AttackEnvironment env(X, y, FeatureBox::from_data(X), 3, 1);
  AttackSpec attack;
  attack.family = AttackFamily::Fgsm;
  attack.threat = ThreatModel::BlackBox;
  attack.substitute = ModelFamily::LogisticRegression;
  attack.epsilon = 0.05;
  ModelSpec dt;
  dt.family = ModelFamily::DecisionTree;
  const Pipeline target{std::nullopt, train(dt, X, y)};
  const AdversarialBatch batch = craft_attack(target, attack, X, y, env);

  // recorded norms equal recomputed norms
  for (Eigen::Index r = 0; r < batch.original.rows(); ++r) {
    const Real norm = (batch.perturbed.row(r) - batch.original.row(r)).cwiseAbs().maxCoeff();
    CHECK(batch.linf_norms[r] == norm);
  }

  const std::string path = (fs::temp_directory_path() / "binshield_batch.csv").string();
  save_batch_csv(batch, path);
  const AdversarialBatch back = load_batch_csv(path);
  CHECK(back.original == batch.original);
  CHECK(back.perturbed == batch.perturbed);
  CHECK(back.linf_norms == batch.linf_norms);
  CHECK(back.modified_counts == batch.modified_counts);
  CHECK(back.attack_label == batch.attack_label);
  CHECK(back.substitute_id == batch.substitute_id);
  fs::remove(path);
}

TEST_CASE("stacks round trip through their manifest directory") {
  Matrix X;
  Labels y;
  sample_data(X, y, 100, 3, 4);
  ModelSpec base;
  base.family = ModelFamily::DecisionTree;
  base.max_depth = 6;
  StackSpec spec =
      default_stack_spec(ModelFamily::DecisionTree, ModelFamily::LogisticRegression, base, 6, 6);
  spec.fold_count = 4;
  spec.seed = 13;
  const StackedModel stack = fit_stack(spec, X, y);

  const std::string dir = (fs::temp_directory_path() / "binshield_stack").string();
  fs::remove_all(dir);
  save_stack(stack, dir);
  const StackedModel back = load_stack(dir);
  CHECK(back.bases.size() == stack.bases.size());
  CHECK(back.class_count == stack.class_count);
  CHECK(predict_proba(back, X) == predict_proba(stack, X));
  fs::remove_all(dir);
}

TEST_CASE("artifact loaders reject foreign tags") {
  CHECK_THROWS_AS(scheme_from_text("binshield/model/v1\n"), IoError);
  CHECK_THROWS_AS(model_from_text("binshield/scheme/v1\n"), IoError);
  CHECK_THROWS_AS(standardizer_from_text("not an artifact"), IoError);
}
