#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "binshield/errors.hpp"
#include "binshield/models.hpp"
#include "binshield/rng.hpp"
#include "binshield/serialize.hpp"
#include "oracles.hpp"

using namespace binshield;

namespace {

// two linearly separable blobs
void make_blobs(int n_per_class, std::uint64_t seed, Matrix& X, Labels& y) {
  Rng rng(seed);
  X.resize(2 * n_per_class, 2);
  y.clear();
  for (int r = 0; r < 2 * n_per_class; ++r) {
    const int cls = r < n_per_class ? 0 : 1;
    X(r, 0) = rng.normal(cls == 0 ? -2.0 : 2.0, 0.4);
    X(r, 1) = rng.normal(cls == 0 ? 1.0 : -1.0, 0.4);
    y.push_back(cls);
  }
}

TrainedModel tiny_lr(const Matrix& W, const Vector& b) {
  TrainedModel model;
  model.spec.family = ModelFamily::LogisticRegression;
  model.input_dim = int(W.cols());
  model.class_count = int(W.rows());
  model.impl = LogisticRegressionModel{W, b};
  return model;
}

}  // namespace

TEST_CASE("logistic regression separates linearly separable blobs") {
  Matrix X;
  Labels y;
  make_blobs(120, 3, X, y);
  ModelSpec spec;
  spec.family = ModelFamily::LogisticRegression;
  spec.epoch_count = 150;
  spec.seed = 5;
  const TrainedModel model = train(spec, X, y);

  Matrix X_test;
  Labels y_test;
  make_blobs(80, 99, X_test, y_test);
  CHECK(accuracy(predict_labels(model, X_test), y_test) >= 0.99);
}

TEST_CASE("decision tree resolves the four-point xor layout") {
  Matrix X(4, 2);
  X << 0, 0, 0, 1, 1, 0, 1, 1;
  const Labels y = {0, 1, 1, 0};
  ModelSpec spec;
  spec.family = ModelFamily::DecisionTree;
  spec.max_depth = 2;
  const TrainedModel model = train(spec, X, y);
  CHECK(predict_labels(model, X) == y);
}

TEST_CASE("degenerate training data is rejected") {
  Matrix X(4, 2);
  X << 1, 2, 3, 4, 5, 6, 7, 8;
  CHECK_THROWS_AS(train(ModelSpec{}, X, {1, 1, 1, 1}), DegenerateData);

  // more classes than samples
  Matrix X2(2, 1);
  X2 << 1, 2;
  ModelSpec spec;
  CHECK_THROWS_AS(train(spec, X2, {0, 2}), DegenerateData);
}

TEST_CASE("probability rows sum to one for every family") {
  Matrix X;
  Labels y;
  make_blobs(60, 8, X, y);
  Matrix probe;
  Labels ignore;
  make_blobs(20, 44, probe, ignore);

  for (ModelFamily family : {ModelFamily::DecisionTree, ModelFamily::RandomForest,
                             ModelFamily::LogisticRegression, ModelFamily::Feedforward}) {
    ModelSpec spec;
    spec.family = family;
    spec.tree_count = 20;
    spec.epoch_count = 30;
    spec.seed = 2;
    const TrainedModel model = train(spec, X, y);
    const Matrix P = predict_proba(model, probe);
    for (Eigen::Index r = 0; r < P.rows(); ++r) {
      CHECK(P.row(r).sum() == doctest::Approx(1.0).epsilon(1e-9));
      CHECK(P.row(r).minCoeff() >= 0.0);
    }
  }
}

TEST_CASE("all-zero logistic weights predict uniform rows") {
  const TrainedModel model = tiny_lr(Matrix::Zero(4, 3), Vector::Zero(4));
  const Matrix P = predict_proba(model, Matrix::Random(5, 3));
  for (Eigen::Index r = 0; r < 5; ++r)
    for (Eigen::Index c = 0; c < 4; ++c) CHECK(P(r, c) == doctest::Approx(0.25));
}

TEST_CASE("pure decision tree leaves emit one-hot probability rows") {
  Matrix X;
  Labels y;
  make_blobs(40, 21, X, y);
  ModelSpec spec;
  spec.family = ModelFamily::DecisionTree;
  const TrainedModel model = train(spec, X, y);
  const Matrix P = predict_proba(model, X);
  for (Eigen::Index r = 0; r < P.rows(); ++r) CHECK(P.row(r).maxCoeff() == doctest::Approx(1.0));
}

TEST_CASE("logistic input gradient matches the hand example") {
  Matrix W(2, 2);
  W << 0, 0, 1, -1;
  const TrainedModel model = tiny_lr(W, Vector::Zero(2));
  const Vector x = Vector::Zero(2);
  const Vector g = input_gradient(model, x, 0);
  CHECK(g[0] == doctest::Approx(0.5));
  CHECK(g[1] == doctest::Approx(-0.5));
  CHECK(oracle::max_relative_error(g, oracle::finite_difference_gradient(model, x, 0)) < 1e-6);
}

TEST_CASE("gradient vanishes when the correct class has probability one") {
  Matrix W(2, 2);
  W << 50, 0, -50, 0;
  const TrainedModel model = tiny_lr(W, Vector::Zero(2));
  Vector x(2);
  x << 5, 0;  // class 0 logit 250, class 1 logit -250
  const Vector g = input_gradient(model, x, 0);
  CHECK(g.cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("tree families have no input gradient") {
  Matrix X;
  Labels y;
  make_blobs(30, 1, X, y);
  ModelSpec spec;
  spec.family = ModelFamily::RandomForest;
  spec.tree_count = 3;
  const TrainedModel forest = train(spec, X, y);
  CHECK_THROWS_AS(input_gradient(forest, Vector::Zero(2), 0), NotDifferentiable);
  CHECK_THROWS_AS(proba_jacobian(forest, Vector::Zero(2)), NotDifferentiable);
}

TEST_CASE("analytic gradients match central finite differences") {
  Rng rng(77);
  for (int trial = 0; trial < 20; ++trial) {
    const int d = 2 + rng.uniform_int(6);
    const int C = 2 + rng.uniform_int(3);
    const int n = 30 + C;
    Matrix X(n, d);
    Labels y;
    for (int r = 0; r < n; ++r) {
      const int cls = r % C;
      for (int f = 0; f < d; ++f) X(r, f) = rng.normal(Real(cls), 1.0);
      y.push_back(cls);
    }
    ModelSpec spec;
    spec.family = trial % 2 == 0 ? ModelFamily::LogisticRegression : ModelFamily::Feedforward;
    spec.hidden_layer_widths = {8};
    spec.epoch_count = 15;
    spec.seed = 1000 + std::uint64_t(trial);
    const TrainedModel model = train(spec, X, y);

    Vector x(d);
    for (int f = 0; f < d; ++f) x[f] = rng.normal(0, 1.5);
    const int target = rng.uniform_int(C);
    const Vector analytic = input_gradient(model, x, target);
    const Vector numeric = oracle::finite_difference_gradient(model, x, target);
    CHECK(oracle::max_relative_error(analytic, numeric) < 1e-4);
  }
}

TEST_CASE("probability jacobian matches finite differences") {
  Matrix X;
  Labels y;
  make_blobs(50, 4, X, y);
  ModelSpec spec;
  spec.family = ModelFamily::Feedforward;
  spec.hidden_layer_widths = {12};
  spec.epoch_count = 25;
  spec.seed = 3;
  const TrainedModel model = train(spec, X, y);
  Rng rng(12);
  for (int trial = 0; trial < 5; ++trial) {
    Vector x(2);
    x << rng.normal(0, 2), rng.normal(0, 2);
    const Matrix J = proba_jacobian(model, x);
    const Matrix J_fd = oracle::finite_difference_jacobian(model, x);
    CHECK((J - J_fd).cwiseAbs().maxCoeff() < 1e-5);
  }
}

TEST_CASE("training is deterministic per spec") {
  Matrix X;
  Labels y;
  make_blobs(50, 10, X, y);
  for (ModelFamily family : {ModelFamily::RandomForest, ModelFamily::LogisticRegression,
                             ModelFamily::Feedforward}) {
    ModelSpec spec;
    spec.family = family;
    spec.tree_count = 10;
    spec.epoch_count = 20;
    spec.seed = 42;
    const TrainedModel a = train(spec, X, y);
    const TrainedModel b = train(spec, X, y);
    CHECK(model_to_text(a) == model_to_text(b));
  }
}

TEST_CASE("single-tree forest without resampling matches the tree") {
  Matrix X;
  Labels y;
  make_blobs(60, 15, X, y);
  ModelSpec tree_spec;
  tree_spec.family = ModelFamily::DecisionTree;
  ModelSpec forest_spec = tree_spec;
  forest_spec.family = ModelFamily::RandomForest;
  forest_spec.tree_count = 1;
  forest_spec.bootstrap = false;
  forest_spec.feature_subsample = 2;  // all features

  Matrix probe;
  Labels ignore;
  make_blobs(40, 91, probe, ignore);
  CHECK(predict_proba(train(forest_spec, X, y), probe) ==
        predict_proba(train(tree_spec, X, y), probe));
}

TEST_CASE("full-batch logistic training loss is non-increasing") {
  Matrix X;
  Labels y;
  make_blobs(40, 33, X, y);
  ModelSpec spec;
  spec.family = ModelFamily::LogisticRegression;
  spec.batch_size = 1000000;  // full batch
  spec.learning_rate = 0.2;
  spec.epoch_count = 60;
  const TrainedModel model = train(spec, X, y);
  REQUIRE(model.training_loss.size() == 60);
  for (size_t e = 1; e < model.training_loss.size(); ++e)
    CHECK(model.training_loss[e] <= model.training_loss[e - 1] + 1e-9);
}

TEST_CASE("diverged training reports a non-finite loss") {
  Matrix X;
  Labels y;
  make_blobs(30, 2, X, y);
  ModelSpec spec;
  spec.family = ModelFamily::LogisticRegression;
  // step far above the curvature of the l2 term: updates grow geometrically
  spec.learning_rate = 10.0;
  spec.l2_penalty = 1e4;
  spec.batch_size = 8;
  spec.epoch_count = 100;
  CHECK_THROWS_AS(train(spec, X, y), NonFiniteLoss);
}

TEST_CASE("prediction validates input width") {
  Matrix X;
  Labels y;
  make_blobs(30, 6, X, y);
  const TrainedModel model = train(ModelSpec{}, X, y);
  CHECK_THROWS_AS(predict_proba(model, Matrix(2, 5)), DimensionMismatch);
}

TEST_CASE("standardizer centers and scales train data") {
  Matrix X;
  Labels y;
  make_blobs(100, 14, X, y);
  const Standardizer scaler = Standardizer::fit(X);
  const Matrix Z = scaler.apply(X);
  for (int f = 0; f < 2; ++f) {
    CHECK(Z.col(f).mean() == doctest::Approx(0.0).epsilon(1e-9));
    CHECK((Z.col(f).array().square().mean()) == doctest::Approx(1.0).epsilon(1e-9));
  }
  // constant columns pass through unchanged
  Matrix C = Matrix::Constant(10, 1, 7.0);
  const Standardizer s2 = Standardizer::fit(C);
  CHECK(s2.apply(C) == Matrix::Zero(10, 1));
}
