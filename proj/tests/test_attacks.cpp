#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <set>

#include "binshield/attacks.hpp"
#include "binshield/errors.hpp"
#include "binshield/rng.hpp"
#include "oracles.hpp"

using namespace binshield;

namespace {

TrainedModel tiny_lr(const Matrix& W, const Vector& b) {
  TrainedModel model;
  model.spec.family = ModelFamily::LogisticRegression;
  model.input_dim = int(W.cols());
  model.class_count = int(W.rows());
  model.impl = LogisticRegressionModel{W, b};
  return model;
}

void gaussian_classes(int n, int d, int C, std::uint64_t seed, Matrix& X, Labels& y,
                      Real spread = 2.0) {
  Rng rng(seed);
  X.resize(n, d);
  y.clear();
  for (int r = 0; r < n; ++r) {
    const int cls = r % C;
    for (int f = 0; f < d; ++f) X(r, f) = rng.normal(spread * cls * ((f % 2) ? -1.0 : 1.0), 1.0);
    y.push_back(cls);
  }
}

TrainedModel small_trained(ModelFamily family, int d, int C, std::uint64_t seed) {
  Matrix X;
  Labels y;
  gaussian_classes(40 + 4 * C, d, C, seed, X, y);
  ModelSpec spec;
  spec.family = family;
  spec.hidden_layer_widths = {10};
  spec.epoch_count = 25;
  spec.seed = seed;
  return train(spec, X, y);
}

}  // namespace

TEST_CASE("fgsm moves each coordinate by epsilon along the gradient sign") {
  Matrix W(2, 2);
  W << 0, 0, 2, -0.5;  // gradient for y=0 is p1 * (w1 - w0), signs (+, -)
  const TrainedModel model = tiny_lr(W, Vector::Zero(2));
  Vector x(2);
  x << 0.3, 0.7;
  const Vector adv = fgsm_perturb(model, x, 0, 0.01);
  CHECK(adv[0] == doctest::Approx(0.31));
  CHECK(adv[1] == doctest::Approx(0.69));

  SUBCASE("a zero-gradient coordinate stays put") {
    Matrix W2(2, 2);
    W2 << 0, 0, 2, 0;  // second input column dead
    const TrainedModel m2 = tiny_lr(W2, Vector::Zero(2));
    const Vector adv2 = fgsm_perturb(m2, x, 0, 0.01);
    CHECK(adv2[0] == doctest::Approx(0.31));
    CHECK(adv2[1] == x[1]);
  }
  SUBCASE("epsilon zero is the identity") {
    CHECK(fgsm_perturb(model, x, 0, 0.0) == x);
  }
}

TEST_CASE("bim with one iteration and alpha=epsilon equals fgsm") {
  const TrainedModel model = small_trained(ModelFamily::LogisticRegression, 4, 3, 5);
  Rng rng(6);
  for (int trial = 0; trial < 25; ++trial) {
    Vector x(4);
    for (int f = 0; f < 4; ++f) x[f] = rng.normal(0, 2);
    const int y = rng.uniform_int(3);
    CHECK(bim_perturb(model, x, y, 0.05, 0.05, 1) == fgsm_perturb(model, x, y, 0.05));
  }
}

TEST_CASE("bim stays inside the epsilon ball at the default budget") {
  const TrainedModel model = small_trained(ModelFamily::Feedforward, 5, 3, 9);
  Rng rng(10);
  for (int trial = 0; trial < 30; ++trial) {
    Vector x(5);
    for (int f = 0; f < 5; ++f) x[f] = rng.normal(0, 1.5);
    const Vector adv = bim_perturb(model, x, rng.uniform_int(3), 0.01, 0.001, 100);
    CHECK((adv - x).cwiseAbs().maxCoeff() <= 0.01 + 1e-12);
  }
}

TEST_CASE("bim reaches misclassification at the iteration the oracle loop predicts") {
  Matrix W(2, 1);
  W << 1.0, -1.0;  // boundary at x=0, class 0 for x>0
  const TrainedModel model = tiny_lr(W, Vector::Zero(2));
  Vector x(1);
  x << 0.0031;
  const Real eps = 0.01, alpha = 0.001;

  // independent loop: gradient sign for y=0 pushes x down by alpha each step
  int first_misclass = -1;
  Real position = x[0];
  for (int t = 1; t <= 100; ++t) {
    position -= alpha;
    if (position <= 0.0) {
      first_misclass = t;
      break;
    }
  }
  REQUIRE(first_misclass == 4);

  const GradientSource src(model);
  for (int budget = 1; budget < first_misclass; ++budget) {
    const Vector adv = bim_perturb(model, x, 0, eps, alpha, budget);
    CHECK(src.predict(adv) == 0);
  }
  const Vector adv = bim_perturb(model, x, 0, eps, alpha, first_misclass);
  CHECK(src.predict(adv) == 1);
}

TEST_CASE("bim at alpha=epsilon never loses to fgsm on the source") {
  const TrainedModel model = small_trained(ModelFamily::LogisticRegression, 6, 4, 21);
  const GradientSource src(model);
  Rng rng(22);
  for (int trial = 0; trial < 40; ++trial) {
    Vector x(6);
    for (int f = 0; f < 6; ++f) x[f] = rng.normal(0, 1.5);
    const int y = rng.uniform_int(4);
    const Vector fgsm = fgsm_perturb(model, x, y, 0.02);
    const Vector bim = bim_perturb(model, x, y, 0.02, 0.02, 10);
    const bool bim_misclassifies = src.predict(bim) != y;
    CHECK((bim_misclassifies || src.loss(bim, y) >= src.loss(fgsm, y) - 1e-9));
  }
}

TEST_CASE("jsma modifies at most floor(gamma*d) distinct features") {
  const TrainedModel model = small_trained(ModelFamily::Feedforward, 7, 4, 33);
  Rng rng(34);
  for (int trial = 0; trial < 20; ++trial) {
    Vector x(7);
    for (int f = 0; f < 7; ++f) x[f] = rng.normal(0, 1.5);
    const Vector adv = jsma_perturb(model, x, rng.uniform_int(4), 0.01, 0.4, 100);
    int changed = 0;
    for (int f = 0; f < 7; ++f) changed += adv[f] != x[f] ? 1 : 0;
    CHECK(changed <= 2);  // floor(0.4 * 7)
  }
}

TEST_CASE("jsma returns an already-target input unchanged") {
  const TrainedModel model = small_trained(ModelFamily::LogisticRegression, 3, 3, 40);
  Vector x(3);
  x << 1.0, -0.5, 0.25;
  const int predicted = predict_label(model, x);
  CHECK(jsma_perturb(model, x, 0, 0.1, 1.0, 50, nullptr, predicted) == x);
}

TEST_CASE("jsma saliency picks the feature the finite-difference oracle picks") {
  Matrix W(2, 2);
  W << 0.1, 0.0, 3.0, 0.05;  // feature 0 strongly drives class 1
  const TrainedModel model = tiny_lr(W, Vector::Zero(2));
  Vector x(2);
  x << 0.0, 0.0;
  REQUIRE(predict_label(model, x) == 0);

  // cap of 1 feature (gamma 0.5, d=2) forces the singleton rule
  const Vector adv = jsma_perturb(model, x, 0, 0.01, 0.5, 1, nullptr, 1);
  CHECK(adv[0] == doctest::Approx(0.01));
  CHECK(adv[1] == x[1]);

  const Matrix J = oracle::finite_difference_jacobian(model, x);
  Real best_score = 0.0;
  int best_feature = -1;
  for (int f = 0; f < 2; ++f) {
    const Real toward = J(1, f);
    const Real away = J(0, f);
    if (toward > 0 && away < 0 && -toward * away > best_score) {
      best_score = -toward * away;
      best_feature = f;
    }
  }
  CHECK(best_feature == 0);
}

TEST_CASE("budget and clamp soundness over randomized cases") {
  Rng rng(50);
  for (int trial = 0; trial < 15; ++trial) {
    const int d = 3 + rng.uniform_int(5);
    const int C = 2 + rng.uniform_int(3);
    const TrainedModel model = small_trained(
        trial % 2 ? ModelFamily::LogisticRegression : ModelFamily::Feedforward, d, C,
        600 + std::uint64_t(trial));
    FeatureBox box;
    box.lo = Vector::Constant(d, -2.0);
    box.hi = Vector::Constant(d, 2.0);
    for (int s = 0; s < 10; ++s) {
      Vector x(d);
      for (int f = 0; f < d; ++f) x[f] = rng.uniform(-2, 2);
      const int y = rng.uniform_int(C);
      const Real eps = rng.uniform(0.0, 0.5);
      const Vector fgsm = fgsm_perturb(model, x, y, eps, &box);
      CHECK((fgsm - x).cwiseAbs().maxCoeff() <= eps + 1e-12);
      CHECK((fgsm.array() >= box.lo.array() - 1e-15).all());
      CHECK((fgsm.array() <= box.hi.array() + 1e-15).all());
      const Vector bim = bim_perturb(model, x, y, eps, eps / 4 + 1e-9, 20, &box);
      CHECK((bim - x).cwiseAbs().maxCoeff() <= eps + 1e-12);
      CHECK((bim.array() >= box.lo.array() - 1e-15).all());
      CHECK((bim.array() <= box.hi.array() + 1e-15).all());
    }
  }
}

TEST_CASE("crafting is deterministic") {
  Matrix X;
  Labels y;
  gaussian_classes(60, 4, 3, 77, X, y);
  ModelSpec spec;
  spec.family = ModelFamily::DecisionTree;
  const Pipeline target{std::nullopt, train(spec, X, y)};
  const AttackEnvironment env(X, y, FeatureBox::from_data(X), 9, 2);
  AttackSpec attack;
  attack.family = AttackFamily::Bim;
  attack.threat = ThreatModel::BlackBox;
  attack.substitute = ModelFamily::LogisticRegression;
  attack.epsilon = 0.05;
  attack.alpha = 0.01;
  const AdversarialBatch a = craft_attack(target, attack, X, y, env);
  const AdversarialBatch b = craft_attack(target, attack, X, y, env);
  CHECK(a.perturbed == b.perturbed);
  CHECK(a.substitute_id == "LR");
  CHECK(a.attack_label == "BIM LR");
}

TEST_CASE("white-box crafting against trees is refused") {
  Matrix X;
  Labels y;
  gaussian_classes(40, 3, 2, 81, X, y);
  ModelSpec spec;
  spec.family = ModelFamily::RandomForest;
  spec.tree_count = 5;
  const Pipeline target{std::nullopt, train(spec, X, y)};
  const AttackEnvironment env(X, y, FeatureBox::from_data(X), 5, 1);
  AttackSpec attack;
  attack.threat = ThreatModel::WhiteBox;
  CHECK_THROWS_AS(craft_attack(target, attack, X, y, env), NotDifferentiable);
  // transfer mode needs a differentiable twin of the same family
  attack.threat = ThreatModel::WhiteBoxTransfer;
  CHECK_THROWS_AS(craft_attack(target, attack, X, y, env), NotDifferentiable);
}

TEST_CASE("white-box epsilon zero leaves accuracy untouched") {
  Matrix X;
  Labels y;
  gaussian_classes(80, 4, 2, 90, X, y);
  ModelSpec spec;
  spec.family = ModelFamily::LogisticRegression;
  spec.epoch_count = 60;
  const Pipeline target{std::nullopt, train(spec, X, y)};
  const AttackEnvironment env(X, y, FeatureBox::from_data(X), 3, 1);
  AttackSpec attack;
  attack.family = AttackFamily::Fgsm;
  attack.threat = ThreatModel::WhiteBox;
  attack.epsilon = 0.0;
  const AdversarialBatch batch = craft_attack(target, attack, X, y, env);
  CHECK(batch.perturbed == X);
}

TEST_CASE("midpoint samples inside wide bins are immune to small budgets") {
  // training data spanning [0,10] on each feature, bins of width 2
  Rng rng(101);
  Matrix X(100, 2);
  Labels y;
  for (int r = 0; r < 100; ++r) {
    X(r, 0) = rng.uniform(0, 10);
    X(r, 1) = rng.uniform(0, 10);
    y.push_back(X(r, 0) > 5 ? 1 : 0);
  }
  X.row(0) << 0, 0;
  X.row(1) << 10, 10;  // pin the range

  DiscretizationScheme scheme = fit_equal_width(X, 5, Encoding::BinMidpoint);
  ModelSpec spec;
  spec.family = ModelFamily::LogisticRegression;
  spec.epoch_count = 80;
  Pipeline defended;
  defended.defense = scheme;
  defended.model = train(spec, apply_scheme(scheme, X), y);

  // probe rows sitting exactly at bin midpoints
  Matrix probes(10, 2);
  Labels probe_y;
  for (int r = 0; r < 10; ++r) {
    probes(r, 0) = bin_midpoint(scheme.features[0], r % 5);
    probes(r, 1) = bin_midpoint(scheme.features[1], (r / 2) % 5);
    probe_y.push_back(probes(r, 0) > 5 ? 1 : 0);
  }
  const Real eps = 0.9;  // below half the minimum bin width (1.0)
  REQUIRE(eps < min_bin_width(scheme) / 2.0);

  const AttackEnvironment env(X, y, FeatureBox::from_data(X), 4, 1);
  AttackSpec attack;
  attack.family = AttackFamily::Fgsm;
  attack.threat = ThreatModel::WhiteBox;
  attack.epsilon = eps;
  const AdversarialBatch batch = craft_attack(defended, attack, probes, probe_y, env);
  CHECK(apply_scheme(scheme, batch.perturbed) == apply_scheme(scheme, probes));
  CHECK(predict_labels(defended, batch.perturbed) == predict_labels(defended, probes));
}

TEST_CASE("equal-width defense lowers the encoding change rate under attack") {
  Matrix X;
  Labels y;
  gaussian_classes(150, 5, 3, 111, X, y);
  const Standardizer scaler = Standardizer::fit(X);
  const Matrix Z = scaler.apply(X);
  const AttackEnvironment env(Z, y, FeatureBox::from_data(Z), 8, 1);

  DiscretizationScheme scheme = fit_equal_width(Z, 10, Encoding::OneHot);
  AttackSpec attack;
  attack.family = AttackFamily::Fgsm;
  attack.threat = ThreatModel::BlackBox;
  attack.substitute = ModelFamily::LogisticRegression;
  attack.epsilon = 0.01;
  const TrainedModel& sub = env.substitute(ModelFamily::LogisticRegression);
  const AdversarialBatch batch = craft_with_source(GradientSource(sub), attack, Z, y,
                                                   env.box(), 1, "LR");

  int raw_changed = 0, encoding_changed = 0, nonzero_grad = 0;
  const Matrix before = apply_scheme(scheme, Z);
  const Matrix after = apply_scheme(scheme, batch.perturbed);
  for (int r = 0; r < Z.rows(); ++r) {
    if (batch.linf_norms[r] > 0) {
      ++nonzero_grad;
      ++raw_changed;
    }
    if (before.row(r) != after.row(r)) ++encoding_changed;
  }
  REQUIRE(nonzero_grad > 100);
  CHECK(Real(encoding_changed) < Real(raw_changed));
}

TEST_CASE("attack spec validation") {
  AttackSpec attack;
  attack.epsilon = -0.1;
  CHECK_THROWS_AS(attack.validate(), InvalidValue);
  attack.epsilon = 0.01;
  attack.family = AttackFamily::Bim;
  attack.alpha = 0.02;  // above epsilon
  CHECK_THROWS_AS(attack.validate(), InvalidValue);
  attack.alpha = 0.001;
  attack.validate();
  attack.family = AttackFamily::Jsma;
  attack.gamma = 1.5;
  CHECK_THROWS_AS(attack.validate(), InvalidValue);
}
