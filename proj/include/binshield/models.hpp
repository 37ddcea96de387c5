#pragma once

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "binshield/types.hpp"

namespace binshield {

enum class ModelFamily { DecisionTree, RandomForest, LogisticRegression, Feedforward };

std::string to_string(ModelFamily f);
std::string family_short_name(ModelFamily f);  // DT / RF / LR / FF, as in reports
ModelFamily model_family_from_string(const std::string& s);

struct ModelSpec {
  ModelFamily family = ModelFamily::DecisionTree;

  // trees
  int max_depth = 16;
  int min_leaf = 1;
  int tree_count = 100;
  int feature_subsample = 0;  // 0 = round(sqrt(d))
  bool bootstrap = true;

  // gradient-trained families
  Real learning_rate = 0.1;
  int epoch_count = 200;
  int batch_size = 32;
  std::vector<int> hidden_layer_widths = {64};
  Real l2_penalty = 0.0;

  std::uint64_t seed = 0;

  void validate() const;
};

/// Flat node array; leaves carry the class frequency distribution.
struct DecisionTreeModel {
  struct Node {
    int feature = -1;      // -1 marks a leaf
    Real threshold = 0.0;  // goes left when x[feature] <= threshold
    int left = -1;
    int right = -1;
    Vector class_probs;
  };
  std::vector<Node> nodes;
};

struct RandomForestModel {
  std::vector<DecisionTreeModel> trees;
};

struct LogisticRegressionModel {
  Matrix weights;  // C x d
  Vector bias;     // C
};

struct FeedforwardModel {
  std::vector<Matrix> weights;  // layer l: out x in, last layer emits logits
  std::vector<Vector> biases;
};

struct TrainedModel {
  ModelSpec spec;
  int input_dim = 0;
  int class_count = 0;
  std::variant<DecisionTreeModel, RandomForestModel, LogisticRegressionModel,
               FeedforwardModel>
      impl;
  std::vector<Real> training_loss;  // per-epoch mean loss for LR/FF

  bool differentiable() const {
    return spec.family == ModelFamily::LogisticRegression ||
           spec.family == ModelFamily::Feedforward;
  }
};

/// Deterministic given (spec, X, y) including the seed.
TrainedModel train(const ModelSpec& spec, const Matrix& X, const Labels& y);

/// Process-wide budget for forest tree growth; results are identical for any
/// value because every tree owns an independent seeded stream.
void set_training_threads(int threads);

/// N x C rows on the probability simplex (sum 1 within 1e-9).
Matrix predict_proba(const TrainedModel& model, const Matrix& X);
std::vector<int> predict_labels(const TrainedModel& model, const Matrix& X);
int predict_label(const TrainedModel& model, const Vector& x);

Real accuracy(const std::vector<int>& predicted, const Labels& truth);

/// Cross-entropy loss of one sample.
Real cross_entropy(const TrainedModel& model, const Vector& x, int y);

/// Exact gradient of the cross-entropy loss with respect to the input.
/// Throws NotDifferentiable for tree families (use a substitute instead).
Vector input_gradient(const TrainedModel& model, const Vector& x, int y);

/// C x d Jacobian of class probabilities with respect to the input.
Matrix proba_jacobian(const TrainedModel& model, const Vector& x);

/// Per-feature z-score transform fitted on training data. Constant columns
/// keep stddev 1 so they pass through unchanged.
struct Standardizer {
  Vector mean;
  Vector stddev;

  static Standardizer fit(const Matrix& X);
  Matrix apply(const Matrix& X) const;
};

}  // namespace binshield
