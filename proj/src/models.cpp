#include "binshield/models.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>

#include "binshield/errors.hpp"
#include "binshield/rng.hpp"
#include "binshield/threading.hpp"

namespace binshield {

namespace {

std::atomic<int> g_training_threads{1};

}  // namespace

void set_training_threads(int threads) { g_training_threads = std::max(1, threads); }

std::string to_string(ModelFamily f) {
  switch (f) {
    case ModelFamily::DecisionTree: return "decision_tree";
    case ModelFamily::RandomForest: return "random_forest";
    case ModelFamily::LogisticRegression: return "logistic_regression";
    case ModelFamily::Feedforward: return "feedforward";
  }
  return "?";
}

std::string family_short_name(ModelFamily f) {
  switch (f) {
    case ModelFamily::DecisionTree: return "DT";
    case ModelFamily::RandomForest: return "RF";
    case ModelFamily::LogisticRegression: return "LR";
    case ModelFamily::Feedforward: return "FF";
  }
  return "?";
}

ModelFamily model_family_from_string(const std::string& s) {
  if (s == "decision_tree" || s == "dt") return ModelFamily::DecisionTree;
  if (s == "random_forest" || s == "rf") return ModelFamily::RandomForest;
  if (s == "logistic_regression" || s == "lr") return ModelFamily::LogisticRegression;
  if (s == "feedforward" || s == "ff") return ModelFamily::Feedforward;
  throw InvalidValue("family", "unknown model family '" + s + "'");
}

void ModelSpec::validate() const {
  if (max_depth < 1) throw InvalidSpec("max_depth must be positive");
  if (min_leaf < 1) throw InvalidSpec("min_leaf must be positive");
  if (tree_count < 1) throw InvalidSpec("tree_count must be positive");
  if (feature_subsample < 0) throw InvalidSpec("feature_subsample must be >= 0 (0 = sqrt)");
  if (!(learning_rate > 0.0)) throw InvalidSpec("learning_rate must be positive");
  if (epoch_count < 1) throw InvalidSpec("epoch_count must be positive");
  if (batch_size < 1) throw InvalidSpec("batch_size must be positive");
  if (family == ModelFamily::Feedforward) {
    if (hidden_layer_widths.empty()) throw InvalidSpec("feedforward needs hidden layers");
    for (int w : hidden_layer_widths)
      if (w < 1) throw InvalidSpec("hidden widths must be positive");
  }
  if (l2_penalty < 0.0) throw InvalidSpec("l2_penalty must be >= 0");
}

namespace {

Real gini(const std::vector<int>& counts, int total) {
  if (total == 0) return 0.0;
  Real sum_sq = 0.0;
  for (int c : counts) sum_sq += Real(c) * Real(c);
  return 1.0 - sum_sq / (Real(total) * Real(total));
}

struct TreeBuilder {
  const Matrix& X;
  const Labels& y;
  int class_count;
  int max_depth;
  int min_leaf;
  int mtry;  // features examined per node; d for plain trees
  Rng* rng;  // nullptr for plain trees
  DecisionTreeModel* out;

  int build(std::vector<int>& rows, int depth) {
    std::vector<int> counts(size_t(class_count), 0);
    for (int r : rows) counts[size_t(y[size_t(r)])]++;
    const int n = int(rows.size());
    const Real node_gini = gini(counts, n);

    const bool pure = *std::max_element(counts.begin(), counts.end()) == n;
    int best_feature = -1;
    Real best_threshold = 0.0;
    Real best_gain = -1.0;

    if (!pure && depth < max_depth && n >= 2 * min_leaf) {
      const int d = int(X.cols());
      std::vector<int> feats(static_cast<size_t>(d));
      std::iota(feats.begin(), feats.end(), 0);
      if (rng && mtry < d) {
        // partial Fisher-Yates; first mtry entries are the sampled features
        for (int i = 0; i < mtry; ++i)
          std::swap(feats[size_t(i)], feats[size_t(i + rng->uniform_int(d - i))]);
        feats.resize(size_t(mtry));
        std::sort(feats.begin(), feats.end());
      }

      std::vector<int> order = rows;
      for (int f : feats) {
        std::sort(order.begin(), order.end(), [&](int a, int b) { return X(a, f) < X(b, f); });
        std::vector<int> left(size_t(class_count), 0);
        int n_left = 0;
        for (int i = 0; i + 1 < n; ++i) {
          left[size_t(y[size_t(order[size_t(i)])])]++;
          ++n_left;
          const Real v = X(order[size_t(i)], f);
          const Real next = X(order[size_t(i) + 1], f);
          if (!(next > v)) continue;
          if (n_left < min_leaf || n - n_left < min_leaf) continue;
          std::vector<int> right(static_cast<size_t>(class_count));
          for (size_t c = 0; c < right.size(); ++c) right[c] = counts[c] - left[c];
          const Real gain = node_gini - (Real(n_left) / n) * gini(left, n_left) -
                            (Real(n - n_left) / n) * gini(right, n - n_left);
          // zero-gain splits are allowed (XOR-style structure resolves deeper)
          if (gain > best_gain + 1e-12 && gain >= -1e-12) {
            best_gain = gain;
            best_feature = f;
            best_threshold = 0.5 * (v + next);
          }
        }
      }
    }

    const int node_id = int(out->nodes.size());
    out->nodes.emplace_back();
    if (best_feature < 0) {
      DecisionTreeModel::Node& leaf = out->nodes[size_t(node_id)];
      leaf.class_probs = Vector::Zero(class_count);
      for (int c = 0; c < class_count; ++c) leaf.class_probs[c] = Real(counts[size_t(c)]) / n;
      return node_id;
    }

    std::vector<int> left_rows, right_rows;
    for (int r : rows)
      (X(r, best_feature) <= best_threshold ? left_rows : right_rows).push_back(r);
    const int left_id = build(left_rows, depth + 1);
    const int right_id = build(right_rows, depth + 1);
    DecisionTreeModel::Node& node = out->nodes[size_t(node_id)];
    node.feature = best_feature;
    node.threshold = best_threshold;
    node.left = left_id;
    node.right = right_id;
    node.class_probs = Vector::Zero(class_count);
    for (int c = 0; c < class_count; ++c) node.class_probs[c] = Real(counts[size_t(c)]) / n;
    return node_id;
  }
};

DecisionTreeModel grow_tree(const Matrix& X, const Labels& y, int class_count,
                            const ModelSpec& spec, std::vector<int> rows, int mtry, Rng* rng) {
  DecisionTreeModel tree;
  TreeBuilder builder{X, y, class_count, spec.max_depth, spec.min_leaf, mtry, rng, &tree};
  builder.build(rows, 0);
  return tree;
}

Vector tree_predict(const DecisionTreeModel& tree, const Eigen::Ref<const Vector>& x) {
  int node = 0;
  while (tree.nodes[size_t(node)].feature >= 0) {
    const auto& nd = tree.nodes[size_t(node)];
    node = x[nd.feature] <= nd.threshold ? nd.left : nd.right;
  }
  return tree.nodes[size_t(node)].class_probs;
}

Matrix softmax_rows(Matrix logits) {
  const Vector row_max = logits.rowwise().maxCoeff();
  logits.colwise() -= row_max;
  logits = logits.array().exp().matrix();
  const Vector row_sum = logits.rowwise().sum();
  logits.array().colwise() /= row_sum.array();
  return logits;
}

Real batch_cross_entropy(const Matrix& probs, const Labels& y, const std::vector<int>& rows) {
  Real loss = 0.0;
  for (size_t i = 0; i < rows.size(); ++i) {
    const Real p = std::max(probs(Eigen::Index(i), y[size_t(rows[i])]), Real(1e-300));
    loss -= std::log(p);
  }
  return loss / Real(rows.size());
}

Matrix gather_rows(const Matrix& X, const std::vector<int>& rows, int begin, int end) {
  Matrix out(end - begin, X.cols());
  for (int i = begin; i < end; ++i) out.row(i - begin) = X.row(rows[size_t(i)]);
  return out;
}

void train_logistic(TrainedModel& model, const Matrix& X, const Labels& y) {
  const ModelSpec& spec = model.spec;
  const int n = int(X.rows());
  const int C = model.class_count;
  LogisticRegressionModel lr;
  lr.weights = Matrix::Zero(C, X.cols());
  lr.bias = Vector::Zero(C);

  Rng rng(spec.seed);
  std::vector<int> order(static_cast<size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  const int batch = std::min(spec.batch_size, n);

  for (int epoch = 0; epoch < spec.epoch_count; ++epoch) {
    rng.shuffle(order);
    Real epoch_loss = 0.0;
    int seen = 0;
    for (int start = 0; start < n; start += batch) {
      const int end = std::min(n, start + batch);
      const int b = end - start;
      const Matrix Xb = gather_rows(X, order, start, end);
      Matrix P = softmax_rows(Xb * lr.weights.transpose() + Vector::Ones(b) * lr.bias.transpose());
      std::vector<int> rows(order.begin() + start, order.begin() + end);
      epoch_loss += batch_cross_entropy(P, y, rows) * b;
      seen += b;
      for (int i = 0; i < b; ++i) P(i, y[size_t(rows[size_t(i)])]) -= 1.0;
      const Matrix grad_w = P.transpose() * Xb / Real(b) + spec.l2_penalty * lr.weights;
      const Vector grad_b = P.colwise().mean().transpose();
      lr.weights -= spec.learning_rate * grad_w;
      lr.bias -= spec.learning_rate * grad_b;
    }
    const Real mean_loss = epoch_loss / Real(seen);
    if (!std::isfinite(mean_loss) || !lr.weights.allFinite())
      throw NonFiniteLoss("logistic regression diverged at epoch " + std::to_string(epoch));
    model.training_loss.push_back(mean_loss);
  }
  model.impl = std::move(lr);
}

void train_feedforward(TrainedModel& model, const Matrix& X, const Labels& y) {
  const ModelSpec& spec = model.spec;
  const int n = int(X.rows());
  const int C = model.class_count;

  std::vector<int> widths = {int(X.cols())};
  widths.insert(widths.end(), spec.hidden_layer_widths.begin(), spec.hidden_layer_widths.end());
  widths.push_back(C);
  const int L = int(widths.size()) - 1;

  FeedforwardModel ff;
  Rng rng(spec.seed);
  for (int l = 0; l < L; ++l) {
    const int fan_in = widths[size_t(l)];
    const Real bound = 1.0 / std::sqrt(Real(fan_in));
    Matrix W(widths[size_t(l) + 1], fan_in);
    for (Eigen::Index r = 0; r < W.rows(); ++r)
      for (Eigen::Index c = 0; c < W.cols(); ++c) W(r, c) = rng.uniform(-bound, bound);
    ff.weights.push_back(std::move(W));
    ff.biases.push_back(Vector::Zero(widths[size_t(l) + 1]));
  }

  std::vector<int> order(static_cast<size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  const int batch = std::min(spec.batch_size, n);

  for (int epoch = 0; epoch < spec.epoch_count; ++epoch) {
    rng.shuffle(order);
    Real epoch_loss = 0.0;
    int seen = 0;
    for (int start = 0; start < n; start += batch) {
      const int end = std::min(n, start + batch);
      const int b = end - start;
      const Matrix Xb = gather_rows(X, order, start, end);
      std::vector<int> rows(order.begin() + start, order.begin() + end);

      std::vector<Matrix> activations = {Xb};  // a_0 .. a_{L-1}
      std::vector<Matrix> pre(static_cast<size_t>(L));      // z_1 .. z_L
      for (int l = 0; l < L; ++l) {
        pre[size_t(l)] = activations.back() * ff.weights[size_t(l)].transpose() +
                         Vector::Ones(b) * ff.biases[size_t(l)].transpose();
        if (l + 1 < L) activations.push_back(pre[size_t(l)].cwiseMax(0.0));
      }
      Matrix P = softmax_rows(pre.back());
      epoch_loss += batch_cross_entropy(P, y, rows) * b;
      seen += b;

      for (int i = 0; i < b; ++i) P(i, y[size_t(rows[size_t(i)])]) -= 1.0;
      Matrix delta = P / Real(b);  // dL/dz_L
      for (int l = L - 1; l >= 0; --l) {
        const Matrix grad_w =
            delta.transpose() * activations[size_t(l)] + spec.l2_penalty * ff.weights[size_t(l)];
        const Vector grad_b = delta.colwise().sum().transpose();
        if (l > 0) {
          delta = (delta * ff.weights[size_t(l)]).eval();
          delta.array() *= (pre[size_t(l) - 1].array() > 0.0).cast<Real>();
        }
        ff.weights[size_t(l)] -= spec.learning_rate * grad_w;
        ff.biases[size_t(l)] -= spec.learning_rate * grad_b;
      }
    }
    const Real mean_loss = epoch_loss / Real(seen);
    bool finite = std::isfinite(mean_loss);
    for (const auto& W : ff.weights) finite = finite && W.allFinite();
    if (!finite) throw NonFiniteLoss("feedforward diverged at epoch " + std::to_string(epoch));
    model.training_loss.push_back(mean_loss);
  }
  model.impl = std::move(ff);
}

// Forward pass keeping pre-activations; shared by gradient and Jacobian paths.
struct FfTrace {
  std::vector<Vector> pre;  // z_1 .. z_L
  Vector probs;
};

FfTrace ff_forward(const FeedforwardModel& ff, const Vector& x) {
  FfTrace trace;
  Vector a = x;
  for (size_t l = 0; l < ff.weights.size(); ++l) {
    Vector z = ff.weights[l] * a + ff.biases[l];
    trace.pre.push_back(z);
    if (l + 1 < ff.weights.size()) a = z.cwiseMax(0.0);
  }
  Vector logits = trace.pre.back();
  logits.array() -= logits.maxCoeff();
  Vector e = logits.array().exp();
  trace.probs = e / e.sum();
  return trace;
}

}  // namespace

TrainedModel train(const ModelSpec& spec, const Matrix& X, const Labels& y) {
  spec.validate();
  if (Eigen::Index(y.size()) != X.rows())
    throw DimensionMismatch("label count does not match row count");
  if (X.rows() == 0) throw DegenerateData("no training rows");
  if (!X.allFinite()) throw InvalidSpec("training features must be finite");

  const int C = 1 + *std::max_element(y.begin(), y.end());
  std::vector<int> histogram(size_t(C), 0);
  for (int label : y) {
    if (label < 0) throw InvalidSpec("negative label");
    histogram[size_t(label)]++;
  }
  if (std::count_if(histogram.begin(), histogram.end(), [](int c) { return c > 0; }) < 2)
    throw DegenerateData("training labels contain a single class");
  if (int(X.rows()) < C) throw DegenerateData("fewer samples than classes");

  TrainedModel model;
  model.spec = spec;
  model.input_dim = int(X.cols());
  model.class_count = C;

  switch (spec.family) {
    case ModelFamily::DecisionTree: {
      std::vector<int> rows(static_cast<size_t>(X.rows()));
      std::iota(rows.begin(), rows.end(), 0);
      model.impl = grow_tree(X, y, C, spec, std::move(rows), int(X.cols()), nullptr);
      break;
    }
    case ModelFamily::RandomForest: {
      const int d = int(X.cols());
      const int mtry = spec.feature_subsample > 0
                           ? std::min(spec.feature_subsample, d)
                           : std::max(1, int(std::lround(std::sqrt(Real(d)))));
      RandomForestModel forest;
      forest.trees.resize(size_t(spec.tree_count));
      parallel_for(spec.tree_count, g_training_threads.load(), [&](int t) {
        Rng tree_rng(derive_seed(spec.seed, std::uint64_t(t)));
        std::vector<int> rows;
        rows.reserve(size_t(X.rows()));
        if (spec.bootstrap) {
          for (Eigen::Index i = 0; i < X.rows(); ++i)
            rows.push_back(tree_rng.uniform_int(int(X.rows())));
          std::sort(rows.begin(), rows.end());
        } else {
          rows.resize(size_t(X.rows()));
          std::iota(rows.begin(), rows.end(), 0);
        }
        forest.trees[size_t(t)] = grow_tree(X, y, C, spec, std::move(rows), mtry, &tree_rng);
      });
      model.impl = std::move(forest);
      break;
    }
    case ModelFamily::LogisticRegression:
      train_logistic(model, X, y);
      break;
    case ModelFamily::Feedforward:
      train_feedforward(model, X, y);
      break;
  }
  return model;
}

Matrix predict_proba(const TrainedModel& model, const Matrix& X) {
  if (int(X.cols()) != model.input_dim)
    throw DimensionMismatch("input width " + std::to_string(X.cols()) + " != model dim " +
                            std::to_string(model.input_dim));
  const int n = int(X.rows());
  Matrix P(n, model.class_count);

  if (const auto* tree = std::get_if<DecisionTreeModel>(&model.impl)) {
    for (int r = 0; r < n; ++r) P.row(r) = tree_predict(*tree, X.row(r).transpose()).transpose();
  } else if (const auto* forest = std::get_if<RandomForestModel>(&model.impl)) {
    P.setZero();
    for (const auto& tree : forest->trees)
      for (int r = 0; r < n; ++r) P.row(r) += tree_predict(tree, X.row(r).transpose()).transpose();
    P /= Real(forest->trees.size());
  } else if (const auto* lr = std::get_if<LogisticRegressionModel>(&model.impl)) {
    if (lr->bias.size() != lr->weights.rows())
      throw DimensionMismatch("logistic bias width does not match weight rows");
    P = softmax_rows(X * lr->weights.transpose() + Vector::Ones(n) * lr->bias.transpose());
  } else {
    const auto& ff = std::get<FeedforwardModel>(model.impl);
    for (int r = 0; r < n; ++r) P.row(r) = ff_forward(ff, X.row(r).transpose()).probs.transpose();
  }
  return P;
}

std::vector<int> predict_labels(const TrainedModel& model, const Matrix& X) {
  const Matrix P = predict_proba(model, X);
  std::vector<int> labels(static_cast<size_t>(P.rows()));
  for (Eigen::Index r = 0; r < P.rows(); ++r) {
    Eigen::Index best;
    P.row(r).maxCoeff(&best);
    labels[size_t(r)] = int(best);
  }
  return labels;
}

int predict_label(const TrainedModel& model, const Vector& x) {
  return predict_labels(model, x.transpose())[0];
}

Real accuracy(const std::vector<int>& predicted, const Labels& truth) {
  if (predicted.size() != truth.size()) throw DimensionMismatch("accuracy size mismatch");
  if (predicted.empty()) return 0.0;
  int hits = 0;
  for (size_t i = 0; i < truth.size(); ++i) hits += predicted[i] == truth[i] ? 1 : 0;
  return Real(hits) / Real(predicted.size());
}

Real cross_entropy(const TrainedModel& model, const Vector& x, int y) {
  const Matrix P = predict_proba(model, x.transpose());
  return -std::log(std::max(P(0, y), Real(1e-300)));
}

Vector input_gradient(const TrainedModel& model, const Vector& x, int y) {
  if (!model.differentiable())
    throw NotDifferentiable(to_string(model.spec.family) +
                            " has no input gradient; attack via a substitute model");
  if (int(x.size()) != model.input_dim) throw DimensionMismatch("gradient input width");
  if (y < 0 || y >= model.class_count) throw DimensionMismatch("gradient class index");

  if (const auto* lr = std::get_if<LogisticRegressionModel>(&model.impl)) {
    Vector p = predict_proba(model, x.transpose()).row(0).transpose();
    p[y] -= 1.0;
    return lr->weights.transpose() * p;
  }
  const auto& ff = std::get<FeedforwardModel>(model.impl);
  const FfTrace trace = ff_forward(ff, x);
  Vector delta = trace.probs;
  delta[y] -= 1.0;  // dL/dz_L
  for (int l = int(ff.weights.size()) - 1; l > 0; --l) {
    delta = (ff.weights[size_t(l)].transpose() * delta).eval();
    delta.array() *= (trace.pre[size_t(l) - 1].array() > 0.0).cast<Real>();
  }
  return ff.weights.front().transpose() * delta;
}

Matrix proba_jacobian(const TrainedModel& model, const Vector& x) {
  if (!model.differentiable())
    throw NotDifferentiable(to_string(model.spec.family) + " has no Jacobian");
  if (int(x.size()) != model.input_dim) throw DimensionMismatch("jacobian input width");

  Vector p;
  Matrix logits_jac;  // C x d
  if (const auto* lr = std::get_if<LogisticRegressionModel>(&model.impl)) {
    p = predict_proba(model, x.transpose()).row(0).transpose();
    logits_jac = lr->weights;
  } else {
    const auto& ff = std::get<FeedforwardModel>(model.impl);
    const FfTrace trace = ff_forward(ff, x);
    p = trace.probs;
    logits_jac = ff.weights.front();
    for (size_t l = 1; l < ff.weights.size(); ++l) {
      const Vector mask = (trace.pre[l - 1].array() > 0.0).cast<Real>();
      logits_jac = ff.weights[l] * mask.asDiagonal() * logits_jac;
    }
  }
  return (Matrix(p.asDiagonal()) - p * p.transpose()) * logits_jac;
}

Standardizer Standardizer::fit(const Matrix& X) {
  Standardizer s;
  s.mean = X.colwise().mean().transpose();
  Matrix centered = X.rowwise() - s.mean.transpose();
  s.stddev = (centered.array().square().colwise().mean()).sqrt().transpose();
  for (Eigen::Index f = 0; f < s.stddev.size(); ++f)
    if (!(s.stddev[f] > 0.0)) s.stddev[f] = 1.0;
  return s;
}

Matrix Standardizer::apply(const Matrix& X) const {
  if (X.cols() != mean.size()) throw DimensionMismatch("standardizer width");
  Matrix out = X.rowwise() - mean.transpose();
  out.array().rowwise() /= stddev.transpose().array();
  return out;
}

}  // namespace binshield
