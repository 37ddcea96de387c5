#include "binshield/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "binshield/ensemble.hpp"
#include "binshield/rng.hpp"
#include "binshield/errors.hpp"
#include "binshield/threading.hpp"

namespace binshield {

std::string to_string(AttackFamily f) {
  switch (f) {
    case AttackFamily::Fgsm: return "FGSM";
    case AttackFamily::Bim: return "BIM";
    case AttackFamily::Jsma: return "JSMA";
  }
  return "?";
}

std::string to_string(ThreatModel t) {
  switch (t) {
    case ThreatModel::WhiteBox: return "white";
    case ThreatModel::WhiteBoxTransfer: return "white-transfer";
    case ThreatModel::BlackBox: return "black";
  }
  return "?";
}

std::string AttackSpec::label() const {
  std::string name = to_string(family);
  if (threat == ThreatModel::BlackBox) name += " " + family_short_name(substitute);
  return name;
}

void AttackSpec::validate() const {
  if (!(epsilon >= 0.0)) throw InvalidValue("epsilon", "must be >= 0");
  if (max_iterations < 1) throw InvalidValue("max_iterations", "must be >= 1");
  if (family == AttackFamily::Bim && !(alpha > 0.0 && alpha <= epsilon))
    throw InvalidValue("alpha", "BIM requires 0 < alpha <= epsilon");
  if (family == AttackFamily::Jsma) {
    if (!(gamma > 0.0 && gamma <= 1.0)) throw InvalidValue("gamma", "must lie in (0,1]");
    if (theta == 0.0) throw InvalidValue("theta", "must be nonzero");
  }
  if (threat == ThreatModel::BlackBox && substitute != ModelFamily::LogisticRegression &&
      substitute != ModelFamily::Feedforward)
    throw InvalidValue("substitute", "black-box substitutes must be LR or FF");
}

GradientSource::GradientSource(const Pipeline& pipeline)
    : model_(&pipeline.model), defense_(nullptr) {
  if (!pipeline.model.differentiable())
    throw NotDifferentiable("white-box attack on a " + to_string(pipeline.model.spec.family) +
                            " pipeline; use a substitute or transfer mode");
  if (pipeline.defense) {
    if (pipeline.defense->encoding != Encoding::BinMidpoint)
      throw NotDifferentiable(
          "straight-through gradients need a bin-midpoint defense encoding; got " +
          to_string(pipeline.defense->encoding));
    defense_ = &*pipeline.defense;
  }
}

GradientSource::GradientSource(const TrainedModel& model) : model_(&model), defense_(nullptr) {
  if (!model.differentiable())
    throw NotDifferentiable("gradient source must be LR or FF, got " +
                            to_string(model.spec.family));
}

Vector GradientSource::encode(const Vector& x) const {
  if (!defense_) return x;
  return apply_scheme(*defense_, x.transpose()).row(0).transpose();
}

Real GradientSource::loss(const Vector& x, int y) const {
  return cross_entropy(*model_, encode(x), y);
}

Vector GradientSource::grad(const Vector& x, int y) const {
  // straight-through: quantized forward, identity backward through the encoder
  return input_gradient(*model_, encode(x), y);
}

Matrix GradientSource::proba_jacobian(const Vector& x) const {
  return binshield::proba_jacobian(*model_, encode(x));
}

Vector GradientSource::proba(const Vector& x) const {
  return predict_proba(*model_, encode(x).transpose()).row(0).transpose();
}

int GradientSource::predict(const Vector& x) const {
  return predict_label(*model_, encode(x));
}

int GradientSource::class_count() const { return model_->class_count; }
int GradientSource::input_dim() const { return model_->input_dim; }

Vector fgsm_perturb(const GradientSource& src, const Vector& x, int y, Real eps,
                    const FeatureBox* box) {
  const Vector g = src.grad(x, y);
  Vector out = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) out[i] += eps * sign0(g[i]);
  if (box) out = box->clamp(out);
  return out;
}

Vector fgsm_perturb(const TrainedModel& model, const Vector& x, int y, Real eps,
                    const FeatureBox* box) {
  return fgsm_perturb(GradientSource(model), x, y, eps, box);
}

Vector bim_perturb(const GradientSource& src, const Vector& x, int y, Real eps, Real alpha,
                   int max_iterations, const FeatureBox* box) {
  Vector current = x;
  Vector best = x;
  Real best_loss = -std::numeric_limits<Real>::infinity();
  Real prev_loss = src.loss(x, y);
  for (int t = 0; t < max_iterations; ++t) {
    const Vector g = src.grad(current, y);
    Vector step = current;
    for (Eigen::Index i = 0; i < x.size(); ++i) step[i] += alpha * sign0(g[i]);
    // project into the eps ball around the original, then the feature box
    step = step.array().max(x.array() - eps).min(x.array() + eps).matrix();
    if (box) step = box->clamp(step);
    current = step;
    const Real loss = src.loss(current, y);
    if (loss > best_loss) {
      best_loss = loss;
      best = current;
    }
    if (src.predict(current) != y) return current;  // early misclassification stop
    if (loss <= prev_loss + 1e-12) break;           // no longer improving
    prev_loss = loss;
  }
  return best;
}

Vector bim_perturb(const TrainedModel& model, const Vector& x, int y, Real eps, Real alpha,
                   int max_iterations, const FeatureBox* box) {
  return bim_perturb(GradientSource(model), x, y, eps, alpha, max_iterations, box);
}

namespace {

int second_most_likely(const Vector& probs) {
  int best = 0, second = -1;
  for (int c = 1; c < int(probs.size()); ++c)
    if (probs[c] > probs[best]) best = c;
  for (int c = 0; c < int(probs.size()); ++c) {
    if (c == best) continue;
    if (second < 0 || probs[c] > probs[second]) second = c;
  }
  return second;
}

}  // namespace

Vector jsma_perturb(const GradientSource& src, const Vector& x, int /*y_true*/, Real theta,
                    Real gamma, int max_iterations, const FeatureBox* box, int target_class) {
  // untargeted runs aim at the second-most-likely class; the true label only
  // matters to callers measuring success
  if (src.class_count() < 2) throw NoTargetAvailable();
  const int d = int(x.size());
  const int cap = int(std::floor(gamma * Real(d)));
  if (cap < 1) return x;

  const int target = target_class >= 0 ? target_class : second_most_likely(src.proba(x));
  Vector current = x;
  std::vector<char> modified(size_t(d), 0);
  int modified_count = 0;

  for (int t = 0; t < max_iterations; ++t) {
    if (src.predict(current) == target) break;

    const Matrix J = src.proba_jacobian(current);
    Vector toward(d), away(d);
    for (int i = 0; i < d; ++i) {
      toward[i] = J(target, i);
      away[i] = J.col(i).sum() - J(target, i);
    }
    auto usable = [&](int i) {
      if (box && !(theta > 0 ? current[i] < box->hi[i] : current[i] > box->lo[i]))
        return false;  // saturated features leave the candidate pool
      return bool(modified[size_t(i)]) || modified_count < cap;
    };

    // best pair by -toward*away with toward > 0 and away < 0
    int pick_i = -1, pick_j = -1;
    Real best_score = 0.0;
    for (int i = 0; i < d; ++i) {
      if (!usable(i)) continue;
      for (int j = i + 1; j < d; ++j) {
        if (!usable(j)) continue;
        int fresh = (modified[size_t(i)] ? 0 : 1) + (modified[size_t(j)] ? 0 : 1);
        if (modified_count + fresh > cap) continue;
        const Real a = toward[i] + toward[j];
        const Real b = away[i] + away[j];
        if (!(a > 0.0 && b < 0.0)) continue;
        const Real score = -a * b;
        if (score > best_score) {
          best_score = score;
          pick_i = i;
          pick_j = j;
        }
      }
    }
    if (pick_i < 0) {
      // singleton fallback when the budget or saturation leaves no pair
      for (int i = 0; i < d; ++i) {
        if (!usable(i)) continue;
        if (modified_count + (modified[size_t(i)] ? 0 : 1) > cap) continue;
        if (!(toward[i] > 0.0 && away[i] < 0.0)) continue;
        const Real score = -toward[i] * away[i];
        if (score > best_score) {
          best_score = score;
          pick_i = i;
        }
      }
      if (pick_i < 0) break;  // saliency exhausted
    }

    for (int idx : {pick_i, pick_j}) {
      if (idx < 0) continue;
      Real v = current[idx] + theta;
      if (box) v = std::clamp(v, box->lo[idx], box->hi[idx]);
      current[idx] = v;
      if (!modified[size_t(idx)] && current[idx] != x[idx]) {
        modified[size_t(idx)] = 1;
        ++modified_count;
      }
    }
  }
  return current;
}

Vector jsma_perturb(const TrainedModel& model, const Vector& x, int y_true, Real theta,
                    Real gamma, int max_iterations, const FeatureBox* box, int target_class) {
  return jsma_perturb(GradientSource(model), x, y_true, theta, gamma, max_iterations, box,
                      target_class);
}

AttackEnvironment::AttackEnvironment(const Matrix& train_X, const Labels& train_y,
                                     FeatureBox box, std::uint64_t seed, int threads)
    : train_X_(&train_X),
      train_y_(&train_y),
      box_(std::move(box)),
      seed_(seed),
      threads_(std::max(1, threads)) {}

const TrainedModel& AttackEnvironment::substitute(ModelFamily family) const {
  if (family != ModelFamily::LogisticRegression && family != ModelFamily::Feedforward)
    throw NotDifferentiable("substitute/twin must be LR or FF, got " + to_string(family));
  auto it = cache_.find(family);
  if (it == cache_.end()) {
    ModelSpec spec;
    spec.family = family;
    spec.seed = derive_seed(seed_, 0x5b + std::uint64_t(family));
    auto model = std::make_shared<TrainedModel>(train(spec, *train_X_, *train_y_));
    it = cache_.emplace(family, std::move(model)).first;
  }
  return *it->second;
}

AdversarialBatch craft_with_source(const GradientSource& src, const AttackSpec& spec,
                                   const Matrix& X, const Labels& y, const FeatureBox& box,
                                   int threads, const std::string& substitute_id) {
  spec.validate();
  if (Eigen::Index(y.size()) != X.rows()) throw DimensionMismatch("attack label count");
  AdversarialBatch batch;
  batch.original = X;
  batch.perturbed = X;
  batch.linf_norms = Vector::Zero(X.rows());
  batch.modified_counts = IntVector::Zero(X.rows());
  batch.attack_label = spec.label();
  batch.substitute_id = substitute_id;

  parallel_for(int(X.rows()), threads, [&](int r) {
    const Vector x = X.row(r).transpose();
    Vector adv;
    switch (spec.family) {
      case AttackFamily::Fgsm:
        adv = fgsm_perturb(src, x, y[size_t(r)], spec.epsilon, &box);
        break;
      case AttackFamily::Bim:
        adv = bim_perturb(src, x, y[size_t(r)], spec.epsilon, spec.alpha, spec.max_iterations,
                          &box);
        break;
      case AttackFamily::Jsma:
        adv = jsma_perturb(src, x, y[size_t(r)], spec.theta, spec.gamma, spec.max_iterations,
                           &box);
        break;
    }
    batch.perturbed.row(r) = adv.transpose();
    batch.linf_norms[r] = (adv - x).cwiseAbs().maxCoeff();
    int changed = 0;
    for (Eigen::Index i = 0; i < x.size(); ++i) changed += adv[i] != x[i] ? 1 : 0;
    batch.modified_counts[r] = changed;
  });
  return batch;
}

AdversarialBatch craft_attack(const Pipeline& pipeline, const AttackSpec& spec, const Matrix& X,
                              const Labels& y, const AttackEnvironment& env) {
  switch (spec.threat) {
    case ThreatModel::WhiteBox:
      return craft_with_source(GradientSource(pipeline), spec, X, y, env.box(), env.threads(),
                               "");
    case ThreatModel::WhiteBoxTransfer: {
      const TrainedModel& twin = env.substitute(pipeline.model.spec.family);
      return craft_with_source(GradientSource(twin), spec, X, y, env.box(), env.threads(),
                               "twin:" + family_short_name(twin.spec.family));
    }
    case ThreatModel::BlackBox: {
      const TrainedModel& sub = env.substitute(spec.substitute);
      return craft_with_source(GradientSource(sub), spec, X, y, env.box(), env.threads(),
                               family_short_name(spec.substitute));
    }
  }
  throw ConfigInvalid("unreachable threat model");
}

AdversarialBatch craft_attack(const StackedModel& stack, const AttackSpec& spec, const Matrix& X,
                              const Labels& y, const AttackEnvironment& env) {
  switch (spec.threat) {
    case ThreatModel::WhiteBox:
      throw NotDifferentiable("stacked ensembles have no end-to-end gradients; use "
                              "transfer or black-box mode");
    case ThreatModel::WhiteBoxTransfer: {
      const ModelFamily base = stack.spec.base_configs.front().second.family;
      const TrainedModel& twin = env.substitute(base);
      return craft_with_source(GradientSource(twin), spec, X, y, env.box(), env.threads(),
                               "twin:" + family_short_name(twin.spec.family));
    }
    case ThreatModel::BlackBox: {
      const TrainedModel& sub = env.substitute(spec.substitute);
      return craft_with_source(GradientSource(sub), spec, X, y, env.box(), env.threads(),
                               family_short_name(spec.substitute));
    }
  }
  throw ConfigInvalid("unreachable threat model");
}

}  // namespace binshield
