#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "binshield/pipeline.hpp"
#include "binshield/types.hpp"

namespace binshield {

struct StackedModel;

enum class AttackFamily { Fgsm, Bim, Jsma };

/// WhiteBox crafts on the target itself (straight-through when defended);
/// WhiteBoxTransfer crafts on an undefended twin of the target family;
/// BlackBox crafts on a substitute trained on the same raw training data.
enum class ThreatModel { WhiteBox, WhiteBoxTransfer, BlackBox };

std::string to_string(AttackFamily f);
std::string to_string(ThreatModel t);

struct AttackSpec {
  AttackFamily family = AttackFamily::Fgsm;
  Real epsilon = 0.01;     // L-inf budget, standardized-feature units
  Real alpha = 0.001;      // BIM step
  int max_iterations = 100;
  Real theta = 0.01;       // JSMA per-step feature change
  Real gamma = 0.4;        // JSMA max fraction of features modified
  ThreatModel threat = ThreatModel::BlackBox;
  ModelFamily substitute = ModelFamily::LogisticRegression;
  std::uint64_t seed = 0;

  /// e.g. "FGSM LR" for black box with an LR substitute, "FGSM" for white box.
  std::string label() const;
  void validate() const;
};

struct AdversarialBatch {
  Matrix original;
  Matrix perturbed;
  Vector linf_norms;
  IntVector modified_counts;  // distinct features changed per row
  std::string attack_label;
  std::string substitute_id;  // empty for white box
};

/// Loss/gradient view of a differentiable pipeline. When a defense is
/// present it must use midpoint encoding; the backward pass then treats the
/// encoder as identity (straight-through) while the forward pass quantizes.
class GradientSource {
 public:
  explicit GradientSource(const Pipeline& pipeline);
  explicit GradientSource(const TrainedModel& model);

  Real loss(const Vector& x, int y) const;
  Vector grad(const Vector& x, int y) const;
  Matrix proba_jacobian(const Vector& x) const;
  Vector proba(const Vector& x) const;
  int predict(const Vector& x) const;
  int class_count() const;
  int input_dim() const;

 private:
  Vector encode(const Vector& x) const;
  const TrainedModel* model_;
  const DiscretizationScheme* defense_;  // nullptr or BinMidpoint scheme
};

/// x' = clamp(x + eps * sign(grad L)), sign(0) = 0; box clamp optional.
Vector fgsm_perturb(const GradientSource& src, const Vector& x, int y, Real eps,
                    const FeatureBox* box = nullptr);
Vector fgsm_perturb(const TrainedModel& model, const Vector& x, int y, Real eps,
                    const FeatureBox* box = nullptr);

/// Iterated FGSM with step alpha, projected into the eps ball around x.
/// Stops early on misclassification or when a step no longer improves the
/// loss, and returns the best-loss iterate seen.
Vector bim_perturb(const GradientSource& src, const Vector& x, int y, Real eps, Real alpha,
                   int max_iterations, const FeatureBox* box = nullptr);
Vector bim_perturb(const TrainedModel& model, const Vector& x, int y, Real eps, Real alpha,
                   int max_iterations, const FeatureBox* box = nullptr);

/// Saliency-map attack, pair-increase variant: each step adds theta to the
/// two features with the best (target-positive, others-negative) saliency,
/// clamped to the box; at most floor(gamma * d) distinct features are ever
/// modified. target_class -1 selects the second-most-likely class at x.
Vector jsma_perturb(const GradientSource& src, const Vector& x, int y_true, Real theta,
                    Real gamma, int max_iterations, const FeatureBox* box = nullptr,
                    int target_class = -1);
Vector jsma_perturb(const TrainedModel& model, const Vector& x, int y_true, Real theta,
                    Real gamma, int max_iterations, const FeatureBox* box = nullptr,
                    int target_class = -1);

/// Shared context for crafting: the raw (standardized) training split for
/// fitting substitutes/twins lazily, the clamp box, and a thread budget.
class AttackEnvironment {
 public:
  AttackEnvironment(const Matrix& train_X, const Labels& train_y, FeatureBox box,
                    std::uint64_t seed, int threads = 1);

  const TrainedModel& substitute(ModelFamily family) const;
  const FeatureBox& box() const { return box_; }
  int threads() const { return threads_; }
  std::uint64_t seed() const { return seed_; }

 private:
  const Matrix* train_X_;
  const Labels* train_y_;
  FeatureBox box_;
  std::uint64_t seed_;
  int threads_;
  mutable std::map<ModelFamily, std::shared_ptr<TrainedModel>> cache_;
};

/// Crafts a batch against the pipeline under the spec's threat model.
/// Perturbations are applied in raw (standardized) feature space, before the
/// defense's discretizer.
AdversarialBatch craft_attack(const Pipeline& pipeline, const AttackSpec& spec,
                              const Matrix& X, const Labels& y,
                              const AttackEnvironment& env);
AdversarialBatch craft_attack(const StackedModel& stack, const AttackSpec& spec,
                              const Matrix& X, const Labels& y,
                              const AttackEnvironment& env);

/// Crafts on an explicit gradient source (the substitute path reuses this).
AdversarialBatch craft_with_source(const GradientSource& src, const AttackSpec& spec,
                                   const Matrix& X, const Labels& y, const FeatureBox& box,
                                   int threads, const std::string& substitute_id);

}  // namespace binshield
