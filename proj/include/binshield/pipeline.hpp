#pragma once

#include <optional>

#include "binshield/discretize.hpp"
#include "binshield/models.hpp"

namespace binshield {

/// A (possibly) defended classifier: inputs pass through the discretization
/// scheme, when present, before reaching the model.
struct Pipeline {
  std::optional<DiscretizationScheme> defense;
  TrainedModel model;

  Matrix encode(const Matrix& X) const {
    return defense ? apply_scheme(*defense, X) : X;
  }
};

Matrix predict_proba(const Pipeline& p, const Matrix& X);
std::vector<int> predict_labels(const Pipeline& p, const Matrix& X);
int predict_label(const Pipeline& p, const Vector& x);

}  // namespace binshield
