#include "binshield/pipeline.hpp"

namespace binshield {

Matrix predict_proba(const Pipeline& p, const Matrix& X) {
  return predict_proba(p.model, p.encode(X));
}

std::vector<int> predict_labels(const Pipeline& p, const Matrix& X) {
  return predict_labels(p.model, p.encode(X));
}

int predict_label(const Pipeline& p, const Vector& x) {
  return predict_labels(p, x.transpose())[0];
}

}  // namespace binshield
