#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <vector>

namespace binshield {

using Real = double;

template <class Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <class Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// Rows are samples, columns are features.
using Matrix = MatrixX<Real>;
using Vector = VectorX<Real>;
using IntVector = Eigen::VectorXi;

using Labels = std::vector<int>;

/// Per-feature valid value range; attacks clamp perturbed samples into it.
struct FeatureBox {
  Vector lo;
  Vector hi;

  static FeatureBox from_data(const Matrix& X) {
    FeatureBox box;
    box.lo = X.colwise().minCoeff().transpose();
    box.hi = X.colwise().maxCoeff().transpose();
    return box;
  }

  Vector clamp(const Vector& x) const { return x.cwiseMax(lo).cwiseMin(hi); }
};

inline Real sign0(Real v) { return v > 0 ? Real(1) : (v < 0 ? Real(-1) : Real(0)); }

}  // namespace binshield
