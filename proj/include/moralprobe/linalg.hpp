#pragma once

#include <Eigen/Core>

#include <cmath>
#include <optional>

namespace moralprobe {

template <class Scalar>
struct DominantEigenpair {
  Scalar eigenvalue{};
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> eigenvector;
  int iterations = 0;
};

/// Dominant eigenpair of the scatter matrix X^T X of `rows` (one
/// observation per row, already centered), by power iteration. The scatter
/// matrix is applied implicitly as X^T (X v), so wide embeddings never
/// materialize a d x d matrix. Stops when ||C v - lambda v|| <= tol * lambda.
/// Returns nullopt when the scatter is zero or the iteration limit is hit.
template <class Derived>
std::optional<DominantEigenpair<typename Derived::Scalar>> top_principal_component(
    const Eigen::MatrixBase<Derived>& rows, typename Derived::Scalar tolerance,
    int max_iterations) {
  using Scalar = typename Derived::Scalar;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  const auto& x = rows.derived();
  if (x.rows() == 0 || x.cols() == 0) return std::nullopt;

  // Start from the longest observation, tilted off any exact symmetry by a
  // fixed perturbation.
  Eigen::Index longest = 0;
  x.rowwise().squaredNorm().maxCoeff(&longest);
  Vector v = x.row(longest).transpose();
  if (v.norm() == Scalar(0)) return std::nullopt;
  v.normalize();
  Vector tilt(x.cols());
  for (Eigen::Index i = 0; i < tilt.size(); ++i)
    tilt[i] = Scalar(std::sin(1.0 + 0.7548776662466927 * static_cast<double>(i)));
  v += Scalar(1e-3) * tilt.normalized();
  v.normalize();

  DominantEigenpair<Scalar> out;
  for (int it = 1; it <= max_iterations; ++it) {
    const Vector cv = x.transpose() * (x * v);
    const Scalar lambda = v.dot(cv);
    if (!(lambda > Scalar(0))) return std::nullopt;
    const Scalar residual = (cv - lambda * v).norm();
    if (residual <= tolerance * lambda) {
      out.eigenvalue = lambda;
      out.eigenvector = v;
      out.iterations = it;
      return out;
    }
    v = cv / cv.norm();
  }
  return std::nullopt;
}

}  // namespace moralprobe
