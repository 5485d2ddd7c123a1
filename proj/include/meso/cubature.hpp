#pragma once

// Third-degree spherical-radial cubature: 2q points mu +/- sqrt(q) L e_j with
// equal weights 1/(2q), exact for Gaussian expectations of polynomials of
// total degree <= 3.

#include "core.hpp"
#include "mixture.hpp"

#include <sstream>

namespace meso {

struct CubatureSet
{
  Matrix points;  // q x 2q
  Vector weights; // 2q entries, all 1/(2q)

  int size() const { return static_cast<int>(points.cols()); }
};

//! First two moments of a propagated component.
struct MomentPair
{
  Vector mean;
  Matrix covariance;
};

//! Unit-sphere generators xi_j = +/- sqrt(q) e_j, ordered +e_1, -e_1, +e_2, ...
inline Matrix cubature_generators(int q)
{
  require(q >= 1, "cubature: dimension must be >= 1");
  Matrix xi = Matrix::Zero(q, 2 * q);
  const double r = std::sqrt(static_cast<double>(q));
  for (int j = 0; j < q; ++j) {
    xi(j, 2 * j) = r;
    xi(j, 2 * j + 1) = -r;
  }
  return xi;
}

inline CubatureSet cubature_points(const Vector& mean, const Matrix& chol)
{
  const int q = static_cast<int>(mean.size());
  CubatureSet set;
  set.points = (chol * cubature_generators(q)).colwise() + mean;
  set.weights = Vector::Constant(2 * q, 1.0 / (2.0 * q));
  return set;
}

inline CubatureSet cubature_points(const GaussianComponent& component)
{
  return cubature_points(component.mean(), component.cholesky());
}

//! Factorizes a raw covariance; names the component on failure.
inline CubatureSet cubature_points(const Vector& mean, const Matrix& covariance, int component_index)
{
  Eigen::LLT<Matrix> llt(covariance);
  if (llt.info() != Eigen::Success || !covariance.allFinite())
    throw Error(ErrorCode::spd_violation,
                "component " + std::to_string(component_index) + " covariance is not positive definite");
  return cubature_points(mean, Matrix(llt.matrixL()));
}

namespace detail {

inline std::string describe_point(const Vector& x)
{
  std::ostringstream os;
  os << '(';
  for (Eigen::Index i = 0; i < x.size(); ++i)
    os << (i ? ", " : "") << x(i);
  os << ')';
  return os.str();
}

} // namespace detail

//! Evaluates the map at every cubature point; columns of the result are the
//! images. Throws on non-finite output, naming the offending point.
template<class Map>
Matrix map_cubature_points(const CubatureSet& set, Map&& map)
{
  Matrix images;
  for (int i = 0; i < set.size(); ++i) {
    const Vector y = map(Vector(set.points.col(i)));
    if (i == 0)
      images.resize(y.size(), set.size());
    if (!y.allFinite())
      throw Error(ErrorCode::nonfinite,
                  "map returned a non-finite value at cubature point " +
                    detail::describe_point(set.points.col(i)));
    images.col(i) = y;
  }
  return images;
}

//! Weighted mean and scatter of mapped cubature points; covariance is
//! symmetrized and clamped to be positive semidefinite.
inline MomentPair moments_from_images(const Matrix& images, const Vector& weights)
{
  MomentPair out;
  out.mean = images * weights;
  const Matrix d = images.colwise() - out.mean;
  out.covariance = symmetrize(d * weights.asDiagonal() * d.transpose());
  clamp_eigenvalues(out.covariance, 0.0);
  return out;
}

template<class Map>
MomentPair propagate_moments(const CubatureSet& set, Map&& map)
{
  return moments_from_images(map_cubature_points(set, std::forward<Map>(map)), set.weights);
}

template<class Map>
MomentPair propagate_moments(const GaussianComponent& component, Map&& map)
{
  return propagate_moments(cubature_points(component), std::forward<Map>(map));
}

//! E[map(theta)] under the component, by the 2q-point rule.
template<class Map>
Vector gauss_expectation(Map&& map, const GaussianComponent& component)
{
  const CubatureSet set = cubature_points(component);
  return map_cubature_points(set, std::forward<Map>(map)) * set.weights;
}

} // namespace meso
