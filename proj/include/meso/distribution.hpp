#pragma once

#include "core.hpp"

#include <Eigen/Cholesky>

#include <optional>
#include <random>
#include <variant>

namespace meso {

//! One-dimensional marginal law with CDF, density, quantile and sampler.
struct Marginal
{
  enum class Kind
  {
    normal,      // a = mean, b = standard deviation
    uniform,     // a = lower, b = upper
    exponential, // a = rate
    lognormal    // a = mu, b = sigma of the underlying normal
  };

  Kind kind = Kind::normal;
  double a = 0.0;
  double b = 1.0;

  static Marginal normal(double mean, double sd) { return check({ Kind::normal, mean, sd }); }
  static Marginal uniform(double lo, double hi) { return check({ Kind::uniform, lo, hi }); }
  static Marginal exponential(double rate) { return check({ Kind::exponential, rate, 0.0 }); }
  static Marginal lognormal(double mu, double sigma) { return check({ Kind::lognormal, mu, sigma }); }

  static Marginal check(Marginal m)
  {
    switch (m.kind) {
      case Kind::normal:
      case Kind::lognormal:
        require(m.b > 0.0 && std::isfinite(m.a) && std::isfinite(m.b),
                "marginal scale must be positive and finite");
        break;
      case Kind::uniform:
        require(m.a < m.b && std::isfinite(m.a) && std::isfinite(m.b),
                "uniform marginal needs lower < upper");
        break;
      case Kind::exponential:
        require(m.a > 0.0 && std::isfinite(m.a), "exponential rate must be positive");
        break;
    }
    return m;
  }

  static double std_normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }
  static double std_normal_pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * kPi); }

  // Bisection on [-40, 40] then Newton polish to |Phi(z) - u| <= 1e-12.
  static double std_normal_quantile(double u)
  {
    if (!(u > 0.0 && u < 1.0))
      throw Error(ErrorCode::inversion_failure,
                  "normal quantile undefined at u = " + std::to_string(u));
    if (u > 0.5)
      return -std_normal_quantile(1.0 - u);
    double lo = -40.0, hi = 0.0;
    for (int it = 0; it < 200 && hi - lo > 1e-9; ++it) {
      const double mid = 0.5 * (lo + hi);
      (std_normal_cdf(mid) < u ? lo : hi) = mid;
    }
    double z = 0.5 * (lo + hi);
    for (int it = 0; it < 8; ++it) {
      const double err = std_normal_cdf(z) - u;
      if (std::abs(err) <= 1e-15 * std::max(1.0, u))
        break;
      const double dens = std_normal_pdf(z);
      if (!(dens > 0.0))
        break;
      const double next = z - err / dens;
      if (!(next > lo - 1.0 && next < hi + 1.0))
        break;
      z = next;
    }
    if (!(std::abs(std_normal_cdf(z) - u) <= 1e-12))
      throw Error(ErrorCode::inversion_failure,
                  "normal quantile did not converge at u = " + std::to_string(u));
    return z;
  }

  double cdf(double x) const
  {
    switch (kind) {
      case Kind::normal: return std_normal_cdf((x - a) / b);
      case Kind::uniform: return x <= a ? 0.0 : (x >= b ? 1.0 : (x - a) / (b - a));
      case Kind::exponential: return x <= 0.0 ? 0.0 : -std::expm1(-a * x);
      case Kind::lognormal: return x <= 0.0 ? 0.0 : std_normal_cdf((std::log(x) - a) / b);
    }
    return 0.0;
  }

  double pdf(double x) const
  {
    switch (kind) {
      case Kind::normal: return std_normal_pdf((x - a) / b) / b;
      case Kind::uniform: return (x < a || x > b) ? 0.0 : 1.0 / (b - a);
      case Kind::exponential: return x < 0.0 ? 0.0 : a * std::exp(-a * x);
      case Kind::lognormal:
        return x <= 0.0 ? 0.0 : std_normal_pdf((std::log(x) - a) / b) / (b * x);
    }
    return 0.0;
  }

  double quantile(double u) const
  {
    switch (kind) {
      case Kind::uniform:
        require(u >= 0.0 && u <= 1.0, "quantile level outside [0,1]");
        return a + u * (b - a);
      case Kind::exponential:
        if (!(u >= 0.0 && u < 1.0))
          throw Error(ErrorCode::inversion_failure,
                      "exponential quantile undefined at u = " + std::to_string(u));
        return -std::log1p(-u) / a;
      case Kind::normal: return a + b * std_normal_quantile(u);
      case Kind::lognormal: return std::exp(a + b * std_normal_quantile(u));
    }
    return 0.0;
  }

  double mean() const
  {
    switch (kind) {
      case Kind::normal: return a;
      case Kind::uniform: return 0.5 * (a + b);
      case Kind::exponential: return 1.0 / a;
      case Kind::lognormal: return std::exp(a + 0.5 * b * b);
    }
    return 0.0;
  }

  double stddev() const
  {
    switch (kind) {
      case Kind::normal: return b;
      case Kind::uniform: return (b - a) / std::sqrt(12.0);
      case Kind::exponential: return 1.0 / a;
      case Kind::lognormal: return std::sqrt(std::expm1(b * b)) * mean();
    }
    return 0.0;
  }

  template<class Rng>
  double sample(Rng& rng) const
  {
    switch (kind) {
      case Kind::normal: return std::normal_distribution<double>(a, b)(rng);
      case Kind::uniform: return std::uniform_real_distribution<double>(a, b)(rng);
      case Kind::exponential: return std::exponential_distribution<double>(a)(rng);
      case Kind::lognormal: return std::lognormal_distribution<double>(a, b)(rng);
    }
    return 0.0;
  }

  bool operator==(const Marginal&) const = default;
};

struct IndependentMarginals
{
  std::vector<Marginal> marginals;
};

struct MultivariateGaussian
{
  Vector mean;
  Matrix covariance;
};

//! Target distribution p(theta): either a product of marginals or a
//! correlated Gaussian.
class DistributionSpec
{
public:
  DistributionSpec() = default;

  explicit DistributionSpec(IndependentMarginals m)
    : law_(std::move(m))
  {
    require(!std::get<IndependentMarginals>(law_).marginals.empty(),
            "distribution needs at least one marginal");
  }

  explicit DistributionSpec(MultivariateGaussian g)
    : law_(std::move(g))
  {
    auto& mvn = std::get<MultivariateGaussian>(law_);
    require(mvn.mean.size() >= 1 && mvn.covariance.rows() == mvn.mean.size() &&
              mvn.covariance.cols() == mvn.mean.size(),
            "gaussian mean/covariance dimensions disagree");
    require((mvn.covariance - mvn.covariance.transpose()).cwiseAbs().maxCoeff() <=
              1e-12 * std::max(1.0, mvn.covariance.cwiseAbs().maxCoeff()),
            "gaussian covariance must be symmetric");
    chol_ = Eigen::LLT<Matrix>(mvn.covariance);
    if (chol_.info() != Eigen::Success)
      throw Error(ErrorCode::spd_violation, "gaussian covariance is not positive definite");
  }

  static DistributionSpec standard_normal(int q)
  {
    return DistributionSpec(MultivariateGaussian{ Vector::Zero(q), Matrix::Identity(q, q) });
  }

  static DistributionSpec independent(std::vector<Marginal> m)
  {
    return DistributionSpec(IndependentMarginals{ std::move(m) });
  }

  int dimension() const
  {
    if (auto* m = std::get_if<IndependentMarginals>(&law_))
      return static_cast<int>(m->marginals.size());
    return static_cast<int>(std::get<MultivariateGaussian>(law_).mean.size());
  }

  bool is_gaussian() const { return std::holds_alternative<MultivariateGaussian>(law_); }
  const IndependentMarginals* marginals() const { return std::get_if<IndependentMarginals>(&law_); }
  const MultivariateGaussian* gaussian() const { return std::get_if<MultivariateGaussian>(&law_); }
  const Matrix cholesky() const { return chol_.matrixL(); }

  //! Product-of-marginals view when one exists (diagonal Gaussians qualify).
  std::optional<IndependentMarginals> as_independent() const
  {
    if (auto* m = marginals())
      return *m;
    const auto& g = *gaussian();
    Matrix off = g.covariance;
    off.diagonal().setZero();
    if (off.cwiseAbs().maxCoeff() > 0.0)
      return std::nullopt;
    IndependentMarginals out;
    for (int i = 0; i < dimension(); ++i)
      out.marginals.push_back(Marginal::normal(g.mean(i), std::sqrt(g.covariance(i, i))));
    return out;
  }

  Vector mean() const
  {
    if (auto* g = gaussian())
      return g->mean;
    Vector m(dimension());
    for (int i = 0; i < dimension(); ++i)
      m(i) = marginals()->marginals[i].mean();
    return m;
  }

  Vector stddev() const
  {
    if (auto* g = gaussian())
      return g->covariance.diagonal().cwiseSqrt();
    Vector s(dimension());
    for (int i = 0; i < dimension(); ++i)
      s(i) = marginals()->marginals[i].stddev();
    return s;
  }

  double pdf(const Vector& x) const
  {
    require(x.size() == dimension(), "pdf: dimension mismatch");
    if (auto* m = marginals()) {
      double p = 1.0;
      for (int i = 0; i < dimension(); ++i)
        p *= m->marginals[i].pdf(x(i));
      return p;
    }
    const auto& g = *gaussian();
    const Vector w = chol_.matrixL().solve(x - g.mean);
    const double logdet = 2.0 * chol_.matrixL().toDenseMatrix().diagonal().array().log().sum();
    return std::exp(-0.5 * w.squaredNorm() - 0.5 * logdet - 0.5 * dimension() * kLog2Pi);
  }

  //! Joint CDF; only defined for products of marginals.
  double cdf(const Vector& x) const
  {
    auto ind = as_independent();
    if (!ind)
      throw Error(ErrorCode::invalid_argument,
                  "joint CDF is only available for independent marginals");
    double p = 1.0;
    for (int i = 0; i < dimension(); ++i)
      p *= ind->marginals[i].cdf(x(i));
    return p;
  }

  template<class Rng>
  Vector sample(Rng& rng) const
  {
    const int q = dimension();
    Vector x(q);
    if (auto* m = marginals()) {
      for (int i = 0; i < q; ++i)
        x(i) = m->marginals[i].sample(rng);
      return x;
    }
    std::normal_distribution<double> n01;
    for (int i = 0; i < q; ++i)
      x(i) = n01(rng);
    return gaussian()->mean + chol_.matrixL() * x;
  }

  //! M samples stored as the columns of a q x M matrix.
  Matrix sample_matrix(std::uint64_t seed, Eigen::Index count) const
  {
    std::mt19937_64 rng(seed);
    Matrix out(dimension(), count);
    for (Eigen::Index j = 0; j < count; ++j)
      out.col(j) = sample(rng);
    return out;
  }

private:
  std::variant<IndependentMarginals, MultivariateGaussian> law_{ IndependentMarginals{} };
  Eigen::LLT<Matrix> chol_;
};

} // namespace meso
