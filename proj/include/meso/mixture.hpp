#pragma once

// Gaussian mixtures with fixed weights and means, and the covariance-only EM
// used to fit them.

#include "core.hpp"
#include "distribution.hpp"
#include "grid.hpp"
#include "parallel.hpp"
#include "rep_points.hpp"

#include <Eigen/Cholesky>

#include <limits>
#include <optional>

namespace meso {

//! One weighted Gaussian with its Cholesky factor cached.
class GaussianComponent
{
public:
  GaussianComponent() = default;

  GaussianComponent(double weight, Vector mean, Matrix covariance)
    : weight_(weight)
    , mean_(std::move(mean))
    , cov_(std::move(covariance))
  {
    require(weight_ >= 0.0 && weight_ <= 1.0, "component weight must lie in [0,1]");
    require(cov_.rows() == mean_.size() && cov_.cols() == mean_.size(),
            "component mean/covariance dimensions disagree");
    factorize();
  }

  //! Builds a component from propagated moments, symmetrizing and applying
  //! the eigenvalue floor first.
  static GaussianComponent regularized(double weight, Vector mean, Matrix covariance, bool* floored = nullptr)
  {
    const bool hit = regularize_covariance(covariance);
    if (floored)
      *floored = hit;
    return GaussianComponent(weight, std::move(mean), std::move(covariance));
  }

  double weight() const { return weight_; }
  const Vector& mean() const { return mean_; }
  const Matrix& covariance() const { return cov_; }
  const Matrix& cholesky() const { return chol_; }
  int dimension() const { return static_cast<int>(mean_.size()); }

  double log_pdf(const Eigen::Ref<const Vector>& x) const
  {
    const Vector w = chol_.triangularView<Eigen::Lower>().solve(x - mean_);
    return -0.5 * w.squaredNorm() + log_norm_;
  }

  double pdf(const Eigen::Ref<const Vector>& x) const { return std::exp(log_pdf(x)); }

private:
  void factorize()
  {
    Eigen::LLT<Matrix> llt(cov_);
    if (llt.info() != Eigen::Success || !cov_.allFinite())
      throw Error(ErrorCode::spd_violation, "component covariance is not positive definite");
    chol_ = llt.matrixL();
    const double logdet = 2.0 * chol_.diagonal().array().log().sum();
    log_norm_ = -0.5 * logdet - 0.5 * static_cast<double>(mean_.size()) * kLog2Pi;
  }

  double weight_ = 1.0;
  Vector mean_;
  Matrix cov_;
  Matrix chol_;
  double log_norm_ = 0.0;
};

//! Sum_k pi_k N(x | mu_k, Sigma_k). Immutable once built.
class MixtureModel
{
public:
  MixtureModel() = default;

  explicit MixtureModel(std::vector<GaussianComponent> components)
    : components_(std::move(components))
  {
    require(!components_.empty(), "mixture needs at least one component");
    const int q = components_.front().dimension();
    double total = 0.0;
    for (const auto& c : components_) {
      require(c.dimension() == q, "mixture components must share one dimension");
      total += c.weight();
    }
    require(std::abs(total - 1.0) <= 1e-12, "mixture weights must sum to 1");
  }

  int dimension() const { return components_.empty() ? 0 : components_.front().dimension(); }
  int size() const { return static_cast<int>(components_.size()); }
  const std::vector<GaussianComponent>& components() const { return components_; }
  const GaussianComponent& operator[](int k) const { return components_[k]; }

  //! log p(x), accumulated with log-sum-exp.
  double log_density(const Eigen::Ref<const Vector>& x) const
  {
    require(x.size() == dimension(), "density: dimension mismatch");
    double best = -std::numeric_limits<double>::infinity();
    thread_local std::vector<double> terms;
    terms.resize(components_.size());
    for (std::size_t k = 0; k < components_.size(); ++k) {
      const auto& c = components_[k];
      terms[k] = c.weight() > 0.0 ? std::log(c.weight()) + c.log_pdf(x)
                                  : -std::numeric_limits<double>::infinity();
      best = std::max(best, terms[k]);
    }
    if (!std::isfinite(best))
      return best;
    double s = 0.0;
    for (double t : terms)
      s += std::exp(t - best);
    return best + std::log(s);
  }

  //! p(x). Results below the double range saturate at the smallest
  //! subnormal; use log_density for the exact tail value.
  double density(const Eigen::Ref<const Vector>& x) const
  {
    const double ld = log_density(x);
    if (ld == -std::numeric_limits<double>::infinity())
      return 0.0;
    return std::max(std::exp(ld), std::numeric_limits<double>::denorm_min());
  }

  Vector mean() const
  {
    Vector m = Vector::Zero(dimension());
    for (const auto& c : components_)
      m += c.weight() * c.mean();
    return m;
  }

  //! Sum_k pi_k (Sigma_k + mu_k mu_k^T) - mu mu^T, accumulated about mu.
  Matrix covariance() const
  {
    const Vector m = mean();
    Matrix s = Matrix::Zero(dimension(), dimension());
    for (const auto& c : components_) {
      const Vector d = c.mean() - m;
      s += c.weight() * (c.covariance() + d * d.transpose());
    }
    return symmetrize(s);
  }

  //! Mixture of the sub-vector x[indices].
  MixtureModel marginal(const std::vector<int>& indices) const
  {
    require(!indices.empty(), "marginal needs at least one index");
    const int r = static_cast<int>(indices.size());
    std::vector<GaussianComponent> out;
    out.reserve(components_.size());
    for (const auto& c : components_) {
      Vector m(r);
      Matrix s(r, r);
      for (int a = 0; a < r; ++a) {
        require(indices[a] >= 0 && indices[a] < dimension(), "marginal index out of range");
        m(a) = c.mean()(indices[a]);
        for (int b = 0; b < r; ++b)
          s(a, b) = c.covariance()(indices[a], indices[b]);
      }
      out.emplace_back(c.weight(), std::move(m), std::move(s));
    }
    return MixtureModel(std::move(out));
  }

private:
  std::vector<GaussianComponent> components_;
};

//! Tabulates the mixture density over a grid (rows in parallel).
inline DensityGrid density_grid(const MixtureModel& model, const GridSpec& grid)
{
  grid.validate();
  require(grid.dimension() == model.dimension(), "density_grid: grid dimension mismatch");
  DensityGrid g{ grid, std::vector<double>(grid.size()) };
  const std::size_t row = static_cast<std::size_t>(grid.axes.back().count);
  const std::size_t rows = g.values.size() / row;
  parallel_for(rows, [&](std::size_t r) {
    for (std::size_t j = 0; j < row; ++j) {
      const std::size_t i = r * row + j;
      g.values[i] = model.density(grid.point(i));
    }
  });
  return g;
}

// ---------------------------------------------------------------------------
// Kernel policies

enum class KernelKind
{
  homogeneous,
  inscribed,
  adaptive
};

inline const char* to_string(KernelKind k)
{
  switch (k) {
    case KernelKind::homogeneous: return "homogeneous";
    case KernelKind::inscribed: return "inscribed";
    case KernelKind::adaptive: return "adaptive";
  }
  return "?";
}

struct KernelPolicy
{
  KernelKind kind = KernelKind::adaptive;
  std::optional<double> sigma; // homogeneous scale; heuristic when empty
  bool fitted = false;         // homogeneous scale chosen by fit_homogeneous_scale

  static KernelPolicy homogeneous(std::optional<double> s = std::nullopt) { return { KernelKind::homogeneous, s, false }; }
  static KernelPolicy homogeneous_fitted() { return { KernelKind::homogeneous, std::nullopt, true }; }
  static KernelPolicy inscribed() { return { KernelKind::inscribed, std::nullopt, false }; }
  static KernelPolicy adaptive() { return { KernelKind::adaptive, std::nullopt, false }; }
};

struct EmConfig
{
  int auxiliary_count = 0;       // 0 selects 200 K, capped at 1e6
  double tolerance = 1e-8;       // per auxiliary point: stop when |dL| < tolerance * M
  int max_iterations = 300;
  std::uint64_t seed = 0;

  int resolved_auxiliary(int K) const
  {
    if (auxiliary_count > 0)
      return auxiliary_count;
    return static_cast<int>(std::min<std::int64_t>(200LL * K, 1000000LL));
  }
};

struct EmResult
{
  std::vector<Matrix> covariances;
  std::vector<double> log_likelihood; // one entry before the first update, then one per iteration
  std::vector<char> frozen;           // orphaned components kept at their last SPD value
  int iterations = 0;
  bool converged = false;
  int floor_activations = 0;
};

//! Heuristic homogeneous covariance: diag((K^(-1/q) s_i)^2) for the target's
//! per-axis standard deviations s_i.
inline Matrix homogeneous_covariance(const DistributionSpec& target, int K)
{
  const int q = target.dimension();
  const double f = std::pow(static_cast<double>(K), -1.0 / q);
  const Vector s = target.stddev() * f;
  return s.array().square().matrix().asDiagonal();
}

//! Integrated squared error (up to the constant int p^2) between the target
//! and an equal-weight mixture with shared covariance diag(s^2). The cross
//! term is closed form for Gaussian targets and a sample mean otherwise.
inline double homogeneous_ise(const Matrix& means, const Vector& s, const DistributionSpec& target, const Matrix* samples)
{
  const int q = static_cast<int>(means.rows());
  const Eigen::Index K = means.cols();
  const Vector inv2 = (2.0 * s.array().square()).inverse().matrix();
  const double lognorm2 = -0.5 * q * kLog2Pi - 0.5 * (2.0 * s.array().square()).log().sum();
  double mm = 0.0;
  for (Eigen::Index k = 0; k < K; ++k)
    for (Eigen::Index l = 0; l < K; ++l)
      mm += std::exp(lognorm2 - 0.5 * (means.col(k) - means.col(l)).array().square().matrix().dot(inv2));
  mm /= static_cast<double>(K * K);

  double cross = 0.0;
  if (const auto* g = target.gaussian()) {
    const Matrix S = g->covariance + Matrix(s.array().square().matrix().asDiagonal());
    const Eigen::LLT<Matrix> llt(S);
    const Matrix L = llt.matrixL();
    const double ln = -0.5 * q * kLog2Pi - L.diagonal().array().log().sum();
    for (Eigen::Index k = 0; k < K; ++k) {
      const Vector z = L.triangularView<Eigen::Lower>().solve(means.col(k) - g->mean);
      cross += std::exp(ln - 0.5 * z.squaredNorm());
    }
    cross /= static_cast<double>(K);
  } else {
    require(samples != nullptr, "homogeneous_ise: non-Gaussian target needs samples");
    const Vector inv = s.array().square().inverse().matrix();
    const double ln = -0.5 * q * kLog2Pi - s.array().log().sum();
    for (Eigen::Index j = 0; j < samples->cols(); ++j) {
      double m = 0.0;
      for (Eigen::Index k = 0; k < K; ++k)
        m += std::exp(ln - 0.5 * (samples->col(j) - means.col(k)).array().square().matrix().dot(inv));
      cross += m / static_cast<double>(K);
    }
    cross /= static_cast<double>(samples->cols());
  }
  return mm - 2.0 * cross;
}

//! Scalar c minimizing the integrated squared error of the homogeneous
//! mixture with covariance diag((c s_i)^2), s_i the target's per-axis
//! standard deviations. Log-spaced scan, then golden-section refinement.
inline double fit_homogeneous_scale(const Matrix& means, const DistributionSpec& target, std::uint64_t seed = 0)
{
  const int q = static_cast<int>(means.rows());
  const Vector sd = target.stddev();
  std::optional<Matrix> samples;
  if (!target.is_gaussian())
    samples = target.sample_matrix(stream_seed(seed, 4), 20000);
  auto ise = [&](double logc) {
    return homogeneous_ise(means, sd * std::exp(logc), target, samples ? &*samples : nullptr);
  };
  const double lo = std::log(0.25 * std::pow(static_cast<double>(means.cols()), -1.0 / q));
  const double hi = std::log(2.0);
  constexpr int kScan = 40;
  int best = 0;
  double best_val = std::numeric_limits<double>::infinity();
  for (int i = 0; i <= kScan; ++i) {
    const double v = ise(lo + (hi - lo) * i / kScan);
    if (v < best_val) {
      best_val = v;
      best = i;
    }
  }
  double a = lo + (hi - lo) * std::max(best - 1, 0) / kScan;
  double b = lo + (hi - lo) * std::min(best + 1, kScan) / kScan;
  const double r = 0.5 * (std::sqrt(5.0) - 1.0);
  double c = b - r * (b - a), d = a + r * (b - a);
  double fc = ise(c), fd = ise(d);
  for (int it = 0; it < 40; ++it) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - r * (b - a);
      fc = ise(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + r * (b - a);
      fd = ise(d);
    }
  }
  return std::exp(0.5 * (a + b));
}

//! Half the nearest-neighbour distance of each point (needs K >= 2).
inline std::vector<double> inscribed_radii(const Matrix& points)
{
  const Eigen::Index K = points.cols();
  require(K >= 2, "inscribed radii need at least two points");
  std::vector<double> r(K);
  for (Eigen::Index k = 0; k < K; ++k) {
    double best = std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < K; ++j)
      if (j != k)
        best = std::min(best, (points.col(j) - points.col(k)).squaredNorm());
    r[k] = 0.5 * std::sqrt(best);
  }
  return r;
}

//! Responsibilities lambda_k(x) for fixed equal weights; sums to 1.
inline Vector responsibilities(const std::vector<GaussianComponent>& comps, const Eigen::Ref<const Vector>& x)
{
  const Eigen::Index K = static_cast<Eigen::Index>(comps.size());
  Vector lp(K);
  for (Eigen::Index k = 0; k < K; ++k)
    lp(k) = comps[k].log_pdf(x);
  const double m = lp.maxCoeff();
  Vector w = (lp.array() - m).exp();
  return w / w.sum();
}

namespace detail {

inline std::vector<GaussianComponent> equal_weight_components(const Matrix& means, const std::vector<Matrix>& covs)
{
  const double w = 1.0 / static_cast<double>(means.cols());
  std::vector<GaussianComponent> out;
  out.reserve(covs.size());
  for (Eigen::Index k = 0; k < means.cols(); ++k)
    out.emplace_back(w, means.col(k), covs[k]);
  return out;
}

// Number of fixed reduction blocks; independent of the thread count so the
// summation order never changes.
inline constexpr std::size_t kEmBlocks = 64;

struct EmAccumulators
{
  std::vector<Matrix> scatter;
  Vector beta;
  double loglik = 0.0;
};

inline EmAccumulators em_estep(const Matrix& means,
                               const std::vector<GaussianComponent>& comps,
                               const Matrix& aux)
{
  const int q = static_cast<int>(means.rows());
  const int K = static_cast<int>(means.cols());
  const Eigen::Index M = aux.cols();
  const double logw = -std::log(static_cast<double>(K));
  const std::size_t blocks = std::min<std::size_t>(kEmBlocks, static_cast<std::size_t>(M));

  std::vector<Matrix> inv_chol(K);
  Vector log_norm(K);
  for (int k = 0; k < K; ++k) {
    const Matrix& L = comps[k].cholesky();
    inv_chol[k] = L.triangularView<Eigen::Lower>().solve(Matrix::Identity(q, q));
    log_norm(k) = -0.5 * q * kLog2Pi - L.diagonal().array().log().sum();
  }

  constexpr Eigen::Index kChunk = 256;
  std::vector<EmAccumulators> partial(blocks);
  parallel_for(blocks, [&](std::size_t b) {
    auto& acc = partial[b];
    acc.scatter.assign(K, Matrix::Zero(q, q));
    acc.beta = Vector::Zero(K);
    const Eigen::Index lo = static_cast<Eigen::Index>(b * M / blocks);
    const Eigen::Index hi = static_cast<Eigen::Index>((b + 1) * M / blocks);
    Matrix lp, d;
    for (Eigen::Index c0 = lo; c0 < hi; c0 += kChunk) {
      const Eigen::Index n = std::min(kChunk, hi - c0);
      const auto x = aux.middleCols(c0, n);
      lp.resize(K, n);
      for (int k = 0; k < K; ++k) {
        d.noalias() = inv_chol[k] * (x.colwise() - means.col(k));
        lp.row(k) = (log_norm(k) - 0.5 * d.colwise().squaredNorm().array()).matrix();
      }
      for (Eigen::Index j = 0; j < n; ++j) {
        auto col = lp.col(j);
        const double m = col.maxCoeff();
        col = (col.array() - m).exp().matrix();
        const double s = col.sum();
        acc.loglik += logw + m + std::log(s);
        col /= s;
      }
      acc.beta += lp.rowwise().sum();
      for (int k = 0; k < K; ++k) {
        d = x.colwise() - means.col(k);
        acc.scatter[k].noalias() += d * lp.row(k).asDiagonal() * d.transpose();
      }
    }
  });

  EmAccumulators total;
  total.scatter.assign(K, Matrix::Zero(q, q));
  total.beta = Vector::Zero(K);
  for (const auto& p : partial) {
    for (int k = 0; k < K; ++k)
      total.scatter[k] += p.scatter[k];
    total.beta += p.beta;
    total.loglik += p.loglik;
  }
  return total;
}

} // namespace detail

//! Log-likelihood sum_j log sum_k (1/K) N(x_j | mu_k, Sigma_k).
inline double mixture_log_likelihood(const Matrix& means, const std::vector<Matrix>& covs, const Matrix& aux)
{
  const auto comps = detail::equal_weight_components(means, covs);
  return detail::em_estep(means, comps, aux).loglik;
}

//! Covariance-only EM: weights stay 1/K and means stay fixed throughout.
//! Components whose total responsibility vanishes are frozen and flagged.
inline EmResult fit_covariances_em(const Matrix& means,
                                   const std::vector<Matrix>& initial_covs,
                                   const Matrix& auxiliary,
                                   const EmConfig& config = {})
{
  const int q = static_cast<int>(means.rows());
  const int K = static_cast<int>(means.cols());
  const Eigen::Index M = auxiliary.cols();
  require(K >= 1, "em: need at least one component");
  require(static_cast<int>(initial_covs.size()) == K, "em: one initial covariance per mean");
  require(auxiliary.rows() == q, "em: auxiliary dimension mismatch");
  require(M >= 50LL * K, "em: auxiliary count must be at least 50 K");

  EmResult result;
  result.covariances = initial_covs;
  result.frozen.assign(K, 0);
  auto comps = detail::equal_weight_components(means, result.covariances);
  auto acc = detail::em_estep(means, comps, auxiliary);
  result.log_likelihood.push_back(acc.loglik);

  const double orphan = 1e-10;
  for (int iter = 0; iter < config.max_iterations; ++iter) {
    for (int k = 0; k < K; ++k) {
      if (acc.beta(k) < orphan) {
        if (!result.frozen[k])
          warn("em: component " + std::to_string(k) + " has no responsibility; covariance frozen");
        result.frozen[k] = 1;
        continue;
      }
      Matrix s = acc.scatter[k] / acc.beta(k);
      if (regularize_covariance(s))
        ++result.floor_activations;
      result.covariances[k] = std::move(s);
    }
    comps = detail::equal_weight_components(means, result.covariances);
    acc = detail::em_estep(means, comps, auxiliary);
    const double delta = acc.loglik - result.log_likelihood.back();
    result.log_likelihood.push_back(acc.loglik);
    result.iterations = iter + 1;
    if (std::abs(delta) < config.tolerance * static_cast<double>(M)) {
      result.converged = true;
      break;
    }
  }
  if (result.floor_activations > 0)
    warn("em: covariance eigenvalue floor applied " + std::to_string(result.floor_activations) + " times");
  return result;
}

//! Initial covariances from nearest-center cells of the auxiliary cloud
//! (sample scatter about each fixed mean). Cells with fewer than q + 1
//! points use `fallback`.
inline std::vector<Matrix> cluster_covariances(const Matrix& means, const Matrix& aux, const Matrix& fallback)
{
  const int q = static_cast<int>(means.rows());
  const int K = static_cast<int>(means.cols());
  std::vector<Matrix> s(K, Matrix::Zero(q, q));
  std::vector<int> n(K, 0);
  for (Eigen::Index j = 0; j < aux.cols(); ++j) {
    const int k = detail::nearest_center(means, aux.col(j), nullptr);
    const Vector d = aux.col(j) - means.col(k);
    s[k] += d * d.transpose();
    ++n[k];
  }
  for (int k = 0; k < K; ++k) {
    if (n[k] < q + 1) {
      s[k] = fallback;
      continue;
    }
    s[k] /= n[k];
    regularize_covariance(s[k]);
  }
  return s;
}

//! Drops exact (or near, 1e-12 relative) duplicate columns, keeping the first.
inline Matrix deduplicate_points(const Matrix& points)
{
  const double scale = std::max(1.0, points.cwiseAbs().maxCoeff());
  std::vector<Eigen::Index> keep;
  for (Eigen::Index k = 0; k < points.cols(); ++k) {
    bool dup = false;
    for (Eigen::Index j : keep)
      if ((points.col(j) - points.col(k)).norm() <= 1e-12 * scale) {
        dup = true;
        break;
      }
    if (!dup)
      keep.push_back(k);
  }
  if (static_cast<Eigen::Index>(keep.size()) == points.cols())
    return points;
  warn("removed " + std::to_string(points.cols() - static_cast<Eigen::Index>(keep.size())) +
       " duplicate rep-points");
  Matrix out(points.rows(), static_cast<Eigen::Index>(keep.size()));
  for (std::size_t i = 0; i < keep.size(); ++i)
    out.col(static_cast<Eigen::Index>(i)) = points.col(keep[i]);
  return out;
}

//! Equal-weight mixture whose means are the rep-points and whose covariances
//! follow the kernel policy.
inline MixtureModel build_mixture(const RepPointSet& points,
                                  const KernelPolicy& policy,
                                  const DistributionSpec& target,
                                  const EmConfig& em = {},
                                  EmResult* report = nullptr)
{
  require(points.size() >= 1, "build_mixture: need at least one rep-point");
  require(points.dimension() == target.dimension(), "build_mixture: dimension mismatch");
  const Matrix means = deduplicate_points(points.points);
  const int q = static_cast<int>(means.rows());
  const int K = static_cast<int>(means.cols());

  std::vector<Matrix> covs;
  KernelKind kind = policy.kind;
  if (kind == KernelKind::inscribed && K == 1) {
    warn("inscribed kernel needs two or more rep-points; using the homogeneous heuristic");
    kind = KernelKind::homogeneous;
  }

  switch (kind) {
    case KernelKind::homogeneous: {
      Matrix c = homogeneous_covariance(target, K);
      if (policy.fitted) {
        const double f = fit_homogeneous_scale(means, target, em.seed);
        c = (target.stddev() * f).array().square().matrix().asDiagonal();
      } else if (policy.sigma) {
        require(*policy.sigma > 0.0, "homogeneous sigma must be positive");
        c = Matrix::Identity(q, q) * (*policy.sigma * *policy.sigma);
      }
      covs.assign(K, c);
      break;
    }
    case KernelKind::inscribed: {
      for (double r : inscribed_radii(means)) {
        require(r > 0.0, "inscribed radius must be positive");
        covs.push_back(Matrix::Identity(q, q) * r * r);
      }
      break;
    }
    case KernelKind::adaptive: {
      const int M = em.resolved_auxiliary(K);
      const Matrix aux = target.sample_matrix(stream_seed(em.seed, 3), M);
      const Matrix fallback = homogeneous_covariance(target, K);
      std::vector<Matrix> init = points.provenance == Provenance::kmeans
                                   ? cluster_covariances(means, aux, fallback)
                                   : std::vector<Matrix>(K, fallback);
      auto fit = fit_covariances_em(means, init, aux, em);
      covs = fit.covariances;
      if (report)
        *report = std::move(fit);
      break;
    }
  }
  return MixtureModel(detail::equal_weight_components(means, covs));
}

//! Equal-weight mixture from explicit means and covariances.
inline MixtureModel equal_weight_mixture(const Matrix& means, const std::vector<Matrix>& covs)
{
  return MixtureModel(detail::equal_weight_components(means, covs));
}

} // namespace meso
