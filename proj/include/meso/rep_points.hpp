#pragma once

// Representative points: the fixed component locations of the mixture.
// Either a low-discrepancy set pushed through the target's inverse CDF
// (or Box-Muller for Gaussians), or K-means centroids of a sample cloud.

#include "core.hpp"
#include "distribution.hpp"
#include "parallel.hpp"

#include <algorithm>
#include <array>
#include <limits>
#include <map>
#include <mutex>
#include <numeric>
#include <optional>
#include <random>
#include <string>

namespace meso {

enum class UnitGenerator
{
  glp,
  halton,
  random
};

inline const char* to_string(UnitGenerator g)
{
  switch (g) {
    case UnitGenerator::glp: return "glp";
    case UnitGenerator::halton: return "halton";
    case UnitGenerator::random: return "random";
  }
  return "?";
}

//! Points in [0,1)^q, stored as the columns of a q x n matrix.
struct UnitPointSet
{
  Matrix points;
  UnitGenerator generator = UnitGenerator::glp;

  int dimension() const { return static_cast<int>(points.rows()); }
  int size() const { return static_cast<int>(points.cols()); }
};

enum class Provenance
{
  lds_transform,
  kmeans
};

inline const char* to_string(Provenance p)
{
  return p == Provenance::lds_transform ? "lds-transform" : "kmeans";
}

struct RepPointSet
{
  Matrix points; // q x K
  Provenance provenance = Provenance::lds_transform;
  DistributionSpec target;
  std::string generator; // "glp", "halton", "random" or "kmeans"
  std::uint64_t seed = 0;

  int dimension() const { return static_cast<int>(points.rows()); }
  int size() const { return static_cast<int>(points.cols()); }
};

// ---------------------------------------------------------------------------
// Unit-cube generators

namespace detail {

inline const std::array<int, 50>& first_primes()
{
  static const std::array<int, 50> primes = {
    2,   3,   5,   7,   11,  13,  17,  19,  23,  29,  31,  37,  41,
    43,  47,  53,  59,  61,  67,  71,  73,  79,  83,  89,  97,  101,
    103, 107, 109, 113, 127, 131, 137, 139, 149, 151, 157, 163, 167,
    173, 179, 181, 191, 193, 197, 199, 211, 223, 227, 229
  };
  return primes;
}

inline double radical_inverse(std::uint64_t index, int base)
{
  double result = 0.0;
  double f = 1.0 / base;
  while (index > 0) {
    result += f * static_cast<double>(index % base);
    index /= base;
    f /= base;
  }
  return result;
}

// Previous Fibonacci number when n is Fibonacci (n >= 3), else nullopt.
inline std::optional<std::int64_t> fibonacci_predecessor(std::int64_t n)
{
  std::int64_t a = 1, b = 2;
  while (b < n) {
    const std::int64_t c = a + b;
    a = b;
    b = c;
  }
  if (b == n && n >= 3)
    return a;
  return std::nullopt;
}

// Bernoulli-polynomial figure of merit P_2 for a rank-1 lattice.
inline double lattice_p2(std::int64_t n, const std::vector<std::int64_t>& h)
{
  double sum = 0.0;
  for (std::int64_t i = 0; i < n; ++i) {
    double prod = 1.0;
    for (std::int64_t hj : h) {
      const double x = static_cast<double>((i * hj) % n) / static_cast<double>(n);
      prod *= 1.0 + 2.0 * kPi * kPi * (x * x - x + 1.0 / 6.0);
    }
    sum += prod;
  }
  return sum / static_cast<double>(n) - 1.0;
}

// Korobov generating vector (1, a, a^2, ...) mod n minimizing P_2.
inline std::vector<std::int64_t> korobov_vector(std::int64_t n, int q)
{
  static std::mutex mutex;
  static std::map<std::pair<std::int64_t, int>, std::vector<std::int64_t>> cache;
  std::lock_guard lock(mutex);
  if (auto it = cache.find({ n, q }); it != cache.end())
    return it->second;

  auto make = [&](std::int64_t a) {
    std::vector<std::int64_t> h(q);
    h[0] = 1;
    for (int j = 1; j < q; ++j)
      h[j] = (h[j - 1] * a) % n;
    return h;
  };
  std::vector<std::int64_t> best;
  double best_score = std::numeric_limits<double>::infinity();
  for (std::int64_t a = 2; a < n; ++a) {
    if (std::gcd(a, n) != 1)
      continue;
    auto h = make(a);
    const double score = lattice_p2(n, h);
    if (score < best_score) {
      best_score = score;
      best = std::move(h);
    }
  }
  cache[{ n, q }] = best;
  return best;
}

} // namespace detail

enum class LatticeOffset
{
  none,     // x_i = {i h / n}
  centered  // x_i = {(2 i h - 1) / (2n)}, keeps every coordinate off 0
};

inline constexpr std::int64_t kMaxKorobovSearch = 5000;

//! Generating vector for an n-point good lattice in dimension q, when one is
//! configured: q = 1 trivially, q = 2 for Fibonacci n, q = 3..5 by Korobov
//! search (n <= 5000).
inline std::optional<std::vector<std::int64_t>> glp_generating_vector(std::int64_t n, int q)
{
  if (q == 1)
    return std::vector<std::int64_t>{ 1 };
  if (q == 2) {
    if (auto prev = detail::fibonacci_predecessor(n))
      return std::vector<std::int64_t>{ 1, *prev };
    return std::nullopt;
  }
  if (q >= 3 && q <= 5 && n >= 5 && n <= kMaxKorobovSearch)
    return detail::korobov_vector(n, q);
  return std::nullopt;
}

inline UnitPointSet generate_halton(int count, int dimension, std::uint64_t skip = 0)
{
  require(count >= 1, "halton: count must be >= 1");
  require(dimension >= 1 && dimension <= 50, "halton: dimension must be in [1, 50]");
  UnitPointSet set{ Matrix(dimension, count), UnitGenerator::halton };
  const auto& primes = detail::first_primes();
  for (int i = 0; i < count; ++i) {
    const std::uint64_t index = skip + 1 + static_cast<std::uint64_t>(i);
    for (int j = 0; j < dimension; ++j)
      set.points(j, i) = detail::radical_inverse(index, primes[j]);
  }
  return set;
}

//! Good lattice point set. Falls back to Halton (with a warning) when no
//! generating vector is configured, unless allow_fallback is false.
inline UnitPointSet generate_glp(int count,
                                 int dimension,
                                 LatticeOffset offset = LatticeOffset::none,
                                 bool allow_fallback = true)
{
  require(count >= 2, "glp: count must be >= 2");
  require(dimension >= 1, "glp: dimension must be >= 1");
  auto h = glp_generating_vector(count, dimension);
  if (!h) {
    if (!allow_fallback)
      throw Error(ErrorCode::unsupported_dimension,
                  "no GLP generating vector for n=" + std::to_string(count) +
                    ", q=" + std::to_string(dimension));
    warn("no GLP generating vector for n=" + std::to_string(count) + ", q=" +
         std::to_string(dimension) + "; using Halton instead");
    return generate_halton(count, dimension);
  }
  const std::int64_t n = count;
  UnitPointSet set{ Matrix(dimension, count), UnitGenerator::glp };
  for (std::int64_t i = 1; i <= n; ++i) {
    for (int j = 0; j < dimension; ++j) {
      const std::int64_t hj = (*h)[j];
      double x;
      if (offset == LatticeOffset::none) {
        x = static_cast<double>((i * hj) % n) / static_cast<double>(n);
      } else {
        const std::int64_t m = ((2 * i * hj - 1) % (2 * n) + 2 * n) % (2 * n);
        x = static_cast<double>(m) / static_cast<double>(2 * n);
      }
      set.points(j, i - 1) = x;
    }
  }
  return set;
}

inline UnitPointSet generate_random(int count, int dimension, std::uint64_t seed)
{
  require(count >= 1 && dimension >= 1, "random: count and dimension must be >= 1");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  UnitPointSet set{ Matrix(dimension, count), UnitGenerator::random };
  for (int i = 0; i < count; ++i)
    for (int j = 0; j < dimension; ++j)
      set.points(j, i) = u01(rng);
  return set;
}

// ---------------------------------------------------------------------------
// Transform to the target distribution

//! Inverse-CDF map for product targets; Box-Muller plus affine map for
//! Gaussian targets. For odd q the Gaussian path expects a (q+1)-dimensional
//! unit set and drops the extra coordinate.
inline RepPointSet transform_to_target(const UnitPointSet& unit, const DistributionSpec& target)
{
  const int q = target.dimension();
  const int n = unit.size();
  RepPointSet out;
  out.provenance = Provenance::lds_transform;
  out.target = target;
  out.generator = to_string(unit.generator);
  out.points.resize(q, n);

  if (auto* m = target.marginals()) {
    require(unit.dimension() == q, "transform: unit set dimension must equal target dimension");
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < q; ++j)
        out.points(j, i) = m->marginals[j].quantile(unit.points(j, i));
    return out;
  }

  const int paired = q + (q % 2);
  require(unit.dimension() == paired,
          "transform: Box-Muller needs a unit set of dimension " + std::to_string(paired));
  const auto& g = *target.gaussian();
  const Matrix L = target.cholesky();
  Vector z(paired);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < paired; j += 2) {
      const double u1 = unit.points(j, i);
      const double u2 = unit.points(j + 1, i);
      if (!(u1 >= 0.0 && u1 < 1.0))
        throw Error(ErrorCode::inversion_failure, "Box-Muller radius undefined at u = 1");
      const double r = std::sqrt(-2.0 * std::log1p(-u1));
      z(j) = r * std::cos(2.0 * kPi * u2);
      z(j + 1) = r * std::sin(2.0 * kPi * u2);
    }
    out.points.col(i) = g.mean + L * z.head(q);
  }
  return out;
}

//! Convenience: n-point LDS rep-point set for a target, choosing the lattice
//! offset and Box-Muller pairing dimension automatically.
inline RepPointSet lds_rep_points(UnitGenerator generator,
                                  int count,
                                  const DistributionSpec& target,
                                  std::uint64_t seed = 0)
{
  const int q = target.dimension();
  const int dim = target.is_gaussian() ? q + (q % 2) : q;
  UnitPointSet unit;
  switch (generator) {
    case UnitGenerator::glp:
      unit = generate_glp(count, dim,
                          target.is_gaussian() ? LatticeOffset::none : LatticeOffset::centered);
      break;
    case UnitGenerator::halton: unit = generate_halton(count, dim); break;
    case UnitGenerator::random: unit = generate_random(count, dim, seed); break;
  }
  auto out = transform_to_target(unit, target);
  out.seed = seed;
  return out;
}

// ---------------------------------------------------------------------------
// K-means

struct KMeansOptions
{
  double relative_tolerance = 1e-8;
  int max_iterations = 500;
};

struct KMeansResult
{
  RepPointSet rep_points;
  Matrix auxiliary;                 // q x M sample cloud
  std::vector<int> assignment;      // nearest center per auxiliary point
  std::vector<double> objective;    // sum of squared distances, per iteration
  int iterations = 0;
  int reseeded = 0;                 // empty-cluster reassignments
};

namespace detail {

inline int nearest_center(const Matrix& centers, const Eigen::Ref<const Vector>& x, double* dist2)
{
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (Eigen::Index k = 0; k < centers.cols(); ++k) {
    const double d = (centers.col(k) - x).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(k);
    }
  }
  if (dist2)
    *dist2 = best_d;
  return best;
}

} // namespace detail

//! Lloyd iteration of `centers` on a fixed cloud (steps 3-4 repeated until
//! no center moves more than tolerance * scale).
inline KMeansResult lloyd_iterate(Matrix centers, Matrix cloud, double scale, const KMeansOptions& options = {})
{
  require(centers.cols() >= 1 && centers.rows() == cloud.rows(), "kmeans: center/cloud shapes disagree");
  require(cloud.cols() >= centers.cols(), "kmeans: cloud smaller than K");
  const int q = static_cast<int>(cloud.rows());
  const int K = static_cast<int>(centers.cols());
  const int M = static_cast<int>(cloud.cols());
  KMeansResult result;
  result.auxiliary = std::move(cloud);
  const Matrix& aux = result.auxiliary;
  const double tol = options.relative_tolerance * (scale > 0.0 ? scale : 1.0);

  std::vector<int> assign(M);
  std::vector<double> dist2(M);
  for (int iter = 0; iter < options.max_iterations; ++iter) {
    parallel_for(static_cast<std::size_t>(M), [&](std::size_t j) {
      assign[j] = detail::nearest_center(centers, aux.col(static_cast<Eigen::Index>(j)), &dist2[j]);
    });
    double obj = 0.0;
    for (int j = 0; j < M; ++j)
      obj += dist2[j];
    result.objective.push_back(obj);

    Matrix sums = Matrix::Zero(q, K);
    std::vector<int> counts(K, 0);
    for (int j = 0; j < M; ++j) {
      sums.col(assign[j]) += aux.col(j);
      ++counts[assign[j]];
    }

    Matrix next = centers;
    std::vector<char> taken(M, 0);
    for (int k = 0; k < K; ++k) {
      if (counts[k] > 0) {
        next.col(k) = sums.col(k) / counts[k];
        continue;
      }
      // Empty cluster: move it onto the auxiliary point farthest from its center.
      int far = -1;
      double far_d = -1.0;
      for (int j = 0; j < M; ++j) {
        if (!taken[j] && dist2[j] > far_d) {
          far_d = dist2[j];
          far = j;
        }
      }
      taken[far] = 1;
      next.col(k) = aux.col(far);
      ++result.reseeded;
    }

    const double moved = (next - centers).colwise().norm().maxCoeff();
    centers = std::move(next);
    result.iterations = iter + 1;
    if (moved < tol)
      break;
  }

  result.assignment = std::move(assign);
  result.rep_points.points = std::move(centers);
  result.rep_points.provenance = Provenance::kmeans;
  result.rep_points.generator = "kmeans";
  return result;
}

//! Centers from K target samples, refined by Lloyd iteration on an auxiliary
//! cloud of M target samples.
inline KMeansResult kmeans_rep_points(const DistributionSpec& target,
                                      int K,
                                      int auxiliary_count,
                                      std::uint64_t seed,
                                      const KMeansOptions& options = {})
{
  require(K >= 1, "kmeans: K must be >= 1");
  require(static_cast<std::int64_t>(auxiliary_count) >= 50LL * K,
          "kmeans: auxiliary count must be at least 50 K");
  KMeansResult result = lloyd_iterate(target.sample_matrix(stream_seed(seed, 1), K),
                                      target.sample_matrix(stream_seed(seed, 2), auxiliary_count),
                                      target.stddev().maxCoeff(), options);
  result.rep_points.target = target;
  result.rep_points.seed = seed;
  return result;
}

//! Sum of squared distances from each cloud point to its nearest center.
inline double kmeans_objective(const Matrix& centers, const Matrix& cloud)
{
  double total = 0.0;
  for (Eigen::Index j = 0; j < cloud.cols(); ++j) {
    double d;
    detail::nearest_center(centers, cloud.col(j), &d);
    total += d;
  }
  return total;
}

// ---------------------------------------------------------------------------
// F-discrepancy

inline constexpr double kMaxDiscrepancyCorners = 4e5;
inline constexpr int kDiscrepancyProbes = 10000;

//! True when f_discrepancy evaluates the exact supremum for this size.
inline bool f_discrepancy_is_exact(int count, int dimension)
{
  return dimension == 1 ||
         std::pow(static_cast<double>(count) + 1.0, dimension) <= kMaxDiscrepancyCorners;
}

//! Kolmogorov-Smirnov distance between the empirical CDF of the points and
//! the target CDF. Exact in 1-D and for small point sets; otherwise a lower
//! bound from the points plus 10^4 quasi-random probes.
inline double f_discrepancy(const Matrix& points, const DistributionSpec& target)
{
  const auto ind = target.as_independent();
  if (!ind)
    throw Error(ErrorCode::invalid_argument,
                "f-discrepancy needs a target with independent marginals");
  const int q = static_cast<int>(points.rows());
  const int K = static_cast<int>(points.cols());
  require(q == target.dimension(), "f-discrepancy: dimension mismatch");
  require(K >= 1, "f-discrepancy: empty point set");
  const auto& marg = ind->marginals;

  if (q == 1) {
    std::vector<double> x(points.data(), points.data() + K);
    std::sort(x.begin(), x.end());
    double d = 0.0;
    for (int i = 0; i < K; ++i) {
      const double F = marg[0].cdf(x[i]);
      d = std::max({ d, (i + 1.0) / K - F, F - static_cast<double>(i) / K });
    }
    return d;
  }

  // Marginal CDF values of every point coordinate.
  Matrix Fp(q, K);
  for (int i = 0; i < K; ++i)
    for (int j = 0; j < q; ++j)
      Fp(j, i) = marg[j].cdf(points(j, i));

  // Both one-sided gaps at a corner; cornerF holds its marginal CDF values.
  auto gap_at = [&](const Vector& corner, const Vector& cornerF) {
    int closed = 0, strict = 0;
    for (int i = 0; i < K; ++i) {
      bool le = true, lt = true;
      for (int j = 0; j < q; ++j) {
        const double c = corner(j);
        const double p = points(j, i);
        le = le && p <= c;
        lt = lt && p < c;
      }
      closed += le;
      strict += lt;
    }
    const double F = cornerF.prod();
    return std::max(closed / static_cast<double>(K) - F, F - strict / static_cast<double>(K));
  };

  double d = 0.0;
  Vector corner(q), cornerF(q);
  if (f_discrepancy_is_exact(K, q)) {
    std::vector<int> idx(q, 0); // index K means +infinity
    while (true) {
      for (int j = 0; j < q; ++j) {
        if (idx[j] == K) {
          corner(j) = std::numeric_limits<double>::infinity();
          cornerF(j) = 1.0;
        } else {
          corner(j) = points(j, idx[j]);
          cornerF(j) = Fp(j, idx[j]);
        }
      }
      d = std::max(d, gap_at(corner, cornerF));
      int j = 0;
      while (j < q && ++idx[j] > K) {
        idx[j] = 0;
        ++j;
      }
      if (j == q)
        break;
    }
    return d;
  }

  for (int i = 0; i < K; ++i)
    d = std::max(d, gap_at(points.col(i), Fp.col(i)));
  const auto probes = generate_halton(kDiscrepancyProbes, q);
  for (int i = 0; i < probes.size(); ++i) {
    for (int j = 0; j < q; ++j) {
      const double u = probes.points(j, i);
      corner(j) = marg[j].quantile(u);
      cornerF(j) = marg[j].cdf(corner(j));
    }
    d = std::max(d, gap_at(corner, cornerF));
  }
  return d;
}

inline double f_discrepancy(const RepPointSet& set, const DistributionSpec& target)
{
  return f_discrepancy(set.points, target);
}

} // namespace meso
