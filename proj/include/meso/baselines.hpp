#pragma once

// Sample-based reference methods: push point clouds through the same
// integrators the mixture path uses, smooth them with a Gaussian KDE, and
// compare density grids.

#include "dynamics.hpp"
#include "evolution.hpp"
#include "grid.hpp"
#include "parallel.hpp"

#include <random>

namespace meso {

enum class SampleOrigin
{
  mc,
  qmc
};

inline const char* to_string(SampleOrigin o)
{
  return o == SampleOrigin::mc ? "mc" : "qmc";
}

//! Equally weighted samples, one per column.
struct SampleCloud
{
  Matrix samples;
  SampleOrigin origin = SampleOrigin::mc;
  std::string descriptor;
  int excluded = 0; // samples dropped after a blowup

  int size() const { return static_cast<int>(samples.cols()); }
  int dimension() const { return static_cast<int>(samples.rows()); }
  double weight() const { return 1.0 / size(); }

  Vector mean() const { return samples.rowwise().mean(); }

  Matrix covariance() const
  {
    const Matrix d = samples.colwise() - mean();
    return d * d.transpose() / static_cast<double>(size());
  }
};

inline SampleCloud qmc_cloud(const RepPointSet& points)
{
  return { points.points, SampleOrigin::qmc, points.generator, 0 };
}

inline SampleCloud mc_cloud(const DistributionSpec& target, int count, std::uint64_t seed)
{
  return { target.sample_matrix(seed, count), SampleOrigin::mc, "mc seed " + std::to_string(seed), 0 };
}

namespace detail {

inline void check_cloud(const SampleCloud& cloud, int dim, const char* who)
{
  require(cloud.size() >= 1, std::string(who) + ": sample cloud is empty");
  require(cloud.dimension() == dim, std::string(who) + ": sample dimension mismatch");
}

// Keeps the columns flagged ok; throws if none survive.
inline Matrix keep_columns(const Matrix& m, const std::vector<char>& ok)
{
  const auto n = std::count(ok.begin(), ok.end(), 1);
  if (n == 0)
    throw Error(ErrorCode::integration_blowup, "every sample blew up");
  Matrix out(m.rows(), n);
  Eigen::Index c = 0;
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    if (ok[j])
      out.col(c++) = m.col(j);
  return out;
}

inline void report_exclusions(int excluded, int total)
{
  if (excluded > 0)
    warn("propagate_samples: excluded " + std::to_string(excluded) + " of " + std::to_string(total) +
         " samples after blowup");
}

} // namespace detail

inline SampleCloud propagate_samples(const StaticMap& model, const SampleCloud& cloud)
{
  detail::check_cloud(cloud, model.input_dim, "propagate_samples");
  const int N = cloud.size();
  Matrix out(model.output_dim, N);
  std::vector<char> ok(N, 1);
  parallel_for(static_cast<std::size_t>(N), [&](std::size_t j) {
    const Vector y = model.map(cloud.samples.col(j));
    if (y.size() != model.output_dim || !y.allFinite()) {
      ok[j] = 0;
      return;
    }
    out.col(j) = y;
  });
  SampleCloud res{ detail::keep_columns(out, ok), cloud.origin, cloud.descriptor, 0 };
  res.excluded = cloud.excluded + (N - res.size());
  detail::report_exclusions(N - res.size(), N);
  return res;
}

//! One cloud per requested time. A sample that blows up at any time is
//! dropped from every snapshot so the clouds stay aligned.
inline std::vector<SampleCloud> propagate_samples(const ConservativeModel& model,
                                                  const SampleCloud& cloud,
                                                  const std::vector<double>& times)
{
  detail::check_cloud(cloud, model.input_dim, "propagate_samples");
  const int N = cloud.size();
  std::vector<std::vector<Vector>> paths(N);
  std::vector<char> ok(N, 1);
  parallel_for(static_cast<std::size_t>(N), [&](std::size_t j) {
    try {
      paths[j] = model.trajectory(cloud.samples.col(j), times);
      for (const auto& y : paths[j])
        if (!y.allFinite())
          ok[j] = 0;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::integration_blowup)
        throw;
      ok[j] = 0;
    }
  });
  const int kept = static_cast<int>(std::count(ok.begin(), ok.end(), 1));
  if (kept == 0)
    throw Error(ErrorCode::integration_blowup, "every sample blew up");
  detail::report_exclusions(N - kept, N);
  std::vector<SampleCloud> out;
  for (std::size_t t = 0; t < times.size(); ++t) {
    SampleCloud c{ Matrix(model.output_dim, kept), cloud.origin, cloud.descriptor, cloud.excluded + N - kept };
    int col = 0;
    for (int j = 0; j < N; ++j)
      if (ok[j])
        c.samples.col(col++) = paths[j][t];
    out.push_back(std::move(c));
  }
  return out;
}

inline std::vector<SampleCloud> propagate_samples(const OdeFlow& flow,
                                                  const SampleCloud& cloud,
                                                  double t0,
                                                  const std::vector<double>& times)
{
  return propagate_samples(ConservativeModel::from_flow(flow, t0), cloud, times);
}

//! Trajectory sampling for additive-noise SDEs: RK4 on the drift over each
//! step, then an increment A dB with dB ~ N(0, D dt). Snapshots follow the
//! Markov options' cadence (initial state included).
inline std::vector<SampleCloud> propagate_samples(const Sde& sde, const SampleCloud& cloud, const MarkovOptions& opt)
{
  const int n = sde.dim();
  detail::check_cloud(cloud, n, "propagate_samples");
  require(opt.steps >= 1 && opt.dt > 0.0 && opt.snapshot_every >= 1, "propagate_samples: invalid step options");
  const int substeps = flow_steps(sde.drift, opt.t0, opt.t0 + opt.dt);
  const int m = static_cast<int>(sde.intensity.rows());
  Matrix L = Matrix::Zero(m, m);
  if (sde.intensity.cwiseAbs().maxCoeff() > 0.0) {
    Eigen::SelfAdjointEigenSolver<Matrix> eig(sde.intensity * opt.dt);
    L = eig.eigenvectors() * eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
  }
  const Matrix AL = sde.diffusion * L;
  const int N = cloud.size();
  const int snaps = 1 + opt.steps / opt.snapshot_every + (opt.steps % opt.snapshot_every ? 1 : 0);
  std::vector<Matrix> states(snaps, Matrix(n, N));
  std::vector<char> ok(N, 1);

  parallel_for(static_cast<std::size_t>(N), [&](std::size_t j) {
    std::mt19937_64 rng(stream_seed(opt.seed, j, 0xb5e));
    std::normal_distribution<double> n01;
    Vector x = cloud.samples.col(j);
    Vector g(m);
    states[0].col(j) = x;
    int s = 1;
    try {
      for (int step = 1; step <= opt.steps; ++step) {
        const double t_prev = opt.t0 + (step - 1) * opt.dt;
        const double t_next = opt.t0 + step * opt.dt;
        x = rk4_integrate(sde.drift.field, x, t_prev, t_next, substeps);
        for (int i = 0; i < m; ++i)
          g(i) = n01(rng);
        x += AL * g;
        if (step % opt.snapshot_every == 0 || step == opt.steps)
          states[s++].col(j) = x;
      }
      if (!x.allFinite())
        ok[j] = 0;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::integration_blowup)
        throw;
      ok[j] = 0;
    }
  });
  const int kept = static_cast<int>(std::count(ok.begin(), ok.end(), 1));
  detail::report_exclusions(N - kept, N);
  std::vector<SampleCloud> out;
  for (auto& st : states)
    out.push_back({ detail::keep_columns(st, ok), cloud.origin, cloud.descriptor, cloud.excluded + N - kept });
  return out;
}

//! Isotropic Gaussian-kernel density estimate at one point.
inline double kde_evaluate(const SampleCloud& cloud, double bandwidth, const Eigen::Ref<const Vector>& x)
{
  const int d = cloud.dimension();
  const double inv_h2 = 1.0 / (bandwidth * bandwidth);
  double s = 0.0;
  for (int j = 0; j < cloud.size(); ++j)
    s += std::exp(-0.5 * inv_h2 * (cloud.samples.col(j) - x).squaredNorm());
  return s * std::pow(2.0 * kPi * bandwidth * bandwidth, -0.5 * d) / cloud.size();
}

//! Isotropic Gaussian-kernel density estimate evaluated on the grid.
inline DensityGrid kde_density(const SampleCloud& cloud, double bandwidth, const GridSpec& grid)
{
  require(bandwidth > 0.0, "kde_density: bandwidth must be positive");
  grid.validate();
  require(cloud.dimension() == grid.dimension(), "kde_density: grid/sample dimension mismatch");
  DensityGrid g{ grid, std::vector<double>(grid.size(), 0.0) };
  parallel_for(grid.size(), [&](std::size_t i) { g.values[i] = kde_evaluate(cloud, bandwidth, grid.point(i)); });
  return g;
}

//! 1-D profile of f along the line center + s * direction, s in [-half, half].
template<class F>
DensityGrid line_profile(F&& f, const Vector& center, const Vector& direction, double half, int count)
{
  require(half > 0.0 && count >= 3, "line_profile: need half > 0 and count >= 3");
  DensityGrid g{ GridSpec{ { GridAxis{ -half, half, count } } }, std::vector<double>(count) };
  const Vector u = direction.normalized();
  for (int i = 0; i < count; ++i)
    g.values[i] = f(Vector(center + g.spec.axes[0].at(i) * u));
  return g;
}

enum class GridNorm
{
  l1,
  l2,
  linf
};

inline const char* to_string(GridNorm n)
{
  switch (n) {
    case GridNorm::l1: return "L1";
    case GridNorm::l2: return "L2";
    case GridNorm::linf: return "Linf";
  }
  return "?";
}

inline double grid_norm(const DensityGrid& a, GridNorm norm)
{
  const double dv = a.spec.cell_volume();
  double s = 0.0;
  for (double v : a.values) {
    switch (norm) {
      case GridNorm::l1: s += std::abs(v) * dv; break;
      case GridNorm::l2: s += v * v * dv; break;
      case GridNorm::linf: s = std::max(s, std::abs(v)); break;
    }
  }
  return norm == GridNorm::l2 ? std::sqrt(s) : s;
}

inline bool same_grid(const GridSpec& a, const GridSpec& b)
{
  if (a.dimension() != b.dimension())
    return false;
  for (int d = 0; d < a.dimension(); ++d)
    if (a.axes[d].lo != b.axes[d].lo || a.axes[d].hi != b.axes[d].hi || a.axes[d].count != b.axes[d].count)
      return false;
  return true;
}

inline DensityGrid grid_difference(const DensityGrid& a, const DensityGrid& b)
{
  if (!same_grid(a.spec, b.spec) || a.values.size() != b.values.size())
    throw Error(ErrorCode::grid_mismatch, "density grids do not share the same spec");
  DensityGrid d{ a.spec, a.values };
  for (std::size_t i = 0; i < d.values.size(); ++i)
    d.values[i] -= b.values[i];
  return d;
}

//! Cell-volume weighted norm of a - b.
inline double grid_error(const DensityGrid& a, const DensityGrid& b, GridNorm norm)
{
  return grid_norm(grid_difference(a, b), norm);
}

} // namespace meso
