#pragma once

// Probability evolution: every mixture component is pushed through the
// dynamics via its cubature points and carried forward as a Gaussian with the
// propagated first two moments. Weights never change.

#include "cubature.hpp"
#include "dynamics.hpp"
#include "mixture.hpp"
#include "parallel.hpp"

#include <random>

namespace meso {

struct EvolutionTrace
{
  std::vector<double> times;
  std::vector<MixtureModel> snapshots;
  std::string config_hash;
  std::int64_t model_runs = 0;     // trajectories (or map calls) per snapshot
  int floor_activations = 0;       // covariance floor hits while re-forming components

  std::size_t size() const { return times.size(); }

  void push(double t, MixtureModel m)
  {
    require(times.empty() || t > times.back(), "trace times must be strictly increasing");
    require(snapshots.empty() || (m.size() == snapshots.front().size() &&
                                  m.dimension() == snapshots.front().dimension()),
            "trace snapshots must share K and dimension");
    times.push_back(t);
    snapshots.push_back(std::move(m));
  }
};

namespace detail {

inline MixtureModel reassemble(const MixtureModel& input, const std::vector<MomentPair>& moments, int* floored)
{
  std::vector<GaussianComponent> comps;
  comps.reserve(moments.size());
  for (std::size_t k = 0; k < moments.size(); ++k) {
    bool hit = false;
    comps.push_back(GaussianComponent::regularized(input[static_cast<int>(k)].weight(), moments[k].mean,
                                                   moments[k].covariance, &hit));
    if (hit && floored)
      ++*floored;
  }
  return MixtureModel(std::move(comps));
}

} // namespace detail

//! Pushes each component through a static map.
inline MixtureModel evolve_static(const StaticMap& model, const MixtureModel& input)
{
  require(input.dimension() == model.input_dim, "evolve_static: input dimension mismatch");
  std::vector<MomentPair> moments(input.size());
  parallel_for(static_cast<std::size_t>(input.size()), [&](std::size_t k) {
    try {
      moments[k] = propagate_moments(input[static_cast<int>(k)], model.map);
    } catch (const Error& e) {
      throw Error(e.code(), "component " + std::to_string(k) + ": " + e.what());
    }
  });
  int floored = 0;
  return detail::reassemble(input, moments, &floored);
}

//! Conservative model: the 2q cubature points of every input component are
//! integrated once through all requested times; each snapshot is re-formed
//! from the outputs at that time.
inline EvolutionTrace evolve_conservative(const ConservativeModel& model,
                                          const MixtureModel& input,
                                          const std::vector<double>& times)
{
  require(input.dimension() == model.input_dim, "evolve_conservative: input dimension mismatch");
  require(!times.empty(), "evolve_conservative: need at least one time");
  for (std::size_t j = 0; j < times.size(); ++j)
    require(times[j] >= model.t0 && (j == 0 || times[j] > times[j - 1]),
            "evolve_conservative: times must be increasing and >= t0");

  const int K = input.size();
  const int q = input.dimension();
  const int P = 2 * q;
  // outputs[k][p][j]
  std::vector<std::vector<std::vector<Vector>>> outputs(K, std::vector<std::vector<Vector>>(P));
  std::vector<CubatureSet> sets(K);
  for (int k = 0; k < K; ++k)
    sets[k] = cubature_points(input[k]);

  parallel_for(static_cast<std::size_t>(K) * P, [&](std::size_t idx) {
    const int k = static_cast<int>(idx / P), p = static_cast<int>(idx % P);
    try {
      outputs[k][p] = model.trajectory(sets[k].points.col(p), times);
    } catch (const Error& e) {
      throw Error(e.code(), "component " + std::to_string(k) + ": " + e.what());
    }
  });

  EvolutionTrace trace;
  trace.model_runs = static_cast<std::int64_t>(K) * P;
  for (std::size_t j = 0; j < times.size(); ++j) {
    std::vector<MomentPair> moments(K);
    for (int k = 0; k < K; ++k) {
      Matrix images(model.output_dim, P);
      for (int p = 0; p < P; ++p) {
        if (!outputs[k][p][j].allFinite())
          throw Error(ErrorCode::nonfinite, "component " + std::to_string(k) + " at t = " + std::to_string(times[j]));
        images.col(p) = outputs[k][p][j];
      }
      moments[k] = moments_from_images(images, sets[k].weights);
    }
    trace.push(times[j], detail::reassemble(input, moments, &trace.floor_activations));
  }
  return trace;
}

struct MarkovOptions
{
  double t0 = 0.0;
  double dt = 0.015;
  int steps = 1;
  int noise_pairs = 20;        // antithetic pairs of Wiener increments per component and step
  std::uint64_t seed = 0;
  int snapshot_every = 1;      // the initial and final states are always kept
};

//! Noise contribution (1/N) sum_l (A dB_l)(A dB_l)^T over antithetic pairs
//! dB = +/- g, g ~ N(0, D dt). Also returns the (exactly zero) sample mean.
inline MomentPair sample_noise_moments(const Sde& sde, double dt, int pairs, std::uint64_t stream)
{
  const int n = sde.dim();
  const int m = static_cast<int>(sde.intensity.rows());
  MomentPair out{ Vector::Zero(n), Matrix::Zero(n, n) };
  if (sde.intensity.cwiseAbs().maxCoeff() == 0.0)
    return out;
  Eigen::LLT<Matrix> llt(sde.intensity * dt);
  Matrix L;
  if (llt.info() == Eigen::Success) {
    L = llt.matrixL();
  } else {
    Eigen::SelfAdjointEigenSolver<Matrix> eig(sde.intensity * dt);
    L = eig.eigenvectors() * eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
  }
  std::mt19937_64 rng(stream);
  std::normal_distribution<double> n01;
  Vector g(m);
  for (int l = 0; l < pairs; ++l) {
    for (int i = 0; i < m; ++i)
      g(i) = n01(rng);
    const Vector plus = sde.diffusion * (L * g);
    const Vector minus = -plus;
    out.mean += plus + minus;
    out.covariance.noalias() += plus * plus.transpose() + minus * minus.transpose();
  }
  out.mean /= 2.0 * pairs;
  out.covariance /= 2.0 * pairs;
  return out;
}

//! Markov model: each step pushes the 2n cubature points of every component
//! through the drift only, then adds the sampled additive-noise covariance.
//! Components are carried forward directly, without refitting.
inline EvolutionTrace evolve_markov(const Sde& sde, const MixtureModel& input, const MarkovOptions& opt)
{
  const int n = sde.dim();
  require(input.dimension() == n, "evolve_markov: input dimension mismatch");
  require(opt.noise_pairs >= 1, "evolve_markov: need at least one noise sample pair");
  require(opt.steps >= 1 && opt.dt > 0.0, "evolve_markov: need steps >= 1 and dt > 0");
  require(opt.snapshot_every >= 1, "evolve_markov: snapshot_every must be >= 1");
  require(sde.diffusion.rows() == n && sde.diffusion.cols() == sde.intensity.rows() &&
            sde.intensity.rows() == sde.intensity.cols(),
          "evolve_markov: diffusion/intensity shapes disagree");
  const int substeps = flow_steps(sde.drift, opt.t0, opt.t0 + opt.dt);

  const int K = input.size();
  EvolutionTrace trace;
  trace.model_runs = static_cast<std::int64_t>(K) * 2 * n;
  trace.push(opt.t0, input);
  MixtureModel current = input;

  for (int step = 1; step <= opt.steps; ++step) {
    const double t_prev = opt.t0 + (step - 1) * opt.dt;
    const double t_next = opt.t0 + step * opt.dt;
    std::vector<MomentPair> moments(K);
    parallel_for(static_cast<std::size_t>(K), [&](std::size_t k) {
      const auto& comp = current[static_cast<int>(k)];
      const CubatureSet set = cubature_points(comp);
      Matrix images(n, set.size());
      for (int p = 0; p < set.size(); ++p) {
        try {
          images.col(p) = rk4_integrate(sde.drift.field, set.points.col(p), t_prev, t_next, substeps);
        } catch (const Error& e) {
          throw Error(e.code(), "component " + std::to_string(k) + ": " + e.what());
        }
      }
      MomentPair mp = moments_from_images(images, set.weights);
      const MomentPair noise =
        sample_noise_moments(sde, opt.dt, opt.noise_pairs, stream_seed(opt.seed, k, static_cast<std::uint64_t>(step)));
      mp.mean += noise.mean;
      mp.covariance += noise.covariance;
      moments[k] = std::move(mp);
    });
    current = detail::reassemble(current, moments, &trace.floor_activations);
    if (step % opt.snapshot_every == 0 || step == opt.steps)
      trace.push(t_next, current);
  }
  if (trace.floor_activations > 0)
    warn("evolve_markov: covariance floor active " + std::to_string(trace.floor_activations) + " times");
  return trace;
}

//! Density of one snapshot on a grid.
inline DensityGrid assemble_density(const EvolutionTrace& trace, std::size_t index, const GridSpec& grid)
{
  require(index < trace.size(), "assemble_density: snapshot index out of range");
  return density_grid(trace.snapshots[index], grid);
}

//! Mixture mean and covariance of every snapshot.
inline std::vector<MomentPair> second_order_statistics(const EvolutionTrace& trace)
{
  std::vector<MomentPair> out;
  out.reserve(trace.size());
  for (const auto& m : trace.snapshots)
    out.push_back({ m.mean(), m.covariance() });
  return out;
}

} // namespace meso
