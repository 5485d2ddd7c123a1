#pragma once

// Dynamical-model descriptions (static maps, ODE flows, additive-noise SDEs),
// the fixed-step RK4 integrator they share, and the benchmark systems with
// their closed-form densities.

#include "core.hpp"

#include <sstream>
#include <variant>

namespace meso {

using VectorMap = std::function<Vector(const Vector&)>;
using VectorField = std::function<Vector(double, const Vector&)>;

struct StaticMap
{
  int input_dim = 0;
  int output_dim = 0;
  VectorMap map;
};

//! Autonomous or time-dependent vector field integrated by fixed-step RK4.
struct OdeFlow
{
  int dim = 0;
  VectorField field;
  double step = 0.005;
};

//! dX = G(X, t) dt + A dB with Cov(dB) = D dt; A is constant (additive noise).
struct Sde
{
  OdeFlow drift;
  Matrix diffusion; // n x m
  Matrix intensity; // m x m

  int dim() const { return drift.dim; }
};

struct DynamicalModel
{
  std::variant<StaticMap, OdeFlow, Sde> kind;

  int state_dimension() const
  {
    if (auto* m = std::get_if<StaticMap>(&kind))
      return m->output_dim;
    if (auto* f = std::get_if<OdeFlow>(&kind))
      return f->dim;
    return std::get<Sde>(kind).dim();
  }

  int input_dimension() const
  {
    if (auto* m = std::get_if<StaticMap>(&kind))
      return m->input_dim;
    return state_dimension();
  }
};

//! Closed-form density with a support predicate.
struct AnalyticOracle
{
  std::function<double(const Vector&)> density;
  std::function<bool(const Vector&)> in_support = [](const Vector&) { return true; };
};

struct ModelWithOracle
{
  DynamicalModel model;
  AnalyticOracle oracle;
};

// ---------------------------------------------------------------------------
// Integration

inline void check_state(const Vector& x, double t)
{
  if (!x.allFinite()) {
    std::ostringstream os;
    os << "non-finite state at t = " << t;
    throw Error(ErrorCode::integration_blowup, os.str());
  }
}

inline Vector rk4_step(const VectorField& f, double t, const Vector& x, double h)
{
  const Vector k1 = f(t, x);
  const Vector k2 = f(t + 0.5 * h, x + 0.5 * h * k1);
  const Vector k3 = f(t + 0.5 * h, x + 0.5 * h * k2);
  const Vector k4 = f(t + h, x + h * k3);
  return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

//! RK4 with exactly `steps` equal steps from t0 to t1.
inline Vector rk4_integrate(const VectorField& f, Vector x, double t0, double t1, int steps)
{
  require(steps >= 1, "rk4: need at least one step");
  const double h = (t1 - t0) / steps;
  for (int i = 0; i < steps; ++i) {
    const double t = t0 + i * h;
    x = rk4_step(f, t, x, h);
    check_state(x, t + h);
  }
  return x;
}

//! Number of flow steps covering [t0, t1]; the flow step must divide the span.
inline int flow_steps(const OdeFlow& flow, double t0, double t1)
{
  require(t1 > t0, "integrate_flow: need t1 > t0");
  require(flow.step > 0.0, "integrate_flow: step must be positive");
  const double ratio = (t1 - t0) / flow.step;
  const double n = std::round(ratio);
  require(n >= 1.0 && std::abs(ratio - n) <= 1e-6 * std::max(1.0, n),
          "integrate_flow: step must divide t1 - t0");
  return static_cast<int>(n);
}

inline Vector integrate_flow(const OdeFlow& flow, const Vector& x, double t0, double t1)
{
  require(x.size() == flow.dim, "integrate_flow: state dimension mismatch");
  return rk4_integrate(flow.field, x, t0, t1, flow_steps(flow, t0, t1));
}

//! States at each of `times` (increasing, all > t0), integrating segment by
//! segment from t0.
inline std::vector<Vector> integrate_flow_to(const OdeFlow& flow, Vector x, double t0, const std::vector<double>& times)
{
  std::vector<Vector> out;
  out.reserve(times.size());
  double t = t0;
  for (double tj : times) {
    if (tj > t) {
      x = integrate_flow(flow, x, t, tj);
      t = tj;
    } else {
      require(tj == t, "integrate_flow_to: times must be non-decreasing and >= t0");
    }
    out.push_back(x);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Example I: linear map

inline Matrix linear_example_matrix()
{
  Matrix a(2, 2);
  a << 3.0, 5.0, 1.0, 2.0;
  return a;
}

inline ModelWithOracle linear_map_model()
{
  StaticMap map{ 2, 2, [](const Vector& th) {
                   Vector x(2);
                   x << 3.0 * th(0) + 5.0 * th(1), th(0) + 2.0 * th(1);
                   return x;
                 } };
  AnalyticOracle oracle;
  oracle.density = [](const Vector& x) {
    const double a = 2.0 * x(0) - 5.0 * x(1);
    const double b = -x(0) + 3.0 * x(1);
    return std::exp(-0.5 * (a * a + b * b)) / (2.0 * kPi);
  };
  return { DynamicalModel{ map }, oracle };
}

// ---------------------------------------------------------------------------
// Example II: polar-type nonlinear map

inline ModelWithOracle nonlinear_map_model()
{
  StaticMap map{ 2, 2, [](const Vector& th) {
                   Vector x(2);
                   x << std::hypot(th(0), th(1)), th(0);
                   return x;
                 } };
  AnalyticOracle oracle;
  oracle.in_support = [](const Vector& x) { return x(0) > 0.0 && std::abs(x(1)) < x(0); };
  oracle.density = [support = oracle.in_support](const Vector& x) {
    if (!support(x))
      return 0.0;
    const double jac = x(0) / std::sqrt(x(0) * x(0) - x(1) * x(1));
    return jac * std::exp(-0.5 * x(0) * x(0)) / kPi;
  };
  return { DynamicalModel{ map }, oracle };
}

// ---------------------------------------------------------------------------
// Example III: Duffing oscillator under white noise

struct DuffingParams
{
  double zeta = 0.2;
  double omega0 = 1.0;
  double epsilon = 0.10;
  double gamma = -1.0;

  bool operator==(const DuffingParams&) const = default;
};

// Spectral intensity that makes exp(x1^2/2 - x1^4/40 - x2^2/2) stationary for
// the nominal parameters: D = 2 * (2 zeta omega0).
inline double duffing_consistent_intensity(const DuffingParams& p)
{
  return 2.0 * (2.0 * p.zeta * p.omega0);
}

inline constexpr double kDuffingNormalization = 47.9724;

inline Vector duffing_drift(const DuffingParams& p, const Vector& x)
{
  const double w2 = p.omega0 * p.omega0;
  Vector f(2);
  f << x(1),
    -2.0 * p.zeta * p.omega0 * x(1) - w2 * p.gamma * x(0) - w2 * p.epsilon * x(0) * x(0) * x(0);
  return f;
}

//! Exponent of the stationary density, -(2c/D) [x2^2/2 + U(x1)] with
//! c = 2 zeta omega0 and U the Duffing potential.
inline double duffing_log_kernel(const DuffingParams& p, double D, const Vector& x)
{
  const double c = 2.0 * p.zeta * p.omega0;
  const double w2 = p.omega0 * p.omega0;
  const double potential = w2 * (0.5 * p.gamma * x(0) * x(0) + 0.25 * p.epsilon * std::pow(x(0), 4));
  return -(2.0 * c / D) * (0.5 * x(1) * x(1) + potential);
}

//! Integral of the x1 factor of the stationary kernel, by composite Simpson.
inline double duffing_x1_normalization(const DuffingParams& p, double D)
{
  const double c = 2.0 * p.zeta * p.omega0;
  const double w2 = p.omega0 * p.omega0;
  auto g = [&](double x) {
    return std::exp(-(2.0 * c / D) * w2 * (0.5 * p.gamma * x * x + 0.25 * p.epsilon * std::pow(x, 4)));
  };
  const double L = 60.0;
  const int n = 120000;
  const double h = 2.0 * L / n;
  double s = g(-L) + g(L);
  for (int i = 1; i < n; ++i)
    s += g(-L + i * h) * (i % 2 ? 4.0 : 2.0);
  return s * h / 3.0;
}

inline ModelWithOracle duffing_model(const DuffingParams& p = {}, double noise_intensity = 0.8)
{
  require(p.zeta > 0.0 && p.omega0 > 0.0, "duffing: zeta and omega0 must be positive");
  require(noise_intensity >= 0.0, "duffing: noise intensity must be non-negative");
  Sde sde;
  sde.drift = OdeFlow{ 2, [p](double, const Vector& x) { return duffing_drift(p, x); }, 0.005 };
  sde.diffusion = Matrix::Zero(2, 1);
  sde.diffusion(1, 0) = 1.0;
  sde.intensity = Matrix::Constant(1, 1, noise_intensity);

  AnalyticOracle oracle;
  if (p == DuffingParams{} && noise_intensity == 0.8) {
    oracle.density = [](const Vector& x) {
      return std::exp(0.5 * x(0) * x(0) - std::pow(x(0), 4) / 40.0 - 0.5 * x(1) * x(1)) /
             (kDuffingNormalization * std::sqrt(2.0 * kPi));
    };
  } else if (noise_intensity > 0.0) {
    const double c = 2.0 * p.zeta * p.omega0;
    const double var2 = noise_intensity / (2.0 * c);
    const double z1 = duffing_x1_normalization(p, noise_intensity);
    oracle.density = [p, noise_intensity, z1, var2](const Vector& x) {
      return std::exp(duffing_log_kernel(p, noise_intensity, x)) / (z1 * std::sqrt(2.0 * kPi * var2));
    };
  }
  return { DynamicalModel{ sde }, oracle };
}

// ---------------------------------------------------------------------------
// Augmented-state (conservative) models

//! Z = [Y, W, X]: parameters, excitation coefficients, response.
struct AugmentedState
{
  int parameter_dim = 0;
  int excitation_dim = 0;
  int response_dim = 0;
  Vector z;

  static AugmentedState assemble(const Vector& y, const Vector& w, const Vector& x)
  {
    AugmentedState s{ static_cast<int>(y.size()), static_cast<int>(w.size()), static_cast<int>(x.size()), {} };
    s.z.resize(s.dimension());
    s.z << y, w, x;
    return s;
  }

  int dimension() const { return parameter_dim + excitation_dim + response_dim; }
  auto parameters() const { return z.segment(0, parameter_dim); }
  auto excitation() const { return z.segment(parameter_dim, excitation_dim); }
  auto response() const { return z.segment(parameter_dim + excitation_dim, response_dim); }
};

//! All randomness sits in the initial condition: theta (q-dim) is lifted to
//! Z0 by `embed`, Z evolves deterministically under `flow`, and `observe`
//! selects the output vector whose distribution is tracked.
struct ConservativeModel
{
  int input_dim = 0;
  int output_dim = 0;
  OdeFlow flow;
  double t0 = 0.0;
  VectorMap embed;   // theta -> Z0; identity when empty
  VectorMap observe; // Z -> output; identity when empty

  Vector initial_state(const Vector& theta) const { return embed ? embed(theta) : theta; }
  Vector output(const Vector& z) const { return observe ? observe(z) : z; }

  //! Outputs at each requested time for one input realization.
  std::vector<Vector> trajectory(const Vector& theta, const std::vector<double>& times) const
  {
    auto states = integrate_flow_to(flow, initial_state(theta), t0, times);
    for (auto& s : states)
      s = output(s);
    return states;
  }

  static ConservativeModel from_flow(const OdeFlow& flow, double t0 = 0.0)
  {
    return ConservativeModel{ flow.dim, flow.dim, flow, t0, {}, {} };
  }
};

} // namespace meso
