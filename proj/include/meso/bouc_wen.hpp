#pragma once

// Ten-story shear frame with Bouc-Wen story springs under scaled ground
// motion. Random inputs are Young's modulus E and the record's PGA.

#include "dynamics.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <iomanip>
#include <memory>
#include <random>
#include <sstream>

namespace meso {

//! Uniformly sampled accelerogram (m/s^2).
struct GroundMotionRecord
{
  double dt = 0.02;
  std::vector<double> accel;

  double duration() const { return dt * static_cast<double>(accel.size() - 1); }

  double pga() const
  {
    double m = 0.0;
    for (double a : accel)
      m = std::max(m, std::abs(a));
    return m;
  }

  //! Linear interpolation; zero outside the record.
  double at(double t) const
  {
    if (accel.empty() || t < 0.0)
      return 0.0;
    const double s = t / dt;
    const auto i = static_cast<std::size_t>(s);
    if (i + 1 >= accel.size())
      return i + 1 == accel.size() && s == static_cast<double>(i) ? accel.back() : 0.0;
    const double f = s - static_cast<double>(i);
    return (1.0 - f) * accel[i] + f * accel[i + 1];
  }

  //! Significant-duration window: times at 5% and 95% of Arias intensity.
  std::pair<double, double> strong_motion_window(double lo = 0.05, double hi = 0.95) const
  {
    std::vector<double> cum(accel.size(), 0.0);
    for (std::size_t i = 1; i < accel.size(); ++i)
      cum[i] = cum[i - 1] + 0.5 * dt * (accel[i - 1] * accel[i - 1] + accel[i] * accel[i]);
    const double total = cum.back();
    double t_lo = 0.0, t_hi = duration();
    bool found_lo = false;
    for (std::size_t i = 0; i < cum.size(); ++i) {
      if (!found_lo && cum[i] >= lo * total) {
        t_lo = static_cast<double>(i) * dt;
        found_lo = true;
      }
      if (cum[i] >= hi * total) {
        t_hi = static_cast<double>(i) * dt;
        break;
      }
    }
    return { t_lo, t_hi };
  }

  void validate() const
  {
    require(!accel.empty(), "ground motion record is empty");
    require(dt > 0.0, "ground motion time step must be positive");
    for (double a : accel)
      require(std::isfinite(a), "ground motion record has non-finite entries");
  }
};

inline constexpr std::uint64_t kSyntheticRecordSeed = 1940;

//! Band-limited (0.3-8 Hz) sum of 60 sinusoids with random phases under a
//! build-up / plateau / exponential-decay envelope, scaled to the given PGA.
inline GroundMotionRecord synthetic_record(double pga = 2.0,
                                           std::uint64_t seed = kSyntheticRecordSeed,
                                           double dt = 0.02,
                                           double duration = 20.0)
{
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> freq(0.3, 8.0), phase(0.0, 2.0 * kPi);
  constexpr int kWaves = 60;
  std::array<double, kWaves> f{}, ph{}, amp{};
  for (int i = 0; i < kWaves; ++i) {
    f[i] = freq(rng);
    ph[i] = phase(rng);
    amp[i] = 1.0 / std::sqrt(1.0 + (f[i] / 3.0) * (f[i] / 3.0));
  }
  auto envelope = [](double t) {
    if (t < 1.5)
      return (t / 1.5) * (t / 1.5);
    if (t < 8.0)
      return 1.0;
    return std::exp(-0.3 * (t - 8.0));
  };
  GroundMotionRecord rec;
  rec.dt = dt;
  const int n = static_cast<int>(std::llround(duration / dt)) + 1;
  rec.accel.resize(n);
  for (int k = 0; k < n; ++k) {
    const double t = k * dt;
    double s = 0.0;
    for (int i = 0; i < kWaves; ++i)
      s += amp[i] * std::sin(2.0 * kPi * f[i] * t + ph[i]);
    rec.accel[k] = envelope(t) * s;
  }
  const double scale = pga / rec.pga();
  for (double& a : rec.accel)
    a *= scale;
  return rec;
}

//! Reads a two-column `t,accel` CSV with a header line and uniform spacing.
inline GroundMotionRecord read_record_csv(const std::string& path)
{
  std::ifstream in(path);
  if (!in)
    throw Error(ErrorCode::io, "cannot open ground motion file " + path);
  std::string line;
  std::getline(in, line);
  std::vector<double> t, a;
  while (std::getline(in, line)) {
    if (line.empty())
      continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream ls(line);
    double ti, ai;
    if (!(ls >> ti >> ai))
      throw Error(ErrorCode::io, "malformed ground motion row: " + line);
    t.push_back(ti);
    a.push_back(ai);
  }
  require(t.size() >= 2, "ground motion record needs at least two samples");
  GroundMotionRecord rec{ t[1] - t[0], a };
  for (std::size_t i = 1; i < t.size(); ++i)
    require(std::abs((t[i] - t[i - 1]) - rec.dt) <= 1e-6 * rec.dt,
            "ground motion record must be uniformly sampled");
  rec.validate();
  return rec;
}

inline void write_record_csv(const GroundMotionRecord& rec, const std::string& path)
{
  std::ofstream out(path);
  if (!out)
    throw Error(ErrorCode::io, "cannot open " + path);
  out << "t,accel\n" << std::setprecision(17);
  for (std::size_t i = 0; i < rec.accel.size(); ++i)
    out << static_cast<double>(i) * rec.dt << ',' << rec.accel[i] << '\n';
}

// ---------------------------------------------------------------------------
// Bouc-Wen hysteresis

struct BoucWenParams
{
  double alpha = 0.01; // post-yield stiffness ratio
  double A = 1.2;
  double beta = 1.4;
  double gamma = 0.2;
  double n = 1.0;
};

//! dz/dt = A xdot - beta |xdot| |z|^(n-1) z - gamma xdot |z|^n
inline double bouc_wen_rate(const BoucWenParams& p, double xdot, double z)
{
  const double az = std::abs(z);
  const double zn = p.n == 1.0 ? az : std::pow(az, p.n);
  const double zn1z = p.n == 1.0 ? z : std::pow(az, p.n - 1.0) * z;
  return p.A * xdot - p.beta * std::abs(xdot) * zn1z - p.gamma * xdot * zn;
}

//! R = alpha k x + (1 - alpha) k z
inline double bouc_wen_force(const BoucWenParams& p, double k, double x, double z)
{
  return p.alpha * k * x + (1.0 - p.alpha) * k * z;
}

struct FrameParams
{
  // Lumped floor masses, bottom to top (kg).
  std::vector<double> masses = { 0.5e5, 1.1e5, 1.1e5, 1.0e5, 1.0e5, 1.1e5, 1.3e5, 1.2e5, 1.2e5, 1.2e5 };
  double first_story_height = 4.0;
  double story_height = 3.0;
  double column_side = 0.5;
  int columns_per_story = 3;
  double rayleigh_mass = 0.01;      // C = a M + b K
  double rayleigh_stiffness = 0.005;
  BoucWenParams hysteresis;
  double step = 0.005;

  int stories() const { return static_cast<int>(masses.size()); }
  double height(int story) const { return story == 0 ? first_story_height : story_height; }
  double second_moment() const { return std::pow(column_side, 4) / 12.0; }
};

//! Story stiffness: fixed-fixed columns, 12 E I / h^3 each.
inline std::vector<double> story_stiffness(const FrameParams& p, double E)
{
  std::vector<double> k(p.stories());
  const double EI = E * p.second_moment();
  for (int i = 0; i < p.stories(); ++i)
    k[i] = p.columns_per_story * 12.0 * EI / std::pow(p.height(i), 3);
  return k;
}

//! Response state layout: [u (N), v (N), z (N)] with u relative to ground.
class BoucWenFrame
{
public:
  BoucWenFrame(FrameParams params, GroundMotionRecord record)
    : p_(std::move(params))
    , rec_(std::move(record))
    , record_pga_(rec_.pga())
  {
    rec_.validate();
    require(p_.stories() >= 1, "frame needs at least one story");
    require(record_pga_ > 0.0 || rec_.pga() == 0.0, "record PGA must be non-negative");
  }

  int stories() const { return p_.stories(); }
  int state_dim() const { return 3 * p_.stories(); }
  const FrameParams& params() const { return p_; }
  const GroundMotionRecord& record() const { return rec_; }

  double ground_accel(double t, double pga) const
  {
    return record_pga_ > 0.0 ? pga / record_pga_ * rec_.at(t) : 0.0;
  }

  Vector rhs(double t, const Vector& s, double E, double pga) const
  {
    const int N = p_.stories();
    require(E > 0.0, "frame: Young's modulus must be positive");
    const auto k = story_stiffness(p_, E);
    const auto u = s.segment(0, N);
    const auto v = s.segment(N, N);
    const auto z = s.segment(2 * N, N);
    const double ag = ground_accel(t, pga);

    Vector out(3 * N);
    std::vector<double> force(N + 1, 0.0), damp(N + 1, 0.0);
    for (int i = 0; i < N; ++i) {
      const double drift = u(i) - (i ? u(i - 1) : 0.0);
      const double rate = v(i) - (i ? v(i - 1) : 0.0);
      force[i] = bouc_wen_force(p_.hysteresis, k[i], drift, z(i));
      damp[i] = p_.rayleigh_stiffness * k[i] * rate;
      out(2 * N + i) = bouc_wen_rate(p_.hysteresis, rate, z(i));
    }
    for (int i = 0; i < N; ++i) {
      const double m = p_.masses[i];
      const double net = force[i] - force[i + 1] + damp[i] - damp[i + 1] + p_.rayleigh_mass * m * v(i);
      out(i) = v(i);
      out(N + i) = -net / m - ag;
    }
    return out;
  }

  //! Deterministic flow over the response for one (E, PGA) realization.
  OdeFlow flow(double E, double pga) const
  {
    return OdeFlow{ state_dim(), [this, E, pga](double t, const Vector& s) { return rhs(t, s, E, pga); }, p_.step };
  }

  int top_displacement_index() const { return p_.stories() - 1; }

private:
  FrameParams p_;
  GroundMotionRecord rec_;
  double record_pga_;
};

//! Augmented-state model Z = [E, PGA, u, v, z]; the observed output is the
//! top floor's (displacement, velocity).
inline ConservativeModel bouc_wen_frame_model(std::shared_ptr<const BoucWenFrame> frame)
{
  const int N = frame->stories();
  const int dim = 2 + 3 * N;
  ConservativeModel m;
  m.input_dim = 2;
  m.output_dim = 2;
  m.t0 = 0.0;
  m.flow = OdeFlow{ dim,
                    [frame](double t, const Vector& z) {
                      Vector dz = Vector::Zero(z.size());
                      dz.tail(z.size() - 2) = frame->rhs(t, z.tail(z.size() - 2), z(0), z(1));
                      return dz;
                    },
                    frame->params().step };
  m.embed = [dim](const Vector& theta) {
    Vector z = Vector::Zero(dim);
    z.head(2) = theta;
    return z;
  };
  m.observe = [N](const Vector& z) {
    Vector y(2);
    y << z(2 + N - 1), z(2 + 2 * N - 1);
    return y;
  };
  return m;
}

} // namespace meso
