#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <functional>
#include <iostream>
#include <numbers>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace meso {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

enum class ErrorCode
{
  invalid_argument,
  unsupported_dimension,
  inversion_failure,
  spd_violation,
  nonfinite,
  integration_blowup,
  grid_mismatch,
  io
};

inline const char* to_string(ErrorCode code)
{
  switch (code) {
    case ErrorCode::invalid_argument: return "invalid-argument";
    case ErrorCode::unsupported_dimension: return "unsupported-dimension";
    case ErrorCode::inversion_failure: return "numerical-inversion-failure";
    case ErrorCode::spd_violation: return "spd-violation";
    case ErrorCode::nonfinite: return "propagated-nonfinite";
    case ErrorCode::integration_blowup: return "integration-blowup";
    case ErrorCode::grid_mismatch: return "grid-mismatch";
    case ErrorCode::io: return "io";
  }
  return "unknown";
}

//! Library error; `code()` tells numerical failures apart from bad input.
class Error : public std::runtime_error
{
public:
  Error(ErrorCode code, const std::string& what)
    : std::runtime_error(std::string(to_string(code)) + ": " + what)
    , code_(code)
  {}

  ErrorCode code() const noexcept { return code_; }

  bool is_numerical() const noexcept
  {
    return code_ == ErrorCode::inversion_failure ||
           code_ == ErrorCode::spd_violation || code_ == ErrorCode::nonfinite ||
           code_ == ErrorCode::integration_blowup;
  }

private:
  ErrorCode code_;
};

inline void require(bool cond, const std::string& what)
{
  if (!cond)
    throw Error(ErrorCode::invalid_argument, what);
}

// Warnings go through a replaceable sink so tests and the CLI can capture them.
using WarningSink = std::function<void(const std::string&)>;

inline WarningSink& warning_sink()
{
  static WarningSink sink = [](const std::string& msg) {
    std::cerr << "[meso] warning: " << msg << '\n';
  };
  return sink;
}

inline void warn(const std::string& msg)
{
  if (warning_sink())
    warning_sink()(msg);
}

class ScopedWarningSink
{
public:
  explicit ScopedWarningSink(WarningSink sink)
    : previous_(std::exchange(warning_sink(), std::move(sink)))
  {}
  ~ScopedWarningSink() { warning_sink() = std::move(previous_); }
  ScopedWarningSink(const ScopedWarningSink&) = delete;
  ScopedWarningSink& operator=(const ScopedWarningSink&) = delete;

private:
  WarningSink previous_;
};

inline bool all_finite(const Vector& v)
{
  return v.allFinite();
}

inline Matrix symmetrize(const Matrix& m)
{
  return 0.5 * (m + m.transpose());
}

//! Clamps the spectrum of a symmetric matrix from below.
//! Returns the number of eigenvalues that were raised.
inline int clamp_eigenvalues(Matrix& m, double floor)
{
  Eigen::SelfAdjointEigenSolver<Matrix> eig(symmetrize(m));
  Vector values = eig.eigenvalues();
  int raised = 0;
  for (Eigen::Index i = 0; i < values.size(); ++i) {
    if (!(values(i) >= floor)) {
      values(i) = floor;
      ++raised;
    }
  }
  if (raised > 0)
    m = symmetrize(eig.eigenvectors() * values.asDiagonal() *
                   eig.eigenvectors().transpose());
  return raised;
}

// Relative covariance floor, 1e-8 * trace / q. A zero matrix gets a tiny
// absolute floor instead so that point masses remain factorizable.
inline constexpr double kRelativeCovarianceFloor = 1e-8;
inline constexpr double kAbsoluteCovarianceFloor = 1e-30;

inline double covariance_floor(const Matrix& cov)
{
  const double q = static_cast<double>(cov.rows());
  const double tr = cov.trace();
  const double rel = kRelativeCovarianceFloor * tr / q;
  return rel > kAbsoluteCovarianceFloor ? rel : kAbsoluteCovarianceFloor;
}

//! Regularizes a covariance in place; true when the floor was active.
inline bool regularize_covariance(Matrix& cov)
{
  cov = symmetrize(cov);
  return clamp_eigenvalues(cov, covariance_floor(cov)) > 0;
}

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kLog2Pi = 1.8378770664093454835606594728112;

// splitmix64 finalizer, used to derive independent per-stream seeds.
inline std::uint64_t mix_seed(std::uint64_t x)
{
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t stream_seed(std::uint64_t seed,
                                 std::uint64_t a,
                                 std::uint64_t b = 0)
{
  return mix_seed(mix_seed(mix_seed(seed) ^ a) ^ (b * 0x632be59bd9b4e019ULL));
}

inline std::vector<double> to_std(const Vector& v)
{
  return { v.data(), v.data() + v.size() };
}

inline Vector from_std(const std::vector<double>& v)
{
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

} // namespace meso
