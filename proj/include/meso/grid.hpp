#pragma once

#include "core.hpp"

#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace meso {

struct GridAxis
{
  double lo = 0.0;
  double hi = 1.0;
  int count = 2;

  double step() const { return count > 1 ? (hi - lo) / (count - 1) : 0.0; }
  double at(int i) const { return count > 1 ? lo + i * step() : lo; }
  bool operator==(const GridAxis&) const = default;
};

//! Tensor-product grid; cell "area" is the product of axis steps.
struct GridSpec
{
  std::vector<GridAxis> axes;

  static GridSpec uniform(int dims, double lo, double hi, int count)
  {
    return GridSpec{ std::vector<GridAxis>(dims, GridAxis{ lo, hi, count }) };
  }

  //! Axis from lo to hi with the given spacing (hi rounded onto the lattice).
  static GridAxis stepped(double lo, double hi, double step)
  {
    const int n = static_cast<int>(std::llround((hi - lo) / step)) + 1;
    return GridAxis{ lo, lo + (n - 1) * step, n };
  }

  int dimension() const { return static_cast<int>(axes.size()); }

  std::size_t size() const
  {
    std::size_t n = 1;
    for (const auto& a : axes)
      n *= static_cast<std::size_t>(a.count);
    return n;
  }

  double cell_volume() const
  {
    double v = 1.0;
    for (const auto& a : axes)
      v *= a.count > 1 ? a.step() : 1.0;
    return v;
  }

  //! Coordinates of the flat row-major index (first axis varies slowest).
  Vector point(std::size_t flat) const
  {
    Vector x(dimension());
    for (int d = dimension() - 1; d >= 0; --d) {
      const auto n = static_cast<std::size_t>(axes[d].count);
      x(d) = axes[d].at(static_cast<int>(flat % n));
      flat /= n;
    }
    return x;
  }

  void validate() const
  {
    require(!axes.empty(), "grid needs at least one axis");
    for (const auto& a : axes) {
      require(std::isfinite(a.lo) && std::isfinite(a.hi), "grid bounds must be finite");
      require(a.count >= 2 || (a.count == 1 && a.lo == a.hi),
              "grid axes need at least 2 nodes (or a single node with lo == hi)");
      require(a.count == 1 || a.hi > a.lo, "grid axis needs hi > lo");
    }
  }

  bool operator==(const GridSpec&) const = default;
};

struct DensityGrid
{
  GridSpec spec;
  std::vector<double> values; // row-major, first axis slowest

  double& at(int i, int j) { return values[static_cast<std::size_t>(i) * spec.axes[1].count + j]; }
  double at(int i, int j) const { return values[static_cast<std::size_t>(i) * spec.axes[1].count + j]; }

  double integral() const
  {
    double s = 0.0;
    for (double v : values)
      s += v;
    return s * spec.cell_volume();
  }

  double max() const
  {
    double m = 0.0;
    for (double v : values)
      m = std::max(m, v);
    return m;
  }

  std::vector<double> axis_coordinates(int d) const
  {
    std::vector<double> c(spec.axes[d].count);
    for (int i = 0; i < spec.axes[d].count; ++i)
      c[i] = spec.axes[d].at(i);
    return c;
  }
};

template<class F>
DensityGrid tabulate(const GridSpec& spec, F&& f)
{
  spec.validate();
  DensityGrid g{ spec, std::vector<double>(spec.size()) };
  for (std::size_t i = 0; i < g.values.size(); ++i)
    g.values[i] = f(spec.point(i));
  return g;
}

// ---------------------------------------------------------------------------
// Mode counting

//! Interior cells strictly greater than all 3^d - 1 neighbours and above
//! `relative_threshold` of the grid maximum. Works for 1-D and 2-D grids.
inline int count_modes(const DensityGrid& g, double relative_threshold = 0.01)
{
  const double cutoff = relative_threshold * g.max();
  int modes = 0;
  if (g.spec.dimension() == 1) {
    const auto& v = g.values;
    for (std::size_t i = 1; i + 1 < v.size(); ++i)
      if (v[i] > v[i - 1] && v[i] > v[i + 1] && v[i] > cutoff)
        ++modes;
    return modes;
  }
  require(g.spec.dimension() == 2, "count_modes supports 1-D and 2-D grids");
  const int nx = g.spec.axes[0].count, ny = g.spec.axes[1].count;
  for (int i = 1; i + 1 < nx; ++i) {
    for (int j = 1; j + 1 < ny; ++j) {
      const double c = g.at(i, j);
      if (!(c > cutoff))
        continue;
      bool peak = true;
      for (int di = -1; di <= 1 && peak; ++di)
        for (int dj = -1; dj <= 1 && peak; ++dj)
          if ((di || dj) && !(c > g.at(i + di, j + dj)))
            peak = false;
      modes += peak;
    }
  }
  return modes;
}

//! 1-D slice of a 2-D grid along axis 1 at the axis-0 node nearest x0.
inline DensityGrid slice_at(const DensityGrid& g, double x0)
{
  require(g.spec.dimension() == 2, "slice_at needs a 2-D grid");
  const auto& ax = g.spec.axes[0];
  int i = static_cast<int>(std::llround((x0 - ax.lo) / ax.step()));
  i = std::clamp(i, 0, ax.count - 1);
  DensityGrid s{ GridSpec{ { g.spec.axes[1] } }, {} };
  s.values.reserve(g.spec.axes[1].count);
  for (int j = 0; j < g.spec.axes[1].count; ++j)
    s.values.push_back(g.at(i, j));
  return s;
}

// ---------------------------------------------------------------------------
// File formats

//! CSV with header x1,...,xd,density; one row per node.
inline void write_grid_csv(const DensityGrid& g, const std::string& path)
{
  std::ofstream out(path);
  if (!out)
    throw Error(ErrorCode::io, "cannot open " + path);
  for (int d = 0; d < g.spec.dimension(); ++d)
    out << 'x' << d + 1 << ',';
  out << "density\n";
  out << std::setprecision(17);
  for (std::size_t i = 0; i < g.values.size(); ++i) {
    const Vector x = g.spec.point(i);
    for (int d = 0; d < x.size(); ++d)
      out << x(d) << ',';
    out << g.values[i] << '\n';
  }
}

// Binary layout (little-endian):
//   char[8]  "MESOGRID"
//   uint32   version (1)
//   uint32   dimension d
//   d x { float64 lo, float64 hi, uint64 count }
//   uint64   value count
//   float64  values, row-major with the first axis slowest
inline constexpr char kGridMagic[8] = { 'M', 'E', 'S', 'O', 'G', 'R', 'I', 'D' };

inline void write_grid_binary(const DensityGrid& g, const std::string& path)
{
  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw Error(ErrorCode::io, "cannot open " + path);
  auto put = [&](const auto& v) { out.write(reinterpret_cast<const char*>(&v), sizeof(v)); };
  out.write(kGridMagic, sizeof(kGridMagic));
  put(std::uint32_t{ 1 });
  put(static_cast<std::uint32_t>(g.spec.dimension()));
  for (const auto& a : g.spec.axes) {
    put(a.lo);
    put(a.hi);
    put(static_cast<std::uint64_t>(a.count));
  }
  put(static_cast<std::uint64_t>(g.values.size()));
  out.write(reinterpret_cast<const char*>(g.values.data()),
            static_cast<std::streamsize>(g.values.size() * sizeof(double)));
}

inline DensityGrid read_grid_binary(const std::string& path)
{
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw Error(ErrorCode::io, "cannot open " + path);
  auto get = [&](auto& v) {
    in.read(reinterpret_cast<char*>(&v), sizeof(v));
    if (!in)
      throw Error(ErrorCode::io, "truncated grid file " + path);
  };
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kGridMagic, sizeof(magic)) != 0)
    throw Error(ErrorCode::io, "bad grid magic in " + path);
  std::uint32_t version = 0, dims = 0;
  get(version);
  get(dims);
  if (version != 1)
    throw Error(ErrorCode::io, "unsupported grid version");
  DensityGrid g;
  for (std::uint32_t d = 0; d < dims; ++d) {
    GridAxis a;
    std::uint64_t count = 0;
    get(a.lo);
    get(a.hi);
    get(count);
    a.count = static_cast<int>(count);
    g.spec.axes.push_back(a);
  }
  std::uint64_t n = 0;
  get(n);
  if (n != g.spec.size())
    throw Error(ErrorCode::io, "grid value count does not match axes");
  g.values.resize(n);
  in.read(reinterpret_cast<char*>(g.values.data()), static_cast<std::streamsize>(n * sizeof(double)));
  if (!in)
    throw Error(ErrorCode::io, "truncated grid file " + path);
  return g;
}

} // namespace meso
