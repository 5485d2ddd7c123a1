#pragma once

// JSON/CSV serialization for targets, rep-point sets, mixtures and traces.

#include "cubature.hpp"
#include "evolution.hpp"
#include "mixture.hpp"
#include "rep_points.hpp"

#include "json.hpp"

#include <filesystem>
#include <fstream>
#include <iomanip>

namespace meso {

using Json = nlohmann::ordered_json;

inline Json to_json(const Vector& v)
{
  Json a = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i)
    a.push_back(v(i));
  return a;
}

//! Row-major flat list.
inline Json to_json(const Matrix& m)
{
  Json a = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      a.push_back(m(i, j));
  return a;
}

inline Vector vector_from_json(const Json& j, const std::string& what)
{
  if (!j.is_array())
    throw Error(ErrorCode::io, what + ": expected an array");
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number())
      throw Error(ErrorCode::io, what + ": expected numbers");
    v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  }
  return v;
}

inline Matrix matrix_from_json(const Json& j, int rows, int cols, const std::string& what)
{
  const Vector flat = vector_from_json(j, what);
  if (flat.size() != static_cast<Eigen::Index>(rows) * cols)
    throw Error(ErrorCode::io, what + ": expected " + std::to_string(rows * cols) + " entries");
  Matrix m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int c = 0; c < cols; ++c)
      m(i, c) = flat(static_cast<Eigen::Index>(i) * cols + c);
  return m;
}

inline void write_text(const std::string& path, const std::string& text)
{
  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw Error(ErrorCode::io, "cannot open " + path);
  out << text;
}

inline Json read_json_file(const std::string& path)
{
  std::ifstream in(path);
  if (!in)
    throw Error(ErrorCode::io, "cannot open " + path);
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::io, path + ": " + e.what());
  }
}

inline void write_json_file(const std::string& path, const Json& j)
{
  write_text(path, j.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Targets

inline Json to_json(const Marginal& m)
{
  switch (m.kind) {
    case Marginal::Kind::normal: return { { "type", "normal" }, { "mean", m.a }, { "sd", m.b } };
    case Marginal::Kind::uniform: return { { "type", "uniform" }, { "lower", m.a }, { "upper", m.b } };
    case Marginal::Kind::exponential: return { { "type", "exponential" }, { "rate", m.a } };
    case Marginal::Kind::lognormal: return { { "type", "lognormal" }, { "mu", m.a }, { "sigma", m.b } };
  }
  return {};
}

inline Marginal marginal_from_json(const Json& j)
{
  const std::string type = j.value("type", "");
  auto num = [&](const char* key) {
    if (!j.contains(key) || !j[key].is_number())
      throw Error(ErrorCode::invalid_argument, "marginal '" + type + "' needs numeric field '" + key + "'");
    return j[key].get<double>();
  };
  if (type == "normal")
    return Marginal::normal(num("mean"), num("sd"));
  if (type == "uniform")
    return Marginal::uniform(num("lower"), num("upper"));
  if (type == "exponential")
    return Marginal::exponential(num("rate"));
  if (type == "lognormal")
    return Marginal::lognormal(num("mu"), num("sigma"));
  throw Error(ErrorCode::invalid_argument, "unknown marginal type '" + type + "'");
}

inline Json to_json(const DistributionSpec& d)
{
  if (const auto* g = d.gaussian())
    return { { "kind", "gaussian" }, { "mean", to_json(g->mean) }, { "covariance", to_json(g->covariance) } };
  Json m = Json::array();
  for (const auto& x : d.marginals()->marginals)
    m.push_back(to_json(x));
  return { { "kind", "independent" }, { "marginals", m } };
}

inline DistributionSpec distribution_from_json(const Json& j)
{
  const std::string kind = j.value("kind", "");
  if (kind == "gaussian") {
    const Vector mean = vector_from_json(j.at("mean"), "target.mean");
    const int q = static_cast<int>(mean.size());
    return DistributionSpec(MultivariateGaussian{ mean, matrix_from_json(j.at("covariance"), q, q, "target.covariance") });
  }
  if (kind == "independent") {
    std::vector<Marginal> ms;
    for (const auto& m : j.at("marginals"))
      ms.push_back(marginal_from_json(m));
    return DistributionSpec::independent(std::move(ms));
  }
  throw Error(ErrorCode::invalid_argument, "target.kind must be 'gaussian' or 'independent'");
}

// ---------------------------------------------------------------------------
// Mixtures

inline Json to_json(const MixtureModel& m)
{
  Json comps = Json::array();
  for (const auto& c : m.components())
    comps.push_back({ { "weight", c.weight() }, { "mean", to_json(c.mean()) }, { "covariance", to_json(c.covariance()) } });
  return { { "dimension", m.dimension() }, { "components", comps } };
}

inline MixtureModel mixture_from_json(const Json& j)
{
  const int q = j.at("dimension").get<int>();
  std::vector<GaussianComponent> comps;
  for (const auto& c : j.at("components"))
    comps.emplace_back(c.at("weight").get<double>(), vector_from_json(c.at("mean"), "component.mean"),
                       matrix_from_json(c.at("covariance"), q, q, "component.covariance"));
  return MixtureModel(std::move(comps));
}

// ---------------------------------------------------------------------------
// Rep-point sets: CSV of points plus a JSON sidecar

inline void write_rep_points(const RepPointSet& set, const std::string& csv_path)
{
  std::ostringstream os;
  os << std::setprecision(17);
  for (int i = 0; i < set.dimension(); ++i)
    os << (i ? "," : "") << "theta_" << i + 1;
  os << '\n';
  for (int k = 0; k < set.size(); ++k) {
    for (int i = 0; i < set.dimension(); ++i)
      os << (i ? "," : "") << set.points(i, k);
    os << '\n';
  }
  write_text(csv_path, os.str());
  const Json side = { { "generator", set.generator },
                      { "provenance", to_string(set.provenance) },
                      { "seed", set.seed },
                      { "K", set.size() },
                      { "target", to_json(set.target) } };
  write_json_file(std::filesystem::path(csv_path).replace_extension(".json").string(), side);
}

// ---------------------------------------------------------------------------
// Evolution traces: directory with meta.json and snapshot_<i>.json

inline void write_trace(const EvolutionTrace& trace, const std::string& dir)
{
  std::filesystem::create_directories(dir);
  Json times = Json::array();
  for (double t : trace.times)
    times.push_back(t);
  write_json_file(dir + "/meta.json", { { "config_hash", trace.config_hash },
                                        { "model_runs_per_snapshot", trace.model_runs },
                                        { "floor_activations", trace.floor_activations },
                                        { "times", times } });
  for (std::size_t i = 0; i < trace.size(); ++i)
    write_json_file(dir + "/snapshot_" + std::to_string(i) + ".json", to_json(trace.snapshots[i]));
}

inline EvolutionTrace read_trace(const std::string& dir)
{
  const Json meta = read_json_file(dir + "/meta.json");
  EvolutionTrace trace;
  trace.config_hash = meta.value("config_hash", "");
  trace.model_runs = meta.value("model_runs_per_snapshot", std::int64_t{ 0 });
  trace.floor_activations = meta.value("floor_activations", 0);
  const auto& times = meta.at("times");
  for (std::size_t i = 0; i < times.size(); ++i)
    trace.push(times[i].get<double>(),
               mixture_from_json(read_json_file(dir + "/snapshot_" + std::to_string(i) + ".json")));
  return trace;
}

//! Cubature points of every component: component, point, weight, x_1..x_q.
inline std::string cubature_csv(const MixtureModel& m)
{
  std::ostringstream os;
  os << std::setprecision(17) << "component,point,weight";
  for (int i = 0; i < m.dimension(); ++i)
    os << ",x" << i + 1;
  os << '\n';
  for (int k = 0; k < m.size(); ++k) {
    const CubatureSet set = cubature_points(m[k]);
    for (int p = 0; p < set.size(); ++p) {
      os << k << ',' << p << ',' << set.weights(p);
      for (int i = 0; i < m.dimension(); ++i)
        os << ',' << set.points(i, p);
      os << '\n';
    }
  }
  return os.str();
}

//! FNV-1a 64-bit digest, hex encoded.
inline std::string content_hash(const std::string& text)
{
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

} // namespace meso
