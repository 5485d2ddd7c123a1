#include "meso/meso.hpp"

#include <gtest/gtest.h>

#include <filesystem>

using namespace meso;

namespace {

SampleCloud standard_cloud(int n, int q = 2)
{
  return qmc_cloud(lds_rep_points(UnitGenerator::halton, n, DistributionSpec::standard_normal(q)));
}

GridSpec square(double lo, double hi, double step)
{
  return GridSpec{ { GridSpec::stepped(lo, hi, step), GridSpec::stepped(lo, hi, step) } };
}

} // namespace

TEST(PropagateSamples, IdentityMapKeepsCloud)
{
  const auto c = standard_cloud(200);
  const StaticMap id{ 2, 2, [](const Vector& x) { return x; } };
  const auto out = propagate_samples(id, c);
  EXPECT_EQ(out.samples, c.samples);
  EXPECT_EQ(out.origin, SampleOrigin::qmc);
}

TEST(PropagateSamples, LinearMapCovariance)
{
  const auto c = mc_cloud(DistributionSpec::standard_normal(2), 10000, 4);
  const auto out = propagate_samples(std::get<StaticMap>(linear_map_model().model.kind), c);
  Matrix expect(2, 2);
  expect << 34, 13, 13, 5;
  const Matrix cov = out.covariance();
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j)
      EXPECT_NEAR(cov(i, j), expect(i, j), 0.15 * expect(i, j));
}

TEST(PropagateSamples, NonFiniteSamplesExcludedWithWarning)
{
  SampleCloud c{ Matrix(1, 3), SampleOrigin::mc, "", 0 };
  c.samples << -1.0, 1.0, 2.0;
  const StaticMap lg{ 1, 1, [](const Vector& x) { return Vector(x.array().log()); } };
  std::vector<std::string> seen;
  ScopedWarningSink sink([&](const std::string& m) { seen.push_back(m); });
  const auto out = propagate_samples(lg, c);
  EXPECT_EQ(out.size(), 2);
  EXPECT_EQ(out.excluded, 1);
  EXPECT_FALSE(seen.empty());
}

TEST(PropagateSamples, NoiselessDuffingFromPointMass)
{
  const Sde sde = std::get<Sde>(duffing_model(DuffingParams{}, 0.0).model.kind);
  SampleCloud c{ Matrix::Ones(2, 50), SampleOrigin::mc, "", 0 };
  MarkovOptions o;
  o.steps = 20;
  o.snapshot_every = 20;
  const auto out = propagate_samples(sde, c, o);
  ASSERT_EQ(out.size(), 2u);
  const Matrix& s = out.back().samples;
  for (int j = 1; j < 50; ++j)
    EXPECT_EQ(Vector(s.col(j)), Vector(s.col(0)));
  EXPECT_NE(Vector(s.col(0)), Vector::Ones(2));
}

TEST(PropagateSamples, SharesIntegratorWithMixture)
{
  Matrix J(2, 2);
  J << 0.0, 1.0, -2.0, -0.1;
  const OdeFlow flow{ 2, [J](double, const Vector& x) {
                       Vector y = J * x;
                       y(1) -= 0.2 * x(0) * x(0) * x(0);
                       return y;
                     },
                      0.01 };
  const MixtureModel m({ GaussianComponent(1.0, Vector::Zero(2), 0.3 * Matrix::Identity(2, 2)) });
  const auto tr = evolve_conservative(ConservativeModel::from_flow(flow), m, { 1.0 });
  // The four cubature points pushed through the sampling path reproduce the
  // mixture's moments exactly.
  const auto cp = cubature_points(m[0]);
  const auto clouds = propagate_samples(flow, SampleCloud{ cp.points, SampleOrigin::qmc, "", 0 }, 0.0, { 1.0 });
  const auto mom = moments_from_images(clouds[0].samples, cp.weights);
  EXPECT_LE((mom.mean - tr.snapshots[0][0].mean()).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LE((mom.covariance - tr.snapshots[0][0].covariance()).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Kde, SingleSampleIsGaussianKernel)
{
  SampleCloud c{ Matrix::Zero(2, 1), SampleOrigin::mc, "", 0 };
  Vector x(2);
  x << 0.3, -0.4;
  EXPECT_NEAR(kde_evaluate(c, 1.0, x), std::exp(-0.125) / (2.0 * kPi), 1e-15);
  EXPECT_NEAR(kde_evaluate(c, 0.5, Vector::Zero(2)), 1.0 / (2.0 * kPi * 0.25), 1e-15);
}

TEST(Kde, GridIntegratesToOne)
{
  const auto g = kde_density(standard_cloud(300), 0.3, square(-7, 7, 0.1));
  EXPECT_NEAR(g.integral(), 1.0, 1e-3);
  EXPECT_THROW(kde_density(standard_cloud(3), 0.0, square(-1, 1, 0.5)), Error);
}

TEST(Kde, NonlinearExampleIsUnimodalAcrossSlice)
{
  const auto in = lds_rep_points(UnitGenerator::glp, 610, DistributionSpec::standard_normal(2));
  const auto out = propagate_samples(std::get<StaticMap>(nonlinear_map_model().model.kind), qmc_cloud(in));
  const GridSpec g{ { GridSpec::stepped(0, 5, 0.05), GridSpec::stepped(-5, 5, 0.05) } };
  const auto kde = kde_density(out, 0.8, g);
  EXPECT_EQ(count_modes(slice_at(kde, 1.0)), 1);
}

TEST(Kde, LinearExampleRidgeBreaksIntoBumps)
{
  const auto in = lds_rep_points(UnitGenerator::glp, 89, DistributionSpec::standard_normal(2));
  const auto out = propagate_samples(std::get<StaticMap>(linear_map_model().model.kind), qmc_cloud(in));
  const auto kde = kde_density(out, 0.3, square(-15, 15, 0.1));
  EXPECT_GE(count_modes(kde), 2);
}

TEST(GridError, ZeroForIdenticalGrids)
{
  const auto g = tabulate(square(-3, 3, 0.1), [](const Vector& x) { return std::exp(-x.squaredNorm()); });
  for (auto n : { GridNorm::l1, GridNorm::l2, GridNorm::linf })
    EXPECT_EQ(grid_error(g, g, n), 0.0);
}

TEST(GridError, ShiftedGaussianLinfIsGradientTimesStep)
{
  const double h = 0.05;
  const auto spec = square(-5, 5, h);
  const auto pdf = [](double x, double y) { return std::exp(-0.5 * (x * x + y * y)) / (2.0 * kPi); };
  const auto a = tabulate(spec, [&](const Vector& x) { return pdf(x(0), x(1)); });
  const auto b = tabulate(spec, [&](const Vector& x) { return pdf(x(0) - h, x(1)); });
  const double max_grad = std::exp(-0.5) / (2.0 * kPi);
  EXPECT_NEAR(grid_error(a, b, GridNorm::linf), max_grad * h, 0.1 * max_grad * h);
}

TEST(GridError, DoubledDensityHasUnitL1)
{
  const auto spec = square(-6, 6, 0.05);
  const auto a = tabulate(spec, [](const Vector& x) { return std::exp(-0.5 * x.squaredNorm()) / (2.0 * kPi); });
  auto b = a;
  for (auto& v : b.values)
    v *= 2.0;
  EXPECT_NEAR(grid_error(a, b, GridNorm::l1), 1.0, 0.02);
}

TEST(GridError, MismatchedGridsRejected)
{
  const auto a = tabulate(square(-1, 1, 0.1), [](const Vector&) { return 1.0; });
  const auto b = tabulate(square(-1, 1, 0.2), [](const Vector&) { return 1.0; });
  try {
    grid_error(a, b, GridNorm::l2);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::grid_mismatch);
  }
}

TEST(Modes, BimodalCountAndScaleInvariance)
{
  auto g = tabulate(square(-6, 6, 0.1), [](const Vector& x) {
    return std::exp(-0.5 * ((x(0) - 2) * (x(0) - 2) + x(1) * x(1))) +
           std::exp(-0.5 * ((x(0) + 2) * (x(0) + 2) + x(1) * x(1)));
  });
  EXPECT_EQ(count_modes(g), 2);
  for (auto& v : g.values)
    v *= 1e-6;
  EXPECT_EQ(count_modes(g), 2);
  EXPECT_EQ(count_modes(slice_at(g, 2.0)), 1);
}

TEST(Modes, PlateauIsNotAMode)
{
  const auto g = tabulate(GridSpec::uniform(2, 0, 1, 5), [](const Vector&) { return 1.0; });
  EXPECT_EQ(count_modes(g), 0);
}

TEST(LineProfile, FollowsDirection)
{
  Vector c = Vector::Zero(2), d(2);
  d << 3.0, 4.0;
  const auto p = line_profile([](const Vector& x) { return x(1); }, c, d, 5.0, 11);
  EXPECT_NEAR(p.values.front(), -4.0, 1e-12);
  EXPECT_NEAR(p.values.back(), 4.0, 1e-12);
}

TEST(GridIo, CsvAndBinary)
{
  const auto g = tabulate(GridSpec{ { GridAxis{ 0, 1, 3 }, GridAxis{ -1, 1, 2 } } },
                          [](const Vector& x) { return x(0) + 10 * x(1); });
  const auto dir = std::filesystem::temp_directory_path() / "meso_grid_io";
  std::filesystem::create_directories(dir);
  write_grid_csv(g, (dir / "g.csv").string());
  std::ifstream in(dir / "g.csv");
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header, "x1,x2,density");
  write_grid_binary(g, (dir / "g.bin").string());
  const auto back = read_grid_binary((dir / "g.bin").string());
  EXPECT_EQ(back.spec, g.spec);
  EXPECT_EQ(back.values, g.values);
}
