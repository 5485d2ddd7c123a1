#include "meso/meso.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace meso;

namespace {

Matrix random_spd(int q, std::mt19937_64& rng)
{
  std::normal_distribution<double> n01;
  Matrix a(q, q);
  for (int i = 0; i < q; ++i)
    for (int j = 0; j < q; ++j)
      a(i, j) = n01(rng);
  return a * a.transpose() + 0.1 * Matrix::Identity(q, q);
}

RepPointSet points_from(const Matrix& m, const DistributionSpec& target)
{
  RepPointSet s;
  s.points = m;
  s.target = target;
  s.generator = "manual";
  return s;
}

} // namespace

TEST(Component, RejectsNonSpdCovariance)
{
  Matrix c(2, 2);
  c << 1.0, 2.0, 2.0, 1.0;
  try {
    GaussianComponent(1.0, Vector::Zero(2), c);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::spd_violation);
  }
}

TEST(Component, CholeskyReproducesCovariance)
{
  std::mt19937_64 rng(3);
  for (int q : { 1, 2, 4 }) {
    const Matrix c = random_spd(q, rng);
    const GaussianComponent g(1.0, Vector::Zero(q), c);
    EXPECT_LE((g.cholesky() * g.cholesky().transpose() - c).norm() / c.norm(), 1e-12);
  }
}

TEST(Mixture, WeightsMustSumToOne)
{
  std::vector<GaussianComponent> c{ { 0.5, Vector::Zero(1), Matrix::Identity(1, 1) },
                                    { 0.4, Vector::Ones(1), Matrix::Identity(1, 1) } };
  EXPECT_THROW(MixtureModel{ c }, Error);
}

TEST(Mixture, MixedDimensionsRejected)
{
  std::vector<GaussianComponent> c{ { 0.5, Vector::Zero(1), Matrix::Identity(1, 1) },
                                    { 0.5, Vector::Zero(2), Matrix::Identity(2, 2) } };
  EXPECT_THROW(MixtureModel{ c }, Error);
}

TEST(Density, StandardBivariateAtOrigin)
{
  const MixtureModel m({ GaussianComponent(1.0, Vector::Zero(2), Matrix::Identity(2, 2)) });
  EXPECT_NEAR(m.density(Vector::Zero(2)), 1.0 / (2.0 * kPi), 1e-15);
}

TEST(Density, TwoUnitComponentsAtPlusMinusOne)
{
  const MixtureModel m({ GaussianComponent(0.5, Vector::Constant(1, -1.0), Matrix::Identity(1, 1)),
                         GaussianComponent(0.5, Vector::Constant(1, 1.0), Matrix::Identity(1, 1)) });
  EXPECT_NEAR(m.density(Vector::Zero(1)), std::exp(-0.5) / std::sqrt(2.0 * kPi), 1e-15);
  EXPECT_NEAR(m.density(Vector::Zero(1)), 0.24197, 1e-5);
}

TEST(Density, FarTailStaysPositive)
{
  const MixtureModel m({ GaussianComponent(1.0, Vector::Zero(2), Matrix::Identity(2, 2)) });
  Vector x(2);
  x << 40.0, 0.0;
  const double p = m.density(x);
  EXPECT_GT(p, 0.0);
  EXPECT_TRUE(std::isfinite(p));
  EXPECT_NEAR(m.log_density(x), -800.0 - std::log(2.0 * kPi), 1e-9);
}

TEST(Density, MeanAndCovarianceOfMixture)
{
  const MixtureModel m({ GaussianComponent(0.5, Vector::Constant(1, -1.0), Matrix::Identity(1, 1)),
                         GaussianComponent(0.5, Vector::Constant(1, 1.0), Matrix::Identity(1, 1)) });
  EXPECT_NEAR(m.mean()(0), 0.0, 1e-15);
  EXPECT_NEAR(m.covariance()(0, 0), 2.0, 1e-15);
}

TEST(Density, MarginalPicksSubBlock)
{
  Matrix c(2, 2);
  c << 2.0, 0.3, 0.3, 1.0;
  Vector mu(2);
  mu << 1.0, -2.0;
  const MixtureModel m({ GaussianComponent(1.0, mu, c) });
  const auto m1 = m.marginal({ 1 });
  EXPECT_EQ(m1.dimension(), 1);
  EXPECT_DOUBLE_EQ(m1[0].mean()(0), -2.0);
  EXPECT_DOUBLE_EQ(m1[0].covariance()(0, 0), 1.0);
}

TEST(Density, ImportanceSampledIntegralIsOne)
{
  const auto target = DistributionSpec::standard_normal(2);
  const auto pts = lds_rep_points(UnitGenerator::glp, 89, target);
  const auto mix = build_mixture(pts, KernelPolicy::homogeneous(), target);
  // Importance samples from N(0, 4 I) cover every component.
  const DistributionSpec proposal(MultivariateGaussian{ Vector::Zero(2), 4.0 * Matrix::Identity(2, 2) });
  const int N = 1000000;
  std::mt19937_64 rng(17);
  std::normal_distribution<double> n01;
  double s = 0.0, s2 = 0.0;
  Vector x(2);
  for (int j = 0; j < N; ++j) {
    x << 2.0 * n01(rng), 2.0 * n01(rng);
    const double q = std::exp(-x.squaredNorm() / 8.0) / (8.0 * kPi);
    const double w = mix.density(x) / q;
    s += w;
    s2 += w * w;
  }
  const double mean = s / N;
  const double se = std::sqrt((s2 / N - mean * mean) / N);
  EXPECT_NEAR(mean, 1.0, 3.0 * se);
}

TEST(DensityGrid, SinglePointMatchesDensity)
{
  const MixtureModel m({ GaussianComponent(1.0, Vector::Zero(2), Matrix::Identity(2, 2)) });
  GridSpec g{ { GridAxis{ 0.3, 0.3, 1 }, GridAxis{ -0.2, -0.2, 1 } } };
  const auto d = density_grid(m, g);
  ASSERT_EQ(d.values.size(), 1u);
  Vector x(2);
  x << 0.3, -0.2;
  EXPECT_DOUBLE_EQ(d.values[0], m.density(x));
}

TEST(DensityGrid, SymmetricModelGivesSymmetricGrid)
{
  const MixtureModel m({ GaussianComponent(0.5, Vector::Constant(2, -1.0), Matrix::Identity(2, 2)),
                         GaussianComponent(0.5, Vector::Constant(2, 1.0), Matrix::Identity(2, 2)) });
  const auto d = density_grid(m, GridSpec::uniform(2, -3.0, 3.0, 41));
  for (int i = 0; i < 41; ++i)
    for (int j = 0; j < 41; ++j)
      EXPECT_NEAR(d.at(i, j), d.at(40 - i, 40 - j), 1e-12);
}

TEST(DensityGrid, ExampleOneNormalizes)
{
  const auto target = DistributionSpec::standard_normal(2);
  const auto pts = lds_rep_points(UnitGenerator::glp, 89, target);
  const auto in = build_mixture(pts, KernelPolicy::homogeneous(), target);
  const auto out = evolve_static(std::get<StaticMap>(linear_map_model().model.kind), in);
  GridSpec g{ { GridSpec::stepped(-15, 15, 0.05), GridSpec::stepped(-15, 15, 0.05) } };
  EXPECT_NEAR(density_grid(out, g).integral(), 1.0, 0.01);
}

TEST(DensityGrid, RejectsSingleNodeWithSpan)
{
  const MixtureModel m({ GaussianComponent(1.0, Vector::Zero(1), Matrix::Identity(1, 1)) });
  EXPECT_THROW(density_grid(m, GridSpec{ { GridAxis{ 0.0, 1.0, 1 } } }), Error);
}

TEST(BuildMixture, SingleUnitComponentIsStandardGaussian)
{
  const auto t = DistributionSpec::standard_normal(2);
  const auto mix = build_mixture(points_from(Matrix::Zero(2, 1), t), KernelPolicy::homogeneous(1.0), t);
  ASSERT_EQ(mix.size(), 1);
  EXPECT_DOUBLE_EQ(mix[0].weight(), 1.0);
  EXPECT_EQ(mix[0].covariance(), Matrix::Identity(2, 2));
  EXPECT_NEAR(mix.density(Vector::Zero(2)), 0.15915, 1e-5);
}

TEST(BuildMixture, InscribedUnitSquareCorners)
{
  const auto t = DistributionSpec::standard_normal(2);
  Matrix p(2, 4);
  p << 0, 1, 0, 1, 0, 0, 1, 1;
  const auto mix = build_mixture(points_from(p, t), KernelPolicy::inscribed(), t);
  for (int k = 0; k < 4; ++k) {
    EXPECT_NEAR((mix[k].covariance() - 0.25 * Matrix::Identity(2, 2)).norm(), 0.0, 1e-15);
    EXPECT_DOUBLE_EQ(mix[k].weight(), 0.25);
    EXPECT_EQ(mix[k].mean(), Vector(p.col(k)));
  }
}

TEST(BuildMixture, InscribedWithOnePointFallsBack)
{
  std::vector<std::string> warnings;
  ScopedWarningSink sink([&](const std::string& w) { warnings.push_back(w); });
  const auto t = DistributionSpec::standard_normal(2);
  const auto mix = build_mixture(points_from(Matrix::Zero(2, 1), t), KernelPolicy::inscribed(), t);
  EXPECT_EQ(mix[0].covariance(), homogeneous_covariance(t, 1));
  EXPECT_EQ(warnings.size(), 1u);
}

TEST(BuildMixture, HomogeneousHeuristic)
{
  const auto t = DistributionSpec::independent({ Marginal::normal(0, 2.0), Marginal::normal(0, 0.5) });
  const Matrix c = homogeneous_covariance(t, 16);
  EXPECT_DOUBLE_EQ(c(0, 0), 0.25);   // (16^-1/2 * 2)^2
  EXPECT_DOUBLE_EQ(c(1, 1), 0.015625);
  EXPECT_DOUBLE_EQ(c(0, 1), 0.0);
}

TEST(BuildMixture, DuplicatesRemovedWithWarning)
{
  std::vector<std::string> warnings;
  ScopedWarningSink sink([&](const std::string& w) { warnings.push_back(w); });
  const auto t = DistributionSpec::standard_normal(1);
  Matrix p(1, 3);
  p << 0.0, 1.0, 0.0;
  const auto mix = build_mixture(points_from(p, t), KernelPolicy::homogeneous(), t);
  EXPECT_EQ(mix.size(), 2);
  EXPECT_FALSE(warnings.empty());
}

TEST(BuildMixture, FittedScaleRecoversSingleGaussian)
{
  // One kernel at the target mean: the ISE minimum is the target itself.
  const auto t = DistributionSpec::independent({ Marginal::normal(0, 1), Marginal::normal(0, 1) });
  EXPECT_NEAR(fit_homogeneous_scale(Matrix::Zero(2, 1), DistributionSpec::standard_normal(2)), 1.0, 1e-6);
  EXPECT_NEAR(fit_homogeneous_scale(Matrix::Zero(2, 1), t, 5), 1.0, 0.05);
}

TEST(BuildMixture, FittedBeatsHeuristicOnIse)
{
  const auto t = DistributionSpec::standard_normal(2);
  const auto pts = lds_rep_points(UnitGenerator::glp, 89, t);
  const double c = fit_homogeneous_scale(pts.points, t);
  const double f = std::pow(89.0, -0.5);
  EXPECT_LT(homogeneous_ise(pts.points, Vector::Constant(2, c), t, nullptr),
            homogeneous_ise(pts.points, Vector::Constant(2, f), t, nullptr));
}

TEST(BuildMixture, AdaptiveBeatsDefaultHomogeneousOnGrid)
{
  const auto t = DistributionSpec::standard_normal(2);
  const auto pts = lds_rep_points(UnitGenerator::glp, 89, t);
  EmConfig em;
  em.seed = 4;
  const auto adaptive = build_mixture(pts, KernelPolicy::adaptive(), t, em);
  const auto homog = build_mixture(pts, KernelPolicy::homogeneous(), t);
  const GridSpec g = GridSpec::uniform(2, -4.0, 4.0, 50);
  const auto truth = tabulate(g, [](const Vector& x) { return std::exp(-0.5 * x.squaredNorm()) / (2.0 * kPi); });
  EXPECT_LT(grid_error(density_grid(adaptive, g), truth, GridNorm::l2),
            grid_error(density_grid(homog, g), truth, GridNorm::l2));
}

TEST(BuildMixture, ConvergesAsKGrows)
{
  const auto t = DistributionSpec::standard_normal(2);
  const GridSpec g = GridSpec::uniform(2, -4.0, 4.0, 60);
  const auto truth = tabulate(g, [](const Vector& x) { return std::exp(-0.5 * x.squaredNorm()) / (2.0 * kPi); });
  double prev = std::numeric_limits<double>::infinity();
  for (int K : { 10, 40, 160 }) {
    const auto pts = lds_rep_points(UnitGenerator::halton, K, t);
    const auto mix = build_mixture(pts, KernelPolicy::homogeneous_fitted(), t);
    const double e = grid_error(density_grid(mix, g), truth, GridNorm::l2);
    EXPECT_LE(e, prev) << "K = " << K;
    prev = e;
  }
}

TEST(Em, SingleComponentGivesSampleCovariance)
{
  const auto t = DistributionSpec::independent({ Marginal::normal(0, 2.0), Marginal::normal(0, 1.0) });
  const Matrix aux = t.sample_matrix(11, 500);
  const Matrix mean = Matrix::Zero(2, 1);
  const auto r = fit_covariances_em(mean, { Matrix::Identity(2, 2) }, aux);
  const Matrix expect = aux * aux.transpose() / 500.0;
  EXPECT_LE((r.covariances[0] - expect).norm(), 1e-12 * expect.norm());
  const auto comps = std::vector<GaussianComponent>{ GaussianComponent(1.0, Vector::Zero(2), r.covariances[0]) };
  EXPECT_DOUBLE_EQ(responsibilities(comps, aux.col(0))(0), 1.0);
}

TEST(Em, SeparatedComponentsRecoverUnitVariance)
{
  Matrix aux(1, 2000);
  std::mt19937_64 rng(8);
  std::normal_distribution<double> n01;
  for (int j = 0; j < 2000; ++j)
    aux(0, j) = (j % 2 ? 10.0 : -10.0) + n01(rng);
  Matrix means(1, 2);
  means << -10.0, 10.0;
  const auto r = fit_covariances_em(means, { Matrix::Identity(1, 1) * 4.0, Matrix::Identity(1, 1) * 0.2 }, aux);
  for (int k = 0; k < 2; ++k) {
    EXPECT_GE(r.covariances[k](0, 0), 0.85);
    EXPECT_LE(r.covariances[k](0, 0), 1.15);
  }
}

TEST(Em, LogLikelihoodNonDecreasing)
{
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 4; ++trial) {
    const int q = 1 + trial % 3;
    const auto t = DistributionSpec(MultivariateGaussian{ Vector::Zero(q), random_spd(q, rng) });
    const auto pts = lds_rep_points(UnitGenerator::halton, 12, t);
    const Matrix aux = t.sample_matrix(100 + trial, 50 * 12);
    const auto r = fit_covariances_em(pts.points, std::vector<Matrix>(12, homogeneous_covariance(t, 12)), aux);
    for (std::size_t i = 1; i < r.log_likelihood.size(); ++i)
      EXPECT_GE(r.log_likelihood[i], r.log_likelihood[i - 1] - 1e-9 * std::abs(r.log_likelihood[i - 1]));
  }
}

TEST(Em, WeightsAndMeansUntouched)
{
  const auto t = DistributionSpec::standard_normal(2);
  const auto pts = lds_rep_points(UnitGenerator::glp, 34, t);
  EmConfig em;
  em.seed = 1;
  const auto mix = build_mixture(pts, KernelPolicy::adaptive(), t, em);
  for (int k = 0; k < mix.size(); ++k) {
    EXPECT_EQ(mix[k].weight(), 1.0 / 34.0);
    EXPECT_EQ(mix[k].mean(), Vector(pts.points.col(k)));
  }
}

TEST(Em, ResponsibilitiesSumToOne)
{
  const auto t = DistributionSpec::standard_normal(2);
  const auto mix = build_mixture(lds_rep_points(UnitGenerator::glp, 34, t), KernelPolicy::homogeneous(), t);
  const Matrix aux = t.sample_matrix(6, 1000);
  for (int j = 0; j < 1000; ++j)
    EXPECT_NEAR(responsibilities(mix.components(), aux.col(j)).sum(), 1.0, 1e-12);
}

TEST(Em, OrphanComponentFrozenAndFlagged)
{
  std::vector<std::string> warnings;
  ScopedWarningSink sink([&](const std::string& w) { warnings.push_back(w); });
  Matrix means(1, 2);
  means << 0.0, 1000.0;
  const Matrix aux = DistributionSpec::standard_normal(1).sample_matrix(3, 200);
  const Matrix start = Matrix::Identity(1, 1) * 0.01;
  const auto r = fit_covariances_em(means, { Matrix::Identity(1, 1), start }, aux);
  EXPECT_TRUE(r.frozen[1]);
  EXPECT_FALSE(r.frozen[0]);
  EXPECT_EQ(r.covariances[1], start);
  EXPECT_FALSE(warnings.empty());
}

TEST(Em, AuxiliaryRatioEnforced)
{
  EXPECT_THROW(fit_covariances_em(Matrix::Zero(1, 2), { Matrix::Identity(1, 1), Matrix::Identity(1, 1) },
                                  Matrix::Zero(1, 99)),
               Error);
}

TEST(MixtureIo, JsonRoundTrip)
{
  std::mt19937_64 rng(1);
  const MixtureModel m({ GaussianComponent(0.25, Vector::Ones(3), random_spd(3, rng)),
                         GaussianComponent(0.75, -Vector::Ones(3), random_spd(3, rng)) });
  const Json j = to_json(m);
  EXPECT_EQ(j["dimension"], 3);
  EXPECT_EQ(j["components"][0]["covariance"].size(), 9u);
  const auto back = mixture_from_json(Json::parse(j.dump()));
  for (int k = 0; k < 2; ++k) {
    EXPECT_EQ(back[k].weight(), m[k].weight());
    EXPECT_EQ(back[k].mean(), m[k].mean());
    EXPECT_EQ(back[k].covariance(), m[k].covariance());
  }
}
