#include <cmath>
#include <limits>
#include <numbers>
#include <vector>

#include <gtest/gtest.h>

#include "logspline/calibration.hpp"
#include "logspline/error.hpp"
#include "logspline/logspline_model.hpp"
#include "logspline/rng.hpp"
#include "logspline/truth_library.hpp"
#include "support/oracles.hpp"

using namespace logspline;

namespace {

Eigen::VectorXd random_theta(Rng& rng, int J, double M) {
  Eigen::VectorXd t(J);
  for (int j = 0; j < J; ++j) t[j] = rng.uniform(-M, M);
  return project_to_box(t, M);
}

Density uniform_density() {
  Density d;
  d.log_pdf = [](double) { return 0.0; };
  d.name = "uniform";
  return d;
}

TrueDensity uniform_truth() { return TrueDensity(uniform_density(), std::nullopt, 0.0); }

}  // namespace

TEST(LogSplineModel, NormalizerOfZeroAndConstants) {
  const FamilyPtr fam = make_family(4, 10);
  EXPECT_NEAR(fam->log_normalizer(Eigen::VectorXd::Zero(10)), 0.0, 1e-15);
  EXPECT_NEAR(fam->log_normalizer(Eigen::VectorXd::Constant(10, 2.5)), 2.5, 1e-14);
  const LogSplineModel m(fam, Eigen::VectorXd::Constant(10, -1.75));
  for (double x : {0.0, 0.3, 0.77, 1.0}) EXPECT_NEAR(m.density_at(x), 1.0, 1e-14);
}

TEST(LogSplineModel, NormalizerMatchesRiemannOracle) {
  Rng rng(21);
  const FamilyPtr fam = make_family(4, 10);
  for (int t = 0; t < 3; ++t) {
    const Eigen::VectorXd theta = random_theta(rng, 10, 3.0);
    const double ref = std::log(
        oracle::riemann([&](double x) { return std::exp(fam->basis().combine(theta, x)); }));
    EXPECT_NEAR(fam->log_normalizer(theta), ref, 1e-9);
  }
}

TEST(LogSplineModel, NormalizerGuardsOverflowAndRejectsNonFinite) {
  const FamilyPtr fam = make_family(3, 6);
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(6);
  theta[2] = 900.0;
  EXPECT_TRUE(std::isfinite(fam->log_normalizer(theta)));
  theta[2] = std::nan("");
  EXPECT_THROW(fam->log_normalizer(theta), InvalidInput);
  EXPECT_THROW(fam->log_normalizer(Eigen::VectorXd::Zero(5)), InvalidInput);
}

TEST(LogSplineModel, DensitiesIntegrateToOne) {
  Rng rng(22);
  for (int J : {5, 10, 20}) {
    const FamilyPtr fam = make_family(4, J);
    const QuadratureRule fine = make_rule(uniform_knots(8 * fam->basis().K()), 10);
    for (int t = 0; t < 200; ++t) {
      const LogSplineModel m(fam, random_theta(rng, J, 3.0));
      EXPECT_NEAR(integrate(fine, [&](double x) { return m.density_at(x); }), 1.0, 1e-8);
      EXPECT_NEAR(m.theta().sum(), 0.0, 1e-12);
    }
  }
}

TEST(LogSplineModel, HistogramCellProbabilities) {
  const FamilyPtr fam = make_family(1, 4);
  Eigen::VectorXd theta(4);
  theta << 0.5, -1.0, 2.0, 0.0;
  const LogSplineModel m(fam, theta);
  double Z = 0.0;
  for (int j = 0; j < 4; ++j) Z += 0.25 * std::exp(theta[j]);
  for (int j = 0; j < 4; ++j)
    EXPECT_NEAR(m.density_at((j + 0.5) / 4.0), std::exp(theta[j]) / Z, 1e-12);
  EXPECT_THROW(m.density_at(1.5), InvalidInput);
}

TEST(LogSplineModel, SamplingIsDeterministicAndMatchesCdf) {
  Rng rng(23);
  const FamilyPtr fam = make_family(4, 10);
  const LogSplineModel m(fam, random_theta(rng, 10, 2.0));
  Rng a(99), b(99);
  const auto xa = m.sample(a, 10000);
  const auto xb = m.sample(b, 10000);
  EXPECT_EQ(xa, xb);
  const QuadratureRule fine = make_rule(uniform_knots(2000), 6);
  std::vector<double> grid(2001, 0.0);
  for (int c = 0; c < 2000; ++c) {
    double s = 0.0;
    for (int i = 0; i < 6; ++i) s += fine.weights()[c * 6 + i] * m.density_at(fine.nodes()[c * 6 + i]);
    grid[c + 1] = grid[c] + s;
  }
  auto cdf = [&](double x) {
    const double s = x * 2000;
    const int c = std::min(static_cast<int>(s), 1999);
    return grid[c] + (s - c) * (grid[c + 1] - grid[c]);
  };
  EXPECT_LT(oracle::ks_statistic(xa, cdf), oracle::ks_critical_01(xa.size()));

  const LogSplineModel u(fam, Eigen::VectorXd::Zero(10));
  Rng c(5);
  const auto xu = u.sample(c, 10000);
  EXPECT_LT(oracle::ks_statistic(xu, [](double x) { return x; }), oracle::ks_critical_01(10000));
}

TEST(LogSplineModel, HellingerClosedForm) {
  Density lin;
  lin.log_pdf = [](double x) { return std::log(2.0 * x); };
  lin.name = "2x";
  const double h = hellinger(uniform_density(), lin);
  EXPECT_NEAR(h * h, 2.0 - 4.0 / 3.0 * std::sqrt(2.0), 1e-6);
  EXPECT_EQ(hellinger(lin, lin), 0.0);
  EXPECT_NEAR(hellinger(uniform_density(), lin), hellinger(lin, uniform_density()), 1e-15);
}

TEST(LogSplineModel, HellingerRejectsUnnormalized) {
  Density twice;
  twice.log_pdf = [](double) { return std::log(2.0); };
  EXPECT_THROW(hellinger(uniform_density(), twice), InvalidInput);
}

TEST(LogSplineModel, CenteringPreservesDensity) {
  Rng rng(24);
  const FamilyPtr fam = make_family(4, 8);
  Eigen::VectorXd theta(8);
  for (int j = 0; j < 8; ++j) theta[j] = rng.uniform(-2, 2) + 3.0;
  const Density raw{[&](double x) { return fam->basis().combine(theta, x) - fam->log_normalizer(theta); },
                    fam->basis().breakpoints(), "raw"};
  const LogSplineModel m(fam, theta);
  EXPECT_LT(hellinger(raw, m.to_density()), 1e-8);
}

TEST(LogSplineModel, KlProfileAgainstUniformTruth) {
  Rng rng(25);
  const FamilyPtr fam = make_family(4, 10);
  const TrueDensity p0 = uniform_truth();
  const LogSplineModel same(fam, Eigen::VectorXd::Zero(10));
  const NeighborhoodMembership z = kl_profile(p0, same.to_density());
  EXPECT_NEAR(z.kl, 0.0, 1e-15);
  EXPECT_NEAR(z.kl2, 0.0, 1e-15);
  EXPECT_NEAR(z.hellinger, 0.0, 1e-8);

  for (int t = 0; t < 5; ++t) {
    const LogSplineModel m(fam, random_theta(rng, 10, 2.0));
    const NeighborhoodMembership prof = kl_profile(p0, m.to_density());
    // Under a uniform p0, P0 log(p0/p) = c(theta) - int theta^T B.
    const double ref = fam->log_normalizer(m.theta()) -
                       oracle::riemann([&](double x) { return fam->basis().combine(m.theta(), x); });
    EXPECT_NEAR(prof.kl, ref, 1e-9);
    EXPECT_GE(prof.kl2, prof.kl * prof.kl - 1e-10);
    EXPECT_LE(prof.hellinger * prof.hellinger, prof.kl + 1e-12);
  }
}

TEST(LogSplineModel, KlProfileRejectsVanishingDensity) {
  Density spike;
  spike.log_pdf = [](double x) { return x < 0.5 ? -1000.0 : std::log(2.0); };
  spike.breakpoints = {0.0, 0.5, 1.0};
  EXPECT_THROW(kl_profile(uniform_truth(), spike), NumericDomain);
}

TEST(LogSplineModel, ComparatorAgreesWithGenericRoutines) {
  Rng rng(26);
  const FamilyPtr fam = make_family(4, 9);
  Density tilt;
  tilt.log_pdf = [](double x) { return 0.8 * x - std::log((std::exp(0.8) - 1.0) / 0.8); };
  const TrueDensity p0(tilt, std::nullopt, 0.5);
  const TruthComparator cmp(fam, p0);
  for (int t = 0; t < 5; ++t) {
    const LogSplineModel m(fam, random_theta(rng, 9, 2.0));
    const NeighborhoodMembership a = kl_profile(p0, m.to_density());
    const NeighborhoodMembership b = cmp.profile(m.theta());
    EXPECT_NEAR(a.kl, b.kl, 1e-12);
    EXPECT_NEAR(a.kl2, b.kl2, 1e-12);
    EXPECT_NEAR(a.hellinger, b.hellinger, 1e-10);
    EXPECT_NEAR(cmp.hellinger(m.theta()), hellinger(p0.density(), m.to_density()), 1e-10);
  }
}

TEST(LogSplineModel, HellingerGradientMatchesFiniteDifferences) {
  Rng rng(27);
  const FamilyPtr fam = make_family(4, 7);
  Density tilt;
  const double Z = oracle::riemann([](double y) { return std::exp(std::sin(3.0 * y)); });
  tilt.log_pdf = [Z](double x) { return std::sin(3.0 * x) - std::log(Z); };
  const TrueDensity p0(tilt, std::nullopt, 1.0);
  const TruthComparator cmp(fam, p0);
  const Eigen::VectorXd theta = random_theta(rng, 7, 1.0);
  Eigen::VectorXd g;
  cmp.hellinger_sq_grad(theta, g);
  for (int j = 0; j < 7; ++j) {
    Eigen::VectorXd a = theta, b = theta;
    a[j] += 1e-6;
    b[j] -= 1e-6;
    Eigen::VectorXd dummy;
    const double fd = (cmp.hellinger_sq_grad(a, dummy) - cmp.hellinger_sq_grad(b, dummy)) / 2e-6;
    EXPECT_NEAR(g[j], fd, 1e-7);
  }
}

TEST(LogSplineModel, ProjectionRecoversMember) {
  Rng rng(28);
  const FamilyPtr fam = make_family(4, 8);
  const Eigen::VectorXd star = random_theta(rng, 8, 1.0);
  const LogSplineModel m(fam, star);
  const TrueDensity p0(m.to_density(), std::nullopt, sup_log_density(*fam, m.theta()));
  const Projection pr = project_hellinger(fam, p0, 3.0);
  EXPECT_LT((pr.theta - m.theta()).norm(), 1e-5);
  EXPECT_LT(pr.epsilon, 1e-6);
  EXPECT_LE(pr.epsilon, pr.sup_init + 1e-12);
  EXPECT_FALSE(pr.warning);
}

TEST(LogSplineModel, ProjectionStaysInBoxAndBeatsInitializer) {
  const FamilyPtr fam = make_family(4, 10);
  Density d;
  const double Z = oracle::riemann([](double x) { return std::exp(std::sin(2 * std::numbers::pi * x)); });
  d.log_pdf = [Z](double x) { return std::sin(2 * std::numbers::pi * x) - std::log(Z); };
  const TrueDensity p0(d, std::nullopt, 1.0 + std::abs(std::log(Z)));
  const Projection pr = project_hellinger(fam, p0, 8.0);
  EXPECT_LE(pr.theta.cwiseAbs().maxCoeff(), 8.0 + 1e-12);
  EXPECT_NEAR(pr.theta.sum(), 0.0, 1e-12);
  EXPECT_LE(pr.epsilon, pr.eps_init + 1e-15);
  EXPECT_LE(pr.epsilon, pr.sup_init);
}

TEST(LogSplineModel, ProjectionErrorDecaysWithDimension) {
  ProjectionOptions po;
  po.lower_c4 = std::numeric_limits<double>::infinity();
  const TruthSpec hoelder = hoelder_truth(1.5, 3);
  const TruthSpec smooth = analytic_truth(1.0);
  std::vector<double> Js, eh, es;
  for (int J : {6, 10, 18, 34}) {
    Js.push_back(J);
    eh.push_back(project_hellinger(make_family(4, J), hoelder.truth, 3.0, po).epsilon);
    es.push_back(project_hellinger(make_family(4, J), smooth.truth, 3.0, po).epsilon);
  }
  EXPECT_NEAR(oracle::loglog_slope(Js, eh), -1.5, 0.4);
  EXPECT_LT(oracle::loglog_slope(Js, es), -3.0);
}

TEST(LogSplineModel, ProjectionPreconditionChecked) {
  const FamilyPtr fam = make_family(4, 6);
  Density d;
  d.log_pdf = [](double) { return 0.0; };
  const TrueDensity p0(d, std::nullopt, 5.0);
  ProjectionOptions opt;
  opt.lower_c4 = 0.5;
  EXPECT_THROW(project_hellinger(fam, p0, 3.0, opt), InvalidInput);
}

TEST(LogSplineModel, LogDensityConstantsStableAcrossDimensions) {
  const Calibration& cal = frozen_calibration();
  std::vector<CalibrationSample> s;
  for (int J : {5, 10, 20}) s.push_back(measure_constants(4, J, cal.M, cal.M_pairs, 200, 77));
  for (const auto& x : s) {
    EXPECT_GE(x.c4_lower, cal.c4_lower) << "J=" << x.J;
    EXPECT_LE(x.c4_upper, cal.c4_upper) << "J=" << x.J;
    EXPECT_GE(x.r_min, cal.r_min) << "J=" << x.J;
    EXPECT_LE(x.r_max, cal.r_max) << "J=" << x.J;
    EXPECT_LE(x.inclusion_B, cal.inclusion_B) << "J=" << x.J;
    EXPECT_LE(x.l2_lower, cal.l2_lower);
    EXPECT_LE(x.l2_upper, cal.l2_upper);
  }
  EXPECT_LE(cal.c4_upper, 2.0 * 1.25 + 1e-12);
}

TEST(LogSplineModel, HellingerSandwichSpread) {
  const Calibration& cal = frozen_calibration();
  const double M = cal.M_pairs;
  Rng rng(29);
  for (int J : {5, 10, 20}) {
    const FamilyPtr fam = make_family(4, J);
    double lo = 1e300, hi = 0.0;
    for (int d = 0; d < 1000; ++d) {
      const LogSplineModel a(fam, random_theta(rng, J, M));
      const LogSplineModel b(fam, random_theta(rng, J, M));
      const double h = hellinger(a.to_density(), b.to_density());
      const double r = h * h * J / (a.theta() - b.theta()).squaredNorm();
      lo = std::min(lo, r);
      hi = std::max(hi, r);
    }
    EXPECT_GE(lo, cal.r_min);
    EXPECT_LE(hi, cal.r_max);
    EXPECT_LE(hi / lo, std::exp(2.0 * cal.c4_upper * M + 1.0));
  }
}
