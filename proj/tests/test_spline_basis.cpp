#include <cmath>
#include <numbers>
#include <vector>

#include <gtest/gtest.h>

#include "logspline/calibration.hpp"
#include "logspline/error.hpp"
#include "logspline/rng.hpp"
#include "logspline/spline_basis.hpp"
#include "logspline/truth_library.hpp"
#include "support/oracles.hpp"

using namespace logspline;

TEST(SplineBasis, Dimension) {
  EXPECT_EQ(SplineBasis(4, 7).J(), 10);
  EXPECT_EQ(SplineBasis(1, 5).J(), 5);
  EXPECT_EQ(SplineBasis(3, 3).J(), 5);
  EXPECT_EQ(basis_for_dimension(4, 34).K(), 31);
  EXPECT_THROW(SplineBasis(0, 3), InvalidInput);
  EXPECT_THROW(SplineBasis(2, 0), InvalidInput);
  EXPECT_THROW(basis_for_dimension(4, 3), InvalidInput);
}

TEST(SplineBasis, OrderOneIsHistogram) {
  const SplineBasis b(1, 5);
  // 0.3 lies in the second cell [0.2, 0.4).
  const Eigen::VectorXd v = b.eval(0.3);
  for (int j = 0; j < 5; ++j) EXPECT_EQ(v[j], j == 1 ? 1.0 : 0.0);
  for (int j = 0; j < 5; ++j) {
    const Eigen::VectorXd c = b.eval((j + 0.5) / 5.0);
    EXPECT_EQ(c.sum(), 1.0);
    EXPECT_EQ(c[j], 1.0);
  }
  EXPECT_EQ(b.eval(1.0)[4], 1.0);
}

TEST(SplineBasis, PartitionOfUnityOnDenseGrid) {
  for (int q = 1; q <= 4; ++q) {
    for (int K : {3, 7, 15}) {
      const SplineBasis b(q, K);
      for (int i = 0; i < 10000; ++i) {
        const Eigen::VectorXd v = b.eval(i / 9999.0);
        EXPECT_NEAR(v.sum(), 1.0, 1e-12);
        EXPECT_GE(v.minCoeff(), 0.0);
        EXPECT_LE((v.array() != 0.0).count(), q);
      }
    }
  }
}

TEST(SplineBasis, PartitionOfUnityOrderThreeResolutionThree) {
  const SplineBasis b(3, 3);
  ASSERT_EQ(b.J(), 5);
  for (int i = 0; i < 10000; ++i) EXPECT_NEAR(b.eval(i / 9999.0).sum(), 1.0, 1e-12);
}

TEST(SplineBasis, MatchesCoxDeBoorDefinition) {
  for (int q = 1; q <= 5; ++q) {
    for (int K : {1, 4, 9}) {
      const SplineBasis b(q, K);
      const auto& t = b.knot_vector();
      ASSERT_EQ(static_cast<int>(t.size()), b.J() + q);
      for (int i = 0; i <= 400; ++i) {
        const double x = i / 400.0;
        const Eigen::VectorXd v = b.eval(x);
        for (int j = 0; j < b.J(); ++j)
          EXPECT_NEAR(v[j], oracle::cox_de_boor(t, j, q, x), 1e-13) << q << " " << K << " " << x;
      }
    }
  }
}

TEST(SplineBasis, LocalSupport) {
  const SplineBasis b(4, 7);
  const Eigen::VectorXd v = b.eval(0.5);
  EXPECT_LE((v.array() != 0.0).count(), 4);
  // B_j vanishes outside [t_j, t_{j+q}], an interval of length at most q/K.
  const auto& t = b.knot_vector();
  for (int j = 0; j < b.J(); ++j) {
    EXPECT_LE(t[j + 4] - t[j], 4.0 / 7.0 + 1e-15);
    for (int i = 0; i <= 700; ++i) {
      const double x = i / 700.0;
      if (x < t[j] || x > t[j + 4]) EXPECT_EQ(b.eval(x)[j], 0.0);
    }
  }
}

TEST(SplineBasis, OutOfRangeRejected) {
  const SplineBasis b(2, 3);
  EXPECT_THROW(b.eval(-0.01), InvalidInput);
  EXPECT_THROW(b.eval(1.0001), InvalidInput);
  EXPECT_THROW(b.eval(std::nan("")), InvalidInput);
}

TEST(SplineBasis, SupFitRecoversSplineExactly) {
  Rng rng(3);
  for (int J : {5, 10, 20}) {
    const SplineBasis b = basis_for_dimension(4, J);
    Eigen::VectorXd theta(J);
    for (int j = 0; j < J; ++j) theta[j] = rng.uniform(-2.0, 2.0);
    const SupFit fit = fit_supnorm(b, [&](double x) { return b.combine(theta, x); });
    EXPECT_LT(fit.sup_error, 1e-10);
    EXPECT_LT((fit.theta - theta).cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(SplineBasis, SupFitRejectsCoarseGrid) {
  const SplineBasis b = basis_for_dimension(4, 10);
  SupFitOptions opt;
  opt.grid_size = 9;
  EXPECT_THROW(fit_supnorm(b, [](double x) { return x; }, opt), InvalidInput);
}

TEST(SplineBasis, SupFitImprovesOnLeastSquares) {
  const SplineBasis b = basis_for_dimension(4, 10);
  auto f = [](double x) { return std::cos(2.0 * std::numbers::pi * x); };
  SupFitOptions ls;
  ls.max_iter = 1;
  const double first = fit_supnorm(b, f, ls).sup_error;
  const double full = fit_supnorm(b, f).sup_error;
  EXPECT_LT(full, first);
}

TEST(SplineBasis, CosineFitErrorDecaysAtOrderFourInResolution) {
  // With J = q + K - 1 the error scales like K^-4; regressed on log K.
  std::vector<double> Ks, errs;
  for (int J : {6, 10, 18, 34}) {
    const SplineBasis b = basis_for_dimension(4, J);
    const SupFit fit =
        fit_supnorm(b, [](double x) { return std::cos(2.0 * std::numbers::pi * x); });
    Ks.push_back(b.K());
    errs.push_back(fit.sup_error);
  }
  EXPECT_NEAR(oracle::loglog_slope(Ks, errs), -4.0, 0.5);
}

TEST(SplineBasis, HoelderFitErrorDecaysAtSmoothnessRate) {
  const TruthSpec t = hoelder_truth(1.5, 3);
  std::vector<double> Js, errs;
  for (int J : {6, 10, 18, 34}) {
    const SupFit fit =
        fit_supnorm(basis_for_dimension(4, J), [&](double x) { return t.truth.log_pdf(x); });
    Js.push_back(J);
    errs.push_back(fit.sup_error);
  }
  EXPECT_NEAR(oracle::loglog_slope(Js, errs), -1.5, 0.4);
}

TEST(SplineBasis, CenteredExamples) {
  Eigen::VectorXd a(3), b(3);
  a << 1, 1, 1;
  b << 2, 0, 1;
  EXPECT_EQ(centered(a), Eigen::VectorXd::Zero(3));
  Eigen::VectorXd e(3);
  e << 1, -1, 0;
  EXPECT_TRUE(centered(b).isApprox(e, 1e-15));
  Rng rng(4);
  Eigen::VectorXd r(17);
  for (int j = 0; j < 17; ++j) r[j] = rng.uniform(-5, 5);
  EXPECT_NEAR(centered(r).sum(), 0.0, 1e-12);
}

TEST(SplineBasis, SupNormEquivalence) {
  const Calibration& cal = frozen_calibration();
  Rng rng(9);
  for (int J : {5, 10, 20}) {
    const SplineBasis b = basis_for_dimension(4, J);
    double worst = 0.0;
    for (int d = 0; d < 1000; ++d) {
      Eigen::VectorXd t(J);
      for (int j = 0; j < J; ++j) t[j] = rng.normal();
      double sup_f = 0.0;
      for (int i = 0; i <= 64 * b.K(); ++i)
        sup_f = std::max(sup_f, std::abs(b.combine(t, static_cast<double>(i) / (64 * b.K()))));
      EXPECT_LE(sup_f, t.cwiseAbs().maxCoeff() * (1.0 + 1e-15));
      worst = std::max(worst, t.cwiseAbs().maxCoeff() / sup_f);
    }
    EXPECT_LE(worst, cal.c_inf) << "J=" << J;
  }
}
