#include <cmath>
#include <numbers>
#include <vector>

#include <gtest/gtest.h>

#include "logspline/error.hpp"
#include "logspline/logspline_model.hpp"
#include "logspline/quadrature.hpp"
#include "logspline/rng.hpp"
#include "support/oracles.hpp"

using namespace logspline;

TEST(Quadrature, WeightsSumToOneAndNodesInsideSegments) {
  for (int K : {1, 3, 7, 31}) {
    const QuadratureRule r = make_rule(uniform_knots(K), 8);
    double s = 0.0;
    for (double w : r.weights()) {
      EXPECT_GT(w, 0.0);
      s += w;
    }
    EXPECT_NEAR(s, 1.0, 1e-12);
    for (std::size_t i = 0; i < r.size(); ++i) {
      const std::size_t seg = i / 8;
      EXPECT_GT(r.nodes()[i], r.segments()[seg]);
      EXPECT_LT(r.nodes()[i], r.segments()[seg + 1]);
    }
  }
}

TEST(Quadrature, ExactForQuadratic) {
  const std::vector<double> k{0.0, 1.0};
  const QuadratureRule r = make_rule(k, 5);
  EXPECT_NEAR(integrate(r, [](double x) { return x * x; }), 1.0 / 3.0, 1e-14);
}

TEST(Quadrature, ConstantsIntegrateExactly) {
  const std::vector<double> k{0.0, 0.5, 1.0};
  const QuadratureRule r = make_rule(k, 5);
  EXPECT_NEAR(integrate(r, [](double) { return 1.0; }), 1.0, 1e-15);
  EXPECT_EQ(integrate(r, [](double) { return 0.0; }), 0.0);
  EXPECT_NEAR(integrate(r, [](double) { return -3.25; }), -3.25, 1e-14);
}

TEST(Quadrature, SmoothPeriodicIntegrandMatchesRiemannOracle) {
  const QuadratureRule r = make_rule(uniform_knots(7), 8);
  auto f = [](double x) { return std::exp(std::sin(2.0 * std::numbers::pi * x)); };
  EXPECT_NEAR(integrate(r, f), oracle::riemann(f), 1e-10);
}

TEST(Quadrature, LogSplineIntegrandMatchesRiemannOracle) {
  Rng rng(11);
  const SplineBasis basis = basis_for_dimension(4, 10);
  Eigen::VectorXd theta(10);
  for (int j = 0; j < 10; ++j) theta[j] = rng.uniform(-2.0, 2.0);
  auto f = [&](double x) { return std::exp(basis.combine(theta, x)); };
  const QuadratureRule r = make_rule(basis.breakpoints(), 8);
  const double ref = oracle::riemann(f);
  EXPECT_NEAR(integrate(r, f) / ref, 1.0, 1e-9);
}

TEST(Quadrature, PolynomialExactnessOnRandomPolynomials) {
  Rng rng(5);
  const std::vector<double> knots{0.0, 0.2, 0.35, 0.8, 1.0};
  for (int order : {2, 4, 8}) {
    const QuadratureRule r = make_rule(knots, order);
    const int deg = 2 * order - 1;
    for (int trial = 0; trial < 20; ++trial) {
      // Piecewise polynomial with a different random polynomial per segment.
      std::vector<std::vector<double>> coef(knots.size() - 1, std::vector<double>(deg + 1));
      double exact = 0.0;
      for (std::size_t s = 0; s + 1 < knots.size(); ++s) {
        for (int d = 0; d <= deg; ++d) {
          coef[s][d] = rng.uniform(-1.0, 1.0);
          exact += coef[s][d] *
                   (std::pow(knots[s + 1], d + 1) - std::pow(knots[s], d + 1)) / (d + 1);
        }
      }
      auto f = [&](double x) {
        std::size_t s = 0;
        while (s + 2 < knots.size() && x >= knots[s + 1]) ++s;
        double v = 0.0;
        for (int d = deg; d >= 0; --d) v = v * x + coef[s][d];
        return v;
      };
      EXPECT_NEAR(integrate(r, f), exact, 1e-13);
    }
  }
}

TEST(Quadrature, Linearity) {
  Rng rng(6);
  const QuadratureRule r = make_rule(uniform_knots(5), 8);
  for (int t = 0; t < 50; ++t) {
    const double a = rng.uniform(-3, 3), b = rng.uniform(-3, 3);
    const double c1 = rng.uniform(1, 10), c2 = rng.uniform(1, 10);
    auto f = [&](double x) { return std::sin(c1 * x); };
    auto g = [&](double x) { return std::exp(-c2 * x); };
    const double lhs = integrate(r, [&](double x) { return a * f(x) + b * g(x); });
    EXPECT_NEAR(lhs, a * integrate(r, f) + b * integrate(r, g), 1e-12);
  }
}

TEST(Quadrature, RejectsBadKnots) {
  const std::vector<double> bad{0.0, 0.6, 0.4, 1.0};
  EXPECT_THROW(make_rule(bad, 4), InvalidInput);
  const std::vector<double> dup{0.0, 0.5, 0.5, 1.0};
  EXPECT_THROW(make_rule(dup, 4), InvalidInput);
  const std::vector<double> shifted{0.1, 1.0};
  EXPECT_THROW(make_rule(shifted, 4), InvalidInput);
  const std::vector<double> ok{0.0, 1.0};
  EXPECT_THROW(make_rule(ok, 1), InvalidInput);
}

TEST(Quadrature, NonFiniteIntegrandNamesNode) {
  const QuadratureRule r = make_rule(uniform_knots(2), 4);
  try {
    integrate(r, [](double x) { return x > 0.5 ? std::log(0.0) : 1.0; });
    FAIL() << "expected NumericDomain";
  } catch (const NumericDomain& e) {
    EXPECT_NE(std::string(e.what()).find("x=0.5"), std::string::npos) << e.what();
  }
}

TEST(InverseCdf, UniformIsIdentity) {
  const QuadratureRule r = make_rule(uniform_knots(1), 8);
  const InverseCdfTable t = build_inverse_cdf([](double) { return 1.0; }, r, 4096);
  for (int i = 0; i <= 1000; ++i) {
    const double u = i / 1000.0;
    EXPECT_NEAR(t.quantile(u), u, 1e-10);
  }
  EXPECT_EQ(t.cdf().front(), 0.0);
  EXPECT_EQ(t.cdf().back(), 1.0);
}

TEST(InverseCdf, LinearDensityGivesSquareRoot) {
  const QuadratureRule r = make_rule(uniform_knots(1), 8);
  const InverseCdfTable t = build_inverse_cdf([](double x) { return 2.0 * x; }, r, 4096);
  for (int i = 0; i <= 2000; ++i) {
    const double u = i / 2000.0;
    EXPECT_NEAR(t.quantile(u), std::sqrt(u), 2e-4) << u;
  }
}

TEST(InverseCdf, RoundTripWithinResolution) {
  const QuadratureRule r = make_rule(uniform_knots(4), 8);
  auto dens = [](double x) { return 0.5 + x; };
  const InverseCdfTable t = build_inverse_cdf(dens, r, 4096);
  for (int i = 0; i <= 500; ++i) {
    const double u = i / 500.0;
    EXPECT_NEAR(t.cdf_at(t.quantile(u)), u, 1e-12);
    const double x = t.quantile(u);
    EXPECT_NEAR(0.5 * x + 0.5 * x * x, u, 1e-7);
  }
}

TEST(InverseCdf, NegativeDensityRejected) {
  const QuadratureRule r = make_rule(uniform_knots(1), 8);
  EXPECT_THROW(build_inverse_cdf([](double x) { return x < 0.5 ? -1.0 : 3.0; }, r, 64),
               InvalidInput);
}

TEST(InverseCdf, LogSplineSamplesPassKolmogorovSmirnov) {
  Rng rng(7);
  const FamilyPtr fam = make_family(4, 10);
  Eigen::VectorXd theta(10);
  for (int j = 0; j < 10; ++j) theta[j] = rng.uniform(-1.5, 1.5);
  const LogSplineModel m(fam, theta);
  auto dens = [&](double x) { return m.density_at(x); };
  const InverseCdfTable t = build_inverse_cdf(dens, fam->rule(), 4096);
  // Reference CDF from an independent fine quadrature on 2^14 cells.
  const int cells = 1 << 14;
  std::vector<double> ref(cells + 1, 0.0);
  for (int c = 0; c < cells; ++c) {
    const double a = static_cast<double>(c) / cells, b = static_cast<double>(c + 1) / cells;
    ref[c + 1] = ref[c] + (b - a) / 6.0 * (dens(a) + 4.0 * dens(0.5 * (a + b)) + dens(b));
  }
  auto cdf = [&](double x) {
    const double s = x * cells;
    const int c = std::min(static_cast<int>(s), cells - 1);
    return ref[c] + (s - c) * (ref[c + 1] - ref[c]);
  };
  std::vector<double> xs(10000);
  Rng draw(8);
  for (auto& x : xs) x = t.quantile(draw.uniform());
  EXPECT_LT(oracle::ks_statistic(xs, cdf), oracle::ks_critical_01(xs.size()));
}
