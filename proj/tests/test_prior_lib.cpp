#include <cmath>
#include <numeric>
#include <set>
#include <vector>

#include <gtest/gtest.h>

#include "logspline/error.hpp"
#include "logspline/prior_lib.hpp"
#include "logspline/rng.hpp"

using namespace logspline;

TEST(Schedules, Dimension) {
  EXPECT_EQ(dimension_schedule(1.0, 1000), 10);
  EXPECT_EQ(dimension_schedule(2.0, 100000), 10);
  EXPECT_EQ(dimension_schedule(0.5, 16), 4);
  EXPECT_EQ(dimension_schedule(1.0, 8, 4), 4);
  EXPECT_THROW(dimension_schedule(0.0, 100), InvalidInput);
  EXPECT_THROW(dimension_schedule(-1.0, 100), InvalidInput);
}

TEST(Schedules, Rate) {
  EXPECT_NEAR(rate_schedule(1.0, 10000, false), 0.046416, 1e-6);
  EXPECT_NEAR(rate_schedule(2.0, 10000, false), 0.025119, 1e-6);
  EXPECT_NEAR(rate_schedule(1.0, std::exp(2.0), true), std::exp(-2.0 / 3.0) * std::sqrt(2.0),
              1e-14);
}

TEST(FlatPrior, SegmentForJ2) {
  const auto p = CoefficientPrior::flat(2, 1.5);
  Rng rng(3);
  double sum = 0.0, sum2 = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const Eigen::VectorXd th = p.sample(rng);
    ASSERT_NEAR(th.sum(), 0.0, 1e-15);
    ASSERT_LE(th.cwiseAbs().maxCoeff(), 1.5);
    sum += th[0];
    sum2 += th[0] * th[0];
  }
  const double mean = sum / n;
  const double sd = std::sqrt(sum2 / n - mean * mean);
  EXPECT_LT(std::abs(mean), 3.0 * sd / std::sqrt(n));
  EXPECT_NEAR(p.log_volume(), std::log(3.0), 1e-14);
  EXPECT_NEAR(p.log_density(Eigen::Vector2d(0.2, -0.2)), -std::log(3.0), 1e-14);
  EXPECT_EQ(p.log_density(Eigen::Vector2d(0.2, -0.1)), -INFINITY);
  EXPECT_EQ(p.log_density(Eigen::Vector2d(1.6, -1.6)), -INFINITY);
}

TEST(FlatPrior, MeanZeroInHigherDimension) {
  const auto p = CoefficientPrior::flat(6, 2.0);
  Rng rng(4);
  const int n = 20000;
  Eigen::VectorXd s = Eigen::VectorXd::Zero(6), s2 = Eigen::VectorXd::Zero(6);
  for (int i = 0; i < n; ++i) {
    const Eigen::VectorXd th = p.sample(rng);
    ASSERT_TRUE(p.in_box(th));
    s += th;
    s2 += th.cwiseProduct(th);
  }
  for (int j = 0; j < 6; ++j) {
    const double mean = s[j] / n;
    const double se = std::sqrt(s2[j] / n - mean * mean) / std::sqrt(n);
    EXPECT_LT(std::abs(mean), 3.0 * se) << "coordinate " << j;
  }
}

TEST(FlatPrior, SliceVolumeMatchesDirectIntegration) {
  // J=3, M=1: the hexagon |x|,|y|,|x+y| <= 1 has area 3.
  EXPECT_NEAR(std::exp(slice_log_volume(3, 1.0)), 3.0, 1e-13);
  // J=4: Monte Carlo over the cube [-1,1]^3.
  Rng rng(5);
  const int n = 400000;
  int hit = 0;
  for (int i = 0; i < n; ++i) {
    const double a = rng.uniform(-1, 1), b = rng.uniform(-1, 1), c = rng.uniform(-1, 1);
    hit += std::abs(a + b + c) <= 1.0;
  }
  const double p = static_cast<double>(hit) / n;
  const double se = 8.0 * std::sqrt(p * (1 - p) / n);
  EXPECT_NEAR(std::exp(slice_log_volume(4, 1.0)), 8.0 * p, 3.0 * se);
  EXPECT_NEAR(slice_log_volume(4, 2.5) - slice_log_volume(4, 1.0), 3.0 * std::log(2.5), 1e-12);
}

TEST(FlatPrior, BallFractionMatchesRejectionOracle) {
  // J=3: fraction of draws within r of theta0, against an independent rejection sampler
  // on the cube that keeps points whose last coordinate lands in the box.
  const double M = 1.0, r = 0.6;
  const Eigen::Vector3d theta0(0.3, -0.5, 0.2);
  const auto p = CoefficientPrior::flat(3, M);
  Rng rng(6), orng(7);
  const int n = 100000;
  int a = 0, b = 0, kept = 0;
  for (int i = 0; i < n; ++i) a += (p.sample(rng) - theta0).norm() <= r;
  while (kept < n) {
    const double x = orng.uniform(-M, M), y = orng.uniform(-M, M);
    if (std::abs(x + y) > M) continue;
    ++kept;
    b += (Eigen::Vector3d(x, y, -x - y) - theta0).norm() <= r;
  }
  const double pa = static_cast<double>(a) / n, pb = static_cast<double>(b) / n;
  const double se = std::sqrt(pa * (1 - pa) / n + pb * (1 - pb) / n);
  EXPECT_GT(pa, 0.05);
  EXPECT_NEAR(pa, pb, 3.0 * se);
}

TEST(FlatPrior, TiltBounds) {
  CoefficientPrior::Tilt tilt{[](const Eigen::VectorXd& t) { return 0.5 * std::tanh(t[0]); },
                              -0.5, 0.5};
  const auto p = CoefficientPrior::flat(3, 1.0, tilt);
  const auto [lo, hi] = p.density_bounds();
  EXPECT_LT(lo, hi);
  Rng rng(8);
  for (int i = 0; i < 200; ++i) {
    const Eigen::VectorXd th = p.sample(rng);
    const double ld = p.log_density(th) / 3.0;
    EXPECT_GE(ld, lo - 1e-12);
    EXPECT_LE(ld, hi + 1e-12);
  }
}

TEST(NetPrior, SingleAtomWhenEpsLarge) {
  const auto p = CoefficientPrior::net(5, 1.0, 2.0);
  const auto atoms = p.atoms();
  ASSERT_EQ(atoms.size(), 1u);
  EXPECT_EQ(atoms[0].cwiseAbs().maxCoeff(), 0.0);
  EXPECT_NEAR(p.log_atom_count(), 0.0, 1e-15);
}

TEST(NetPrior, FiveAtomsOnTheSegment) {
  const auto p = CoefficientPrior::lattice(2, 1.0, 0.5);
  const auto atoms = p.atoms();
  ASSERT_EQ(atoms.size(), 5u);
  const double expect[] = {-1.0, -0.5, 0.0, 0.5, 1.0};
  for (int i = 0; i < 5; ++i) {
    EXPECT_DOUBLE_EQ(atoms[i][0], expect[i]);
    EXPECT_DOUBLE_EQ(atoms[i][1], -expect[i]);
  }
  EXPECT_NEAR(p.log_density(atoms[2]), -std::log(5.0), 1e-15);
}

TEST(NetPrior, AtomsDistinctSeparatedAndInBox) {
  const double M = 1.0, s = 0.4;
  const auto p = CoefficientPrior::lattice(4, M, s);
  const auto atoms = p.atoms();
  // Brute-force count of {-2..2}^4 with zero sum.
  int count = 0;
  for (int a = -2; a <= 2; ++a)
    for (int b = -2; b <= 2; ++b)
      for (int c = -2; c <= 2; ++c)
        for (int d = -2; d <= 2; ++d) count += a + b + c + d == 0;
  ASSERT_EQ(static_cast<int>(atoms.size()), count);
  EXPECT_NEAR(std::exp(p.log_atom_count()), count, 1e-9 * count);
  EXPECT_LE(p.log_atom_count(), 4 * std::log(2.0 * M / s + 1.0));
  for (std::size_t i = 0; i < atoms.size(); ++i) {
    EXPECT_TRUE(p.in_box(atoms[i]));
    EXPECT_TRUE(p.is_atom(atoms[i]));
    for (std::size_t j = 0; j < i; ++j)
      ASSERT_GE((atoms[i] - atoms[j]).cwiseAbs().maxCoeff(), s / 2.0);
  }
}

TEST(NetPrior, CapRaisesResourceErrorWithCount) {
  const auto p = CoefficientPrior::lattice(6, 1.0, 0.1, 1000);
  try {
    (void)p.atoms();
    FAIL() << "expected ResourceError";
  } catch (const ResourceError& e) {
    EXPECT_NEAR(e.count(), std::exp(p.log_atom_count()), 1e-6 * e.count());
  }
}

TEST(NetPrior, SamplerIsUniformOverAtoms) {
  const auto p = CoefficientPrior::lattice(3, 1.0, 0.5);
  const auto atoms = p.atoms();
  std::vector<int> freq(atoms.size(), 0);
  Rng rng(9);
  const int n = 38000;
  for (int i = 0; i < n; ++i) {
    const Eigen::VectorXd th = p.sample(rng);
    std::size_t k = 0;
    while (k < atoms.size() && (atoms[k] - th).cwiseAbs().maxCoeff() > 1e-12) ++k;
    ASSERT_LT(k, atoms.size());
    ++freq[k];
  }
  const double pr = 1.0 / atoms.size();
  for (int f : freq) EXPECT_NEAR(static_cast<double>(f) / n, pr, 4.0 * std::sqrt(pr / n));
}

TEST(NetPrior, NearestAtomWithinEpsOfRandomTargets) {
  const int J = 4;
  const double M = 1.0, eps = 0.3;
  const auto p = CoefficientPrior::net(J, M, eps);
  const auto atoms = p.atoms();
  Rng rng(10);
  for (int t = 0; t < 100; ++t) {
    Eigen::VectorXd target(J);
    for (int j = 0; j < J; ++j) target[j] = rng.uniform(-0.6, 0.6);
    target.array() -= target.mean();
    const Eigen::VectorXd a = p.nearest_atom(target);
    ASSERT_TRUE(p.is_atom(a));
    // The induced log-densities differ by at most max_j |delta_j| since the basis sums to one.
    const double dist = (a - target).cwiseAbs().maxCoeff();
    EXPECT_LE(dist, eps);
    double best = INFINITY;
    for (const auto& b : atoms) best = std::min(best, (b - target).cwiseAbs().maxCoeff());
    EXPECT_LE(best, dist + 1e-15);
  }
}

TEST(ModelWeights, SingleIndexAndConstant) {
  for (auto kind : {WeightKind::kConstant, WeightKind::kExponential, WeightKind::kDecreasing}) {
    const std::vector<double> one{1.0};
    const auto w = model_weights({kind, {}, 1.0}, one, 500, false);
    ASSERT_EQ(w.weights.size(), 1u);
    EXPECT_DOUBLE_EQ(w.weights[0], 1.0);
  }
  const std::vector<double> a{0.5, 1.0, 2.0};
  const auto w = model_weights({WeightKind::kConstant, {1, 1, 1}, 1.0}, a, 500, false);
  for (double v : w.weights) EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);
}

TEST(ModelWeights, ExponentialMatchesDirectArithmetic) {
  const std::vector<double> a{0.5, 1.0, 2.0};
  const double n = 1000;
  const auto w = model_weights({WeightKind::kExponential, {}, 1.0}, a, n, false);
  std::vector<double> ref(3);
  for (int i = 0; i < 3; ++i) ref[i] = std::exp(-n * std::pow(n, -2 * a[i] / (2 * a[i] + 1)));
  const double tot = std::accumulate(ref.begin(), ref.end(), 0.0);
  double sum = 0.0;
  for (int i = 0; i < 3; ++i) {
    EXPECT_NEAR(w.weights[i], ref[i] / tot, 1e-12);
    EXPECT_GT(w.weights[i], 0.0);
    sum += w.weights[i];
  }
  EXPECT_NEAR(sum, 1.0, 1e-12);
  EXPECT_LE(w.weights[0], w.weights[1]);
  EXPECT_LE(w.weights[1], w.weights[2]);
}

TEST(ModelWeights, DecreasingSchemeAndWarning) {
  const std::vector<double> a{0.5, 1.0, 2.0};
  const auto w = model_weights({WeightKind::kDecreasing, {}, 1.0}, a, 10000, false);
  EXPECT_FALSE(w.warning);
  EXPECT_GE(w.weights[0], w.weights[1]);
  EXPECT_GE(w.weights[1], w.weights[2]);
  // Direct oracle: log w_a = sum_{g < a} J_g log(C eps_g).
  std::vector<double> lw{0.0};
  for (int i = 0; i < 2; ++i)
    lw.push_back(lw.back() +
                 dimension_schedule(a[i], 10000) * std::log(rate_schedule(a[i], 10000, false)));
  const double m = *std::max_element(lw.begin(), lw.end());
  double tot = 0.0;
  for (double v : lw) tot += std::exp(v - m);
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(w.weights[i], std::exp(lw[i] - m) / tot, 1e-12);

  const auto bad = model_weights({WeightKind::kDecreasing, {}, 50.0}, a, 10000, false);
  EXPECT_TRUE(bad.warning);
  EXPECT_FALSE(bad.message.empty());
}

TEST(ModelWeights, InvariantUnderRescalingMu) {
  const std::vector<double> a{0.5, 1.0, 2.0};
  const auto w1 = model_weights({WeightKind::kExponential, {1, 2, 3}, 1.0}, a, 300, true);
  const auto w2 = model_weights({WeightKind::kExponential, {7, 14, 21}, 1.0}, a, 300, true);
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(w1.weights[i], w2.weights[i], 1e-14);
}

TEST(ModelWeights, RejectsBadInput) {
  const std::vector<double> unordered{1.0, 0.5};
  EXPECT_THROW(model_weights({}, unordered, 100, false), InvalidInput);
  const std::vector<double> empty;
  EXPECT_THROW(model_weights({}, empty, 100, false), InvalidInput);
  EXPECT_THROW(parse_weight_kind("geometric"), ConfigError);
  EXPECT_THROW(parse_prior_kind("gaussian"), ConfigError);
}

TEST(Assemble, SingleIndexMatchesComponentPrior) {
  HierarchicalPriorSpec spec;
  spec.alphas = {1.0};
  spec.kind = PriorKind::kFlat;
  const auto hp = assemble(spec, 1000);
  ASSERT_EQ(hp.size(), 1u);
  EXPECT_EQ(hp[0].J, 10);
  Rng a(11), b(11);
  const int n = 1000;
  double s1 = 0.0, s2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const auto [k, th] = hp.sample(a);
    EXPECT_EQ(k, 0u);
    s1 += th.cwiseAbs().maxCoeff();
  }
  const auto ref = CoefficientPrior::flat(10, spec.M);
  Rng c(12);
  for (int i = 0; i < n; ++i) s2 += ref.sample(c).cwiseAbs().maxCoeff();
  EXPECT_NEAR(s1 / n, s2 / n, 0.05);
}

TEST(Assemble, ZeroWeightIndexNeverSampled) {
  HierarchicalPriorSpec spec;
  spec.alphas = {1.0, 2.0};
  spec.scheme = {WeightKind::kConstant, {1.0, 0.0}, 1.0};
  const auto hp = assemble(spec, 200);
  Rng rng(13);
  for (int i = 0; i < 10000; ++i) ASSERT_EQ(hp.sample_index(rng), 0u);
}

TEST(Assemble, IndexFrequenciesMatchWeights) {
  HierarchicalPriorSpec spec;
  spec.scheme = {WeightKind::kExponential, {}, 0.2};
  const auto hp = assemble(spec, 100);
  Rng rng(14);
  const int n = 20000;
  std::vector<int> f(hp.size(), 0);
  for (int i = 0; i < n; ++i) ++f[hp.sample_index(rng)];
  double tot = 0.0;
  for (std::size_t i = 0; i < hp.size(); ++i) {
    const double w = hp[i].weight;
    tot += w;
    EXPECT_NEAR(static_cast<double>(f[i]) / n, w, 3.0 * std::sqrt(w * (1 - w) / n) + 1e-12);
  }
  EXPECT_NEAR(tot, 1.0, 1e-12);
}
