#include "logspline/entropy_testkit.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include <fmt/format.h>

#include "logspline/calibration.hpp"
#include "logspline/error.hpp"

namespace logspline {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
const double kSqrt2 = std::numbers::sqrt2;

double log_sum(const std::vector<double>& v) {
  return v.empty() ? -kInf : ordered_log_sum_exp(v);
}

McEstimate proportion(std::size_t hits, std::size_t reps) {
  const double p = static_cast<double>(hits) / static_cast<double>(reps);
  return {p, std::sqrt(p * (1.0 - p) / static_cast<double>(reps))};
}

}  // namespace

double log_ball_volume(int J) {
  if (J < 1) throw InvalidInput(fmt::format("log_ball_volume: J = {} < 1", J));
  const double h = 0.5 * J;
  return h * std::log(std::numbers::pi) - std::lgamma(h + 1.0);
}

double ball_volume(int J) { return std::exp(log_ball_volume(J)); }

CoverCount covering_number_box(int J, double M, double eps, CoverNorm norm) {
  if (J < 1 || !(M > 0.0) || !(eps > 0.0))
    throw InvalidInput(fmt::format("covering_number_box: J={} M={} eps={}", J, M, eps));
  const double half = norm == CoverNorm::kSup ? eps : eps / std::sqrt(static_cast<double>(J));
  const double per_axis = std::max(1.0, std::ceil(M / half));
  CoverCount out;
  out.log_count = J * std::log(per_axis);
  if (out.log_count >= 64.0 * std::numbers::ln2) {
    out.overflow = true;
    return out;
  }
  const auto k = static_cast<std::uint64_t>(per_axis);
  out.count = 1;
  for (int j = 0; j < J; ++j) out.count *= k;
  return out;
}

EntropyReport entropy_audit(double alpha, double n, int q, double M,
                            const EntropyAuditOptions& opt) {
  if (!(alpha > 0.0) || !(n > 1.0) || !(M > 0.0) || opt.grid < 1)
    throw InvalidInput("entropy_audit: invalid arguments");
  EntropyReport rep;
  rep.alpha = alpha;
  rep.n = n;
  rep.J = dimension_schedule(alpha, n, q);
  rep.eps_n = rate_schedule(alpha, n, opt.log_factor);
  if (opt.F_lower && opt.F_upper) {
    rep.F_lower = *opt.F_lower;
    rep.F_upper = *opt.F_upper;
  } else {
    const Calibration& cal = frozen_calibration();
    rep.F_lower = std::exp(-cal.c4_upper * M);
    rep.F_upper = std::exp(cal.c4_upper * M);
  }
  if (!(rep.F_lower > 0.0 && rep.F_upper >= rep.F_lower))
    throw InvalidInput("entropy_audit: need 0 < F_lower <= F_upper");

  const double J = rep.J;
  const double ball = (J - 1.0) * std::log1p(24.0 * rep.F_upper / rep.F_lower);
  rep.E_max = 0.0;
  rep.E_min = kInf;
  for (int k = 0; k < opt.grid; ++k) {
    EntropyRow row;
    row.eps = std::min(rep.eps_n * std::exp2(k / 3.0), kSqrt2);
    const double box = J * std::log(std::max(1.0, std::ceil(3.0 * M * rep.F_upper / row.eps)));
    row.ball_bound = 4.0 * row.eps < rep.F_lower && ball < box;
    row.log_cover = row.ball_bound ? ball : box;
    row.implied_E = row.log_cover / J;
    rep.E_max = std::max(rep.E_max, row.implied_E);
    rep.E_min = std::min(rep.E_min, row.implied_E);
    rep.rows.push_back(row);
  }
  rep.finite = std::isfinite(rep.E_max);
  rep.stable = rep.finite && rep.E_max <= 3.0 * rep.E_min;
  return rep;
}

GateResult theorem_gate(const ConditionConstants& cc) {
  GateResult g;
  g.h_at_least_one = cc.H >= 1.0;
  g.i_above_two = cc.I > 2.0;
  g.b_above_sqrt_h = cc.B > std::sqrt(cc.H);
  const double B2 = cc.B * cc.B;
  g.kb2_dominates = cc.K * B2 > std::max(cc.H * cc.E_lower, cc.E) + 1.0;
  g.testing_margin = B2 * cc.I * cc.I * (cc.K - 2.0 * cc.L) > 3.0;
  g.all = g.h_at_least_one && g.i_above_two && g.b_above_sqrt_h && g.kb2_dominates &&
          g.testing_margin;
  return g;
}

std::vector<WeightRatioIdentity> weight_ratio_identity(const WeightScheme& scheme,
                                                       std::span<const double> alphas,
                                                       std::size_t beta, double n, double F,
                                                       int q) {
  if (scheme.kind != WeightKind::kExponential)
    throw InvalidInput("weight_ratio_identity: needs exponential weights");
  if (beta >= alphas.size()) throw InvalidInput("weight_ratio_identity: beta out of range");
  const ModelWeights w = model_weights(scheme, alphas, n, false, q);
  auto J = [&](std::size_t a) {
    const double e = rate_schedule(alphas[a], n, false);
    return n * e * e;
  };
  auto log_mu = [&](std::size_t a) { return scheme.mu.empty() ? 0.0 : std::log(scheme.mu[a]); };
  std::vector<WeightRatioIdentity> out;
  for (std::size_t a = 0; a < alphas.size(); ++a) {
    WeightRatioIdentity r;
    r.alpha = alphas[a];
    r.lhs = w.log_weights[a] - w.log_weights[beta] + F * J(beta);
    r.rhs = log_mu(a) - log_mu(beta) - scheme.C * J(a) + (F + scheme.C) * J(beta);
    out.push_back(r);
  }
  return out;
}

PriorMassAudit prior_mass_audit(const HierarchicalPrior& hp, const TrueDensity& p0,
                                std::size_t beta, const ConditionConstants& cc,
                                std::span<const double> i_grid,
                                const PriorMassAuditOptions& opt) {
  if (beta >= hp.size()) throw InvalidInput("prior_mass_audit: beta out of range");
  if (!cc.mu.empty() && cc.mu.size() != hp.size())
    throw InvalidInput("prior_mass_audit: mu must have one entry per index");
  for (double i : i_grid)
    if (!(i > 0.0)) throw InvalidInput("prior_mass_audit: i_grid entries must be positive");
  if (!(cc.I * cc.B > 0.0)) throw InvalidInput("prior_mass_audit: need I B > 0");

  PriorMassAudit rep;
  rep.beta = beta;
  rep.n = hp.n();
  const PriorComponent& cb = hp[beta];
  rep.eps_beta = cb.eps;
  const double ne2b = rep.n * cb.eps * cb.eps;

  auto ball_mass = [&](const PriorComponent& c, const TruthGeometry& geo, BallKind kind,
                       double radius, std::uint64_t a, std::uint64_t b) {
    if (kind == BallKind::kHellinger && radius >= kSqrt2)
      return RegionMass{1.0, 0.0, 0.0, 1.0, true, 1, 1};
    Rng rng(derive_seed(opt.seed, kind == BallKind::kHellinger ? "audit.ball" : "audit.kl", a, b));
    return prior_ball_mass(c.prior, geo, kind, radius, rng, opt.mass);
  };
  // Conservative log mass: the upper confidence bound when sampling hit nothing.
  auto log_of = [](const RegionMass& m) {
    if (m.hits > 0 || m.exact) return m.log_mass;
    return std::log(m.upper);
  };

  std::vector<TruthGeometry> geo;
  geo.reserve(hp.size());
  for (const auto& c : hp.components()) geo.push_back(truth_geometry(c.family, p0, c.prior.M()));

  rep.kl_mass_beta = ball_mass(cb, geo[beta], BallKind::kKullbackLeibler,
                               opt.kl_factor * cb.eps, beta, 0);
  const double log_den = rep.kl_mass_beta.mass > 0.0 ? rep.kl_mass_beta.log_mass : -kInf;

  std::vector<double> terms_small, terms_weighted, weights_lt;
  rep.balls_ok = true;
  rep.weights_ok = true;
  for (std::size_t a = 0; a < hp.size(); ++a) {
    const PriorComponent& c = hp[a];
    const bool smaller = c.eps * c.eps > cc.H * cb.eps * cb.eps;
    const double lwr = c.log_weight - cb.log_weight;
    const double log_mu = cc.mu.empty() ? 0.0 : std::log(cc.mu[a]);
    const double e = smaller ? c.eps : cb.eps;
    for (std::size_t k = 0; k < i_grid.size(); ++k) {
      PriorMassRow row;
      row.alpha = c.alpha;
      row.J = c.J;
      row.smaller = smaller;
      row.i = i_grid[k];
      row.radius = row.i * e;
      const RegionMass m = ball_mass(c, geo[a], BallKind::kHellinger, row.radius, a, k + 1);
      row.exact = m.exact;
      row.log_mass = log_of(m);
      row.log_weight_ratio = lwr;
      row.log_lhs = lwr + row.log_mass - log_den;
      row.log_rhs = log_mu + cc.L * row.i * row.i * rep.n * e * e;
      row.satisfied = row.log_lhs <= row.log_rhs;
      rep.balls_ok = rep.balls_ok && row.satisfied;
      rep.rows.push_back(row);
    }
    rep.log_weight_ratios.push_back(lwr);
    rep.log_weight_bounds.push_back(log_mu + rep.n * std::max(c.eps * c.eps, cb.eps * cb.eps));
    rep.weights_ok = rep.weights_ok && rep.log_weight_ratios.back() <= rep.log_weight_bounds.back();
    if (smaller) {
      rep.smaller_empty = false;
      const RegionMass m =
          ball_mass(c, geo[a], BallKind::kHellinger, cc.I * cc.B * c.eps, a, 0);
      terms_small.push_back(lwr + log_of(m) - log_den);
      terms_weighted.push_back(lwr + log_of(m));
      weights_lt.push_back(lwr);
    }
  }

  rep.log_sum_small = log_sum(terms_small);
  rep.log_target_small = -2.0 * ne2b;
  rep.log_ratio_small = rep.log_sum_small - rep.log_target_small;
  rep.log_crude_small = cb.prior.discrete()
                         ? log_sum(weights_lt) + cb.prior.log_atom_count() - rep.log_target_small
                         : std::numeric_limits<double>::quiet_NaN();

  rep.log_kl_mass = log_den;
  rep.log_kl_target = -cc.F * ne2b;
  rep.kl_mass_ok = rep.log_kl_mass >= rep.log_kl_target;

  rep.log_sum_weighted = log_sum(terms_weighted);
  rep.log_target_weighted = -(cc.F + 2.0) * ne2b;
  rep.log_ratio_weighted = rep.log_sum_weighted - rep.log_target_weighted;
  return rep;
}

int minimax_test_singleton(const Density& p0, const Density& q, double a, double b,
                           std::span<const double> data) {
  if (!(a > 0.0 && b > 0.0))
    throw InvalidInput(fmt::format("minimax_test_singleton: weights ({}, {})", a, b));
  const double thr = std::log(a) - std::log(b);
  if (std::isnan(thr)) throw InvalidInput("minimax_test_singleton: weights both infinite");
  double s = 0.0;
  for (double x : data) {
    const double r = q.log_pdf(x) - p0.log_pdf(x);
    if (!std::isfinite(r))
      throw NumericDomain(fmt::format("minimax_test_singleton: log-ratio {} at x = {}", r, x));
    s += r;
  }
  return s > thr ? 1 : 0;
}

TestFunction::TestFunction(Density p0, std::vector<Density> centers, double a, double b,
                           double eps)
    : p0_(std::move(p0)), centers_(std::move(centers)), eps_(eps) {
  if (centers_.empty()) throw InvalidInput("TestFunction: empty net");
  if (!(a > 0.0 && b > 0.0 && std::isfinite(a) && std::isfinite(b)))
    throw InvalidInput(fmt::format("TestFunction: weights ({}, {})", a, b));
  if (!(eps > 0.0)) throw InvalidInput("TestFunction: eps must be positive");
  for (std::size_t j = 0; j < centers_.size(); ++j) {
    const double h = hellinger(p0_, centers_[j]);
    if (h < 3.0 * eps_) {
      const std::string name = centers_[j].name.empty() ? "" : " (" + centers_[j].name + ")";
      throw InvalidInput(fmt::format("TestFunction: center {}{} at distance {} < 3 eps = {}", j,
                                     name, h, 3.0 * eps_));
    }
    distances_.push_back(h);
    log_thresholds_.push_back(std::log(a / b));
  }
}

double TestFunction::statistic(std::size_t j, std::span<const double> data) const {
  const Density& q = centers_.at(j);
  double s = 0.0;
  for (double x : data) {
    const double r = q.log_pdf(x) - p0_.log_pdf(x);
    if (!std::isfinite(r))
      throw NumericDomain(fmt::format("TestFunction: log-ratio {} at x = {}", r, x));
    s += r;
  }
  return s;
}

int TestFunction::decide(std::span<const double> data) const {
  for (std::size_t j = 0; j < centers_.size(); ++j)
    if (statistic(j, data) > log_thresholds_[j]) return 1;
  return 0;
}

int minimax_test_ball(const TestFunction& test, std::span<const double> data) {
  return test.decide(data);
}

SingletonErrors singleton_test_errors(const TrueDensity& p0, const TrueDensity& q, double a,
                                      double b, std::size_t n, std::size_t reps,
                                      std::uint64_t seed) {
  if (reps == 0) throw InvalidInput("singleton_test_errors: reps must be positive");
  std::size_t rej0 = 0, acc1 = 0;
  for (std::size_t r = 0; r < reps; ++r) {
    Rng r0(derive_seed(seed, "test.p0", r)), r1(derive_seed(seed, "test.q", r));
    rej0 += minimax_test_singleton(p0.density(), q.density(), a, b, p0.sample(r0, n));
    acc1 += 1 - minimax_test_singleton(p0.density(), q.density(), a, b, q.sample(r1, n));
  }
  SingletonErrors out;
  out.type1 = proportion(rej0, reps);
  out.type2 = proportion(acc1, reps);
  out.weighted = {a * out.type1.value + b * out.type2.value,
                  std::hypot(a * out.type1.std_error, b * out.type2.std_error)};
  out.hellinger = hellinger(p0.density(), q.density());
  out.bound = std::sqrt(a * b) * std::exp(-0.5 * static_cast<double>(n) * out.hellinger *
                                          out.hellinger);
  return out;
}

NetErrors net_test_errors(const TrueDensity& p0, const std::vector<TrueDensity>& centers,
                          double a, double b, double eps, std::size_t n, std::size_t reps,
                          std::uint64_t seed) {
  if (reps == 0) throw InvalidInput("net_test_errors: reps must be positive");
  std::vector<Density> dens;
  for (const auto& c : centers) dens.push_back(c.density());
  const TestFunction test(p0.density(), dens, a, b, eps);
  NetErrors out;
  std::size_t rej = 0;
  for (std::size_t r = 0; r < reps; ++r) {
    Rng rng(derive_seed(seed, "net.p0", r));
    rej += test.decide(p0.sample(rng, n));
  }
  out.type1 = proportion(rej, reps);
  for (std::size_t j = 0; j < centers.size(); ++j) {
    std::size_t acc = 0;
    for (std::size_t r = 0; r < reps; ++r) {
      Rng rng(derive_seed(seed, "net.center", j, r));
      acc += 1 - test.decide(centers[j].sample(rng, n));
    }
    out.type2.push_back(proportion(acc, reps));
  }
  const double tail = std::exp(-static_cast<double>(n) * eps * eps);
  out.bound1 = std::sqrt(b / a) * static_cast<double>(centers.size()) * tail;
  out.bound2 = std::sqrt(a / b) * tail;
  return out;
}

}  // namespace logspline
