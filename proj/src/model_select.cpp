#include "logspline/model_select.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <thread>

#include <boost/math/tools/roots.hpp>
#include <fmt/format.h>

#include "logspline/error.hpp"

namespace logspline {
namespace {

constexpr int kNullOrder = 20;
constexpr int kWindowSegments = 24;
constexpr int kTailSegments = 8;
constexpr double kWindowSds = 12.0;

void append_segments(double a, double b, int pieces, std::vector<double>& cuts) {
  if (!(b > a)) return;
  for (int i = 1; i <= pieces; ++i) cuts.push_back(a + (b - a) * i / pieces);
}

}  // namespace

double tilted_mean(double phi) {
  if (std::abs(phi) < 1e-3) return 0.5 + phi / 12.0 - phi * phi * phi / 720.0;
  return -1.0 / std::expm1(-phi) - 1.0 / phi;
}

double tilted_variance(double phi) {
  if (std::abs(phi) < 1e-2) {
    const double p2 = phi * phi;
    return 1.0 / 12.0 - p2 / 240.0 + p2 * p2 / 6048.0;
  }
  const double s = std::sinh(0.5 * phi);
  return 1.0 / (phi * phi) - 0.25 / (s * s);
}

ParametricNull::ParametricNull(double phi_lo, double phi_hi) : lo_(phi_lo), hi_(phi_hi) {
  if (!(std::isfinite(lo_) && std::isfinite(hi_) && lo_ < hi_))
    throw InvalidInput(fmt::format("ParametricNull: bad range [{}, {}]", lo_, hi_));
}

double ParametricNull::log_pdf(double phi, double x) const {
  return phi * x - tilted_log_partition(phi);
}

TrueDensity ParametricNull::member(double phi) const {
  if (phi < lo_ || phi > hi_)
    throw InvalidInput(fmt::format("ParametricNull: phi {} outside [{}, {}]", phi, lo_, hi_));
  return tilted_uniform_truth(phi).truth;
}

double ParametricNull::mle(double sum_x, std::size_t n) const {
  if (n == 0) return std::clamp(0.0, lo_, hi_);
  const double m = sum_x / static_cast<double>(n);
  if (m <= tilted_mean(lo_)) return lo_;
  if (m >= tilted_mean(hi_)) return hi_;
  std::uintmax_t iters = 200;
  const auto [a, b] = boost::math::tools::toms748_solve(
      [m](double phi) { return tilted_mean(phi) - m; }, lo_, hi_,
      boost::math::tools::eps_tolerance<double>(52), iters);
  return 0.5 * (a + b);
}

EvidenceEstimate ParametricNull::log_evidence(std::span<const double> data) const {
  double S = 0.0;
  for (double x : data) {
    if (!(x >= 0.0 && x <= 1.0))
      throw InvalidInput(fmt::format("ParametricNull: observation {} outside [0, 1]", x));
    S += x;
  }
  const double n = static_cast<double>(data.size());
  const double phi_hat = mle(S, data.size());

  double a = lo_, b = hi_;
  if (n > 0) {
    const double sd = 1.0 / std::sqrt(n * tilted_variance(phi_hat));
    a = std::max(lo_, phi_hat - kWindowSds * sd);
    b = std::min(hi_, phi_hat + kWindowSds * sd);
  }
  std::vector<double> cuts{lo_};
  append_segments(lo_, a, kTailSegments, cuts);
  append_segments(a, b, kWindowSegments, cuts);
  append_segments(b, hi_, kTailSegments, cuts);

  std::vector<double> gx, gw;
  gauss_legendre(kNullOrder, gx, gw);
  const double log_prior = -std::log(hi_ - lo_);
  std::vector<double> terms;
  terms.reserve((cuts.size() - 1) * gx.size());
  for (std::size_t s = 0; s + 1 < cuts.size(); ++s) {
    const double mid = 0.5 * (cuts[s] + cuts[s + 1]), half = 0.5 * (cuts[s + 1] - cuts[s]);
    for (std::size_t k = 0; k < gx.size(); ++k) {
      const double phi = mid + half * gx[k];
      terms.push_back(std::log(half * gw[k]) + log_prior + phi * S -
                      n * tilted_log_partition(phi));
    }
  }
  EvidenceEstimate out;
  out.log_z = ordered_log_sum_exp(terms);
  out.method = EvidenceMethod::kQuadrature;
  out.n_draws = terms.size();
  if (!std::isfinite(out.log_z)) throw NumericDomain("ParametricNull: non-finite evidence");
  return out;
}

ModelSpec null_model(const ParametricNull& null) {
  return {fmt::format("null:tilted[{},{}]", null.phi_lo(), null.phi_hi()),
          [null](std::span<const double> data, Rng&) { return null.log_evidence(data); }};
}

ModelSpec logspline_model(FamilyPtr family, CoefficientPrior prior, const EvidenceOptions& opt) {
  if (!family || family->J() != prior.J())
    throw InvalidInput("logspline_model: family and prior dimensions differ");
  std::string name = fmt::format("logspline:q{}:J{}:{}:M{}", family->basis().q(), prior.J(),
                                 to_string(prior.kind()), prior.M());
  if (prior.discrete()) name += fmt::format(":s{}", prior.spacing());
  return {std::move(name),
          [family = std::move(family), prior = std::move(prior), opt](
              std::span<const double> data, Rng& rng) {
            return log_evidence(prior, *family, data, rng, opt);
          }};
}

ModelSpec alternative_model(const AlternativeSpec& alt, std::size_t n) {
  const double nn = std::max<double>(static_cast<double>(n), 2.0);
  const int J = dimension_schedule(alt.alpha, nn, alt.q);
  FamilyPtr family = make_family(alt.q, J);
  CoefficientPrior prior =
      alt.kind == PriorKind::kNet
          ? CoefficientPrior::net(J, alt.M, rate_schedule(alt.alpha, nn, false), alt.net_factor)
          : CoefficientPrior::flat(J, alt.M);
  return logspline_model(std::move(family), std::move(prior), alt.evidence);
}

BayesFactorResult bayes_factor(const ModelSpec& m1, const ModelSpec& m2, double w1, double w2,
                               std::span<const double> data, std::uint64_t seed) {
  if (!(w1 > 0.0 && w2 > 0.0 && std::isfinite(w1) && std::isfinite(w2)))
    throw InvalidInput(fmt::format("bayes_factor: weights ({}, {}) must be positive", w1, w2));
  Rng r1(derive_seed(seed, "bf.evidence:" + m1.name));
  Rng r2(derive_seed(seed, "bf.evidence:" + m2.name));
  BayesFactorResult out;
  out.n = data.size();
  out.z1 = m1.evidence(data, r1);
  out.z2 = m2.evidence(data, r2);
  out.log_w1 = std::log(w1);
  out.log_w2 = std::log(w2);
  out.log_bf = (out.log_w2 + out.z2.log_z) - (out.log_w1 + out.z1.log_z);
  out.std_error = std::hypot(out.z1.std_error, out.z2.std_error);
  return out;
}

double posterior_probability_model2(const BayesFactorResult& bf) {
  if (bf.log_bf >= 0.0) return 1.0 / (1.0 + std::exp(-bf.log_bf));
  const double e = std::exp(bf.log_bf);
  return e / (1.0 + e);
}

void parallel_for(std::size_t count, int jobs, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers =
      std::min<std::size_t>(count, static_cast<std::size_t>(std::max(jobs, 1)));
  std::vector<std::exception_ptr> errors(count);
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < count; i = next++) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t t = 0; t < workers; ++t) pool.emplace_back(work);
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
}

std::vector<BfRow> bf_trajectory(const TrueDensity& p0, const ParametricNull& null,
                                 const AlternativeSpec& alt, const BfTrajectoryOptions& opt) {
  if (opt.n_grid.empty() || opt.reps < 1)
    throw InvalidInput("bf_trajectory: empty grid or no replicates");
  for (std::size_t i = 1; i < opt.n_grid.size(); ++i)
    if (opt.n_grid[i] <= opt.n_grid[i - 1])
      throw InvalidInput("bf_trajectory: n_grid must be strictly increasing");

  const ModelSpec m_null = null_model(null);
  const std::size_t reps = static_cast<std::size_t>(opt.reps);
  std::vector<BfRow> rows(opt.n_grid.size() * reps);
  parallel_for(rows.size(), opt.jobs, [&](std::size_t cell) {
    const std::size_t n = opt.n_grid[cell / reps];
    const int rep = static_cast<int>(cell % reps);
    const std::uint64_t seed = derive_seed(opt.seed, "bf.cell", n, static_cast<std::uint64_t>(rep));
    Rng data_rng(derive_seed(seed, "bf.data"));
    const std::vector<double> data = p0.sample(data_rng, n);
    const BayesFactorResult bf =
        bayes_factor(alternative_model(alt, n), m_null, opt.w_alt, opt.w_null, data, seed);
    rows[cell] = {n, rep, seed, bf.log_bf, bf.std_error, bf.z2.log_z, bf.z1.log_z};
  });
  return rows;
}

SmallBallMass prior_mass_smallball(const FamilyPtr& family, const CoefficientPrior& prior,
                                   const TrueDensity& p0, double radius, Rng& rng,
                                   const RegionMassOptions& opt) {
  if (!(radius > 0.0)) throw InvalidInput(fmt::format("prior_mass_smallball: radius {}", radius));
  SmallBallMass out;
  const TruthGeometry geo = truth_geometry(family, p0, prior.M());
  if (radius >= std::sqrt(2.0)) {
    out.hellinger = {1.0, 0.0, 0.0, 1.0, true, 0, 0};
  } else {
    out.hellinger = prior_ball_mass(prior, geo, BallKind::kHellinger, radius, rng, opt);
  }
  out.kl = prior_ball_mass(prior, geo, BallKind::kKullbackLeibler, radius, rng, opt);
  return out;
}

}  // namespace logspline
