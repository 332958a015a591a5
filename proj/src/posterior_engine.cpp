#include "logspline/posterior_engine.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "logspline/error.hpp"

namespace logspline {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kWindowSigmas = 8.0;

double log_add(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double m = std::max(a, b);
  return m + std::log1p(std::exp(-std::abs(a - b)));
}

// T^T C T for theta = T x, theta_J = -sum x.
Eigen::MatrixXd reduce_cov(const Eigen::MatrixXd& C) {
  const Eigen::Index d = C.rows() - 1;
  Eigen::MatrixXd out(d, d);
  for (Eigen::Index a = 0; a < d; ++a)
    for (Eigen::Index b = 0; b < d; ++b) out(a, b) = C(a, b) - C(a, d) - C(d, b) + C(d, d);
  return out;
}

Eigen::VectorXd reduce_vec(const Eigen::VectorXd& v) {
  const Eigen::Index d = v.size() - 1;
  return v.head(d).array() - v[d];
}

Eigen::MatrixXd robust_cholesky(Eigen::MatrixXd A) {
  A = 0.5 * (A + A.transpose());
  double jitter = 1e-12 * std::max(1.0, A.diagonal().cwiseAbs().maxCoeff());
  for (int attempt = 0; attempt < 30; ++attempt) {
    Eigen::LLT<Eigen::MatrixXd> llt(A);
    if (llt.info() == Eigen::Success) return llt.matrixL();
    A.diagonal().array() += jitter;
    jitter *= 10.0;
  }
  throw NumericDomain("cholesky: matrix is not positive definite");
}

bool single_atom(const CoefficientPrior& prior) {
  return prior.J() == 1 || (prior.discrete() && prior.half_width() == 0);
}

// Discrete Gaussian on s*{-m..m} around mu with scale sd, restricted to a window.
struct LatticeLaw {
  long lo = 0;
  long hi = 0;
  std::vector<double> logp;

  LatticeLaw(double mu, double sd, double s, long m) {
    const double c = mu / s, w = kWindowSigmas * sd / s;
    lo = std::max(-m, static_cast<long>(std::floor(c - w)));
    hi = std::min(m, static_cast<long>(std::ceil(c + w)));
    if (lo > hi) lo = hi = std::clamp(std::lround(c), -m, m);
    logp.resize(static_cast<std::size_t>(hi - lo + 1));
    for (long k = lo; k <= hi; ++k) {
      const double z = (static_cast<double>(k) * s - mu) / sd;
      logp[static_cast<std::size_t>(k - lo)] = -0.5 * z * z;
    }
    const double norm = ordered_log_sum_exp(logp);
    for (double& v : logp) v -= norm;
  }

  double log_mass(long k) const {
    if (k < lo || k > hi) return kNegInf;
    return logp[static_cast<std::size_t>(k - lo)];
  }

  long draw(Rng& rng) const {
    double u = rng.uniform();
    for (long k = lo; k < hi; ++k) {
      u -= std::exp(logp[static_cast<std::size_t>(k - lo)]);
      if (u < 0.0) return k;
    }
    return hi;
  }
};

}  // namespace

LaplaceFit laplace_fit(const LogSplineFamily& family, const SufficientStats& ss,
                       const CoefficientPrior& prior) {
  const int J = family.J();
  if (prior.J() != J)
    throw InvalidInput(fmt::format("laplace_fit: prior J={} but family J={}", prior.J(), J));
  const int d = J - 1;
  LaplaceFit fit;
  fit.mode = Eigen::VectorXd::Zero(d);
  if (d == 0) {
    fit.cov = fit.chol = Eigen::MatrixXd::Zero(0, 0);
    return fit;
  }
  const double n = static_cast<double>(ss.n);
  const double ridge = 1.0 / (prior.M() * prior.M());
  auto objective = [&](const Eigen::VectorXd& x) {
    const Eigen::VectorXd th = theta_from_free(x);
    return family.log_likelihood(th, ss) - 0.5 * ridge * x.squaredNorm();
  };

  Eigen::VectorXd x = Eigen::VectorXd::Zero(d);
  double f = objective(x);
  int it = 0;
  if (ss.n > 0) {
    for (; it < 100; ++it) {
      const auto mom = family.moments(theta_from_free(x), true);
      const Eigen::VectorXd g = reduce_vec(ss.S - n * mom.mean) - ridge * x;
      Eigen::MatrixXd P = n * reduce_cov(mom.cov);
      P.diagonal().array() += ridge;
      const Eigen::VectorXd step = P.ldlt().solve(g);
      double t = 1.0, fc = f;
      Eigen::VectorXd cand;
      bool improved = false;
      for (int ls = 0; ls < 40; ++ls, t *= 0.5) {
        cand = x + t * step;
        fc = objective(cand);
        if (fc >= f) {
          improved = true;
          break;
        }
      }
      if (!improved) break;
      const double gain = fc - f;
      x = cand;
      f = fc;
      if (gain <= 1e-12 * (1.0 + std::abs(f))) {
        ++it;
        break;
      }
    }
  }
  const Eigen::VectorXd theta = project_to_box(theta_from_free(x), prior.M());
  fit.mode = free_from_theta(theta);
  fit.iterations = it;
  fit.log_lik = family.log_likelihood(theta, ss);
  const auto mom = family.moments(theta, true);
  Eigen::MatrixXd P = n * reduce_cov(mom.cov);
  P.diagonal().array() += ridge;
  fit.cov = P.ldlt().solve(Eigen::MatrixXd::Identity(d, d));
  fit.cov = 0.5 * (fit.cov + fit.cov.transpose());
  fit.chol = robust_cholesky(fit.cov);
  return fit;
}

Proposal::Proposal(const CoefficientPrior& prior, Eigen::VectorXd center,
                   const Eigen::MatrixXd& cov, double inflate, double dof, double defensive)
    : prior_(&prior), center_(std::move(center)), dof_(dof), defensive_(defensive) {
  if (!(defensive >= 0.0 && defensive <= 1.0))
    throw InvalidInput(fmt::format("proposal: defensive weight {} outside [0, 1]", defensive));
  if (!(inflate > 0.0)) throw InvalidInput("proposal: inflation must be positive");
  if (center_.size() != prior.J() - 1 || cov.rows() != center_.size())
    throw InvalidInput("proposal: dimension mismatch");
  chol_ = robust_cholesky(inflate * cov);
  log_det_ = 2.0 * chol_.diagonal().array().log().sum();
}

Eigen::VectorXd Proposal::draw_core(Rng& rng) const {
  const Eigen::Index d = center_.size();
  Eigen::VectorXd x(d);
  if (prior_->discrete()) {
    const double s = prior_->spacing();
    const long m = prior_->half_width();
    Eigen::VectorXd z(d);
    for (Eigen::Index i = 0; i < d; ++i) {
      const double mu = center_[i] + chol_.row(i).head(i).dot(z.head(i));
      const double sd = chol_(i, i);
      const long k = LatticeLaw(mu, sd, s, m).draw(rng);
      x[i] = static_cast<double>(k) * s;
      z[i] = (x[i] - mu) / sd;
    }
    return x;
  }
  Eigen::VectorXd z(d);
  for (Eigen::Index i = 0; i < d; ++i) z[i] = rng.normal();
  double scale = 1.0;
  if (dof_ > 0.0) scale = 1.0 / std::sqrt(rng.chi_square(static_cast<int>(dof_)) / dof_);
  return center_ + scale * (chol_ * z);
}

double Proposal::log_q_core(const Eigen::VectorXd& x) const {
  const Eigen::Index d = center_.size();
  if (prior_->discrete()) {
    const double s = prior_->spacing();
    const long m = prior_->half_width();
    Eigen::VectorXd z(d);
    double lq = 0.0;
    for (Eigen::Index i = 0; i < d; ++i) {
      const double mu = center_[i] + chol_.row(i).head(i).dot(z.head(i));
      const double sd = chol_(i, i);
      const long k = std::lround(x[i] / s);
      lq += LatticeLaw(mu, sd, s, m).log_mass(k);
      if (lq == kNegInf) return kNegInf;
      z[i] = (static_cast<double>(k) * s - mu) / sd;
    }
    return lq;
  }
  const Eigen::VectorXd u = chol_.triangularView<Eigen::Lower>().solve(x - center_);
  const double delta = u.squaredNorm();
  const double dd = static_cast<double>(d);
  if (dof_ > 0.0) {
    return std::lgamma(0.5 * (dof_ + dd)) - std::lgamma(0.5 * dof_) -
           0.5 * dd * std::log(dof_ * std::numbers::pi) - 0.5 * log_det_ -
           0.5 * (dof_ + dd) * std::log1p(delta / dof_);
  }
  return -0.5 * dd * std::log(2.0 * std::numbers::pi) - 0.5 * log_det_ - 0.5 * delta;
}

Eigen::VectorXd Proposal::draw(Rng& rng) const {
  if (defensive_ > 0.0 && rng.uniform() < defensive_) return free_from_theta(prior_->sample(rng));
  return draw_core(rng);
}

double Proposal::log_q(const Eigen::VectorXd& x) const {
  double core = defensive_ < 1.0 ? std::log1p(-defensive_) + log_q_core(x) : kNegInf;
  if (defensive_ > 0.0) {
    const double lp = prior_->log_density(theta_from_free(x));
    core = log_add(core, std::log(defensive_) + lp);
  }
  return core;
}

std::string to_string(EvidenceMethod m) {
  switch (m) {
    case EvidenceMethod::kExactDiscrete: return "exact-discrete";
    case EvidenceMethod::kImportanceSampling: return "importance-sampling";
    case EvidenceMethod::kQuadrature: return "quadrature";
  }
  return "unknown";
}

double ordered_log_sum_exp(std::span<const double> v) {
  double m = kNegInf;
  for (double x : v) m = std::max(m, x);
  if (m == kNegInf) return kNegInf;
  if (m == std::numeric_limits<double>::infinity()) return m;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

EvidenceEstimate log_evidence(const CoefficientPrior& prior, const LogSplineFamily& family,
                              const SufficientStats& ss, Rng& rng, const EvidenceOptions& opt) {
  const int J = family.J();
  if (prior.J() != J)
    throw InvalidInput(fmt::format("log_evidence: prior J={} but family J={}", prior.J(), J));
  EvidenceEstimate out;
  if (J == 1) {
    out.log_z = family.log_likelihood(Eigen::VectorXd::Zero(1), ss);
    out.n_draws = 1;
    out.ess = 1.0;
    return out;
  }
  if (prior.discrete() && prior.log_atom_count() <= std::log(static_cast<double>(
                                                        std::min(opt.exact_atom_cap,
                                                                 prior.atom_cap()))) + 1e-9) {
    const std::vector<Eigen::VectorXd> atoms = prior.atoms();
    std::vector<double> v(atoms.size());
    const double log_mass = -prior.log_atom_count();
    for (std::size_t i = 0; i < atoms.size(); ++i)
      v[i] = family.log_likelihood(atoms[i], ss) + log_mass;
    out.log_z = ordered_log_sum_exp(v);
    out.method = EvidenceMethod::kExactDiscrete;
    out.n_draws = atoms.size();
    out.ess = static_cast<double>(atoms.size());
    if (!std::isfinite(out.log_z)) throw NumericDomain("log_evidence: evidence underflowed");
    return out;
  }

  if (opt.n_is < 2) throw InvalidInput("log_evidence: need at least two importance draws");
  const LaplaceFit fit = laplace_fit(family, ss, prior);
  const Proposal prop(prior, fit.mode, fit.cov, opt.inflate, opt.t_dof, opt.defensive);
  std::vector<double> lw(opt.n_is);
  for (std::size_t i = 0; i < opt.n_is; ++i) {
    const Eigen::VectorXd x = prop.draw(rng);
    const Eigen::VectorXd theta = theta_from_free(x);
    const double lp = prior.log_density(theta);
    lw[i] = lp == kNegInf ? kNegInf : family.log_likelihood(theta, ss) + lp - prop.log_q(x);
  }
  const double lse = ordered_log_sum_exp(lw);
  if (!std::isfinite(lse)) throw NumericDomain("log_evidence: every importance weight is zero");
  const double N = static_cast<double>(opt.n_is);
  double s2 = 0.0, w2 = 0.0;
  for (double v : lw) {
    const double r = std::exp(v - lse) * N;  // w_i / mean(w)
    s2 += (r - 1.0) * (r - 1.0);
    w2 += r * r;
  }
  out.log_z = lse - std::log(N);
  out.std_error = std::sqrt(s2 / (N - 1.0) / N);
  out.method = EvidenceMethod::kImportanceSampling;
  out.n_draws = opt.n_is;
  out.ess = N * N / w2;
  return out;
}

EvidenceEstimate log_evidence(const CoefficientPrior& prior, const LogSplineFamily& family,
                              std::span<const double> data, Rng& rng,
                              const EvidenceOptions& opt) {
  return log_evidence(prior, family, family.suff_stats(data), rng, opt);
}

std::vector<double> model_posterior(std::span<const double> log_weights,
                                    std::span<const double> log_evidences) {
  if (log_weights.size() != log_evidences.size() || log_weights.empty())
    throw InvalidInput("model_posterior: weights and evidences must be non-empty, equal length");
  std::vector<double> v(log_weights.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = log_weights[i] + log_evidences[i];
  const double norm = ordered_log_sum_exp(v);
  if (!std::isfinite(norm)) throw NumericDomain("model_posterior: no model has positive mass");
  for (double& x : v) x = std::exp(x - norm);
  return v;
}

double effective_sample_size(std::span<const double> x) {
  const std::size_t n = x.size();
  if (n < 4) return static_cast<double>(n);
  const double mean = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(n);
  auto autocov = [&](std::size_t lag) {
    double s = 0.0;
    for (std::size_t i = 0; i + lag < n; ++i) s += (x[i] - mean) * (x[i + lag] - mean);
    return s / static_cast<double>(n);
  };
  const double g0 = autocov(0);
  if (!(g0 > 1e-300)) return static_cast<double>(n);
  double tau = -g0;
  for (std::size_t m = 0; 2 * m + 1 < n; ++m) {
    const double pair = autocov(2 * m) + autocov(2 * m + 1);
    if (!(pair > 0.0)) break;
    tau += 2.0 * pair;
  }
  const double ess = static_cast<double>(n) * g0 / tau;
  return std::clamp(ess, 1.0, static_cast<double>(n));
}

Chain mcmc_theta(const LogSplineFamily& family, const CoefficientPrior& prior,
                 const SufficientStats& ss, Rng& rng, const McmcOptions& opt) {
  if (opt.steps < 1) throw InvalidInput("mcmc_theta: steps must be at least 1");
  if (!(opt.burn_fraction >= 0.0 && opt.burn_fraction < 1.0))
    throw InvalidInput("mcmc_theta: burn fraction must lie in [0, 1)");
  if (opt.thin < 1 || opt.window < 1) throw InvalidInput("mcmc_theta: thin and window must be >= 1");
  const int J = family.J();
  if (prior.J() != J) throw InvalidInput("mcmc_theta: prior and family dimensions differ");
  const std::size_t burn = static_cast<std::size_t>(std::floor(opt.steps * opt.burn_fraction));
  Chain chain;

  if (single_atom(prior)) {
    const Eigen::VectorXd theta = Eigen::VectorXd::Zero(J);
    const double ll = family.log_likelihood(theta, ss);
    for (std::size_t t = burn; t < opt.steps; t += opt.thin) {
      chain.draws.push_back(theta);
      chain.log_lik.push_back(ll);
    }
    chain.acceptance = 1.0;
    chain.ess = static_cast<double>(chain.draws.size());
    return chain;
  }

  const int d = J - 1;
  const LaplaceFit fit = laplace_fit(family, ss, prior);
  Eigen::VectorXd theta = theta_from_free(fit.mode);
  if (prior.discrete()) theta = prior.nearest_atom(theta);
  Eigen::VectorXd x = free_from_theta(theta);
  double lp = prior.log_density(theta);
  if (lp == kNegInf) throw NumericDomain("mcmc_theta: starting point outside the prior support");
  double ll = family.log_likelihood(theta, ss);
  double scale = opt.initial_scale > 0.0 ? opt.initial_scale : 2.38 / std::sqrt(d);
  const double s = prior.discrete() ? prior.spacing() : 0.0;

  const Proposal indep(prior, fit.mode, fit.cov, 1.5, 7.0, 0.1);
  double lq = indep.log_q(x);

  std::size_t window_acc = 0, window_len = 0, window_rw = 0, window_rw_acc = 0;
  std::size_t kept_acc = 0, kept = 0;
  Eigen::VectorXd z(d);
  for (std::size_t t = 0; t < opt.steps; ++t) {
    Eigen::VectorXd thp;
    const double u = rng.uniform();
    const bool independent = u < opt.independence;
    const bool neighbor = !independent && prior.discrete() && u < opt.independence + 0.3;
    double lqp = 0.0;
    if (independent) {
      thp = theta_from_free(indep.draw(rng));
    } else if (neighbor) {
      // Neighboring atom: +s on one coordinate, -s on another.
      const auto i = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(J)));
      auto j = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(J - 1)));
      if (j >= i) ++j;
      thp = theta;
      thp[i] += s;
      thp[j] -= s;
    } else {
      for (int i = 0; i < d; ++i) z[i] = rng.normal();
      Eigen::VectorXd step = scale * (fit.chol * z);
      if (prior.discrete()) step = (step / s).array().round() * s;
      thp = theta_from_free(x + step);
    }
    const Eigen::VectorXd xp = free_from_theta(thp);
    const double lpp = prior.log_density(thp);
    bool accept = false;
    if (lpp != kNegInf) {
      const double llp = family.log_likelihood(thp, ss);
      double log_r = llp + lpp - ll - lp;
      if (independent) {
        lqp = indep.log_q(xp);
        log_r += lq - lqp;
      }
      if (log_r >= 0.0 || std::log(rng.uniform_open()) < log_r) {
        x = xp;
        theta = thp;
        lp = lpp;
        ll = llp;
        lq = independent ? lqp : indep.log_q(x);
        accept = true;
      }
    }
    const bool rw = !independent && !neighbor;
    if (t < burn) {
      window_acc += accept;
      window_rw += rw;
      window_rw_acc += rw && accept;
      if (++window_len == opt.window) {
        if (window_acc == 0)
          throw DiagnosticsError(fmt::format(
              "mcmc_theta: no proposal accepted in adaptation window ending at step {} (J={})",
              t + 1, J));
        if (window_rw > 0) {
          const double rate = static_cast<double>(window_rw_acc) / static_cast<double>(window_rw);
          if (rate < opt.target_low) scale *= 0.7;
          else if (rate > opt.target_high) scale *= 1.3;
        }
        window_acc = window_len = window_rw = window_rw_acc = 0;
      }
      continue;
    }
    kept_acc += accept;
    ++kept;
    if ((t - burn) % opt.thin == 0) {
      chain.draws.push_back(theta);
      chain.log_lik.push_back(ll);
    }
  }
  chain.acceptance = kept ? static_cast<double>(kept_acc) / static_cast<double>(kept) : 0.0;
  chain.scale = scale;
  chain.ess = static_cast<double>(chain.draws.size());
  std::vector<double> coord(chain.draws.size());
  for (int j = 0; j < J; ++j) {
    for (std::size_t i = 0; i < coord.size(); ++i) coord[i] = chain.draws[i][j];
    chain.ess = std::min(chain.ess, effective_sample_size(coord));
  }
  return chain;
}

PosteriorSummary compute_posterior(const HierarchicalPrior& hp, std::span<const double> data,
                                   std::uint64_t seed, const PosteriorOptions& opt) {
  PosteriorSummary ps;
  ps.n = data.size();
  std::vector<double> lw, lz;
  for (std::size_t i = 0; i < hp.size(); ++i) {
    const PriorComponent& c = hp[i];
    const SufficientStats ss = c.family->suff_stats(data);
    ModelFit fit;
    fit.alpha = c.alpha;
    fit.J = c.J;
    fit.log_weight = c.log_weight;
    Rng ev_rng(derive_seed(seed, "posterior.evidence", i));
    fit.evidence = log_evidence(c.prior, *c.family, ss, ev_rng, opt.evidence);
    if (opt.run_chains) {
      Rng mc_rng(derive_seed(seed, "posterior.mcmc", i));
      fit.chain = mcmc_theta(*c.family, c.prior, ss, mc_rng, opt.mcmc);
    }
    lw.push_back(c.log_weight);
    lz.push_back(fit.evidence.log_z);
    ps.models.push_back(std::move(fit));
  }
  ps.model_posterior = model_posterior(lw, lz);
  return ps;
}

namespace {

struct WeightedDistance {
  double h;
  double w;
};

// Hellinger distances of every chain draw, weighted by model posterior / chain length.
std::vector<std::vector<double>> chain_distances(const PosteriorSummary& ps,
                                                 const HierarchicalPrior& hp,
                                                 const TrueDensity& p0) {
  if (ps.models.size() != hp.size())
    throw InvalidInput("posterior summary and hierarchical prior have different sizes");
  std::vector<std::vector<double>> out(ps.models.size());
  for (std::size_t a = 0; a < ps.models.size(); ++a) {
    const Chain& ch = ps.models[a].chain;
    if (ch.draws.empty()) throw InvalidState(fmt::format("model {} has an empty chain", a));
    const TruthComparator cmp(hp[a].family, p0);
    out[a].reserve(ch.draws.size());
    for (const auto& th : ch.draws) out[a].push_back(cmp.hellinger(th));
  }
  return out;
}

}  // namespace

BallMass posterior_ball_mass(const PosteriorSummary& ps, const HierarchicalPrior& hp,
                             const TrueDensity& p0, double radius) {
  const auto dist = chain_distances(ps, hp, p0);
  BallMass out;
  double var = 0.0;
  for (std::size_t a = 0; a < dist.size(); ++a) {
    const double n = static_cast<double>(dist[a].size());
    const double f =
        static_cast<double>(std::count_if(dist[a].begin(), dist[a].end(),
                                          [radius](double h) { return h > radius; })) / n;
    const double w = ps.model_posterior[a];
    const double ess = std::clamp(ps.models[a].chain.ess, 1.0, n);
    out.mass += w * f;
    var += w * w * f * (1.0 - f) / ess;
  }
  out.mass = std::clamp(out.mass, 0.0, 1.0);
  out.std_error = std::sqrt(var);
  return out;
}

double contraction_radius(const PosteriorSummary& ps, const HierarchicalPrior& hp,
                          const TrueDensity& p0, double quantile) {
  if (!(quantile >= 0.0 && quantile <= 1.0))
    throw InvalidInput(fmt::format("contraction_radius: quantile {} outside [0, 1]", quantile));
  const auto dist = chain_distances(ps, hp, p0);
  std::vector<WeightedDistance> all;
  for (std::size_t a = 0; a < dist.size(); ++a) {
    const double w = ps.model_posterior[a] / static_cast<double>(dist[a].size());
    for (double h : dist[a]) all.push_back({h, w});
  }
  std::stable_sort(all.begin(), all.end(),
                   [](const WeightedDistance& l, const WeightedDistance& r) { return l.h < r.h; });
  double total = 0.0;
  for (const auto& e : all) total += e.w;
  const double target = quantile * total;
  double cum = 0.0;
  for (const auto& e : all) {
    cum += e.w;
    if (cum >= target && e.w > 0.0) return e.h;
  }
  return all.back().h;
}

std::string summary_json(const PosteriorSummary& ps) {
  nlohmann::json j;
  j["n"] = ps.n;
  j["models"] = nlohmann::json::array();
  for (std::size_t a = 0; a < ps.models.size(); ++a) {
    const ModelFit& m = ps.models[a];
    j["models"].push_back({{"alpha", m.alpha},
                           {"J", m.J},
                           {"log_weight", m.log_weight},
                           {"log_evidence", m.evidence.log_z},
                           {"std_error", m.evidence.std_error},
                           {"method", to_string(m.evidence.method)},
                           {"n_draws", m.evidence.n_draws},
                           {"posterior", ps.model_posterior.at(a)},
                           {"acceptance", m.chain.acceptance},
                           {"ess", m.chain.ess},
                           {"chain_length", m.chain.draws.size()}});
  }
  return j.dump(2);
}

RegionMass prior_region_mass(const CoefficientPrior& prior,
                             const std::function<bool(const Eigen::VectorXd&)>& inside,
                             const Eigen::VectorXd& center, const Eigen::MatrixXd& H, double r2,
                             Rng& rng, const RegionMassOptions& opt) {
  const int J = prior.J();
  const int d = J - 1;
  RegionMass out;
  auto finish_exact = [&](std::size_t hits, std::size_t total) {
    out.exact = true;
    out.hits = hits;
    out.draws = total;
    out.mass = out.upper = static_cast<double>(hits) / static_cast<double>(total);
    out.log_mass = std::log(out.mass);
    return out;
  };
  if (J == 1) return finish_exact(inside(Eigen::VectorXd::Zero(1)) ? 1 : 0, 1);
  if (prior.discrete() &&
      prior.log_atom_count() <=
          std::log(static_cast<double>(std::min(opt.exact_atom_cap, prior.atom_cap()))) + 1e-9) {
    std::size_t hits = 0;
    const auto atoms = prior.atoms();
    for (const auto& a : atoms) hits += inside(a);
    return finish_exact(hits, atoms.size());
  }
  if (center.size() != d || H.rows() != d || H.cols() != d)
    throw InvalidInput("prior_region_mass: dimension mismatch");
  if (!(r2 > 0.0)) throw InvalidInput("prior_region_mass: r2 must be positive");
  if (opt.draws < 2) throw InvalidInput("prior_region_mass: need at least two draws");

  Eigen::MatrixXd Hs = 0.5 * (H + H.transpose());
  Hs.diagonal().array() += 1e-12 * std::max(1.0, Hs.diagonal().maxCoeff());
  const Eigen::MatrixXd cov =
      (r2 / d) * Hs.ldlt().solve(Eigen::MatrixXd::Identity(d, d));
  const Proposal prop(prior, center, cov, 1.0, 0.0, opt.defensive);

  const std::size_t N = opt.draws;
  std::vector<double> lw;
  lw.reserve(N);
  double max_ratio = kNegInf;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < N; ++i) {
    const Eigen::VectorXd x = prop.draw(rng);
    const Eigen::VectorXd theta = theta_from_free(x);
    const double lp = prior.log_density(theta);
    if (lp == kNegInf) continue;
    const double r = lp - prop.log_q(x);
    max_ratio = std::max(max_ratio, r);
    if (inside(theta)) {
      ++hits;
      lw.push_back(r);
    }
  }
  out.hits = hits;
  out.draws = N;
  const double Nd = static_cast<double>(N);
  if (hits == 0) {
    out.mass = 0.0;
    out.log_mass = kNegInf;
    out.upper = max_ratio == kNegInf ? 3.0 / Nd : 3.0 / Nd * std::exp(max_ratio);
    return out;
  }
  const double lse = ordered_log_sum_exp(lw);
  out.log_mass = lse - std::log(Nd);
  out.mass = std::exp(out.log_mass);
  // Var of w_i over all N draws (zeros included), relative to the mean.
  double s2 = 0.0;
  for (double v : lw) {
    const double r = std::exp(v - lse) * Nd;
    s2 += (r - 1.0) * (r - 1.0);
  }
  s2 += static_cast<double>(N - hits);
  out.std_error = out.mass * std::sqrt(s2 / (Nd - 1.0) / Nd);
  out.upper = out.mass;
  return out;
}

TruthGeometry truth_geometry(const FamilyPtr& family, const TrueDensity& p0, double M) {
  ProjectionOptions po;
  po.lower_c4 = std::numeric_limits<double>::infinity();
  const Projection proj = project_hellinger(family, p0, M, po);
  TruthGeometry g;
  g.cmp = std::make_shared<const TruthComparator>(family, p0);
  g.theta_J = proj.theta;
  const NeighborhoodMembership prof = g.cmp->profile(proj.theta);
  g.eps_J = prof.hellinger;
  g.kl_J = prof.kl;
  if (family->J() > 1) g.H = 0.25 * reduce_cov(family->moments(proj.theta, true).cov);
  else g.H = Eigen::MatrixXd::Zero(0, 0);
  return g;
}

RegionMass prior_ball_mass(const CoefficientPrior& prior, const TruthGeometry& geo,
                           BallKind kind, double radius, Rng& rng,
                           const RegionMassOptions& opt) {
  if (!(radius > 0.0)) throw InvalidInput(fmt::format("prior_ball_mass: radius {} <= 0", radius));
  if (!geo.cmp || geo.theta_J.size() != prior.J())
    throw InvalidInput("prior_ball_mass: geometry does not match the prior dimension");
  const Eigen::VectorXd center = free_from_theta(geo.theta_J);
  const double r_sq = radius * radius;
  if (kind == BallKind::kHellinger) {
    const double r2 = std::max(r_sq - geo.eps_J * geo.eps_J, 0.25 * r_sq);
    return prior_region_mass(
        prior, [&](const Eigen::VectorXd& th) { return geo.cmp->hellinger(th) <= radius; },
        center, geo.H, r2, rng, opt);
  }
  // KL ~ 2 (x - x_J)^T H (x - x_J) near the projection.
  const double r2 = 0.5 * std::max(r_sq - geo.kl_J, 0.25 * r_sq);
  return prior_region_mass(
      prior, [&](const Eigen::VectorXd& th) { return geo.cmp->profile(th).in_kl_ball(radius); },
      center, geo.H, r2, rng, opt);
}

}  // namespace logspline
