#include "logspline/logspline_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "logspline/calibration.hpp"
#include "logspline/error.hpp"
#include "logspline/simd/kernels.hpp"

namespace logspline {
namespace {

constexpr double kLogDensityFloor = -690.7755278982137;  // log(1e-300)

std::vector<double>& scratch(int slot) {
  thread_local std::vector<double> buf[4];
  return buf[slot];
}

void tabulate(const SplineBasis& basis, const std::vector<double>& nodes,
              std::vector<std::int64_t>& first, std::vector<double>& values) {
  const int q = basis.q();
  const std::size_t n = nodes.size();
  first.resize(n);
  values.assign(static_cast<std::size_t>(q) * n, 0.0);
  double buf[32];
  for (std::size_t k = 0; k < n; ++k) {
    first[k] = basis.eval_nonzero(nodes[k], buf);
    for (int j = 0; j < q; ++j) values[static_cast<std::size_t>(j) * n + k] = buf[j];
  }
}

void check_finite(const Eigen::VectorXd& theta) {
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    if (!std::isfinite(theta[i]))
      throw InvalidInput(fmt::format("non-finite coefficient theta[{}] = {}", i, theta[i]));
  }
}

}  // namespace

TrueDensity::TrueDensity(Density density, std::optional<double> beta, double sup_log_norm,
                         int grid_size)
    : density_(std::move(density)), beta_(beta), sup_log_norm_(sup_log_norm) {
  const std::vector<double> br = merge_breakpoints(density_.breakpoints, {});
  density_.breakpoints = br;
  const QuadratureRule rule = make_rule(refine_segments(br), 8);
  const auto& d = density_;
  table_ = std::make_shared<const InverseCdfTable>(
      build_inverse_cdf([&d](double x) { return d.pdf(x); }, rule, grid_size));
}

std::vector<double> TrueDensity::sample(Rng& rng, std::size_t n) const {
  std::vector<double> out(n);
  for (auto& x : out) x = table_->quantile(rng.uniform());
  return out;
}

LogSplineFamily::LogSplineFamily(SplineBasis basis, int order)
    : basis_(std::move(basis)), rule_(make_rule(refine_segments(basis_.breakpoints()), order)) {
  tabulate(basis_, rule_.nodes(), first_, values_);
}

void LogSplineFamily::eta(const double* theta, double* out) const {
  simd::kernels().banded_matvec(theta, first_.data(), values_.data(), basis_.q(), rule_.size(),
                                out);
}

double LogSplineFamily::log_normalizer(const Eigen::VectorXd& theta) const {
  if (theta.size() != J())
    throw InvalidInput(fmt::format("normalizer: theta has length {}, expected {}", theta.size(), J()));
  check_finite(theta);
  auto& e = scratch(0);
  e.resize(rule_.size());
  eta(theta.data(), e.data());
  const double m = theta.maxCoeff();
  const double s = simd::kernels().weighted_exp_sum(rule_.weights().data(), e.data(), m, e.size());
  return m + std::log(s);
}

LogSplineFamily::Moments LogSplineFamily::moments(const Eigen::VectorXd& theta,
                                                  bool with_cov) const {
  check_finite(theta);
  const std::size_t n = rule_.size();
  const int q = basis_.q();
  auto& e = scratch(0);
  auto& p = scratch(1);
  e.resize(n);
  p.resize(n);
  eta(theta.data(), e.data());
  const double m = theta.maxCoeff();
  const auto& w = rule_.weights();
  const double s = simd::kernels().weighted_exp_sum(w.data(), e.data(), m, n);
  Moments out;
  out.c = m + std::log(s);
  simd::kernels().exp_shift(e.data(), out.c, p.data(), n);
  out.mean = Eigen::VectorXd::Zero(J());
  if (with_cov) out.cov = Eigen::MatrixXd::Zero(J(), J());
  for (std::size_t k = 0; k < n; ++k) {
    const double wp = w[k] * p[k];
    const std::int64_t f = first_[k];
    for (int a = 0; a < q; ++a) {
      const double va = values_[static_cast<std::size_t>(a) * n + k];
      out.mean[f + a] += wp * va;
      if (with_cov) {
        for (int b = 0; b < q; ++b)
          out.cov(f + a, f + b) += wp * va * values_[static_cast<std::size_t>(b) * n + k];
      }
    }
  }
  if (with_cov) out.cov -= out.mean * out.mean.transpose();
  return out;
}

SufficientStats LogSplineFamily::suff_stats(std::span<const double> data) const {
  SufficientStats ss;
  ss.S = Eigen::VectorXd::Zero(J());
  ss.n = data.size();
  double buf[32];
  for (double x : data) {
    if (!(x >= 0.0 && x <= 1.0))
      throw InvalidInput(fmt::format("observation {} outside [0,1]", x));
    const int f = basis_.eval_nonzero(x, buf);
    for (int j = 0; j < basis_.q(); ++j) ss.S[f + j] += buf[j];
  }
  return ss;
}

double LogSplineFamily::log_likelihood(const Eigen::VectorXd& theta,
                                       const SufficientStats& ss) const {
  if (ss.n == 0) return 0.0;
  return theta.dot(ss.S) - static_cast<double>(ss.n) * log_normalizer(theta);
}

FamilyPtr make_family(int q, int J, int order) {
  return std::make_shared<const LogSplineFamily>(basis_for_dimension(q, J), order);
}

LogSplineModel::LogSplineModel(FamilyPtr family, const Eigen::VectorXd& theta)
    : family_(std::move(family)), theta_(centered(theta)) {
  if (theta.size() != family_->J())
    throw InvalidInput(
        fmt::format("LogSplineModel: theta has length {}, expected {}", theta.size(), family_->J()));
  c_ = family_->log_normalizer(theta_);
}

double LogSplineModel::log_density_at(double x) const {
  return family_->basis().combine(theta_, x) - c_;
}

double LogSplineModel::density_at(double x) const {
  if (!(x >= 0.0 && x <= 1.0)) throw InvalidInput(fmt::format("density_at: x={} outside [0,1]", x));
  return std::exp(log_density_at(x));
}

std::vector<double> LogSplineModel::sample(Rng& rng, std::size_t n, int grid_size) const {
  const InverseCdfTable table = build_inverse_cdf(
      [this](double x) { return std::exp(log_density_at(x)); }, family_->rule(), grid_size);
  std::vector<double> out(n);
  for (auto& x : out) x = table.quantile(rng.uniform());
  return out;
}

Density LogSplineModel::to_density() const {
  Density d;
  auto fam = family_;
  auto theta = theta_;
  const double c = c_;
  d.log_pdf = [fam, theta, c](double x) { return fam->basis().combine(theta, x) - c; };
  d.breakpoints = family_->basis().breakpoints();
  d.name = fmt::format("logspline(J={})", family_->J());
  return d;
}

double hellinger(const Density& p, const Density& q, int order, double mass_tol) {
  const QuadratureRule rule =
      make_rule(refine_segments(merge_breakpoints(p.breakpoints, q.breakpoints)), order);
  const std::size_t n = rule.size();
  std::vector<double> pv(n), qv(n);
  for (std::size_t k = 0; k < n; ++k) {
    pv[k] = p.pdf(rule.nodes()[k]);
    qv[k] = q.pdf(rule.nodes()[k]);
  }
  const auto& w = rule.weights();
  const auto& K = simd::kernels();
  const double mp = K.dot(w.data(), pv.data(), n);
  const double mq = K.dot(w.data(), qv.data(), n);
  if (!(std::abs(mp - 1.0) <= mass_tol))
    throw InvalidInput(fmt::format("hellinger: first density integrates to {:.12g}", mp));
  if (!(std::abs(mq - 1.0) <= mass_tol))
    throw InvalidInput(fmt::format("hellinger: second density integrates to {:.12g}", mq));
  const double h2 = K.hellinger_sq(w.data(), pv.data(), qv.data(), n);
  return std::min(std::sqrt(std::max(h2, 0.0)), std::sqrt(2.0));
}

NeighborhoodMembership kl_profile(const TrueDensity& p0, const Density& p, int order) {
  const QuadratureRule rule =
      make_rule(refine_segments(merge_breakpoints(p0.breakpoints(), p.breakpoints)), order);
  const std::size_t n = rule.size();
  const auto& x = rule.nodes();
  const auto& w = rule.weights();
  NeighborhoodMembership out;
  double h2 = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const double l0 = p0.log_pdf(x[k]);
    const double l = p.log_pdf(x[k]);
    if (!(l >= kLogDensityFloor))
      throw NumericDomain(fmt::format("kl_profile: density vanishes at x={:.17g}", x[k]));
    if (!(l0 >= kLogDensityFloor))
      throw NumericDomain(fmt::format("kl_profile: true density vanishes at x={:.17g}", x[k]));
    const double d = l0 - l;
    const double e0 = std::exp(l0);
    out.kl += w[k] * e0 * d;
    out.kl2 += w[k] * e0 * d * d;
    const double r = std::sqrt(e0) - std::exp(0.5 * l);
    h2 += w[k] * r * r;
  }
  out.hellinger = std::min(std::sqrt(h2), std::sqrt(2.0));
  return out;
}

TruthComparator::TruthComparator(FamilyPtr family, const TrueDensity& p0, int order)
    : family_(std::move(family)) {
  const QuadratureRule rule =
      make_rule(refine_segments(merge_breakpoints(family_->basis().breakpoints(), p0.breakpoints())),
                order);
  w_ = rule.weights();
  tabulate(family_->basis(), rule.nodes(), first_, values_);
  p0_.resize(rule.size());
  log_p0_.resize(rule.size());
  for (std::size_t k = 0; k < rule.size(); ++k) {
    log_p0_[k] = p0.log_pdf(rule.nodes()[k]);
    if (!(log_p0_[k] >= kLogDensityFloor))
      throw NumericDomain(
          fmt::format("TruthComparator: true density vanishes at x={:.17g}", rule.nodes()[k]));
    p0_[k] = std::exp(log_p0_[k]);
  }
}

void TruthComparator::densities(const Eigen::VectorXd& theta, std::vector<double>& eta,
                                std::vector<double>& p) const {
  if (theta.size() != family_->J())
    throw InvalidInput(fmt::format("TruthComparator: theta has length {}, expected {}",
                                   theta.size(), family_->J()));
  check_finite(theta);
  const std::size_t n = w_.size();
  const auto& K = simd::kernels();
  eta.resize(n);
  p.resize(n);
  K.banded_matvec(theta.data(), first_.data(), values_.data(), family_->basis().q(), n, eta.data());
  const double m = theta.maxCoeff();
  const double c = m + std::log(K.weighted_exp_sum(w_.data(), eta.data(), m, n));
  K.exp_shift(eta.data(), c, p.data(), n);
  for (std::size_t k = 0; k < n; ++k) eta[k] -= c;
}

double TruthComparator::hellinger(const Eigen::VectorXd& theta) const {
  auto& e = scratch(2);
  auto& p = scratch(3);
  densities(theta, e, p);
  const double h2 = simd::kernels().hellinger_sq(w_.data(), p.data(), p0_.data(), w_.size());
  return std::min(std::sqrt(std::max(h2, 0.0)), std::sqrt(2.0));
}

NeighborhoodMembership TruthComparator::profile(const Eigen::VectorXd& theta) const {
  auto& e = scratch(2);
  auto& p = scratch(3);
  densities(theta, e, p);
  NeighborhoodMembership out;
  for (std::size_t k = 0; k < w_.size(); ++k) {
    if (!(e[k] >= kLogDensityFloor))
      throw NumericDomain("TruthComparator: model density below 1e-300");
    const double d = log_p0_[k] - e[k];
    out.kl += w_[k] * p0_[k] * d;
    out.kl2 += w_[k] * p0_[k] * d * d;
  }
  const double h2 = simd::kernels().hellinger_sq(w_.data(), p.data(), p0_.data(), w_.size());
  out.hellinger = std::min(std::sqrt(std::max(h2, 0.0)), std::sqrt(2.0));
  return out;
}

double TruthComparator::hellinger_sq_grad(const Eigen::VectorXd& theta,
                                          Eigen::VectorXd& grad) const {
  auto& e = scratch(2);
  auto& p = scratch(3);
  densities(theta, e, p);
  const std::size_t n = w_.size();
  const int q = family_->basis().q();
  const int J = family_->J();
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(J);
  Eigen::VectorXd cross = Eigen::VectorXd::Zero(J);
  double overlap = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const double wp = w_[k] * p[k];
    const double ws = w_[k] * std::sqrt(p[k] * p0_[k]);
    overlap += ws;
    for (int a = 0; a < q; ++a) {
      const double v = values_[static_cast<std::size_t>(a) * n + k];
      mean[first_[k] + a] += wp * v;
      cross[first_[k] + a] += ws * v;
    }
  }
  grad = -(cross - overlap * mean);
  return simd::kernels().hellinger_sq(w_.data(), p.data(), p0_.data(), n);
}

Eigen::VectorXd project_to_box(const Eigen::VectorXd& theta, double M, int rounds) {
  Eigen::VectorXd t = centered(theta);
  for (int r = 0; r < rounds; ++r) {
    if (t.cwiseAbs().maxCoeff() <= M) return t;
    t = centered(t.cwiseMax(-M).cwiseMin(M));
  }
  return t;
}

double sup_log_density(const LogSplineFamily& family, const Eigen::VectorXd& theta,
                       int grid_per_cell) {
  const double c = family.log_normalizer(theta);
  const int K = family.basis().K();
  const int G = K * grid_per_cell;
  double m = 0.0;
  for (int i = 0; i <= G; ++i) {
    const double x = static_cast<double>(i) / G;
    m = std::max(m, std::abs(family.basis().combine(theta, x) - c));
  }
  return m;
}

Projection project_hellinger(const FamilyPtr& family, const TrueDensity& p0, double M,
                             const ProjectionOptions& opt) {
  if (!(M > 0.0)) throw InvalidInput(fmt::format("project_hellinger: M={} must be positive", M));
  const double c4 = opt.lower_c4 ? *opt.lower_c4 : frozen_calibration().c4_lower;
  if (!(p0.sup_log_norm() < c4 * M))
    throw InvalidInput(fmt::format(
        "project_hellinger: sup|log p0| = {:.6g} is not below C4*M = {:.6g}", p0.sup_log_norm(),
        c4 * M));

  const LogSplineFamily& fam = *family;
  const int J = fam.J();
  const TruthComparator cmp(family, p0, opt.order);

  const SupFit fit = fit_supnorm(fam.basis(), [&p0](double x) { return p0.log_pdf(x); });
  Projection out;
  {
    const Eigen::VectorXd bar = centered(fit.theta);
    const double c = fam.log_normalizer(bar);
    const int G = 50 * J;
    double s = 0.0;
    for (int i = 0; i <= G; ++i) {
      const double x = static_cast<double>(i) / G;
      s = std::max(s, std::abs(fam.basis().combine(bar, x) - c - p0.log_pdf(x)));
    }
    out.sup_init = s;
    out.eps_init = cmp.hellinger(bar);
  }

  Eigen::VectorXd theta = project_to_box(fit.theta, M, opt.max_rounds);
  Eigen::VectorXd grad;
  double f = cmp.hellinger_sq_grad(theta, grad);

  int it = 0;
  for (; it < opt.max_iter; ++it) {
    const LogSplineFamily::Moments mom = fam.moments(theta, true);
    // Free coordinates x (first J-1 entries), theta = T x with theta_J = -sum x.
    const int d = J - 1;
    if (d == 0) break;
    Eigen::VectorXd gx = grad.head(d).array() - grad[d];
    const Eigen::MatrixXd& C = mom.cov;
    Eigen::MatrixXd H(d, d);
    for (int a = 0; a < d; ++a)
      for (int b = 0; b < d; ++b) H(a, b) = 0.5 * (C(a, b) - C(a, d) - C(d, b) + C(d, d));
    H.diagonal().array() += 1e-12 * (1.0 + H.diagonal().maxCoeff());
    const Eigen::VectorXd dx = -H.ldlt().solve(gx);
    Eigen::VectorXd step(J);
    step.head(d) = dx;
    step[d] = -dx.sum();

    double t = 1.0;
    bool improved = false;
    Eigen::VectorXd cand;
    double fc = f;
    for (int ls = 0; ls < 40; ++ls, t *= 0.5) {
      cand = project_to_box(theta + t * step, M, opt.max_rounds);
      Eigen::VectorXd g2;
      fc = cmp.hellinger_sq_grad(cand, g2);
      if (fc < f) {
        improved = true;
        grad = std::move(g2);
        break;
      }
    }
    if (!improved) break;
    const double gain = f - fc;
    theta = cand;
    f = fc;
    if (gain <= opt.tol * (1.0 + f)) {
      ++it;
      break;
    }
  }
  out.iterations = it;
  out.warning = it >= opt.max_iter;
  out.theta = theta;
  out.epsilon = std::min(std::sqrt(std::max(f, 0.0)), std::sqrt(2.0));
  return out;
}

}  // namespace logspline
