#include "logspline/prior_lib.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <boost/multiprecision/cpp_int.hpp>
#include <fmt/format.h>

#include "logspline/error.hpp"
#include "logspline/simd/kernels.hpp"

namespace logspline {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_sum_exp(std::span<const double> v) {
  return simd::log_sum_exp(v);
}

}  // namespace

Eigen::VectorXd theta_from_free(const Eigen::VectorXd& x) {
  Eigen::VectorXd theta(x.size() + 1);
  theta.head(x.size()) = x;
  theta[x.size()] = -x.sum();
  return theta;
}

Eigen::VectorXd free_from_theta(const Eigen::VectorXd& theta) {
  if (theta.size() < 1) throw InvalidInput("free_from_theta: empty coefficient vector");
  return theta.head(theta.size() - 1);
}

int dimension_schedule(double alpha, double n, int q) {
  if (!(alpha > 0.0)) throw InvalidInput(fmt::format("dimension_schedule: alpha {} <= 0", alpha));
  if (!(n >= 1.0)) throw InvalidInput(fmt::format("dimension_schedule: n {} < 1", n));
  const double e = 2.0 * alpha + 1.0;
  auto j = static_cast<long>(std::floor(std::pow(n, 1.0 / e)));
  // pow can land one ulp below an exact integer root.
  while (std::pow(static_cast<double>(j + 1), e) <= n) ++j;
  while (j > 1 && std::pow(static_cast<double>(j), e) > n) --j;
  return std::max(static_cast<int>(j), q);
}

double rate_schedule(double alpha, double n, bool log_factor) {
  if (!(alpha > 0.0)) throw InvalidInput(fmt::format("rate_schedule: alpha {} <= 0", alpha));
  if (!(n >= 1.0)) throw InvalidInput(fmt::format("rate_schedule: n {} < 1", n));
  const double r = std::pow(n, -alpha / (2.0 * alpha + 1.0));
  return log_factor ? r * std::sqrt(std::log(n)) : r;
}

std::string to_string(PriorKind kind) { return kind == PriorKind::kFlat ? "flat" : "net"; }

PriorKind parse_prior_kind(const std::string& s) {
  if (s == "flat") return PriorKind::kFlat;
  if (s == "net" || s == "discrete") return PriorKind::kNet;
  throw ConfigError(fmt::format("unknown prior kind '{}'", s));
}

double slice_log_volume(int J, double M) {
  if (J < 1) throw InvalidInput("slice_log_volume: J < 1");
  if (!(M > 0.0)) throw InvalidInput("slice_log_volume: M <= 0");
  const int m = J - 1;
  if (m == 0) return 0.0;
  // P(|sum of m U[-1,1]| <= 1) = F((m+1)/2) - F((m-1)/2) for the Irwin-Hall CDF F.
  using boost::multiprecision::cpp_int;
  using boost::multiprecision::cpp_rational;
  auto irwin_hall = [m](const cpp_rational& x) {
    cpp_rational acc = 0;
    cpp_int binom = 1;
    for (int k = 0; k <= m && cpp_rational(k) <= x; ++k) {
      cpp_rational term = x - k;
      cpp_rational pw = 1;
      for (int i = 0; i < m; ++i) pw *= term;
      acc += (k % 2 == 0 ? 1 : -1) * cpp_rational(binom) * pw;
      binom = binom * (m - k) / (k + 1);
    }
    cpp_int fact = 1;
    for (int i = 2; i <= m; ++i) fact *= i;
    return acc / cpp_rational(fact);
  };
  const cpp_rational p = irwin_hall(cpp_rational(m + 1, 2)) - irwin_hall(cpp_rational(m - 1, 2));
  // Logs of numerator and denominator separately; both can exceed the double range.
  const cpp_int num = boost::multiprecision::numerator(p);
  const cpp_int den = boost::multiprecision::denominator(p);
  auto log_big = [](const cpp_int& v) {
    const std::size_t bits = boost::multiprecision::msb(v);
    if (bits < 1000) return std::log(v.convert_to<double>());
    const std::size_t shift = bits - 900;
    const cpp_int top = v >> shift;
    return std::log(top.convert_to<double>()) + static_cast<double>(shift) * std::log(2.0);
  };
  return m * std::log(2.0 * M) + log_big(num) - log_big(den);
}

double lattice_log_count(int J, int m) {
  if (J < 1 || m < 0) throw InvalidInput("lattice_log_count: J < 1 or m < 0");
  // Distribution of partial sums, rescaled each step to stay in range.
  const int width = 2 * m + 1;
  std::vector<double> ways{1.0};
  double log_scale = 0.0;
  for (int j = 0; j < J; ++j) {
    std::vector<double> next(ways.size() + width - 1, 0.0);
    for (std::size_t s = 0; s < ways.size(); ++s) {
      if (ways[s] == 0.0) continue;
      for (int d = 0; d < width; ++d) next[s + d] += ways[s];
    }
    const double mx = *std::max_element(next.begin(), next.end());
    for (double& v : next) v /= mx;
    log_scale += std::log(mx);
    ways.swap(next);
  }
  // Offset of sum zero is J*m.
  return log_scale + std::log(ways[static_cast<std::size_t>(J) * m]);
}

CoefficientPrior CoefficientPrior::flat(int J, double M, std::optional<Tilt> tilt,
                                        std::uint64_t tilt_seed) {
  if (J < 1) throw InvalidInput(fmt::format("flat_prior: J = {} < 1", J));
  if (!(M > 0.0)) throw InvalidInput(fmt::format("flat_prior: M = {} <= 0", M));
  CoefficientPrior p;
  p.kind_ = PriorKind::kFlat;
  p.J_ = J;
  p.M_ = M;
  p.log_volume_ = slice_log_volume(J, M);
  if (tilt) {
    if (!tilt->g || !(tilt->lo <= tilt->hi))
      throw InvalidInput("flat_prior: tilt needs a function and lo <= hi");
    p.tilt_ = std::move(tilt);
    // Normalizing constant of the tilt under the uniform slice law, by Monte Carlo.
    CoefficientPrior base = p;
    base.tilt_.reset();
    Rng rng(derive_seed(tilt_seed, "prior.tilt_norm", static_cast<std::uint64_t>(J)));
    constexpr int kDraws = 200000;
    std::vector<double> g(kDraws);
    for (int i = 0; i < kDraws; ++i) g[i] = p.tilt_->g(base.sample(rng));
    p.log_tilt_norm_ = log_sum_exp(g) - std::log(static_cast<double>(kDraws));
  }
  return p;
}

CoefficientPrior CoefficientPrior::lattice(int J, double M, double spacing, std::size_t atom_cap) {
  if (J < 1) throw InvalidInput(fmt::format("net_prior: J = {} < 1", J));
  if (!(M > 0.0)) throw InvalidInput(fmt::format("net_prior: M = {} <= 0", M));
  if (!(spacing > 0.0)) throw InvalidInput(fmt::format("net_prior: spacing {} <= 0", spacing));
  CoefficientPrior p;
  p.kind_ = PriorKind::kNet;
  p.J_ = J;
  p.M_ = M;
  p.spacing_ = spacing;
  p.half_width_ = static_cast<int>(std::floor(M / spacing * (1.0 + 1e-12)));
  p.log_count_ = lattice_log_count(J, p.half_width_);
  p.atom_cap_ = atom_cap;
  return p;
}

CoefficientPrior CoefficientPrior::net(int J, double M, double eps, double spacing_factor,
                                       std::size_t atom_cap) {
  if (!(eps > 0.0)) throw InvalidInput(fmt::format("net_prior: eps {} <= 0", eps));
  if (!(spacing_factor > 0.0)) throw InvalidInput("net_prior: spacing factor <= 0");
  return lattice(J, M, spacing_factor * eps, atom_cap);
}

bool CoefficientPrior::in_box(const Eigen::VectorXd& theta, double tol) const {
  if (theta.size() != J_) return false;
  if (std::abs(theta.sum()) > tol * std::max(1.0, M_) * J_) return false;
  return theta.cwiseAbs().maxCoeff() <= M_ * (1.0 + tol);
}

bool CoefficientPrior::is_atom(const Eigen::VectorXd& theta) const {
  if (kind_ != PriorKind::kNet || !in_box(theta, 1e-9)) return false;
  long sum = 0;
  for (Eigen::Index j = 0; j < theta.size(); ++j) {
    const double k = theta[j] / spacing_;
    const double r = std::round(k);
    if (std::abs(k - r) > 1e-7 || std::abs(r) > half_width_) return false;
    sum += static_cast<long>(r);
  }
  return sum == 0;
}

double CoefficientPrior::log_density(const Eigen::VectorXd& theta) const {
  if (kind_ == PriorKind::kNet) return is_atom(theta) ? -log_count_ : kNegInf;
  if (!in_box(theta, 1e-12)) return kNegInf;
  double v = -log_volume_;
  if (tilt_) v += tilt_->g(theta) - log_tilt_norm_;
  return v;
}

std::pair<double, double> CoefficientPrior::density_bounds() const {
  if (kind_ == PriorKind::kNet) return {-log_count_ / J_, -log_count_ / J_};
  double lo = -log_volume_, hi = -log_volume_;
  if (tilt_) {
    lo += tilt_->lo - log_tilt_norm_;
    hi += tilt_->hi - log_tilt_norm_;
  }
  return {lo / J_, hi / J_};
}

Eigen::VectorXd CoefficientPrior::sample(Rng& rng) const {
  const int f = J_ - 1;
  if (kind_ == PriorKind::kNet) {
    const auto width = static_cast<std::uint64_t>(2 * half_width_ + 1);
    Eigen::VectorXd x(f);
    for (;;) {
      long sum = 0;
      for (int j = 0; j < f; ++j) {
        const long k = static_cast<long>(rng.below(width)) - half_width_;
        x[j] = static_cast<double>(k) * spacing_;
        sum += k;
      }
      if (std::abs(sum) <= half_width_) {
        Eigen::VectorXd theta(J_);
        theta.head(f) = x;
        theta[f] = -static_cast<double>(sum) * spacing_;
        return theta;
      }
    }
  }
  Eigen::VectorXd x(f);
  for (;;) {
    for (int j = 0; j < f; ++j) x[j] = rng.uniform(-M_, M_);
    if (std::abs(x.sum()) > M_) continue;
    Eigen::VectorXd theta = theta_from_free(x);
    if (tilt_ && rng.uniform() >= std::exp(tilt_->g(theta) - tilt_->hi)) continue;
    return theta;
  }
}

std::vector<Eigen::VectorXd> CoefficientPrior::atoms() const {
  if (kind_ != PriorKind::kNet) throw InvalidState("atoms: flat prior has no atoms");
  const double count = std::exp(log_count_);
  if (!(count <= static_cast<double>(atom_cap_)))
    throw ResourceError(
        fmt::format("net prior has {:.6g} atoms, more than the cap {}", count, atom_cap_), count);
  std::vector<Eigen::VectorXd> out;
  out.reserve(static_cast<std::size_t>(std::llround(count)));
  const int f = J_ - 1, m = half_width_;
  std::vector<int> k(f, -m);
  auto emit = [&](long sum) {
    if (std::abs(sum) > m) return;
    Eigen::VectorXd theta(J_);
    for (int j = 0; j < f; ++j) theta[j] = k[j] * spacing_;
    theta[f] = -static_cast<double>(sum) * spacing_;
    out.push_back(std::move(theta));
  };
  if (f == 0) {
    emit(0);
    return out;
  }
  for (;;) {
    emit(std::accumulate(k.begin(), k.end(), 0L));
    int j = f - 1;
    while (j >= 0 && k[j] == m) k[j--] = -m;
    if (j < 0) break;
    ++k[j];
  }
  return out;
}

Eigen::VectorXd CoefficientPrior::nearest_atom(const Eigen::VectorXd& theta) const {
  if (kind_ != PriorKind::kNet) throw InvalidState("nearest_atom: flat prior has no atoms");
  if (theta.size() != J_) throw InvalidInput("nearest_atom: dimension mismatch");
  const Eigen::VectorXd c = centered(theta);
  const int m = half_width_;
  std::vector<long> k(J_);
  std::vector<double> resid(J_);
  long sum = 0;
  for (int j = 0; j < J_; ++j) {
    const double v = std::clamp(c[j] / spacing_, -static_cast<double>(m), static_cast<double>(m));
    k[j] = std::lround(v);
    resid[j] = v - static_cast<double>(k[j]);
    sum += k[j];
  }
  // Largest-remainder correction restores sum zero, moving each coordinate at most once.
  std::vector<int> order(J_);
  std::iota(order.begin(), order.end(), 0);
  while (sum != 0) {
    const long dir = sum > 0 ? -1 : 1;
    std::sort(order.begin(), order.end(), [&](int a, int b) {
      return dir > 0 ? resid[a] > resid[b] : resid[a] < resid[b];
    });
    bool moved = false;
    for (int j : order) {
      if (sum == 0) break;
      if (std::abs(k[j] + dir) > m) continue;
      k[j] += dir;
      resid[j] -= static_cast<double>(dir);
      sum += dir;
      moved = true;
    }
    if (!moved) throw NumericDomain("nearest_atom: cannot balance lattice multipliers");
  }
  Eigen::VectorXd out(J_);
  for (int j = 0; j < J_; ++j) out[j] = static_cast<double>(k[j]) * spacing_;
  return out;
}

std::string to_string(WeightKind kind) {
  switch (kind) {
    case WeightKind::kConstant: return "constant";
    case WeightKind::kExponential: return "exponential";
    case WeightKind::kDecreasing: return "decreasing";
  }
  return "?";
}

WeightKind parse_weight_kind(const std::string& s) {
  if (s == "constant") return WeightKind::kConstant;
  if (s == "exponential") return WeightKind::kExponential;
  if (s == "decreasing") return WeightKind::kDecreasing;
  throw ConfigError(fmt::format("unknown weight scheme '{}'", s));
}

ModelWeights model_weights(const WeightScheme& scheme, std::span<const double> alphas, double n,
                           bool log_factor, int q) {
  if (alphas.empty()) throw InvalidInput("model_weights: empty index set");
  for (std::size_t i = 1; i < alphas.size(); ++i) {
    if (!(alphas[i] > alphas[i - 1]))
      throw InvalidInput("model_weights: indices must be strictly increasing");
  }
  const std::size_t A = alphas.size();
  if (!scheme.mu.empty() && scheme.mu.size() != A)
    throw InvalidInput(fmt::format("model_weights: {} base weights for {} indices",
                                   scheme.mu.size(), A));
  ModelWeights out;
  out.log_weights.resize(A);
  bool any = false;
  for (std::size_t i = 0; i < A; ++i) {
    const double mu = scheme.mu.empty() ? 1.0 : scheme.mu[i];
    if (!(mu >= 0.0) || !std::isfinite(mu))
      throw InvalidInput(fmt::format("model_weights: base weight {} invalid", mu));
    any = any || mu > 0.0;
    out.log_weights[i] = std::log(mu);
  }
  if (!any) throw InvalidInput("model_weights: all base weights are zero");

  switch (scheme.kind) {
    case WeightKind::kConstant:
      break;
    case WeightKind::kExponential:
      for (std::size_t i = 0; i < A; ++i) {
        const double eps = rate_schedule(alphas[i], n, log_factor);
        out.log_weights[i] -= scheme.C * n * eps * eps;
      }
      break;
    case WeightKind::kDecreasing: {
      double acc = 0.0;
      for (std::size_t i = 0; i < A; ++i) {
        out.log_weights[i] += acc;
        const double eps = rate_schedule(alphas[i], n, log_factor);
        const double ce = scheme.C * eps;
        if (ce >= 1.0 && !out.warning) {
          out.warning = true;
          out.message = fmt::format("C*eps = {:.4g} >= 1 at alpha = {}", ce, alphas[i]);
        }
        acc += dimension_schedule(alphas[i], n, q) * std::log(ce);
      }
      break;
    }
  }
  const double lse = log_sum_exp(out.log_weights);
  out.weights.resize(A);
  for (std::size_t i = 0; i < A; ++i) {
    out.log_weights[i] -= lse;
    out.weights[i] = std::exp(out.log_weights[i]);
  }
  return out;
}

HierarchicalPrior::HierarchicalPrior(std::vector<PriorComponent> components, double n,
                                     bool warning, std::string message)
    : components_(std::move(components)), n_(n), warning_(warning), message_(std::move(message)) {
  if (components_.empty()) throw InvalidInput("HierarchicalPrior: no components");
}

std::size_t HierarchicalPrior::sample_index(Rng& rng) const {
  const double u = rng.uniform();
  double acc = 0.0;
  std::size_t last = 0;
  for (std::size_t i = 0; i < components_.size(); ++i) {
    if (components_[i].weight <= 0.0) continue;
    acc += components_[i].weight;
    last = i;
    if (u < acc) return i;
  }
  return last;
}

std::pair<std::size_t, Eigen::VectorXd> HierarchicalPrior::sample(Rng& rng) const {
  const std::size_t i = sample_index(rng);
  return {i, components_[i].prior.sample(rng)};
}

HierarchicalPrior assemble(const HierarchicalPriorSpec& spec, double n) {
  const bool log_factor = spec.log_factor.value_or(spec.kind == PriorKind::kFlat);
  const ModelWeights w = model_weights(spec.scheme, spec.alphas, n, log_factor, spec.q);
  std::vector<PriorComponent> comps;
  comps.reserve(spec.alphas.size());
  for (std::size_t i = 0; i < spec.alphas.size(); ++i) {
    const double alpha = spec.alphas[i];
    const int J = dimension_schedule(alpha, n, spec.q);
    const double eps = rate_schedule(alpha, n, log_factor);
    CoefficientPrior prior = spec.kind == PriorKind::kFlat
                                 ? CoefficientPrior::flat(J, spec.M)
                                 : CoefficientPrior::net(J, spec.M, eps, spec.net_factor,
                                                         spec.atom_cap);
    comps.push_back(PriorComponent{alpha, J, eps, make_family(spec.q, J), std::move(prior),
                                   w.log_weights[i], w.weights[i]});
  }
  return HierarchicalPrior(std::move(comps), n, w.warning, w.message);
}

}  // namespace logspline
