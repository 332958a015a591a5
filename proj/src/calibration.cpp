#include "logspline/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <mutex>
#include <sstream>

#include <fmt/format.h>

#include "logspline/error.hpp"
#include "logspline/logspline_model.hpp"
#include "logspline/rng.hpp"
#include "logspline/simd/kernels.hpp"

#ifndef LOGSPLINE_DATA_DIR
#define LOGSPLINE_DATA_DIR "data"
#endif

namespace logspline {
namespace {

Eigen::VectorXd box_draw(Rng& rng, int J, double M) {
  Eigen::VectorXd t(J);
  for (int j = 0; j < J; ++j) t[j] = rng.uniform(-M, M);
  return project_to_box(t, M);
}

// log p_theta at the nodes of the family rule.
std::vector<double> log_density_nodes(const LogSplineFamily& fam, const Eigen::VectorXd& theta) {
  std::vector<double> e(fam.rule().size());
  fam.eta(theta.data(), e.data());
  const double c = fam.log_normalizer(theta);
  for (double& v : e) v -= c;
  return e;
}

double sup_abs_combination(const SplineBasis& basis, const Eigen::VectorXd& theta) {
  const int G = basis.K() * 64;
  double m = 0.0;
  for (int i = 0; i <= G; ++i) m = std::max(m, std::abs(basis.combine(theta, static_cast<double>(i) / G)));
  return m;
}

}  // namespace

double Calibration::F_lower() const { return std::exp(-c4_upper * M); }
double Calibration::F_upper() const { return std::exp(c4_upper * M); }

CalibrationSample measure_constants(int q, int J, double M, double M_pairs, int draws,
                                    std::uint64_t seed) {
  const FamilyPtr fam = make_family(q, J);
  const SplineBasis& basis = fam->basis();
  const auto& w = fam->rule().weights();
  const std::size_t nn = w.size();

  // Gram matrix int B B^T from the moments of the uniform member.
  const LogSplineFamily::Moments m0 = fam->moments(Eigen::VectorXd::Zero(J), true);
  const Eigen::MatrixXd gram = m0.cov + m0.mean * m0.mean.transpose();

  CalibrationSample out;
  out.J = J;
  out.c4_lower = std::numeric_limits<double>::infinity();
  out.r_min = std::numeric_limits<double>::infinity();

  Rng norm_rng(derive_seed(seed, "calibration.norms", static_cast<std::uint64_t>(J)));
  for (int d = 0; d < draws; ++d) {
    Eigen::VectorXd t(J);
    for (int j = 0; j < J; ++j) t[j] = norm_rng.normal();
    const double sup_f = sup_abs_combination(basis, t);
    out.c_inf = std::max(out.c_inf, t.cwiseAbs().maxCoeff() / sup_f);
    const double l2f = std::sqrt(J * t.dot(gram * t));
    out.l2_lower = std::max(out.l2_lower, t.norm() / l2f);
    out.l2_upper = std::max(out.l2_upper, l2f / t.norm());
  }

  Rng c4_rng(derive_seed(seed, "calibration.c4", static_cast<std::uint64_t>(J)));
  for (int d = 0; d < draws; ++d) {
    Eigen::VectorXd t = box_draw(c4_rng, J, M);
    const double scale = M * c4_rng.uniform_open() / t.cwiseAbs().maxCoeff();
    t *= scale;
    const double ratio = sup_log_density(*fam, t) / t.cwiseAbs().maxCoeff();
    out.c4_lower = std::min(out.c4_lower, ratio);
    out.c4_upper = std::max(out.c4_upper, ratio);
  }

  Rng pair_rng(derive_seed(seed, "calibration.pairs", static_cast<std::uint64_t>(J)));
  std::vector<double> p1(nn), p2(nn);
  for (int d = 0; d < draws; ++d) {
    const Eigen::VectorXd t1 = box_draw(pair_rng, J, M_pairs);
    const Eigen::VectorXd t2 = box_draw(pair_rng, J, M_pairs);
    const std::vector<double> l1 = log_density_nodes(*fam, t1);
    const std::vector<double> l2 = log_density_nodes(*fam, t2);
    double kl = 0.0, kl2 = 0.0;
    for (std::size_t k = 0; k < nn; ++k) {
      p1[k] = std::exp(l1[k]);
      p2[k] = std::exp(l2[k]);
      const double dl = l1[k] - l2[k];
      kl += w[k] * p1[k] * dl;
      kl2 += w[k] * p1[k] * dl * dl;
    }
    const double h2 = simd::kernels().hellinger_sq(w.data(), p1.data(), p2.data(), nn);
    const double r = h2 * J / (t1 - t2).squaredNorm();
    out.r_min = std::min(out.r_min, r);
    out.r_max = std::max(out.r_max, r);
    out.inclusion_B = std::max(out.inclusion_B, std::sqrt(std::max(kl, kl2) / h2));
  }
  return out;
}

Calibration calibrate(const CalibrationOptions& opt) {
  if (opt.dims.empty()) throw InvalidInput("calibrate: no dimensions given");
  Calibration cal;
  cal.q = opt.q;
  cal.M = opt.M;
  cal.M_pairs = opt.M_pairs;
  cal.c4_lower = std::numeric_limits<double>::infinity();
  cal.r_min = std::numeric_limits<double>::infinity();
  const int jmin = *std::min_element(opt.dims.begin(), opt.dims.end());
  const int jmax = *std::max_element(opt.dims.begin(), opt.dims.end());

  std::vector<CalibrationEntry> raw;
  for (int J : opt.dims) {
    const CalibrationSample s = measure_constants(opt.q, J, opt.M, opt.M_pairs, opt.draws, opt.seed);
    cal.c4_lower = std::min(cal.c4_lower, s.c4_lower);
    cal.c4_upper = std::max(cal.c4_upper, s.c4_upper);
    cal.c_inf = std::max(cal.c_inf, s.c_inf);
    cal.l2_lower = std::max(cal.l2_lower, s.l2_lower);
    cal.l2_upper = std::max(cal.l2_upper, s.l2_upper);
    cal.r_min = std::min(cal.r_min, s.r_min);
    cal.r_max = std::max(cal.r_max, s.r_max);
    cal.inclusion_B = std::max(cal.inclusion_B, s.inclusion_B);
    for (const auto& [name, v] : {std::pair<const char*, double>{"raw.c4_lower", s.c4_lower},
                                  {"raw.c4_upper", s.c4_upper},
                                  {"raw.c_inf", s.c_inf},
                                  {"raw.l2_lower", s.l2_lower},
                                  {"raw.l2_upper", s.l2_upper},
                                  {"raw.r_min", s.r_min},
                                  {"raw.r_max", s.r_max},
                                  {"raw.inclusion_B", s.inclusion_B}})
      raw.push_back({name, v, J, J, opt.seed});
  }
  cal.c4_lower /= opt.margin;
  cal.c4_upper *= opt.margin;
  cal.c_inf *= opt.margin;
  cal.l2_lower *= opt.margin;
  cal.l2_upper *= opt.margin;
  cal.r_min /= opt.margin;
  cal.r_max *= opt.margin;
  cal.inclusion_B *= opt.margin;

  const double q = opt.q;
  cal.entries = {{"q", q, jmin, jmax, opt.seed},
                 {"M", opt.M, jmin, jmax, opt.seed},
                 {"M_pairs", opt.M_pairs, jmin, jmax, opt.seed},
                 {"c4_lower", cal.c4_lower, jmin, jmax, opt.seed},
                 {"c4_upper", cal.c4_upper, jmin, jmax, opt.seed},
                 {"c_inf", cal.c_inf, jmin, jmax, opt.seed},
                 {"l2_lower", cal.l2_lower, jmin, jmax, opt.seed},
                 {"l2_upper", cal.l2_upper, jmin, jmax, opt.seed},
                 {"r_min", cal.r_min, jmin, jmax, opt.seed},
                 {"r_max", cal.r_max, jmin, jmax, opt.seed},
                 {"inclusion_B", cal.inclusion_B, jmin, jmax, opt.seed}};
  cal.entries.insert(cal.entries.end(), raw.begin(), raw.end());
  return cal;
}

void write_calibration(const Calibration& cal, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw InvalidInput(fmt::format("cannot write calibration file {}", path));
  out << "# name value j_range seed\n";
  for (const auto& e : cal.entries)
    out << fmt::format("{} {:.17g} {}-{} {}\n", e.name, e.value, e.j_min, e.j_max, e.seed);
}

Calibration read_calibration(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidState(fmt::format("calibration file {} not found", path));
  Calibration cal;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    CalibrationEntry e;
    std::string range;
    if (!(ss >> e.name >> e.value >> range >> e.seed))
      throw InvalidInput(fmt::format("{}:{}: malformed calibration line", path, lineno));
    const auto dash = range.find('-');
    if (dash == std::string::npos)
      throw InvalidInput(fmt::format("{}:{}: malformed J range '{}'", path, lineno, range));
    e.j_min = std::stoi(range.substr(0, dash));
    e.j_max = std::stoi(range.substr(dash + 1));
    cal.entries.push_back(e);

    if (e.name == "q") cal.q = static_cast<int>(e.value);
    else if (e.name == "M") cal.M = e.value;
    else if (e.name == "M_pairs") cal.M_pairs = e.value;
    else if (e.name == "c4_lower") cal.c4_lower = e.value;
    else if (e.name == "c4_upper") cal.c4_upper = e.value;
    else if (e.name == "c_inf") cal.c_inf = e.value;
    else if (e.name == "l2_lower") cal.l2_lower = e.value;
    else if (e.name == "l2_upper") cal.l2_upper = e.value;
    else if (e.name == "r_min") cal.r_min = e.value;
    else if (e.name == "r_max") cal.r_max = e.value;
    else if (e.name == "inclusion_B") cal.inclusion_B = e.value;
  }
  if (!(cal.c4_lower > 0.0 && cal.c4_upper > 0.0))
    throw InvalidInput(fmt::format("{}: missing C4 constants", path));
  return cal;
}

std::string calibration_path() {
  if (const char* env = std::getenv("LOGSPLINE_CALIBRATION")) return env;
  return std::string(LOGSPLINE_DATA_DIR) + "/calibration.txt";
}

const Calibration& frozen_calibration() {
  static std::once_flag once;
  static Calibration cal;
  std::call_once(once, [] { cal = read_calibration(calibration_path()); });
  return cal;
}

}  // namespace logspline
