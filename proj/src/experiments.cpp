#include "logspline/experiments.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <tuple>

#include <boost/math/distributions/students_t.hpp>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <fmt/format.h>
#include <fmt/ranges.h>
#include <nlohmann/json.hpp>

#include "logspline/error.hpp"

namespace logspline {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

template <class T>
T parse_number(const std::string& key, const std::string& raw) {
  const std::string s = trim(raw);
  T v{};
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size())
    throw ConfigError(fmt::format("config: {} = '{}' is not a valid number", key, raw));
  if constexpr (std::is_floating_point_v<T>) {
    if (!std::isfinite(v)) throw ConfigError(fmt::format("config: {} must be finite", key));
  }
  return v;
}

template <class T>
std::vector<T> parse_list(const std::string& key, const std::string& raw) {
  std::vector<T> out;
  std::stringstream ss(raw);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_number<T>(key, item));
  if (trim(raw).empty()) out.clear();
  return out;
}

template <class T>
std::string join(const std::vector<T>& v) {
  return fmt::format("{}", fmt::join(v, ", "));
}

struct Field {
  std::string section;
  std::string key;
  std::function<std::string()> get;
  std::function<void(const std::string&)> set;
};

template <class T>
Field number(const char* section, const char* key, T& ref) {
  const std::string name = fmt::format("{}.{}", section, key);
  return {section, key, [&ref] { return fmt::format("{}", ref); },
          [&ref, name](const std::string& s) { ref = parse_number<T>(name, s); }};
}

template <class T>
Field list(const char* section, const char* key, std::vector<T>& ref) {
  const std::string name = fmt::format("{}.{}", section, key);
  return {section, key, [&ref] { return join(ref); },
          [&ref, name](const std::string& s) { ref = parse_list<T>(name, s); }};
}

Field text(const char* section, const char* key, std::string& ref) {
  return {section, key, [&ref] { return ref; }, [&ref](const std::string& s) { ref = trim(s); }};
}

Field prior_kind(const char* section, const char* key, PriorKind& ref) {
  const std::string name = fmt::format("{}.{}", section, key);
  return {section, key, [&ref] { return to_string(ref); },
          [&ref, name](const std::string& s) {
            try {
              ref = parse_prior_kind(trim(s));
            } catch (const Error& e) {
              throw ConfigError(fmt::format("config: {}: {}", name, e.what()));
            }
          }};
}

Field weight_kind(const char* section, const char* key, WeightKind& ref) {
  const std::string name = fmt::format("{}.{}", section, key);
  return {section, key, [&ref] { return to_string(ref); },
          [&ref, name](const std::string& s) {
            try {
              ref = parse_weight_kind(trim(s));
            } catch (const Error& e) {
              throw ConfigError(fmt::format("config: {}: {}", name, e.what()));
            }
          }};
}

std::vector<Field> fields(ExperimentConfig& c) {
  return {
      text("experiment", "kind", c.kind),
      number("experiment", "seed", c.seed),
      list("experiment", "n_grid", c.n_grid),
      number("experiment", "reps", c.reps),

      text("truth", "kind", c.truth),
      number("truth", "beta", c.truth_beta),
      number("truth", "seed", c.truth_seed),
      number("truth", "amplitude", c.truth_amplitude),
      number("truth", "phi", c.truth_phi),
      number("truth", "J", c.truth_J),

      prior_kind("prior", "kind", c.prior),
      list("prior", "alphas", c.alphas),
      weight_kind("prior", "weights", c.weights),
      list("prior", "mu", c.mu),
      number("prior", "net_factor", c.net_factor),
      text("prior", "log_factor", c.log_factor),
      number("prior", "atom_cap", c.atom_cap),

      number("constants", "M", c.M),
      number("constants", "q", c.q),
      number("constants", "H", c.H),
      number("constants", "I", c.I),
      number("constants", "B", c.B),
      number("constants", "L", c.L),
      number("constants", "C", c.C),
      number("constants", "F", c.F),
      number("constants", "IB", c.ib),
      number("constants", "kl_factor", c.kl_factor),

      number("mc", "n_is", c.n_is),
      number("mc", "mcmc_steps", c.mcmc_steps),
      number("mc", "burn_fraction", c.burn_fraction),
      number("mc", "independence", c.independence),
      number("mc", "mass_draws", c.mass_draws),
      number("mc", "exact_atom_cap", c.exact_atom_cap),

      number("bf", "null_lo", c.null_lo),
      number("bf", "null_hi", c.null_hi),
      number("bf", "alt_alpha", c.alt_alpha),
      prior_kind("bf", "alt_prior", c.alt_prior),
      number("bf", "w_alt", c.w_alt),
      number("bf", "w_null", c.w_null),

      list("audit", "i_grid", c.i_grid),

      number("entropy", "max_dim", c.max_dim),
      number("entropy", "grid", c.entropy_grid),

      list("calibrate", "dims", c.cal_dims),
      number("calibrate", "draws", c.cal_draws),
      number("calibrate", "M_pairs", c.cal_M_pairs),
      number("calibrate", "margin", c.cal_margin),

      text("output", "dir", c.out_dir),
  };
}

const std::vector<std::string> kSectionOrder{"experiment", "truth",   "prior",     "constants",
                                             "mc",         "bf",      "audit",     "entropy",
                                             "calibrate",  "output"};

std::set<std::string> required_sections(const std::string& kind) {
  if (kind == "rates") return {"experiment", "truth", "prior", "constants"};
  if (kind == "bf") return {"experiment", "truth", "bf"};
  if (kind == "audit") return {"experiment", "truth", "prior", "constants"};
  if (kind == "entropy") return {"experiment", "prior", "constants"};
  if (kind == "calibrate") return {"experiment", "calibrate"};
  throw ConfigError(fmt::format("config: unknown experiment kind '{}'", kind));
}

double median_of(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

// Linear interpolation between order statistics.
double quantile_of(std::vector<double> v, double p) {
  std::sort(v.begin(), v.end());
  const double h = p * static_cast<double>(v.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

bool strictly_decreasing(const std::vector<double>& v) {
  for (std::size_t i = 1; i < v.size(); ++i)
    if (!(v[i] < v[i - 1])) return false;
  return v.size() >= 2;
}

std::string g17(double x) { return fmt::format("{:.17g}", x); }

bool resolved_log_factor(const ExperimentConfig& cfg) {
  if (cfg.log_factor == "auto") return cfg.prior == PriorKind::kFlat;
  return cfg.log_factor == "true";
}

}  // namespace

void validate_config(const ExperimentConfig& c) {
  (void)required_sections(c.kind);
  if (c.n_grid.empty()) throw ConfigError("config: experiment.n_grid is empty");
  for (std::size_t i = 0; i < c.n_grid.size(); ++i) {
    if (c.n_grid[i] < 2) throw ConfigError("config: experiment.n_grid entries must be >= 2");
    if (i > 0 && c.n_grid[i] <= c.n_grid[i - 1])
      throw ConfigError("config: experiment.n_grid must be strictly increasing");
  }
  if (c.reps < 1) throw ConfigError("config: experiment.reps must be >= 1");
  if (c.truth != "hoelder" && c.truth != "analytic" && c.truth != "tilted" && c.truth != "spline")
    throw ConfigError(fmt::format("config: unknown truth.kind '{}'", c.truth));
  if (c.truth == "spline" && c.truth_J < c.q)
    throw ConfigError("config: truth.J must be at least constants.q");
  if (c.truth == "hoelder" && !(c.truth_beta > 0.0 && c.truth_beta <= 4.0))
    throw ConfigError("config: truth.beta must lie in (0, 4]");
  if (c.alphas.empty()) throw ConfigError("config: prior.alphas is empty");
  for (std::size_t i = 0; i < c.alphas.size(); ++i) {
    if (!(c.alphas[i] > 0.0)) throw ConfigError("config: prior.alphas must be positive");
    if (i > 0 && c.alphas[i] <= c.alphas[i - 1])
      throw ConfigError("config: prior.alphas must be strictly increasing");
  }
  if (!c.mu.empty() && c.mu.size() != c.alphas.size())
    throw ConfigError("config: prior.mu must be empty or match prior.alphas");
  for (double m : c.mu)
    if (!(m > 0.0)) throw ConfigError("config: prior.mu must be positive");
  if (c.log_factor != "auto" && c.log_factor != "true" && c.log_factor != "false")
    throw ConfigError("config: prior.log_factor must be auto, true or false");
  if (!(c.net_factor > 0.0)) throw ConfigError("config: prior.net_factor must be positive");
  if (!(c.M > 0.0)) throw ConfigError("config: constants.M must be positive");
  if (c.q < 1) throw ConfigError("config: constants.q must be >= 1");
  if (!(c.H >= 1.0)) throw ConfigError("config: constants.H must be >= 1");
  if (!(c.I > 0.0) || !(c.B > 0.0) || !(c.ib > 0.0) || !(c.kl_factor > 0.0))
    throw ConfigError("config: constants I, B, IB and kl_factor must be positive");
  if (c.L < 0.0 || c.C < 0.0 || c.F < 0.0)
    throw ConfigError("config: constants L, C and F must be nonnegative");
  if (c.n_is < 10 || c.mcmc_steps < 10 || c.mass_draws < 10)
    throw ConfigError("config: Monte Carlo sizes must be >= 10");
  if (!(c.burn_fraction >= 0.0 && c.burn_fraction < 1.0))
    throw ConfigError("config: mc.burn_fraction must lie in [0, 1)");
  if (!(c.independence >= 0.0 && c.independence < 1.0))
    throw ConfigError("config: mc.independence must lie in [0, 1)");
  if (!(c.null_lo < c.null_hi)) throw ConfigError("config: bf.null_lo must be below bf.null_hi");
  if (!(c.alt_alpha > 0.0)) throw ConfigError("config: bf.alt_alpha must be positive");
  if (!(c.w_alt > 0.0) || !(c.w_null > 0.0))
    throw ConfigError("config: bf weights must be positive");
  if (c.i_grid.empty()) throw ConfigError("config: audit.i_grid is empty");
  for (double i : c.i_grid)
    if (!(i > 0.0)) throw ConfigError("config: audit.i_grid must be positive");
  if (c.max_dim < 1 || c.entropy_grid < 1)
    throw ConfigError("config: entropy.max_dim and entropy.grid must be >= 1");
  if (c.cal_dims.empty() || c.cal_draws < 1)
    throw ConfigError("config: calibrate needs dims and draws >= 1");
  if (!(c.cal_M_pairs > 0.0) || !(c.cal_margin >= 1.0))
    throw ConfigError("config: calibrate.M_pairs must be positive and margin >= 1");
  if (c.out_dir.empty()) throw ConfigError("config: output.dir is empty");
}

ExperimentConfig parse_config(const std::string& text) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    std::istringstream in(text);
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(fmt::format("config: {}", e.what()));
  }

  ExperimentConfig cfg;
  std::map<std::string, std::map<std::string, Field*>> index;
  std::vector<Field> table = fields(cfg);
  for (Field& f : table) index[f.section][f.key] = &f;

  // read_ini drops a trailing empty section, so headers are collected from the text.
  std::set<std::string> present;
  {
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
      const std::string t = trim(line);
      if (t.size() >= 2 && t.front() == '[' && t.back() == ']') {
        const std::string name = trim(t.substr(1, t.size() - 2));
        if (!index.count(name)) throw ConfigError(fmt::format("config: unknown section [{}]", name));
        present.insert(name);
      }
    }
  }
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty())
      throw ConfigError(fmt::format("config: key '{}' outside a section", section));
    const auto sit = index.find(section);
    if (sit == index.end()) throw ConfigError(fmt::format("config: unknown section [{}]", section));
    for (const auto& [key, value] : body) {
      const auto kit = sit->second.find(key);
      if (kit == sit->second.end())
        throw ConfigError(fmt::format("config: unknown key '{}' in [{}]", key, section));
      kit->second->set(value.data());
    }
  }

  for (const std::string& s : required_sections(cfg.kind))
    if (!present.count(s))
      throw ConfigError(fmt::format("config: {} experiment needs a [{}] section", cfg.kind, s));
  validate_config(cfg);
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("config: cannot open '{}'", path));
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string serialize_config(const ExperimentConfig& cfg) {
  ExperimentConfig copy = cfg;
  const std::vector<Field> table = fields(copy);
  std::string out;
  for (const std::string& section : kSectionOrder) {
    out += fmt::format("[{}]\n", section);
    for (const Field& f : table)
      if (f.section == section) out += fmt::format("{} = {}\n", f.key, f.get());
    out += "\n";
  }
  return out;
}

ExperimentConfig default_config(const std::string& kind) {
  ExperimentConfig c;
  c.kind = kind;
  if (kind == "bf") {
    c.truth = "tilted";
    c.truth_phi = 0.8;
    c.n_grid = {250, 500, 1000, 2000};
    c.reps = 10;
  } else if (kind == "audit") {
    c.truth_seed = 7;
    c.truth_amplitude = 1.0;
    c.B = 10.0;
    c.i_grid = {3.0, 4.0};
    c.mass_draws = 4000;
  }
  (void)required_sections(kind);
  return c;
}

TruthSpec make_truth(const ExperimentConfig& cfg) {
  if (cfg.truth == "hoelder") return hoelder_truth(cfg.truth_beta, cfg.truth_seed, cfg.truth_amplitude);
  if (cfg.truth == "analytic") return analytic_truth(cfg.truth_amplitude);
  if (cfg.truth == "tilted") return tilted_uniform_truth(cfg.truth_phi);
  if (cfg.truth == "spline") {
    Rng rng(derive_seed(cfg.truth_seed, "truth.spline"));
    Eigen::VectorXd theta(cfg.truth_J);
    for (int j = 0; j < cfg.truth_J; ++j) theta[j] = rng.uniform(-1.0, 1.0);
    theta.array() -= theta.mean();
    theta *= cfg.truth_amplitude / theta.cwiseAbs().maxCoeff();
    return spline_member_truth(make_family(cfg.q, cfg.truth_J), theta);
  }
  throw ConfigError(fmt::format("config: unknown truth.kind '{}'", cfg.truth));
}

HierarchicalPriorSpec prior_spec(const ExperimentConfig& cfg) {
  HierarchicalPriorSpec s;
  s.alphas = cfg.alphas;
  s.scheme = {cfg.weights, cfg.mu, cfg.C};
  s.kind = cfg.prior;
  s.M = cfg.M;
  s.q = cfg.q;
  if (cfg.log_factor != "auto") s.log_factor = cfg.log_factor == "true";
  s.net_factor = cfg.net_factor;
  s.atom_cap = cfg.atom_cap;
  return s;
}

std::size_t beta_index(const ExperimentConfig& cfg) {
  for (std::size_t i = 0; i < cfg.alphas.size(); ++i)
    if (std::abs(cfg.alphas[i] - cfg.truth_beta) <= 1e-12 * std::max(1.0, cfg.truth_beta)) return i;
  throw ConfigError(
      fmt::format("config: truth.beta = {} is not among prior.alphas", cfg.truth_beta));
}

void ResultTable::sort() {
  auto key = [](const auto& r) { return std::tie(r.n, r.rep, r.metric); };
  std::stable_sort(rows.begin(), rows.end(),
                   [&](const ResultRow& a, const ResultRow& b) { return key(a) < key(b); });
  std::stable_sort(failures.begin(), failures.end(),
                   [&](const CellFailure& a, const CellFailure& b) { return key(a) < key(b); });
}

std::string ResultTable::csv() const {
  std::string out = "experiment,n,rep,seed,metric,value,std_error\n";
  for (const ResultRow& r : rows)
    out += fmt::format("{},{},{},{},{},{},{}\n", r.experiment, r.n, r.rep, r.seed, r.metric,
                       g17(r.value), g17(r.std_error));
  return out;
}

ExponentFit fit_exponent(const std::vector<std::pair<double, double>>& points) {
  std::set<double> distinct;
  for (const auto& [n, v] : points) {
    if (!(n > 0.0) || !std::isfinite(n))
      throw InvalidInput(fmt::format("fit_exponent: n = {} must be positive", n));
    if (!(v > 0.0) || !std::isfinite(v))
      throw InvalidInput(fmt::format("fit_exponent: value {} at n = {} is not positive", v, n));
    distinct.insert(n);
  }
  if (distinct.size() < 3)
    throw InvalidInput(fmt::format(
        "fit_exponent: need at least 3 distinct n to fit an exponent, got {}", distinct.size()));

  const double k = static_cast<double>(points.size());
  double mx = 0.0, my = 0.0;
  for (const auto& [n, v] : points) {
    mx += std::log(n);
    my += std::log(v);
  }
  mx /= k;
  my /= k;
  double sxx = 0.0, sxy = 0.0;
  for (const auto& [n, v] : points) {
    const double dx = std::log(n) - mx;
    sxx += dx * dx;
    sxy += dx * (std::log(v) - my);
  }
  ExponentFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  fit.points = points.size();
  double rss = 0.0;
  for (const auto& [n, v] : points) {
    const double r = std::log(v) - fit.intercept - fit.slope * std::log(n);
    rss += r * r;
  }
  const double dof = k - 2.0;
  const boost::math::students_t t(dof);
  fit.half_width = boost::math::quantile(t, 0.975) * std::sqrt(rss / dof / sxx);
  return fit;
}

std::vector<std::pair<double, double>> metric_medians(const ResultTable& t,
                                                      const std::string& metric) {
  std::map<std::size_t, std::vector<double>> by_n;
  for (const ResultRow& r : t.rows)
    if (r.metric == metric) by_n[r.n].push_back(r.value);
  std::vector<std::pair<double, double>> out;
  for (const auto& [n, v] : by_n) out.emplace_back(static_cast<double>(n), median_of(v));
  return out;
}

RatesResult run_rates(const ExperimentConfig& cfg, int jobs) {
  validate_config(cfg);
  const TruthSpec truth = make_truth(cfg);
  const std::size_t beta = beta_index(cfg);
  const HierarchicalPriorSpec spec = prior_spec(cfg);

  PosteriorOptions popt;
  popt.evidence.n_is = cfg.n_is;
  popt.evidence.exact_atom_cap = cfg.exact_atom_cap;
  popt.mcmc.steps = cfg.mcmc_steps;
  popt.mcmc.burn_fraction = cfg.burn_fraction;
  popt.mcmc.independence = cfg.independence;

  const std::size_t reps = static_cast<std::size_t>(cfg.reps);
  const std::size_t cells = cfg.n_grid.size() * reps;
  std::vector<std::vector<ResultRow>> rows(cells);
  std::vector<std::string> errors(cells);

  parallel_for(cells, jobs, [&](std::size_t cell) {
    const std::size_t n = cfg.n_grid[cell / reps];
    const int rep = static_cast<int>(cell % reps);
    const std::uint64_t seed = derive_seed(cfg.seed, "rates", n, static_cast<std::uint64_t>(rep));
    try {
      const HierarchicalPrior hp = assemble(spec, static_cast<double>(n));
      Rng data_rng(derive_seed(seed, "rates.data"));
      const std::vector<double> data = truth.truth.sample(data_rng, n);
      const PosteriorSummary ps = compute_posterior(hp, data, derive_seed(seed, "rates.posterior"), popt);

      const double eps_beta = hp[beta].eps;
      const BallMass outside = posterior_ball_mass(ps, hp, truth.truth, cfg.ib * eps_beta);
      const double radius = contraction_radius(ps, hp, truth.truth, 0.5);
      double oversized = 0.0;
      for (std::size_t a = 0; a < hp.size(); ++a)
        if (hp[a].eps * hp[a].eps > cfg.H * eps_beta * eps_beta) oversized += ps.model_posterior[a];

      auto row = [&](const char* metric, double v, double se) {
        return ResultRow{"rates", n, rep, seed, metric, v, se};
      };
      rows[cell] = {row("outside_mass", outside.mass, outside.std_error),
                    row("oversized_mass", oversized, 0.0), row("radius_median", radius, 0.0)};
    } catch (const Error& e) {
      errors[cell] = e.what();
    }
  });

  RatesResult out;
  for (std::size_t cell = 0; cell < cells; ++cell) {
    if (!errors[cell].empty()) {
      const std::size_t n = cfg.n_grid[cell / reps];
      const int rep = static_cast<int>(cell % reps);
      for (const std::string& m : kRateMetrics) out.table.failures.push_back({n, rep, m, errors[cell]});
    }
    for (ResultRow& r : rows[cell]) out.table.rows.push_back(std::move(r));
  }
  out.table.sort();

  const auto radius = metric_medians(out.table, "radius_median");
  const auto oversized = metric_medians(out.table, "oversized_mass");
  for (const auto& p : radius) out.median_radius.push_back(p.second);
  for (const auto& p : oversized) out.median_oversized.push_back(p.second);
  try {
    out.fit = fit_exponent(radius);
  } catch (const InvalidInput& e) {
    out.fit_error = e.what();
  }
  return out;
}

BfResult run_bf(const ExperimentConfig& cfg, int jobs) {
  validate_config(cfg);
  const TruthSpec truth = make_truth(cfg);
  const ParametricNull null(cfg.null_lo, cfg.null_hi);
  AlternativeSpec alt;
  alt.alpha = cfg.alt_alpha;
  alt.q = cfg.q;
  alt.M = cfg.M;
  alt.kind = cfg.alt_prior;
  alt.net_factor = cfg.net_factor;
  alt.evidence.n_is = cfg.n_is;
  alt.evidence.exact_atom_cap = cfg.exact_atom_cap;
  BfTrajectoryOptions opt;
  opt.n_grid = cfg.n_grid;
  opt.reps = cfg.reps;
  opt.seed = cfg.seed;
  opt.w_alt = cfg.w_alt;
  opt.w_null = cfg.w_null;
  opt.jobs = jobs;

  BfResult out;
  out.rows = bf_trajectory(truth.truth, null, alt, opt);
  for (std::size_t n : cfg.n_grid) {
    std::vector<double> v;
    for (const BfRow& r : out.rows)
      if (r.n == n) v.push_back(r.log_bf);
    BfResult::Quartiles q;
    q.n = n;
    q.q1 = quantile_of(v, 0.25);
    q.median = quantile_of(v, 0.5);
    q.q3 = quantile_of(v, 0.75);
    q.positive_share =
        static_cast<double>(std::count_if(v.begin(), v.end(), [](double x) { return x > 0.0; })) /
        static_cast<double>(v.size());
    out.by_n.push_back(q);
  }
  return out;
}

std::string bf_csv(const std::vector<BfRow>& rows) {
  std::string out = "n,rep,seed,log_bf,se,log_z_null,log_z_alt\n";
  for (const BfRow& r : rows)
    out += fmt::format("{},{},{},{},{},{},{}\n", r.n, r.rep, r.seed, g17(r.log_bf), g17(r.se),
                       g17(r.log_z_null), g17(r.log_z_alt));
  return out;
}

AuditResult run_audit(const ExperimentConfig& cfg, int jobs) {
  validate_config(cfg);
  const TruthSpec truth = make_truth(cfg);
  const std::size_t beta = beta_index(cfg);
  const HierarchicalPriorSpec spec = prior_spec(cfg);
  const bool log_factor = resolved_log_factor(cfg);
  const std::size_t na = cfg.alphas.size();

  AuditResult out;
  out.vacuous = na == 1;
  out.mass.resize(cfg.n_grid.size());
  out.entropy.resize(cfg.n_grid.size() * na);
  std::vector<std::vector<AuditRow>> rows(cfg.n_grid.size());
  std::vector<double> identity_err(cfg.n_grid.size(), 0.0);
  std::vector<ConditionConstants> constants(cfg.n_grid.size());

  parallel_for(cfg.n_grid.size(), jobs, [&](std::size_t k) {
    const std::size_t n = cfg.n_grid[k];
    const double nd = static_cast<double>(n);
    const HierarchicalPrior hp = assemble(spec, nd);
    std::vector<AuditRow>& rk = rows[k];

    ConditionConstants cc;
    cc.B = cfg.B;
    cc.H = cfg.H;
    cc.I = cfg.I;
    cc.L = cfg.L;
    cc.F = cfg.F;
    cc.mu = cfg.mu;
    const double eb2 = hp[beta].eps * hp[beta].eps;
    for (std::size_t a = 0; a < na; ++a) {
      EntropyAuditOptions eo;
      eo.grid = cfg.entropy_grid;
      eo.log_factor = log_factor;
      EntropyReport rep = entropy_audit(cfg.alphas[a], nd, cfg.q, cfg.M, eo);
      const double ea2 = rep.eps_n * rep.eps_n;
      const double E_alpha = rep.E_max * rep.J / (nd * ea2);
      cc.E_alpha.push_back(E_alpha);
      if (ea2 > cfg.H * eb2)
        cc.E_lower = std::max(cc.E_lower, E_alpha);
      else
        cc.E = std::max(cc.E, E_alpha * ea2 / eb2);
      rk.push_back({n, "entropy", cfg.alphas[a], 0.0, std::log(rep.E_max), std::log(3.0 * rep.E_min),
                    rep.finite && rep.stable});
      out.entropy[k * na + a] = std::move(rep);
    }
    constants[k] = cc;

    if (na > 1) {
      PriorMassAuditOptions po;
      po.kl_factor = cfg.kl_factor;
      po.mass.draws = cfg.mass_draws;
      po.mass.exact_atom_cap = cfg.exact_atom_cap;
      po.seed = derive_seed(cfg.seed, "audit", n);
      PriorMassAudit pm = prior_mass_audit(hp, truth.truth, beta, cc, cfg.i_grid, po);
      for (const PriorMassRow& r : pm.rows)
        rk.push_back({n, r.smaller ? "mass_smaller" : "mass_larger", r.alpha, r.i, r.log_lhs, r.log_rhs, r.satisfied});
      rk.push_back({n, "small_models", 0.0, cfg.I * cfg.B, pm.log_sum_small, pm.log_target_small,
                    pm.smaller_empty || pm.log_ratio_small < 0.0});
      rk.push_back({n, "kl_mass", cfg.alphas[beta], cfg.kl_factor, pm.log_kl_mass, pm.log_kl_target,
                    pm.kl_mass_ok});
      for (std::size_t a = 0; a < pm.log_weight_ratios.size(); ++a)
        rk.push_back({n, "weights", cfg.alphas[a], 0.0, pm.log_weight_ratios[a], pm.log_weight_bounds[a],
                      pm.log_weight_ratios[a] <= pm.log_weight_bounds[a]});
      rk.push_back({n, "weighted_sum", 0.0, 0.0, pm.log_sum_weighted, pm.log_target_weighted, pm.log_ratio_weighted < 0.0});
      out.mass[k] = std::move(pm);

      const WeightScheme scheme{cfg.weights, cfg.mu, cfg.C};
      for (const WeightRatioIdentity& w :
           weight_ratio_identity(scheme, cfg.alphas, beta, nd, cfg.F, cfg.q))
        identity_err[k] = std::max(identity_err[k], std::abs(w.lhs - w.rhs));
    }
  });

  for (auto& rk : rows)
    for (AuditRow& r : rk) out.rows.push_back(std::move(r));
  out.identity_max_error = *std::max_element(identity_err.begin(), identity_err.end());

  ConditionConstants worst = constants.front();
  for (const ConditionConstants& cc : constants) {
    worst.E = std::max(worst.E, cc.E);
    worst.E_lower = std::max(worst.E_lower, cc.E_lower);
  }
  out.gate = theorem_gate(worst);

  if (!out.vacuous) {
    std::vector<double> ratios;
    for (const PriorMassAudit& pm : out.mass) ratios.push_back(pm.log_ratio_small);
    out.small_model_trend_decreasing = strictly_decreasing(ratios);
  }
  return out;
}

std::string audit_csv(const AuditResult& r) {
  std::string out = "n,condition,alpha,i,log_lhs,log_rhs,satisfied\n";
  for (const AuditRow& a : r.rows)
    out += fmt::format("{},{},{},{},{},{},{}\n", a.n, a.condition, g17(a.alpha), g17(a.i),
                       g17(a.log_lhs), g17(a.log_rhs), a.satisfied ? 1 : 0);
  return out;
}

EntropyResult run_entropy(const ExperimentConfig& cfg) {
  validate_config(cfg);
  EntropyResult out;
  const double half_log_2pie = 0.5 * std::log(2.0 * M_PI * M_E);
  for (int J = 1; J <= cfg.max_dim; ++J) {
    EntropyTableRow row;
    row.J = J;
    row.log_volume = log_ball_volume(J);
    row.log_scaled = 0.5 * J * std::log(static_cast<double>(J)) + row.log_volume;
    row.asymptotic_ratio =
        std::exp(row.log_scaled + 0.5 * std::log(M_PI * J) - J * half_log_2pie);
    row.log_cover_sup = covering_number_box(J, cfg.M, cfg.M / 10.0, CoverNorm::kSup).log_count;
    out.rows.push_back(row);
  }
  out.increasing = true;
  for (std::size_t i = 1; i < out.rows.size(); ++i)
    if (!(out.rows[i].log_scaled > out.rows[i - 1].log_scaled)) out.increasing = false;

  EntropyAuditOptions eo;
  eo.grid = cfg.entropy_grid;
  eo.log_factor = resolved_log_factor(cfg);
  for (std::size_t n : cfg.n_grid)
    for (double a : cfg.alphas)
      out.audits.push_back(entropy_audit(a, static_cast<double>(n), cfg.q, cfg.M, eo));
  return out;
}

std::string entropy_csv(const EntropyResult& r) {
  std::string out = "J,log_volume,log_scaled,asymptotic_ratio,log_cover_sup\n";
  for (const EntropyTableRow& e : r.rows)
    out += fmt::format("{},{},{},{},{}\n", e.J, g17(e.log_volume), g17(e.log_scaled),
                       g17(e.asymptotic_ratio), g17(e.log_cover_sup));
  return out;
}

std::string entropy_audit_csv(const EntropyResult& r) {
  std::string out = "alpha,n,J,eps,log_cover,implied_E,ball_bound\n";
  for (const EntropyReport& rep : r.audits)
    for (const EntropyRow& row : rep.rows)
      out += fmt::format("{},{},{},{},{},{},{}\n", g17(rep.alpha), g17(rep.n), rep.J, g17(row.eps),
                         g17(row.log_cover), g17(row.implied_E), row.ball_bound ? 1 : 0);
  return out;
}

Calibration run_calibrate(const ExperimentConfig& cfg) {
  validate_config(cfg);
  CalibrationOptions opt;
  opt.seed = cfg.seed;
  opt.dims = cfg.cal_dims;
  opt.draws = cfg.cal_draws;
  opt.q = cfg.q;
  opt.M = cfg.M;
  opt.M_pairs = cfg.cal_M_pairs;
  opt.margin = cfg.cal_margin;
  return calibrate(opt);
}

std::string summary_json(const RatesResult& r, const ExperimentConfig& cfg) {
  nlohmann::json j;
  j["n_grid"] = cfg.n_grid;
  j["reps"] = cfg.reps;
  j["median_radius"] = r.median_radius;
  j["median_oversized_mass"] = r.median_oversized;
  j["radius_strictly_decreasing"] = strictly_decreasing(r.median_radius);
  j["rows"] = r.table.rows.size();
  j["failures"] = r.table.failures.size();
  for (const CellFailure& f : r.table.failures)
    j["failure_messages"].push_back(fmt::format("n={} rep={} {}: {}", f.n, f.rep, f.metric, f.message));
  if (r.fit) {
    j["exponent"] = {{"slope", r.fit->slope},
                     {"half_width", r.fit->half_width},
                     {"intercept", r.fit->intercept},
                     {"points", r.fit->points}};
  } else {
    j["exponent_error"] = r.fit_error;
  }
  return j.dump(2) + "\n";
}

std::string summary_json(const BfResult& r) {
  nlohmann::json j = nlohmann::json::array();
  for (const BfResult::Quartiles& q : r.by_n)
    j.push_back({{"n", q.n},
                 {"q1", q.q1},
                 {"median", q.median},
                 {"q3", q.q3},
                 {"positive_share", q.positive_share}});
  return nlohmann::json{{"log_bf", j}}.dump(2) + "\n";
}

std::string summary_json(const AuditResult& r) {
  nlohmann::json j;
  j["vacuous"] = r.vacuous;
  j["identity_max_error"] = r.identity_max_error;
  j["small_model_trend_decreasing"] = r.small_model_trend_decreasing;
  j["gate"] = {{"h_at_least_one", r.gate.h_at_least_one},
               {"i_above_two", r.gate.i_above_two},
               {"b_above_sqrt_h", r.gate.b_above_sqrt_h},
               {"kb2_dominates", r.gate.kb2_dominates},
               {"testing_margin", r.gate.testing_margin},
               {"all", r.gate.all}};
  if (!r.vacuous)
    for (const PriorMassAudit& pm : r.mass)
      j["by_n"].push_back({{"n", pm.n},
                           {"log_ratio_small", pm.log_ratio_small},
                           {"log_crude_small", pm.log_crude_small},
                           {"kl_mass_ok", pm.kl_mass_ok},
                           {"weights_ok", pm.weights_ok},
                           {"log_ratio_weighted", pm.log_ratio_weighted},
                           {"balls_ok", pm.balls_ok}});
  return j.dump(2) + "\n";
}

std::string summary_json(const EntropyResult& r) {
  nlohmann::json j;
  j["scaled_volume_increasing"] = r.increasing;
  if (!r.rows.empty()) j["asymptotic_ratio_last"] = r.rows.back().asymptotic_ratio;
  for (const EntropyReport& rep : r.audits)
    j["audits"].push_back({{"alpha", rep.alpha},
                           {"n", rep.n},
                           {"J", rep.J},
                           {"E_max", rep.E_max},
                           {"E_min", rep.E_min},
                           {"stable", rep.stable}});
  return j.dump(2) + "\n";
}

}  // namespace logspline
