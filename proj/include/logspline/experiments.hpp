#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "logspline/calibration.hpp"
#include "logspline/entropy_testkit.hpp"
#include "logspline/model_select.hpp"
#include "logspline/prior_lib.hpp"
#include "logspline/truth_library.hpp"

namespace logspline {

/// Experiment settings read from a sectioned key = value file.
struct ExperimentConfig {
  // [experiment]
  std::string kind = "rates";  // rates | bf | audit | entropy | calibrate
  std::uint64_t seed = 20261015;
  std::vector<std::size_t> n_grid{250, 500, 1000, 2000, 4000};
  int reps = 20;

  // [truth]
  std::string truth = "hoelder";  // hoelder | analytic | tilted | spline
  double truth_beta = 1.0;
  std::uint64_t truth_seed = 3;
  double truth_amplitude = 3.0;
  double truth_phi = 0.0;
  int truth_J = 4;  // dimension of a spline truth; coefficients drawn from truth_seed

  // [prior]
  PriorKind prior = PriorKind::kNet;
  std::vector<double> alphas{0.5, 1.0, 2.0};
  WeightKind weights = WeightKind::kExponential;
  std::vector<double> mu;
  double net_factor = 1.0;
  std::string log_factor = "auto";  // auto | true | false
  std::size_t atom_cap = 1'000'000;

  // [constants]
  double M = 3.0;
  int q = 4;
  double H = 2.0;
  double I = 3.0;
  double B = 2.0;
  double L = 0.01;
  double C = 2.0;
  double F = 1.0;
  double ib = 1.0;  // radius multiplier of eps_{n,beta} for the posterior ball mass
  double kl_factor = 1.0;

  // [mc]
  std::size_t n_is = 20000;
  std::size_t mcmc_steps = 5000;
  double burn_fraction = 0.2;
  double independence = 0.3;
  std::size_t mass_draws = 4000;
  std::size_t exact_atom_cap = 20000;

  // [bf]
  double null_lo = -5.0;
  double null_hi = 5.0;
  double alt_alpha = 1.0;
  PriorKind alt_prior = PriorKind::kFlat;
  double w_alt = 0.5;
  double w_null = 0.5;

  // [audit]
  std::vector<double> i_grid{3.0, 4.0, 6.0};

  // [entropy]
  int max_dim = 50;
  int entropy_grid = 10;

  // [calibrate]
  std::vector<int> cal_dims{5, 10, 20};
  int cal_draws = 1000;
  double cal_M_pairs = 2.0;
  double cal_margin = 1.25;

  // [output]
  std::string out_dir = "out";

  bool operator==(const ExperimentConfig&) const = default;
};

/// Throws ConfigError on unknown sections or keys, malformed values, or violated
/// invariants (increasing n_grid, reps >= 1, ascending alphas, ...).
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::string& path);
std::string serialize_config(const ExperimentConfig& cfg);
void validate_config(const ExperimentConfig& cfg);
/// Built-in settings of one experiment kind, used when no config file is given.
ExperimentConfig default_config(const std::string& kind);

TruthSpec make_truth(const ExperimentConfig& cfg);
HierarchicalPriorSpec prior_spec(const ExperimentConfig& cfg);
/// Index of truth_beta in alphas; ConfigError if absent.
std::size_t beta_index(const ExperimentConfig& cfg);

struct ResultRow {
  std::string experiment;
  std::size_t n = 0;
  int rep = 0;
  std::uint64_t seed = 0;
  std::string metric;
  double value = 0.0;
  double std_error = 0.0;
};

struct CellFailure {
  std::size_t n = 0;
  int rep = 0;
  std::string metric;
  std::string message;
};

struct ResultTable {
  std::vector<ResultRow> rows;  // sorted by (n, rep, metric)
  std::vector<CellFailure> failures;

  void sort();
  std::string csv() const;
};

struct ExponentFit {
  double slope = 0.0;
  double intercept = 0.0;
  double half_width = 0.0;  // 95% Student t interval
  std::size_t points = 0;
};

/// OLS of log value on log n. Needs at least 3 distinct n and positive values.
ExponentFit fit_exponent(const std::vector<std::pair<double, double>>& points);

/// Medians over replicates of one metric, by n.
std::vector<std::pair<double, double>> metric_medians(const ResultTable& t,
                                                      const std::string& metric);

struct RatesResult {
  ResultTable table;
  std::optional<ExponentFit> fit;
  std::string fit_error;
  std::vector<double> median_radius;     // per n
  std::vector<double> median_oversized;  // per n
};

inline const std::vector<std::string> kRateMetrics{"outside_mass", "oversized_mass",
                                                   "radius_median"};

RatesResult run_rates(const ExperimentConfig& cfg, int jobs);

struct BfResult {
  std::vector<BfRow> rows;
  struct Quartiles {
    std::size_t n = 0;
    double q1 = 0.0, median = 0.0, q3 = 0.0;
    double positive_share = 0.0;
  };
  std::vector<Quartiles> by_n;
};

BfResult run_bf(const ExperimentConfig& cfg, int jobs);
std::string bf_csv(const std::vector<BfRow>& rows);

struct AuditRow {
  std::size_t n = 0;
  std::string condition;
  double alpha = 0.0;
  double i = 0.0;
  double log_lhs = 0.0;
  double log_rhs = 0.0;
  bool satisfied = false;
};

struct AuditResult {
  std::vector<AuditRow> rows;
  std::vector<PriorMassAudit> mass;  // per n
  std::vector<EntropyReport> entropy;  // per (n, alpha), n-major
  GateResult gate;
  double identity_max_error = 0.0;
  bool small_model_trend_decreasing = false;
  bool vacuous = false;  // single index
};

AuditResult run_audit(const ExperimentConfig& cfg, int jobs);
std::string audit_csv(const AuditResult& r);

struct EntropyTableRow {
  int J = 0;
  double log_volume = 0.0;
  double log_scaled = 0.0;        // log(sqrt(J)^J v_J)
  double asymptotic_ratio = 0.0;  // sqrt(J)^J v_J sqrt(pi J) / sqrt(2 pi e)^J
  double log_cover_sup = 0.0;     // log N(eps, [-M, M]^J, sup) at eps = M / 10
};

struct EntropyResult {
  std::vector<EntropyTableRow> rows;
  std::vector<EntropyReport> audits;  // per (n, alpha)
  bool increasing = false;
};

EntropyResult run_entropy(const ExperimentConfig& cfg);
std::string entropy_csv(const EntropyResult& r);
std::string entropy_audit_csv(const EntropyResult& r);

Calibration run_calibrate(const ExperimentConfig& cfg);

/// Summaries as JSON text.
std::string summary_json(const RatesResult& r, const ExperimentConfig& cfg);
std::string summary_json(const BfResult& r);
std::string summary_json(const AuditResult& r);
std::string summary_json(const EntropyResult& r);

}  // namespace logspline
