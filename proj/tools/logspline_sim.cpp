// Experiment driver: logspline_sim {rates|bf|audit|entropy|calibrate} [--config PATH]
// [--seed U64] [--out DIR] [--jobs N]

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "logspline/error.hpp"
#include "logspline/experiments.hpp"

namespace fs = std::filesystem;
using namespace logspline;

namespace {

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  int jobs = 1;
  std::string calibration_file;
};

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw Error(fmt::format("cannot write '{}'", path.string()));
}

ExperimentConfig resolve(const std::string& kind, const Flags& f) {
  ExperimentConfig cfg = f.config.empty() ? default_config(kind) : load_config(f.config);
  if (cfg.kind != kind)
    throw ConfigError(fmt::format("config: experiment.kind is '{}' but the subcommand is '{}'",
                                  cfg.kind, kind));
  if (f.seed) cfg.seed = *f.seed;
  if (!f.out.empty()) cfg.out_dir = f.out;
  if (f.jobs < 1) throw ConfigError("--jobs must be >= 1");
  validate_config(cfg);
  return cfg;
}

void run(const std::string& kind, const Flags& f) {
  const ExperimentConfig cfg = resolve(kind, f);
  const fs::path dir(cfg.out_dir);
  fs::create_directories(dir);
  write_file(dir / "config.ini", serialize_config(cfg));

  if (kind == "rates") {
    const RatesResult r = run_rates(cfg, f.jobs);
    write_file(dir / "rates.csv", r.table.csv());
    write_file(dir / "rates_summary.json", summary_json(r, cfg));
    if (r.fit)
      std::cout << fmt::format("exponent {:.4f} +- {:.4f}; {} rows, {} failures\n", r.fit->slope,
                               r.fit->half_width, r.table.rows.size(), r.table.failures.size());
    else
      std::cout << "exponent not fitted: " << r.fit_error << "\n";
  } else if (kind == "bf") {
    const BfResult r = run_bf(cfg, f.jobs);
    write_file(dir / "bf.csv", bf_csv(r.rows));
    write_file(dir / "bf_summary.json", summary_json(r));
    for (const auto& q : r.by_n)
      std::cout << fmt::format("n={:>6} median log BF {:>10.3f}  [{:.3f}, {:.3f}]\n", q.n, q.median,
                               q.q1, q.q3);
  } else if (kind == "audit") {
    const AuditResult r = run_audit(cfg, f.jobs);
    write_file(dir / "audit.csv", audit_csv(r));
    write_file(dir / "audit_summary.json", summary_json(r));
    std::cout << fmt::format("weight identity error {:.3g}; small-model ratio {}; gate {}\n",
                             r.identity_max_error,
                             r.small_model_trend_decreasing ? "decreasing" : "not decreasing",
                             r.gate.all ? "pass" : "fail");
  } else if (kind == "entropy") {
    const EntropyResult r = run_entropy(cfg);
    write_file(dir / "entropy.csv", entropy_csv(r));
    write_file(dir / "entropy_audit.csv", entropy_audit_csv(r));
    write_file(dir / "entropy_summary.json", summary_json(r));
    std::cout << fmt::format("scaled ball volume increasing: {}\n", r.increasing);
  } else {
    const Calibration cal = run_calibrate(cfg);
    const std::string path =
        f.calibration_file.empty() ? (dir / "calibration.txt").string() : f.calibration_file;
    write_calibration(cal, path);
    std::cout << "wrote " << path << "\n";
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"log-spline posterior experiments"};
  app.require_subcommand(1);
  Flags flags;
  std::string chosen;
  for (const char* kind : {"rates", "bf", "audit", "entropy", "calibrate"}) {
    CLI::App* sub = app.add_subcommand(kind, fmt::format("run the {} experiment", kind));
    sub->add_option("--config", flags.config, "experiment config file");
    sub->add_option("--seed", flags.seed, "root seed (overrides the config)");
    sub->add_option("--out", flags.out, "output directory (overrides the config)");
    sub->add_option("--jobs", flags.jobs, "worker threads")->check(CLI::PositiveNumber);
    if (std::string(kind) == "calibrate")
      sub->add_option("--file", flags.calibration_file, "calibration output path");
    sub->callback([&chosen, kind] { chosen = kind; });
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    run(chosen, flags);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
