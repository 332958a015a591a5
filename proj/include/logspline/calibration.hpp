#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace logspline {

/// One measured constant: name, value, dimension range it was measured over, seed.
struct CalibrationEntry {
  std::string name;
  double value = 0.0;
  int j_min = 0;
  int j_max = 0;
  std::uint64_t seed = 0;
};

/// Empirical values of the universal constants of the log-spline model. Values carry
/// safety margins; raw extremes are stored alongside.
struct Calibration {
  int q = 4;
  double M = 3.0;         // box bound used for the log-density constants
  double M_pairs = 2.0;   // box bound used for the Hellinger sandwich
  double c4_lower = 0.0;  // C4 lower: |log p_theta|_inf >= c4_lower |theta|_inf
  double c4_upper = 0.0;  // C4 upper: |log p_theta|_inf <= c4_upper |theta|_inf
  double c_inf = 0.0;     // |theta|_inf <= c_inf |theta^T B|_inf
  double l2_lower = 0.0;  // |theta|_2 <= l2_lower * sqrt(J) |theta^T B|_2
  double l2_upper = 0.0;  // sqrt(J) |theta^T B|_2 <= l2_upper |theta|_2
  double r_min = 0.0;     // lower bound of h^2 J / |theta1 - theta2|^2 on the M_pairs box
  double r_max = 0.0;     // upper bound of the same ratio
  double inclusion_B = 0.0;  // max(KL, KL2) <= (B h)^2 for bounded log-ratio pairs
  std::vector<CalibrationEntry> entries;

  double F_lower() const;  // exp(-c4_upper * M)
  double F_upper() const;  // exp(c4_upper * M)
};

struct CalibrationOptions {
  std::uint64_t seed = 20261015;
  std::vector<int> dims{5, 10, 20};
  int draws = 1000;
  int q = 4;
  double M = 3.0;
  double M_pairs = 2.0;
  double margin = 1.25;  // multiplicative slack applied to the recorded bounds
};

/// Per-dimension raw extremes used by stability checks.
struct CalibrationSample {
  int J = 0;
  double c4_lower = 0.0;
  double c4_upper = 0.0;
  double c_inf = 0.0;
  double l2_lower = 0.0;
  double l2_upper = 0.0;
  double r_min = 0.0;
  double r_max = 0.0;
  double inclusion_B = 0.0;
};

CalibrationSample measure_constants(int q, int J, double M, double M_pairs, int draws,
                                    std::uint64_t seed);

Calibration calibrate(const CalibrationOptions& opt = {});

void write_calibration(const Calibration& cal, const std::string& path);
Calibration read_calibration(const std::string& path);

/// Path of the frozen calibration file: $LOGSPLINE_CALIBRATION if set, otherwise the file
/// under the source data directory.
std::string calibration_path();

/// The frozen calibration, loaded once. Throws InvalidState if the file is missing.
const Calibration& frozen_calibration();

}  // namespace logspline
