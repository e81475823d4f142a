#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "fluxcount/device_model.hpp"
#include "fluxcount/hmm_counter.hpp"

namespace fluxcount {

struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
  double slope_err = 0.0;
  double intercept_err = 0.0;
};

/// Weighted least squares y = slope * x + intercept with known 1-sigma
/// errors on y. Throws FitError with fewer than two distinct x values.
LineFit weighted_line_fit(std::span<const double> x, std::span<const double> y,
                          std::span<const double> sigma);

struct CalibrationPoint {
  double n_inj = 0.0;
  double n_meas = 0.0;
  std::size_t trials = 0;
  std::size_t positives = 0;
};

struct CharacterizationResult {
  double eta = 0.0;
  double delta = 0.0;
  double eta_err = 0.0;
  double delta_err = 0.0;
  double lambda_thresh = 0.0;
  std::vector<CalibrationPoint> points;
};

/// Injected-population protocol: per trial the storage starts in |1> if the
/// injection (probability n_inj) or the thermal population (probability
/// nbar_s) supplies a photon, and the transmon in |e> with probability nbar_q.
/// Deterministic for a fixed seed at any thread count.
std::vector<CalibrationPoint> measure_points(const DeviceParams& params, double t1_s,
                                             std::span<const double> injections,
                                             std::size_t trials_per_point, std::uint64_t seed,
                                             unsigned threads = 1);

/// Binomial-weighted line fit of n_meas = eta * n_inj + delta.
CharacterizationResult fit_efficiency(std::span<const CalibrationPoint> points,
                                      double lambda_thresh);

CharacterizationResult run_characterization(const DeviceParams& params, double t1_s,
                                            std::span<const double> injections,
                                            std::size_t trials_per_point, std::uint64_t seed,
                                            unsigned threads = 1);

struct ThresholdRow {
  double lambda = 0.0;
  double eta = 0.0;
  double delta = 0.0;
  double delta_over_eta = 0.0;
};

/// Sweeps the discrimination threshold over one shared set of sampled
/// sequences. delta is the positive fraction of the zero-injection batch;
/// eta is the positive fraction among probe-batch trials that started with
/// a photon. Both are exactly non-increasing in lambda.
std::vector<ThresholdRow> threshold_sweep(const DeviceParams& params, double t1_s,
                                          double n_inj_probe, std::span<const double> thresholds,
                                          std::size_t trials, std::uint64_t seed,
                                          unsigned threads = 1);

}  // namespace fluxcount
