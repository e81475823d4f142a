#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fluxcount/device_model.hpp"
#include "fluxcount/exclusion.hpp"

namespace fluxcount {

struct PlantedSignal {
  double epsilon = 0.0;  // 0 disables the planted line
  double freq_hz = 0.0;
};

struct ScanConfig {
  std::size_t n_points = 200;
  double start_hz = 5.680e9;
  double step_hz = 2.8e3;
  std::size_t n_meas = 20000;
  PlantedSignal planted;
  unsigned threads = 1;
};

/// Cycle accounting per tuning point: t_c + (t_r + t_l) * n_parity per measurement.
struct DutyCycle {
  double cycle_time = 0.0;
  double readout_time = 0.0;
  double readout_fraction = 0.0;
  double protocol_time_per_point = 0.0;
  double quoted_time_per_point = 0.0;
  double implied_cycle_time = 0.0;  // quoted time / n_meas
  bool consistent = true;
};

DutyCycle duty_cycle(const DeviceParams& params, std::size_t n_meas, double quoted_time_per_point);

struct ScanDataset {
  std::vector<ScanBin> bins;
  double step_hz = 0.0;
  double span_hz = 0.0;
  std::vector<std::string> warnings;
};

std::vector<double> scan_frequencies(const ScanConfig& config);

/// Bin parameters at a flux point from the tuning table (n_obs left at zero).
ScanBin bin_at_flux(const TuningModel& tuning, double phi_ext, double freq_hz, double n_meas);
/// Inverts the tuning curve over the flux-table range, then calls bin_at_flux.
ScanBin bin_at_frequency(const TuningModel& tuning, double freq_hz, double n_meas);

/// Expected planted counts per bin: the line's expected count at each of the
/// two bins bracketing its frequency, split by linear proximity.
std::vector<double> planted_expectation(const std::vector<ScanBin>& bins, const PlantedSignal& planted,
                                        const SignalModel& model);

/// For each bin: n_meas HMM sequences with a thermal storage start
/// (probability nbar_s) and thermal transmon (nbar_q), classified at the
/// device threshold; n_obs counts positives. A planted line adds Poisson
/// counts on top. Deterministic for a seed at any thread count.
ScanDataset simulate_scan(const DeviceParams& params, const TuningModel& tuning,
                          const ScanConfig& config, const SignalModel& model, std::uint64_t seed);

}  // namespace fluxcount
