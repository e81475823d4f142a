#include "fluxcount/scan.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "fluxcount/errors.hpp"
#include "fluxcount/hmm_counter.hpp"
#include "fluxcount/parallel.hpp"
#include "fluxcount/rng.hpp"

namespace fluxcount {
namespace {

constexpr std::size_t kChunk = 1024;
constexpr std::uint64_t kScanStream = 0x5343414eULL;    // "SCAN"
constexpr std::uint64_t kPlantStream = 0x504c4e54ULL;   // "PLNT"

std::pair<double, double> flux_range(const TuningModel& tuning) {
  if (tuning.flux_table.empty()) throw ParameterError("tuning: flux table is empty");
  double lo = tuning.flux_table.front().phi_ext, hi = lo;
  for (const auto& r : tuning.flux_table) {
    lo = std::min(lo, r.phi_ext);
    hi = std::max(hi, r.phi_ext);
  }
  return {lo, hi};
}

}  // namespace

DutyCycle duty_cycle(const DeviceParams& params, std::size_t n_meas, double quoted_time_per_point) {
  DutyCycle d;
  d.readout_time = params.readout_time() * params.n_parity;
  d.cycle_time = params.t_c + d.readout_time;
  d.readout_fraction = d.readout_time / d.cycle_time;
  d.protocol_time_per_point = d.cycle_time * static_cast<double>(n_meas);
  d.quoted_time_per_point = quoted_time_per_point;
  d.implied_cycle_time = n_meas > 0 ? quoted_time_per_point / static_cast<double>(n_meas) : 0.0;
  d.consistent = std::abs(d.protocol_time_per_point - quoted_time_per_point) <=
                 1e-9 * std::max(1.0, quoted_time_per_point);
  return d;
}

std::vector<double> scan_frequencies(const ScanConfig& config) {
  if (config.n_points > 0 && !(config.step_hz > 0.0))
    throw ParameterError("scan: frequency step must be positive");
  std::vector<double> f(config.n_points);
  for (std::size_t i = 0; i < f.size(); ++i) f[i] = config.start_hz + config.step_hz * static_cast<double>(i);
  return f;
}

ScanBin bin_at_flux(const TuningModel& tuning, double phi_ext, double freq_hz, double n_meas) {
  const FluxParams p = interpolate_flux_params(tuning, phi_ext);
  ScanBin b;
  b.phi_ext = phi_ext;
  b.freq_hz = freq_hz;
  b.n_meas = n_meas;
  b.eta = p.eta;
  b.t1_s = p.t1_s;
  b.q_s = kTwoPi * freq_hz * p.t1_s;
  return b;
}

ScanBin bin_at_frequency(const TuningModel& tuning, double freq_hz, double n_meas) {
  const auto [lo, hi] = flux_range(tuning);
  const double phi = flux_for_storage_frequency(tuning, kTwoPi * freq_hz, lo, hi);
  return bin_at_flux(tuning, phi, freq_hz, n_meas);
}

std::vector<double> planted_expectation(const std::vector<ScanBin>& bins, const PlantedSignal& planted,
                                        const SignalModel& model) {
  std::vector<double> mu(bins.size(), 0.0);
  if (planted.epsilon <= 0.0 || bins.empty()) return mu;
  const auto it = std::lower_bound(bins.begin(), bins.end(), planted.freq_hz,
                                   [](const ScanBin& b, double f) { return b.freq_hz < f; });
  if (it == bins.begin() || it == bins.end()) {
    const std::size_t i = it == bins.begin() ? 0 : bins.size() - 1;
    if (std::abs(bins[i].freq_hz - planted.freq_hz) > 1e-6)
      throw ParameterError("planted signal: frequency outside the scanned band");
    mu[i] = signal_counts(planted.epsilon, bins[i], model);
    return mu;
  }
  const std::size_t hi = static_cast<std::size_t>(it - bins.begin());
  const std::size_t lo = hi - 1;
  const double w_hi = (planted.freq_hz - bins[lo].freq_hz) / (bins[hi].freq_hz - bins[lo].freq_hz);
  mu[lo] = (1.0 - w_hi) * signal_counts(planted.epsilon, bins[lo], model);
  mu[hi] = w_hi * signal_counts(planted.epsilon, bins[hi], model);
  return mu;
}

ScanDataset simulate_scan(const DeviceParams& params, const TuningModel& tuning,
                          const ScanConfig& config, const SignalModel& model, std::uint64_t seed) {
  params.validate();
  tuning.validate();
  ScanDataset ds;
  ds.step_hz = config.step_hz;
  if (config.n_points == 0) {
    ds.warnings.push_back("scan has zero flux points; dataset is empty");
    return ds;
  }
  if (config.n_meas == 0) throw ParameterError("scan: n_meas must be positive");
  const auto freqs = scan_frequencies(config);
  ds.span_hz = freqs.back() - freqs.front();
  for (double f : freqs) ds.bins.push_back(bin_at_frequency(tuning, f, static_cast<double>(config.n_meas)));

  std::vector<HmmModel> models;
  for (const auto& b : ds.bins) models.push_back(build_model(params, b.t1_s));

  const std::size_t chunks = (config.n_meas + kChunk - 1) / kChunk;
  std::vector<std::size_t> positives(ds.bins.size() * chunks, 0);
  parallel_for(positives.size(), config.threads, [&](std::size_t unit) {
    const std::size_t bin = unit / chunks;
    const std::size_t c = unit % chunks;
    Rng rng = make_stream(seed, kScanStream + bin, c);
    const std::size_t n = std::min(config.n_meas, (c + 1) * kChunk) - c * kChunk;
    std::size_t k = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const int storage = uniform01(rng) < params.nbar_s ? 1 : 0;
      const Readout transmon = uniform01(rng) < params.nbar_q ? Readout::kE : Readout::kG;
      const auto seq = sample_sequence(models[bin], storage, transmon, params.n_parity, rng);
      k += backward_probabilities(models[bin], seq, params.lambda_thresh).positive;
    }
    positives[unit] = k;
  });

  const auto mu = planted_expectation(ds.bins, config.planted, model);
  for (std::size_t b = 0; b < ds.bins.size(); ++b) {
    std::size_t k = 0;
    for (std::size_t c = 0; c < chunks; ++c) k += positives[b * chunks + c];
    if (mu[b] > 0.0) {
      Rng rng = make_stream(seed, kPlantStream, b);
      std::poisson_distribution<long long> pois(mu[b]);
      k += static_cast<std::size_t>(pois(rng));
    }
    ds.bins[b].n_obs = static_cast<double>(std::min(k, config.n_meas));
  }
  return ds;
}

}  // namespace fluxcount
