#include "fluxcount/characterize.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "fluxcount/errors.hpp"
#include "fluxcount/parallel.hpp"
#include "fluxcount/rng.hpp"

namespace fluxcount {
namespace {

constexpr std::size_t kChunk = 1024;
constexpr std::uint64_t kPointStream = 0x43484152ULL;  // "CHAR"
constexpr std::uint64_t kSweepStream = 0x53574550ULL;  // "SWEP"

std::size_t chunk_count(std::size_t trials) { return (trials + kChunk - 1) / kChunk; }

struct Trial {
  double log_lambda;
  bool photon;
};

// One trial of the injected-population protocol. The thermal storage
// population adds an independent chance of a photon already being present.
Trial run_trial(const HmmModel& model, const DeviceParams& params, double n_inj, Rng& rng) {
  const bool injected = uniform01(rng) < n_inj;
  const bool thermal = uniform01(rng) < params.nbar_s;
  const bool photon = injected || thermal;
  const Readout transmon = uniform01(rng) < params.nbar_q ? Readout::kE : Readout::kG;
  const ReadoutSequence seq = sample_sequence(model, photon ? 1 : 0, transmon, params.n_parity, rng);
  const CountVerdict v = backward_probabilities(model, seq, params.lambda_thresh);
  return {v.log_lambda(), photon};
}

std::vector<Trial> run_batch(const HmmModel& model, const DeviceParams& params, double n_inj,
                             std::size_t trials, std::uint64_t seed, std::uint64_t stream,
                             unsigned threads) {
  std::vector<Trial> out(trials);
  parallel_for(chunk_count(trials), threads, [&](std::size_t c) {
    Rng rng = make_stream(seed, stream, c);
    const std::size_t end = std::min(trials, (c + 1) * kChunk);
    for (std::size_t i = c * kChunk; i < end; ++i) out[i] = run_trial(model, params, n_inj, rng);
  });
  return out;
}

}  // namespace

LineFit weighted_line_fit(std::span<const double> x, std::span<const double> y,
                          std::span<const double> sigma) {
  if (x.size() != y.size() || x.size() != sigma.size())
    throw FitError("weighted_line_fit: input lengths differ");
  if (x.size() < 2) throw FitError("weighted_line_fit: need at least two points");
  const auto [mn, mx] = std::minmax_element(x.begin(), x.end());
  if (*mn == *mx) throw FitError("weighted_line_fit: need at least two distinct abscissae");

  double s = 0, sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(sigma[i] > 0)) throw FitError("weighted_line_fit: errors must be positive");
    const double w = 1.0 / (sigma[i] * sigma[i]);
    s += w;
    sx += w * x[i];
    sy += w * y[i];
    sxx += w * x[i] * x[i];
    sxy += w * x[i] * y[i];
  }
  const double det = s * sxx - sx * sx;
  if (!(det > 0)) throw FitError("weighted_line_fit: singular normal equations");
  LineFit f;
  f.slope = (s * sxy - sx * sy) / det;
  f.intercept = (sxx * sy - sx * sxy) / det;
  f.slope_err = std::sqrt(s / det);
  f.intercept_err = std::sqrt(sxx / det);
  return f;
}

std::vector<CalibrationPoint> measure_points(const DeviceParams& params, double t1_s,
                                             std::span<const double> injections,
                                             std::size_t trials_per_point, std::uint64_t seed,
                                             unsigned threads) {
  params.validate();
  if (injections.empty()) throw ParameterError("measure_points: no injection values");
  for (double n : injections) {
    if (!(n >= 0.0 && n <= 0.2))
      throw ParameterError("measure_points: injections must lie in the weak regime [0, 0.2]");
  }
  if (trials_per_point < 100) throw ParameterError("measure_points: need at least 100 trials per point");

  const HmmModel model = build_model(params, t1_s);
  const std::size_t chunks = chunk_count(trials_per_point);
  std::vector<std::size_t> positives(injections.size() * chunks, 0);
  parallel_for(positives.size(), threads, [&](std::size_t unit) {
    const std::size_t p = unit / chunks;
    const std::size_t c = unit % chunks;
    Rng rng = make_stream(seed, kPointStream + p, c);
    const std::size_t n = std::min(trials_per_point, (c + 1) * kChunk) - c * kChunk;
    const double log_thresh = std::log(params.lambda_thresh);
    std::size_t k = 0;
    for (std::size_t i = 0; i < n; ++i) k += run_trial(model, params, injections[p], rng).log_lambda >= log_thresh;
    positives[unit] = k;
  });

  std::vector<CalibrationPoint> points;
  for (std::size_t p = 0; p < injections.size(); ++p) {
    std::size_t k = 0;
    for (std::size_t c = 0; c < chunks; ++c) k += positives[p * chunks + c];
    points.push_back({injections[p], static_cast<double>(k) / trials_per_point, trials_per_point, k});
  }
  return points;
}

CharacterizationResult fit_efficiency(std::span<const CalibrationPoint> points, double lambda_thresh) {
  if (points.empty()) throw FitError("fit_efficiency: no calibration points");
  std::vector<double> x, y, sigma;
  for (const auto& p : points) {
    // Continuity-corrected binomial variance keeps zero-count points finite.
    const double q = (p.positives + 0.5) / (p.trials + 1.0);
    x.push_back(p.n_inj);
    y.push_back(p.n_meas);
    sigma.push_back(std::sqrt(q * (1.0 - q) / p.trials));
  }
  const LineFit f = weighted_line_fit(x, y, sigma);
  CharacterizationResult r;
  r.eta = f.slope;
  r.delta = f.intercept;
  r.eta_err = f.slope_err;
  r.delta_err = f.intercept_err;
  r.lambda_thresh = lambda_thresh;
  r.points.assign(points.begin(), points.end());
  return r;
}

CharacterizationResult run_characterization(const DeviceParams& params, double t1_s,
                                            std::span<const double> injections,
                                            std::size_t trials_per_point, std::uint64_t seed,
                                            unsigned threads) {
  const auto points = measure_points(params, t1_s, injections, trials_per_point, seed, threads);
  return fit_efficiency(points, params.lambda_thresh);
}

std::vector<ThresholdRow> threshold_sweep(const DeviceParams& params, double t1_s,
                                          double n_inj_probe, std::span<const double> thresholds,
                                          std::size_t trials, std::uint64_t seed, unsigned threads) {
  params.validate();
  if (!std::is_sorted(thresholds.begin(), thresholds.end()))
    throw ParameterError("threshold_sweep: thresholds must be sorted ascending");
  if (!(n_inj_probe > 0.0 && n_inj_probe <= 1.0))
    throw ParameterError("threshold_sweep: probe injection must lie in (0, 1]");
  if (trials == 0) throw ParameterError("threshold_sweep: need trials");

  const HmmModel model = build_model(params, t1_s);
  const auto background = run_batch(model, params, 0.0, trials, seed, kSweepStream, threads);
  const auto probe = run_batch(model, params, n_inj_probe, trials, seed, kSweepStream + 1, threads);

  std::vector<double> bg_sorted;
  bg_sorted.reserve(trials);
  for (const auto& t : background) bg_sorted.push_back(t.log_lambda);
  std::vector<double> photon_sorted;
  for (const auto& t : probe)
    if (t.photon) photon_sorted.push_back(t.log_lambda);
  if (photon_sorted.empty()) throw FitError("threshold_sweep: probe batch contains no photon trials");
  std::sort(bg_sorted.begin(), bg_sorted.end());
  std::sort(photon_sorted.begin(), photon_sorted.end());

  auto fraction_at_least = [](const std::vector<double>& sorted, double log_thresh) {
    const auto it = std::lower_bound(sorted.begin(), sorted.end(), log_thresh);
    return static_cast<double>(sorted.end() - it) / static_cast<double>(sorted.size());
  };

  std::vector<ThresholdRow> rows;
  for (double lambda : thresholds) {
    if (!(lambda > 0)) throw ParameterError("threshold_sweep: thresholds must be positive");
    const double lt = std::log(lambda);
    ThresholdRow r;
    r.lambda = lambda;
    r.delta = fraction_at_least(bg_sorted, lt);
    r.eta = fraction_at_least(photon_sorted, lt);
    r.delta_over_eta = r.eta > 0 ? r.delta / r.eta : std::numeric_limits<double>::infinity();
    rows.push_back(r);
  }
  return rows;
}

}  // namespace fluxcount
