#pragma once

#include <cstdint>
#include <numbers>
#include <span>
#include <utility>
#include <vector>

namespace fluxcount {

/// Rectangular-cavity form factor (1/3)(2^6/pi^4) for the TE101-like mode.
double form_factor_rect();

/// How the dark-matter density enters the photon rate.
/// kEnergyOverHbar: rho_DM (GeV/cm^3) divided by hbar, giving rad/s per cm^3.
/// kQuotedConstant: the literature constant 2 pi x 9.67e19 GHz/cm^3.
enum class RhoConvention { kEnergyOverHbar, kQuotedConstant, kUnresolved };

struct NuisanceSigmas {
  double eta = 0.021;
  double q_s = 9e3;
  double freq_hz = 1e5;
  double volume_cm3 = 0.175;
  double form_factor = 0.003;
};

struct SignalModel {
  double rho_dm_gev_cm3 = 0.45;
  RhoConvention rho_convention = RhoConvention::kEnergyOverHbar;
  double quoted_rho_rad_s_cm3 = 2.0 * std::numbers::pi * 9.67e19 * 1e9;
  double q_dm = 1e6;
  double form_factor = 0.219;
  double volume_cm3 = 6.452;
  NuisanceSigmas sigma;

  /// Throws ParameterError on out-of-range values.
  void validate() const;
  /// rho_DM as used in the rate, in rad/s per cm^3. Throws ConfigError
  /// (field "exclusion.rho_convention") when unresolved.
  double rho_rate_density() const;
};

struct ScanBin {
  double phi_ext = 0.0;
  double freq_hz = 0.0;
  double n_meas = 0.0;
  double n_obs = 0.0;
  double eta = 0.0;
  double t1_s = 0.0;  // s
  double q_s = 0.0;   // 2 pi f T1_s
  double n_back = 0.0;
};

/// eta eps^2 rho Q_DM G V (Q_s / omega_s) n_meas.
double signal_counts(double epsilon, const ScanBin& bin, const SignalModel& model);
/// Same rate integrated over T1_s * n_meas.
double signal_counts_t1(double epsilon, const ScanBin& bin, const SignalModel& model);
/// Throws ParameterError when the two signal forms disagree beyond 1e-12 relative.
void check_signal_forms(const ScanBin& bin, const SignalModel& model);
/// Total storage integration time T1_s * n_meas.
double integration_time(const ScanBin& bin);

/// log P(N <= n) for N ~ Poisson(mu).
double poisson_log_cdf(unsigned n, double mu);
/// 1 - CDF(n_obs; b + s) / CDF(n_obs; b).
double cls_probability(unsigned n_obs, double n_back, double n_test);
/// P(N >= n_obs) under the background-only hypothesis.
double local_p_value(unsigned n_obs, double n_back);

struct QuadratureNode {
  double x = 0.0;
  double w = 0.0;
};

/// Gauss-Hermite rule for weight e^{-x^2} (weights sum to sqrt(pi)).
std::vector<QuadratureNode> gauss_hermite(int n);

enum class Marginalization { kGaussHermite, kMonteCarlo };

struct QuadratureSpec {
  Marginalization mode = Marginalization::kGaussHermite;
  int nodes = 7;
  std::size_t mc_samples = 100000;
  std::uint64_t seed = 0;
};

/// Nuisance-weighted signal coefficients: N_test = eps^2 * k[j] with weight w[j].
struct SignalKernel {
  std::vector<double> k;
  std::vector<double> w;
};

/// Nuisances are normals truncated to the physical support (eta in (0,1],
/// Q_s > 0, f > 0, V > 0, G in (0,1)). Axes with negligible mass outside the
/// support use Gauss-Hermite; the others use Gauss-Legendre on the truncated
/// interval. Monte-Carlo draws outside the support are rejected.
SignalKernel signal_kernel(const ScanBin& bin, const SignalModel& model, const QuadratureSpec& quad,
                           std::uint64_t stream = 0);

double marginalized_confidence(double epsilon, const SignalKernel& kernel, unsigned n_obs,
                               double n_back);
double marginalized_confidence(double epsilon, const ScanBin& bin, const SignalModel& model,
                               const QuadratureSpec& quad);

/// Solves U(eps) = confidence in log eps. The bracket grows by decades from
/// 1e-16 and must close within [1e-18, 1e-10], otherwise DomainError.
double solve_epsilon_95(const SignalKernel& kernel, unsigned n_obs, double n_back,
                        double confidence = 0.95);
double solve_epsilon_95(const ScanBin& bin, const SignalModel& model, const QuadratureSpec& quad,
                        double confidence = 0.95);
/// Signal counts at which the unmarginalized CLs probability reaches `confidence`.
double solve_n_test_95(unsigned n_obs, double n_back, double confidence = 0.95);

enum class LineshapeKind { kMaxwellian, kLorentzian, kTopHat };

/// Normalized detector response to a dark-matter line whose peak is detuned
/// from the cavity, all with full width at half maximum f / q_dm. The
/// Maxwellian is the standard-halo kinetic-energy shape sqrt(x) e^{-x},
/// referenced to its peak. Tunings only cover detunings within
/// coverage_fraction * FWHM of their centre; a non-positive fraction lifts
/// the restriction.
struct LineshapeSpec {
  LineshapeKind kind = LineshapeKind::kMaxwellian;
  double q_dm = 1e6;
  double coverage_fraction = 0.25;

  double fwhm(double freq_hz) const { return freq_hz / q_dm; }
  /// s(detuning) in [0, 1], s(0) = 1.
  double response(double detuning_hz, double freq_hz) const;
  /// Detuning range [lo, hi] outside which the tuning gives no exclusion.
  std::pair<double, double> support(double freq_hz) const;
};

/// eps95 / sqrt(s(grid - centre)); +inf where the tuning has no coverage.
std::vector<double> tuning_curve(double centre_hz, double epsilon95, std::span<const double> grid_hz,
                                 const LineshapeSpec& lineshape);

/// Pointwise minimum of curves sampled on one grid.
std::vector<double> minimum_envelope(std::span<const std::vector<double>> curves);

struct FamilyCurve {
  double centre_hz = 0.0;
  double epsilon95 = 0.0;
  std::vector<double> freq_hz;  // covered grid points only
  std::vector<double> epsilon;
};

struct ExclusionCurve {
  std::vector<FamilyCurve> family;
  std::vector<double> freq_hz;
  std::vector<double> envelope;
};

/// Family curves for every tuning on a sorted grid and their minimum envelope.
ExclusionCurve lineshape_envelope(std::span<const double> centres_hz,
                                  std::span<const double> epsilon95,
                                  std::span<const double> grid_hz, const LineshapeSpec& lineshape);

struct ExclusionConfig {
  int window = 112;
  int order = 4;
  SignalModel model;
  QuadratureSpec quadrature;
  LineshapeSpec lineshape;
  double confidence = 0.95;
  /// Bins with a background-only p-value below this are flagged as candidates.
  double candidate_p_value = 2.87e-7;
  unsigned threads = 1;
};

struct BinResult {
  ScanBin bin;
  double epsilon95 = 0.0;
  double p_value = 1.0;
  bool candidate = false;
};

struct ExclusionResult {
  std::vector<BinResult> bins;
  ExclusionCurve curve;
};

/// Smooths n_obs into n_back (clipped at zero), solves eps95 per bin and
/// builds the envelope on the bin frequencies. Bins must be sorted by
/// strictly increasing frequency.
ExclusionResult run_exclusion(std::vector<ScanBin> bins, const ExclusionConfig& config);

/// Per-bin eps95 for bins whose n_back is already set.
std::vector<double> solve_bins(std::span<const ScanBin> bins, const ExclusionConfig& config);

}  // namespace fluxcount
