#pragma once

#include <cstddef>
#include <numbers>
#include <span>
#include <vector>

namespace fluxcount {

inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

namespace phys {
inline constexpr double kPlanck = 6.62607015e-34;       // J s
inline constexpr double kHbar = kPlanck / kTwoPi;       // J s
inline constexpr double kBoltzmann = 1.380649e-23;      // J / K
inline constexpr double kElectronVolt = 1.602176634e-19;  // J
}  // namespace phys

/// Hardware constants of the storage/transmon/readout system. Angular
/// frequencies in rad/s, times in seconds. Coherence times may be +inf to
/// switch a decay channel off.
/// How the readout-period and parity-wait transmon errors combine in P_ge.
enum class ErrorCombination { kAdditive, kMultiplicative };

struct DeviceParams {
  double omega_q = kTwoPi * 4.811e9;
  double alpha_q = -kTwoPi * 176.7e6;
  double omega_r = kTwoPi * 6.733e9;
  double omega_s = kTwoPi * 5.694e9;
  /// Dispersive shift; number-resolved peaks are spaced by 2*chi.
  double chi = -kTwoPi * 1.655e6;
  double chi_qr = -kTwoPi * 0.14e6;
  double t1_q = 34e-6;
  double t2_q = 31e-6;
  double t1_s = 65e-6;
  double t2_s = 40e-6;
  double nbar_q = 1.4e-2;
  double nbar_s = 8.6e-3;
  double f_gg = 0.978;
  double f_ee = 0.938;
  double t_r = 2.3e-6;
  double t_l = 5e-6;
  double t_c = 500e-6;
  int n_parity = 25;
  double lambda_thresh = 125.0;
  ErrorCombination error_combination = ErrorCombination::kAdditive;

  /// Ramsey wait that maps odd storage parity onto a transmon flip, pi/|2 chi|.
  double parity_wait() const;
  /// Full readout time t_r + t_l between parity checks.
  double readout_time() const { return t_r + t_l; }

  /// Throws ParameterError naming the first violated invariant.
  void validate() const;
};

/// Error-free device: infinite coherence, no thermal population, perfect readout.
DeviceParams ideal_device();

/// One calibration row of the flux-dependent storage parameters.
struct FluxRow {
  double phi_ext = 0.0;  // units of the flux quantum
  double omega_s = 0.0;  // rad/s
  double t1_s = 0.0;     // s
  double t2_s = 0.0;     // s
  double eta = 0.0;
  double delta = 0.0;
};

struct FluxParams {
  double t1_s = 0.0;
  double t2_s = 0.0;
  double eta = 0.0;
  double delta = 0.0;
  double omega_s = 0.0;
};

/// Storage/coupler avoided-crossing model plus the measured flux table.
struct TuningModel {
  double omega_s_bare = 0.0;  // bare storage frequency, rad/s
  double omega_c0 = 0.0;      // SQUID coupler frequency at zero flux, rad/s
  double g = kTwoPi * 170e6;  // storage/coupler coupling, rad/s
  std::vector<FluxRow> flux_table;

  void validate() const;
};

/// How quoted flux values are written: plain fractions of the flux quantum,
/// or the SQUID phase pi*Phi/Phi0 in radians (so "-0.479 pi" means -0.479 Phi0).
enum class FluxConvention { kFluxQuanta, kPhaseRadians };

double flux_from_quoted(double value, FluxConvention convention);
double quoted_from_flux(double phi_ext, FluxConvention convention);

/// Upper branch of the two-mode avoided crossing.
double avoided_crossing_upper(double omega_s_bare, double omega_c, double g);

/// Symmetric-SQUID coupler frequency omega_c0 * sqrt|cos(pi phi)|.
double squid_frequency(const TuningModel& tuning, double phi_ext);
double storage_frequency(const TuningModel& tuning, double phi_ext);

/// Inverts storage_frequency on [phi_lo, phi_hi], where it is monotone.
double flux_for_storage_frequency(const TuningModel& tuning, double omega, double phi_lo,
                                  double phi_hi);

/// Solves for (omega_s_bare, omega_c0) so the mapped storage frequency passes
/// through (phi_a, omega_a) and (phi_b, omega_b) at coupling g.
TuningModel fit_tuning_endpoints(double g, double phi_a, double omega_a, double phi_b,
                                 double omega_b);

/// Piecewise-linear interpolation of the flux table. Out-of-range flux throws
/// DomainError; there is no extrapolation.
FluxParams interpolate_flux_params(const TuningModel& tuning, double phi_ext);

/// Default tuning: endpoints [5671.4, 5694.2] MHz over phi in [-0.4793, 0] at
/// g = 2 pi x 170 MHz, with a synthetic calibration table spanning the
/// measured storage-lifetime and efficiency ranges.
TuningModel default_tuning();

/// Fock populations of a coherent state, [P_0 .. P_nmax].
std::vector<double> coherent_populations(double alpha, int n_max);

struct PopulationSample {
  int n = 0;
  double population = 0.0;
};

struct CoherentCalibration {
  double scale_c = 0.0;  // displacement per unit drive gain
  double fit_residual = 0.0;  // rms residual over retained samples
  std::size_t samples_used = 0;
};

/// Least-squares fit of alpha = c * gain against measured Fock populations.
/// Negative population samples are dropped before fitting.
CoherentCalibration fit_displacement_scale(std::span<const double> gains,
                                           std::span<const std::vector<PopulationSample>> measured);

/// Bose-Einstein occupation at frequency freq_hz (Hz) and temperature temp_k.
double thermal_occupation(double freq_hz, double temp_k);
double temperature_from_occupation(double freq_hz, double nbar);

/// Occupation from the ratio of the one-photon to zero-photon Ramsey peak weights.
double thermal_from_ramsey_ratio(double intensity_ratio);

/// Boltzmann temperature of a two-level population split.
double qubit_temp_from_populations(double p_g, double p_e, double freq_hz);

}  // namespace fluxcount
