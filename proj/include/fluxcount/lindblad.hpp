#pragma once

#include <complex>
#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Core>

#include "fluxcount/device_model.hpp"
#include "fluxcount/hmm_counter.hpp"

namespace fluxcount {

inline constexpr int kTransmonLevels = 3;
inline constexpr int kStorageLevels = 4;
inline constexpr int kHilbertDim = kTransmonLevels * kStorageLevels;

using Complex = std::complex<double>;
using Operator = Eigen::Matrix<Complex, kHilbertDim, kHilbertDim>;
/// Linear map on column-major vec(rho), 144 x 144.
using Superoperator = Eigen::MatrixXcd;

/// Transmon-major product basis: |q> (x) |n_s>.
constexpr int basis_index(int transmon, int storage) { return transmon * kStorageLevels + storage; }

struct QuantumState {
  Operator rho = Operator::Zero();

  static QuantumState basis(int transmon, int storage);

  double trace() const;
  double hermiticity_error() const;
  double min_eigenvalue() const;
  double transmon_population(int level) const;
  double storage_population(int n) const;
  /// Hermitian part with unit trace.
  void symmetrize();
};

/// Operators of the truncated Kerr-transmon / storage system, in the frame
/// rotating at the bare transmon and storage frequencies.
struct SystemOperators {
  Operator h0;     // (alpha/2) n_q(n_q-1) + 2 chi n_q n_s, diagonal
  Operator drive;  // a_q + a_q^dagger
  Operator a_q;
  Operator n_q;
  Operator a_s;
  Operator n_s;
};

/// kRotating keeps only the Kerr and dispersive terms; kLab adds
/// omega_q n_q + omega_s n_s.
enum class Frame { kRotating, kLab };

SystemOperators build_hamiltonian(const DeviceParams& params, Frame frame = Frame::kRotating);

/// Gaussian envelope truncated at +-cutoff_sigmas; the drive term is
/// envelope(t) * (e^{-i phase} a_q + e^{i phase} a_q^dagger).
struct GaussianPulse {
  double amplitude = 0.0;  // rad/s at the peak
  double sigma = 10e-9;
  double cutoff_sigmas = 2.0;
  double phase = 0.0;

  double duration() const { return 2.0 * cutoff_sigmas * sigma; }
  /// Envelope at time t measured from the pulse start.
  double envelope(double t) const;
};

struct Segment {
  double duration = 0.0;
  std::optional<GaussianPulse> drive;  // centred in the segment when present
};

struct PulseSchedule {
  std::vector<Segment> segments;
  void validate() const;
};

/// Lindblad channels: a_q at qubit_decay, sqrt(2 gamma_phi) n_q, a_s at storage_decay.
struct CollapseRates {
  double qubit_decay = 0.0;
  double qubit_dephasing = 0.0;  // gamma_phi = 1/T2 - 1/(2 T1)
  double storage_decay = 0.0;

  /// Throws ParameterError if the derived pure-dephasing rate is negative.
  static CollapseRates from_params(const DeviceParams& params);
};

struct DtPolicy {
  double max_dt = 0.5e-9;    // must stay <= sigma/10 during pulses
  double tolerance = 1e-7;   // step-doubling bound on max |entry| difference
  int max_refinements = 4;
};

/// Density-matrix trajectory sampled at segment boundaries (front() is the
/// input). Drive-free segments use the exact matrix-exponential propagator;
/// driven segments use RK4 with a step-doubling check. Throws
/// IntegrationError when the trace drifts by more than 1e-6 in a segment.
std::vector<QuantumState> evolve(const QuantumState& initial, const SystemOperators& ops,
                                 const PulseSchedule& schedule, const CollapseRates& rates,
                                 const DtPolicy& dt = {});

Superoperator liouvillian(const SystemOperators& ops, const CollapseRates& rates);
/// -i[D_phase, .] for unit drive amplitude.
Superoperator drive_superoperator(const SystemOperators& ops, double phase);
Superoperator idle_propagator(const SystemOperators& ops, const CollapseRates& rates, double duration);
Superoperator pulse_propagator(const SystemOperators& ops, const CollapseRates& rates,
                               const GaussianPulse& pulse, const DtPolicy& dt = {});
/// Instantaneous rotation by `angle` about the equatorial axis at `phase`,
/// acting on the {g, e} block only.
Superoperator hard_rotation(double angle, double phase);

/// Peak amplitude giving a pi/2 rotation of |g,0> (no decoherence), found by bisection.
double calibrate_half_pi_amplitude(const SystemOperators& ops, double sigma, double cutoff_sigmas,
                                   const DtPolicy& dt = {});

enum class PulseShape { kGaussian, kHard };
/// Whether the parity wait pi/|2chi| separates pulse centres or pulse edges.
enum class ParityWaitReference { kPulseCenters, kPulseEdges };
/// kProjective: project on the true transmon state, then draw the readout
/// through the confusion matrix. kAssignOutcome: draw from F*P and assign
/// the transmon to the drawn outcome.
enum class MeasurementModel { kProjective, kAssignOutcome };
enum class StorageCoherence { kKeep, kDephase };

struct ProtocolOptions {
  PulseShape pulse_shape = PulseShape::kGaussian;
  ParityWaitReference wait_reference = ParityWaitReference::kPulseCenters;
  MeasurementModel measurement = MeasurementModel::kProjective;
  StorageCoherence storage_coherence = StorageCoherence::kKeep;
  double sigma = 10e-9;
  double cutoff_sigmas = 2.0;
  DtPolicy dt;
  unsigned threads = 1;
  bool keep_sequences = false;
};

/// One parity check (pi/2, wait, -pi/2, readout wait) as a single map.
struct ParityCheck {
  Superoperator map;
  double pulse_amplitude = 0.0;
  double duration = 0.0;
};

ParityCheck build_parity_check(const DeviceParams& params, bool with_decoherence,
                               const ProtocolOptions& options = {});

/// Transmon excitation probability after one check on |g> (x) |n>.
double parity_flip_probability(const ParityCheck& check, int storage_n);

struct ProtocolResult {
  double efficiency = 0.0;
  double std_error = 0.0;
  std::size_t trials = 0;
  std::size_t positives = 0;
  bool with_decoherence = false;
  double dt = 0.0;
  double pulse_amplitude = 0.0;
  std::vector<ReadoutSequence> sequences;
};

/// Starts in |g> (x) |1>, runs n_parity checks with sampled confusion-matrix
/// readout after each, and classifies the readout string with the device
/// HMM at lambda_thresh.
ProtocolResult simulate_parity_protocol(const DeviceParams& params, std::size_t trials,
                                        bool with_decoherence, std::uint64_t seed,
                                        const ProtocolOptions& options = {});

}  // namespace fluxcount
