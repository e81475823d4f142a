#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "fluxcount/device_model.hpp"
#include "fluxcount/rng.hpp"

namespace fluxcount {

enum class Readout : std::uint8_t { kG = 0, kE = 1 };

/// Joint storage (x) transmon hidden states, in matrix order.
enum HiddenState : int { k0g = 0, k0e = 1, k1g = 2, k1e = 3 };

constexpr int storage_of(int state) { return state / 2; }
constexpr int transmon_of(int state) { return state % 2; }
constexpr int joint_state(int storage, int transmon) { return 2 * storage + transmon; }

using TransitionMatrix = Eigen::Matrix4d;
using EmissionMatrix = Eigen::Matrix<double, 4, 2>;

struct ReadoutSequence {
  std::vector<Readout> bits;

  std::size_t size() const { return bits.size(); }
  /// Compact form, one character per readout in {g, e}.
  std::string to_string() const;
  static ReadoutSequence from_string(std::string_view text);
};

struct HmmModel {
  TransitionMatrix transition = TransitionMatrix::Identity();
  EmissionMatrix emission = EmissionMatrix::Zero();
  double t_m = 0.0;  // readout period between parity checks
  double t_p = 0.0;  // parity wait

  /// Row-stochasticity and range checks; throws ParameterError.
  void validate() const;
};

/// Single-cycle flip/jump probabilities before assembly into T.
struct TransitionRates {
  double p_ge = 0.0;
  double p_eg = 0.0;
  double p_01 = 0.0;
  double p_10 = 0.0;
};

/// Raw (unclamped) rates; sums of error probabilities may exceed one.
TransitionRates transition_rates(const DeviceParams& params, double t1_s);

/// Transition matrix over (|0g>, |0e>, |1g>, |1e>). Rows where the storage
/// ends in |1> carry the parity flip of the transmon. Rates are clamped to
/// [0, 1]; any raw rate above 1.5 throws ParameterError.
TransitionMatrix build_transition(const DeviceParams& params, double t1_s);

/// Rows (F_gg, 1-F_gg) for transmon g and (1-F_ee, F_ee) for transmon e.
EmissionMatrix build_emission(double f_gg, double f_ee);

HmmModel build_model(const DeviceParams& params, double t1_s);

/// Forward simulation: emit from the current hidden state, then step with T.
ReadoutSequence sample_sequence(const HmmModel& model, int initial_storage, Readout initial_transmon,
                                int n, Rng& rng);

/// Initial-storage likelihoods from the backward pass. Stored as logs; each
/// p_i sums the |ig> and |ie> start families with unit weight.
struct CountVerdict {
  double log_p0 = 0.0;
  double log_p1 = 0.0;
  bool positive = false;

  double p0() const;
  double p1() const;
  /// p1 / p0; +inf when p0 vanishes.
  double lambda() const;
  double log_lambda() const { return log_p1 - log_p0; }
};

/// Backward recursion with per-step rescaling. O(N * 16).
CountVerdict backward_probabilities(const HmmModel& model, std::span<const Readout> seq,
                                    double lambda_thresh);

inline CountVerdict backward_probabilities(const HmmModel& model, const ReadoutSequence& seq,
                                           double lambda_thresh) {
  return backward_probabilities(model, std::span<const Readout>(seq.bits), lambda_thresh);
}

/// Positive iff p1/p0 >= lambda_thresh (ties count as positive). Throws
/// DomainError when both likelihoods vanish.
bool classify(const CountVerdict& verdict, double lambda_thresh);

/// Text batch: one sequence per line.
void write_sequences(std::ostream& out, std::span<const ReadoutSequence> batch);
std::vector<ReadoutSequence> read_sequences(std::istream& in);

/// CSV dump of T and E for inspection.
void write_model_csv(std::ostream& out, const HmmModel& model);

}  // namespace fluxcount
