#include "doctest.h"

#include <cmath>
#include <limits>
#include <numbers>
#include <vector>

#include <Eigen/Dense>

#include "fluxcount/errors.hpp"
#include "fluxcount/lindblad.hpp"

using namespace fluxcount;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

Eigen::VectorXcd vec(const Operator& rho) {
  return Eigen::Map<const Eigen::VectorXcd>(rho.data(), rho.size());
}

Operator unvec(const Eigen::VectorXcd& v) {
  return Eigen::Map<const Operator>(v.data());
}

// Schedule of one parity check with Gaussian pulses, centre-referenced wait.
PulseSchedule parity_schedule(const DeviceParams& p, double amplitude, int checks) {
  GaussianPulse first{amplitude, 10e-9, 2.0, 0.0};
  GaussianPulse second = first;
  second.phase = std::numbers::pi;
  const double gap = p.parity_wait() - first.duration();
  PulseSchedule s;
  for (int k = 0; k < checks; ++k) {
    s.segments.push_back({first.duration(), first});
    s.segments.push_back({gap, std::nullopt});
    s.segments.push_back({second.duration(), second});
    s.segments.push_back({p.readout_time(), std::nullopt});
  }
  return s;
}

}  // namespace

TEST_SUITE("lindblad-sim") {

TEST_CASE("rotating-frame Hamiltonian") {
  const DeviceParams p;
  const SystemOperators ops = build_hamiltonian(p);
  const double d = (ops.h0(basis_index(1, 1), basis_index(1, 1)) - ops.h0(basis_index(1, 0), basis_index(1, 0))).real();
  CHECK(d == doctest::Approx(2 * p.chi).epsilon(1e-14));
  CHECK(ops.h0(basis_index(0, 0), basis_index(0, 0)) == Complex(0.0));
  CHECK(ops.h0(basis_index(1, 0), basis_index(1, 0)) == Complex(0.0));
  CHECK(ops.h0(basis_index(2, 0), basis_index(2, 0)).real() == doctest::Approx(p.alpha_q).epsilon(1e-14));
  CHECK((ops.h0 - ops.h0.adjoint()).norm() == 0.0);
}

TEST_CASE("lab-frame spectrum matches the closed-form diagonal") {
  const DeviceParams p;
  const SystemOperators ops = build_hamiltonian(p, Frame::kLab);
  for (int q = 0; q < kTransmonLevels; ++q) {
    for (int n = 0; n < kStorageLevels; ++n) {
      const double e = p.omega_q * q + 0.5 * p.alpha_q * q * (q - 1) + p.omega_s * n + 2 * p.chi * q * n;
      const int i = basis_index(q, n);
      CHECK(ops.h0(i, i).real() == doctest::Approx(e).epsilon(1e-14));
      CHECK(ops.h0(i, i).imag() == 0.0);
    }
  }
  const Operator offdiag = ops.h0 - Operator(ops.h0.diagonal().asDiagonal());
  CHECK(offdiag.norm() == 0.0);
}

TEST_CASE("storage decay over one lifetime") {
  const DeviceParams p;
  const SystemOperators ops = build_hamiltonian(p);
  const CollapseRates rates{0.0, 0.0, 1.0 / p.t1_s};
  PulseSchedule s;
  s.segments.push_back({p.t1_s, std::nullopt});
  const auto traj = evolve(QuantumState::basis(0, 1), ops, s, rates);
  CHECK(std::abs(traj.back().storage_population(1) - std::exp(-1.0)) < 1e-6);
}

TEST_CASE("fitted storage lifetime matches the decay rate") {
  const DeviceParams p;
  const SystemOperators ops = build_hamiltonian(p);
  const CollapseRates rates = CollapseRates::from_params(p);
  PulseSchedule s;
  for (int k = 0; k < 30; ++k) s.segments.push_back({0.1 * p.t1_s, std::nullopt});
  const auto traj = evolve(QuantumState::basis(0, 1), ops, s, rates);
  // Least-squares slope of log P1 against time.
  double st = 0, sy = 0, stt = 0, sty = 0;
  const double n = static_cast<double>(traj.size());
  for (std::size_t k = 0; k < traj.size(); ++k) {
    const double t = 0.1 * p.t1_s * k, y = std::log(traj[k].storage_population(1));
    st += t;
    sy += y;
    stt += t * t;
    sty += t * y;
  }
  const double slope = (n * sty - st * sy) / (n * stt - st * st);
  CHECK(-1.0 / slope == doctest::Approx(p.t1_s).epsilon(1e-3));
}

TEST_CASE("calibrated Gaussian pulse is a pi/2 rotation") {
  const DeviceParams p;
  const SystemOperators ops = build_hamiltonian(p);
  const double amp = calibrate_half_pi_amplitude(ops, 10e-9, 2.0);
  const GaussianPulse pulse{amp, 10e-9, 2.0, 0.0};
  PulseSchedule s;
  s.segments.push_back({pulse.duration(), pulse});
  const auto traj = evolve(QuantumState::basis(0, 0), ops, s, CollapseRates{});
  const QuantumState& out = traj.back();
  CHECK(std::abs(out.transmon_population(0) - 0.5) < 1e-3);
  CHECK(std::abs(out.transmon_population(1) - 0.5) < 1e-3);
  CHECK(out.transmon_population(2) < 1e-3);
}

TEST_CASE("zero-duration schedule is the identity") {
  const DeviceParams p;
  const SystemOperators ops = build_hamiltonian(p);
  QuantumState in = QuantumState::basis(1, 2);
  PulseSchedule s;
  s.segments.push_back({0.0, std::nullopt});
  const auto traj = evolve(in, ops, s, CollapseRates::from_params(p));
  CHECK((traj.back().rho - in.rho).norm() < 1e-15);
  CHECK((idle_propagator(ops, CollapseRates::from_params(p), 0.0) -
         Superoperator::Identity(kHilbertDim * kHilbertDim, kHilbertDim * kHilbertDim))
            .norm() < 1e-14);
}

TEST_CASE("idle propagator against the closed-form number-basis solution") {
  // Coherence |g,1><e,0| under H0 and the three channels: phase from the
  // energy difference, amplitude from the summed half-rates.
  const DeviceParams p;
  const SystemOperators ops = build_hamiltonian(p);
  const CollapseRates r = CollapseRates::from_params(p);
  const double t = 1.3e-6;
  const Superoperator u = idle_propagator(ops, r, t);
  Operator rho = Operator::Zero();
  const int a = basis_index(0, 1), b = basis_index(1, 0);
  rho(a, b) = 1.0;
  const Operator out = unvec(u * vec(rho));
  const double ea = ops.h0(a, a).real(), eb = ops.h0(b, b).real();
  const double gamma = 0.5 * r.storage_decay + 0.5 * r.qubit_decay + 0.5 * 2.0 * r.qubit_dephasing;
  const Complex expect = std::exp(Complex(-gamma * t, -(ea - eb) * t));
  CHECK(std::abs(out(a, b) - expect) < 1e-9);
}

TEST_CASE("negative pure dephasing is rejected") {
  DeviceParams p;
  p.t1_q = 30e-6;
  p.t2_q = 60.5e-6;
  CHECK_THROWS_AS(CollapseRates::from_params(p), ParameterError);
}

TEST_CASE("time step must resolve the pulse") {
  const DeviceParams p;
  const SystemOperators ops = build_hamiltonian(p);
  const GaussianPulse pulse{3e7, 10e-9, 2.0, 0.0};
  DtPolicy coarse;
  coarse.max_dt = 2e-9;
  CHECK_THROWS_AS(pulse_propagator(ops, CollapseRates{}, pulse, coarse), ParameterError);
}

TEST_CASE("physicality along the full 25-check schedule") {
  const DeviceParams p;
  const SystemOperators ops = build_hamiltonian(p);
  const CollapseRates rates = CollapseRates::from_params(p);
  const double amp = calibrate_half_pi_amplitude(ops, 10e-9, 2.0);
  const auto traj = evolve(QuantumState::basis(0, 1), ops, parity_schedule(p, amp, p.n_parity), rates);
  for (const auto& s : traj) {
    CHECK(std::abs(s.trace() - 1.0) < 1e-8);
    CHECK(s.hermiticity_error() < 1e-10);
    CHECK(s.min_eigenvalue() > -1e-8);
  }

  // The assembled check map, applied without any symmetrization.
  const ParityCheck check = build_parity_check(p, true);
  Eigen::VectorXcd v = vec(QuantumState::basis(0, 1).rho);
  for (int k = 0; k < p.n_parity; ++k) v = check.map * v;
  QuantumState out;
  out.rho = unvec(v);
  CHECK(std::abs(out.trace() - 1.0) < 1e-8);
  CHECK(out.hermiticity_error() < 1e-10);
  CHECK(out.min_eigenvalue() > -1e-8);
}

TEST_CASE("parity check flips the transmon only for odd photon number") {
  const DeviceParams p;
  const ParityCheck ideal = build_parity_check(p, false);
  CHECK(parity_flip_probability(ideal, 0) < 0.01);
  CHECK(parity_flip_probability(ideal, 1) > 0.99);
  ProtocolOptions hard;
  hard.pulse_shape = PulseShape::kHard;
  const ParityCheck h = build_parity_check(p, false, hard);
  CHECK(parity_flip_probability(h, 0) < 1e-12);
  CHECK(parity_flip_probability(h, 1) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(parity_flip_probability(h, 2) < 1e-12);
}

TEST_CASE("hard pulses without decoherence give efficiency above 0.99") {
  const DeviceParams p;
  ProtocolOptions hard;
  hard.pulse_shape = PulseShape::kHard;
  hard.threads = 4;
  const ProtocolResult r = simulate_parity_protocol(p, 2000, false, 42, hard);
  INFO("efficiency = " << r.efficiency);
  CHECK(r.efficiency > 0.99);
}

TEST_CASE("hard-pulse protocol matches the classical readout chain") {
  // Oracle: with exact flips and no decay the true transmon alternates
  // e, g, e, ...; each readout is an independent confusion-matrix draw.
  const DeviceParams p;
  const HmmModel model = build_model(p, p.t1_s);
  Rng rng(123456);
  const int n = 200000;
  int pos = 0;
  std::vector<Readout> seq(p.n_parity);
  for (int i = 0; i < n; ++i) {
    for (int k = 0; k < p.n_parity; ++k) {
      const bool excited = k % 2 == 0;
      const bool correct = uniform01(rng) < (excited ? p.f_ee : p.f_gg);
      seq[k] = (excited == correct) ? Readout::kE : Readout::kG;
    }
    pos += backward_probabilities(model, seq, p.lambda_thresh).positive;
  }
  const double oracle = static_cast<double>(pos) / n;

  ProtocolOptions hard;
  hard.pulse_shape = PulseShape::kHard;
  hard.threads = 4;
  const ProtocolResult r = simulate_parity_protocol(p, 2000, false, 42, hard);
  const double sd = std::sqrt(oracle * (1 - oracle) / 2000.0 + oracle * (1 - oracle) / n);
  INFO("simulated " << r.efficiency << ", chain oracle " << oracle);
  CHECK(std::abs(r.efficiency - oracle) < 4 * sd);
}

TEST_CASE("halving the time step leaves the efficiency unchanged") {
  const DeviceParams p;
  ProtocolOptions a;
  a.threads = 4;
  ProtocolOptions b = a;
  b.dt.max_dt = 0.5 * a.dt.max_dt;
  const ProtocolResult ra = simulate_parity_protocol(p, 2000, true, 42, a);
  const ProtocolResult rb = simulate_parity_protocol(p, 2000, true, 42, b);
  CHECK(std::abs(ra.efficiency - rb.efficiency) < 0.01);
}

TEST_CASE("protocol is independent of the thread count") {
  const DeviceParams p;
  ProtocolOptions o;
  o.pulse_shape = PulseShape::kHard;
  o.keep_sequences = true;
  o.threads = 1;
  const ProtocolResult a = simulate_parity_protocol(p, 300, true, 5, o);
  o.threads = 6;
  const ProtocolResult b = simulate_parity_protocol(p, 300, true, 5, o);
  CHECK(a.positives == b.positives);
  for (std::size_t i = 0; i < a.sequences.size(); ++i)
    CHECK(a.sequences[i].to_string() == b.sequences[i].to_string());
}

}  // TEST_SUITE
