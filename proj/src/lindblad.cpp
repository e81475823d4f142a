#include "fluxcount/lindblad.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include <Eigen/Eigenvalues>
#include <Eigen/Sparse>
#include <unsupported/Eigen/KroneckerProduct>
#include <unsupported/Eigen/MatrixFunctions>

#include "fluxcount/errors.hpp"
#include "fluxcount/parallel.hpp"
#include "fluxcount/rng.hpp"

namespace fluxcount {
namespace {

constexpr int kSuperDim = kHilbertDim * kHilbertDim;
constexpr double kTraceDriftLimit = 1e-6;
constexpr std::uint64_t kProtocolStream = 0x4c494e44ULL;  // "LIND"

using SparseSuper = Eigen::SparseMatrix<Complex>;
using Ket = Eigen::Matrix<Complex, kHilbertDim, 1>;
const Complex kI{0.0, 1.0};

Eigen::MatrixXcd dense(const Operator& op) { return Eigen::MatrixXcd(op); }

// Column-major vec: vec(A X B) = (B^T kron A) vec(X).
Eigen::MatrixXcd commutator_super(const Operator& h) {
  const Eigen::MatrixXcd id = Eigen::MatrixXcd::Identity(kHilbertDim, kHilbertDim);
  return -kI * (Eigen::kroneckerProduct(id, dense(h)).eval() -
                Eigen::kroneckerProduct(dense(h).transpose(), id).eval());
}

Eigen::MatrixXcd dissipator_super(const Operator& c) {
  const Eigen::MatrixXcd id = Eigen::MatrixXcd::Identity(kHilbertDim, kHilbertDim);
  const Eigen::MatrixXcd cdc = dense(c.adjoint() * c);
  return Eigen::kroneckerProduct(dense(c).conjugate(), dense(c)).eval() -
         0.5 * Eigen::kroneckerProduct(id, cdc).eval() -
         0.5 * Eigen::kroneckerProduct(cdc.transpose(), id).eval();
}

Operator phased_drive(const SystemOperators& ops, double phase) {
  const Complex w = std::polar(1.0, -phase);
  return w * ops.a_q + std::conj(w) * Operator(ops.a_q.adjoint());
}

Eigen::Map<const Eigen::VectorXcd> as_vec(const Operator& rho) {
  return Eigen::Map<const Eigen::VectorXcd>(rho.data(), kSuperDim);
}

Operator from_vec(const Eigen::VectorXcd& v) {
  return Eigen::Map<const Operator>(v.data());
}

// Sum of diagonal entries of vec(rho), one row vector per column of X.
Eigen::RowVectorXcd traces(const Eigen::MatrixXcd& x) {
  Eigen::RowVectorXcd t = Eigen::RowVectorXcd::Zero(x.cols());
  for (int i = 0; i < kHilbertDim; ++i) t += x.row(i * kHilbertDim + i);
  return t;
}

void check_trace_preserving(const Superoperator& s, const char* what) {
  const Eigen::RowVectorXcd t = traces(s);
  for (int j = 0; j < kSuperDim; ++j) {
    const int r = j % kHilbertDim;
    const int c = j / kHilbertDim;
    const double expected = r == c ? 1.0 : 0.0;
    if (std::abs(t[j] - expected) > kTraceDriftLimit)
      throw IntegrationError(std::string(what) + ": trace drift exceeds 1e-6");
  }
}

struct PulseGenerator {
  Eigen::MatrixXcd l0;
  SparseSuper ld;
};

PulseGenerator pulse_generator(const SystemOperators& ops, const CollapseRates& rates, double phase) {
  return {liouvillian(ops, rates), drive_superoperator(ops, phase).sparseView()};
}

// Integrating-factor RK4 of dX/dt = (L0 + e(t) LD) X across one pulse: the
// static part is propagated exactly by E = exp(L0 h/2), RK4 handles the drive.
Eigen::MatrixXcd rk4_pulse(const PulseGenerator& g, const GaussianPulse& pulse, int steps,
                           Eigen::MatrixXcd x) {
  const double h = pulse.duration() / steps;
  const SparseSuper e_half = Eigen::MatrixXcd((g.l0 * (0.5 * h)).exp()).sparseView(1.0, 1e-20);
  auto drive = [&](double t, const Eigen::MatrixXcd& y) -> Eigen::MatrixXcd {
    return (h * pulse.envelope(t)) * (g.ld * y);
  };
  for (int k = 0; k < steps; ++k) {
    const double t = pulse.duration() * k / steps;
    const Eigen::MatrixXcd k1 = drive(t, x);
    const Eigen::MatrixXcd ex = e_half * x;
    const Eigen::MatrixXcd k2 = drive(t + 0.5 * h, ex + e_half * (0.5 * k1));
    const Eigen::MatrixXcd k3 = drive(t + 0.5 * h, ex + 0.5 * k2);
    const Eigen::MatrixXcd k4 = drive(t + h, e_half * (ex + k3));
    x = e_half * (e_half * (x + k1 / 6.0) + (k2 + k3) / 3.0) + k4 / 6.0;
  }
  return x;
}

void check_dt(const GaussianPulse& pulse, const DtPolicy& dt) {
  if (!(dt.max_dt > 0)) throw ParameterError("dt policy: max_dt must be positive");
  if (dt.max_dt > pulse.sigma / 10.0 * (1.0 + 1e-12))
    throw ParameterError("dt policy: max_dt must not exceed sigma/10 during pulses");
  if (!(dt.tolerance > 0) || dt.max_refinements < 0)
    throw ParameterError("dt policy: tolerance must be positive and refinements non-negative");
}

// Step doubling: accept the finer of two solutions once they agree to tolerance.
Eigen::MatrixXcd integrate_pulse(const PulseGenerator& g, const GaussianPulse& pulse,
                                 const DtPolicy& dt, const Eigen::MatrixXcd& x0) {
  check_dt(pulse, dt);
  int steps = std::max(1, static_cast<int>(std::ceil(pulse.duration() / dt.max_dt - 1e-9)));
  Eigen::MatrixXcd coarse = rk4_pulse(g, pulse, steps, x0);
  for (int r = 0; r <= dt.max_refinements; ++r) {
    Eigen::MatrixXcd fine = rk4_pulse(g, pulse, 2 * steps, x0);
    const double err = (fine - coarse).cwiseAbs().maxCoeff();
    if (err <= dt.tolerance) return fine;
    coarse = std::move(fine);
    steps *= 2;
  }
  throw IntegrationError("pulse integration: step-doubling error above tolerance after refinement");
}

Eigen::MatrixXcd apply_idle(const SystemOperators& ops, const CollapseRates& rates, double duration,
                            const Eigen::MatrixXcd& x) {
  if (duration <= 0.0) return x;
  return idle_propagator(ops, rates, duration) * x;
}

Eigen::MatrixXcd apply_segment(const SystemOperators& ops, const CollapseRates& rates,
                               const Segment& seg, const DtPolicy& dt, const Eigen::MatrixXcd& x) {
  if (!seg.drive) return apply_idle(ops, rates, seg.duration, x);
  const GaussianPulse& p = *seg.drive;
  const double pad = 0.5 * (seg.duration - p.duration());
  Eigen::MatrixXcd y = apply_idle(ops, rates, pad, x);
  y = integrate_pulse(pulse_generator(ops, rates, p.phase), p, dt, y);
  return apply_idle(ops, rates, pad, y);
}

// Pure-state pi/2 calibration: transmon rotation on |g,0> without dissipation.
double half_pi_error(const SystemOperators& ops, const GaussianPulse& pulse, int steps) {
  const Operator d = phased_drive(ops, pulse.phase);
  Ket psi = Ket::Zero();
  psi[basis_index(0, 0)] = 1.0;
  const double h = pulse.duration() / steps;
  auto rhs = [&](double t, const Ket& y) -> Ket {
    return -kI * (ops.h0 * y + pulse.envelope(t) * (d * y));
  };
  for (int k = 0; k < steps; ++k) {
    const double t = k * h;
    const Ket k1 = rhs(t, psi);
    const Ket k2 = rhs(t + 0.5 * h, psi + 0.5 * h * k1);
    const Ket k3 = rhs(t + 0.5 * h, psi + 0.5 * h * k2);
    const Ket k4 = rhs(t + h, psi + h * k3);
    psi += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
  return std::norm(psi[basis_index(0, 0)]) - std::norm(psi[basis_index(1, 0)]);
}

void project_transmon(Operator& rho, bool ground) {
  for (int i = 0; i < kHilbertDim; ++i) {
    const bool keep_i = (i / kStorageLevels == 0) == ground;
    if (keep_i) continue;
    rho.row(i).setZero();
    rho.col(i).setZero();
  }
}

double ground_population(const Operator& rho) {
  double p = 0.0;
  for (int s = 0; s < kStorageLevels; ++s) p += rho(basis_index(0, s), basis_index(0, s)).real();
  const double tr = rho.trace().real();
  return std::clamp(p / tr, 0.0, 1.0);
}

// Reset the transmon to `level` and keep the reduced storage state.
Operator reset_transmon(const Operator& rho, int level) {
  Eigen::Matrix<Complex, kStorageLevels, kStorageLevels> rs =
      Eigen::Matrix<Complex, kStorageLevels, kStorageLevels>::Zero();
  for (int q = 0; q < kTransmonLevels; ++q)
    rs += rho.block<kStorageLevels, kStorageLevels>(q * kStorageLevels, q * kStorageLevels);
  Operator out = Operator::Zero();
  out.block<kStorageLevels, kStorageLevels>(level * kStorageLevels, level * kStorageLevels) = rs;
  return out;
}

Readout measure(Operator& rho, const DeviceParams& params, const ProtocolOptions& options, Rng& rng) {
  const double p0 = ground_population(rho);
  Readout outcome;
  if (options.measurement == MeasurementModel::kProjective) {
    const bool truth_g = uniform01(rng) < p0;
    project_transmon(rho, truth_g);
    const double u = uniform01(rng);
    if (truth_g)
      outcome = u < params.f_gg ? Readout::kG : Readout::kE;
    else
      outcome = u < params.f_ee ? Readout::kE : Readout::kG;
  } else {
    const double pg = params.f_gg * p0 + (1.0 - params.f_ee) * (1.0 - p0);
    outcome = uniform01(rng) < pg ? Readout::kG : Readout::kE;
    const bool ground = outcome == Readout::kG;
    const double weight = ground ? p0 : 1.0 - p0;
    if (weight < 1e-12)
      rho = reset_transmon(rho, ground ? 0 : 1);
    else
      project_transmon(rho, ground);
  }
  if (options.storage_coherence == StorageCoherence::kDephase) {
    for (int i = 0; i < kHilbertDim; ++i)
      for (int j = 0; j < kHilbertDim; ++j)
        if (i % kStorageLevels != j % kStorageLevels) rho(i, j) = 0.0;
  }
  QuantumState st{rho};
  st.symmetrize();
  rho = st.rho;
  return outcome;
}

}  // namespace

QuantumState QuantumState::basis(int transmon, int storage) {
  if (transmon < 0 || transmon >= kTransmonLevels || storage < 0 || storage >= kStorageLevels)
    throw ParameterError("QuantumState::basis: level outside the truncated space");
  QuantumState s;
  const int i = basis_index(transmon, storage);
  s.rho(i, i) = 1.0;
  return s;
}

double QuantumState::trace() const { return rho.trace().real(); }

double QuantumState::hermiticity_error() const { return (rho - rho.adjoint()).cwiseAbs().maxCoeff(); }

double QuantumState::min_eigenvalue() const {
  Eigen::SelfAdjointEigenSolver<Operator> es(rho, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

double QuantumState::transmon_population(int level) const {
  double p = 0.0;
  for (int s = 0; s < kStorageLevels; ++s) p += rho(basis_index(level, s), basis_index(level, s)).real();
  return p;
}

double QuantumState::storage_population(int n) const {
  double p = 0.0;
  for (int q = 0; q < kTransmonLevels; ++q) p += rho(basis_index(q, n), basis_index(q, n)).real();
  return p;
}

void QuantumState::symmetrize() {
  rho = 0.5 * (rho + rho.adjoint()).eval();
  const double tr = trace();
  if (!(tr > 0)) throw IntegrationError("density matrix lost its trace");
  rho /= tr;
}

SystemOperators build_hamiltonian(const DeviceParams& params, Frame frame) {
  params.validate();
  SystemOperators ops;
  ops.h0.setZero();
  ops.a_q.setZero();
  ops.n_q.setZero();
  ops.a_s.setZero();
  ops.n_s.setZero();
  for (int q = 0; q < kTransmonLevels; ++q) {
    for (int s = 0; s < kStorageLevels; ++s) {
      const int i = basis_index(q, s);
      double e = 0.5 * params.alpha_q * q * (q - 1) + 2.0 * params.chi * q * s;
      if (frame == Frame::kLab) e += params.omega_q * q + params.omega_s * s;
      ops.h0(i, i) = e;
      ops.n_q(i, i) = q;
      ops.n_s(i, i) = s;
      if (q > 0) ops.a_q(basis_index(q - 1, s), i) = std::sqrt(static_cast<double>(q));
      if (s > 0) ops.a_s(basis_index(q, s - 1), i) = std::sqrt(static_cast<double>(s));
    }
  }
  ops.drive = ops.a_q + Operator(ops.a_q.adjoint());
  return ops;
}

double GaussianPulse::envelope(double t) const {
  // Tolerance keeps the truncated edges inside the window despite rounding in t.
  const double slack = 1e-9 * sigma;
  if (t < -slack || t > duration() + slack) return 0.0;
  const double x = (t - cutoff_sigmas * sigma) / sigma;
  return amplitude * std::exp(-0.5 * x * x);
}

void PulseSchedule::validate() const {
  for (const auto& s : segments) {
    if (!(s.duration >= 0.0) || !std::isfinite(s.duration))
      throw ParameterError("pulse schedule: segment durations must be finite and non-negative");
    if (s.drive) {
      if (!(s.drive->sigma > 0) || !(s.drive->cutoff_sigmas > 0))
        throw ParameterError("pulse schedule: pulse sigma and cutoff must be positive");
      if (s.duration + 1e-15 < s.drive->duration())
        throw ParameterError("pulse schedule: driven segment shorter than its pulse");
    }
  }
}

CollapseRates CollapseRates::from_params(const DeviceParams& params) {
  CollapseRates r;
  r.qubit_decay = 1.0 / params.t1_q;
  r.qubit_dephasing = 1.0 / params.t2_q - 0.5 / params.t1_q;
  r.storage_decay = 1.0 / params.t1_s;
  if (r.qubit_dephasing < -1e-12 * r.qubit_decay)
    throw ParameterError("collapse rates: derived pure-dephasing rate is negative (T2 > 2 T1)");
  r.qubit_dephasing = std::max(0.0, r.qubit_dephasing);
  return r;
}

Superoperator liouvillian(const SystemOperators& ops, const CollapseRates& rates) {
  Superoperator l = commutator_super(ops.h0);
  if (rates.qubit_decay > 0) l += rates.qubit_decay * dissipator_super(ops.a_q);
  if (rates.qubit_dephasing > 0) l += 2.0 * rates.qubit_dephasing * dissipator_super(ops.n_q);
  if (rates.storage_decay > 0) l += rates.storage_decay * dissipator_super(ops.a_s);
  return l;
}

Superoperator drive_superoperator(const SystemOperators& ops, double phase) {
  return commutator_super(phased_drive(ops, phase));
}

Superoperator idle_propagator(const SystemOperators& ops, const CollapseRates& rates, double duration) {
  if (!(duration >= 0.0)) throw ParameterError("idle propagator: duration must be non-negative");
  if (duration == 0.0) return Superoperator::Identity(kSuperDim, kSuperDim);
  const Superoperator l = liouvillian(ops, rates) * duration;
  Superoperator p = l.exp();
  check_trace_preserving(p, "idle propagator");
  return p;
}

Superoperator pulse_propagator(const SystemOperators& ops, const CollapseRates& rates,
                               const GaussianPulse& pulse, const DtPolicy& dt) {
  Superoperator p = integrate_pulse(pulse_generator(ops, rates, pulse.phase), pulse, dt,
                                    Superoperator::Identity(kSuperDim, kSuperDim));
  check_trace_preserving(p, "pulse propagator");
  return p;
}

Superoperator hard_rotation(double angle, double phase) {
  Eigen::Matrix3cd u = Eigen::Matrix3cd::Identity();
  const double c = std::cos(0.5 * angle);
  const double s = std::sin(0.5 * angle);
  u(0, 0) = c;
  u(1, 1) = c;
  u(0, 1) = -kI * s * std::polar(1.0, -phase);
  u(1, 0) = -kI * s * std::polar(1.0, phase);
  const Eigen::MatrixXcd full =
      Eigen::kroneckerProduct(Eigen::MatrixXcd(u), Eigen::MatrixXcd::Identity(kStorageLevels, kStorageLevels))
          .eval();
  return Eigen::kroneckerProduct(full.conjugate(), full).eval();
}

std::vector<QuantumState> evolve(const QuantumState& initial, const SystemOperators& ops,
                                 const PulseSchedule& schedule, const CollapseRates& rates,
                                 const DtPolicy& dt) {
  schedule.validate();
  std::vector<QuantumState> traj{initial};
  Eigen::VectorXcd v = as_vec(initial.rho);
  for (const auto& seg : schedule.segments) {
    const double before = traj.back().trace();
    v = apply_segment(ops, rates, seg, dt, v);
    QuantumState next{from_vec(v)};
    if (std::abs(next.trace() - before) > kTraceDriftLimit)
      throw IntegrationError("evolve: trace drift exceeds 1e-6 within a segment");
    next.symmetrize();
    v = as_vec(next.rho);
    traj.push_back(next);
  }
  return traj;
}

double calibrate_half_pi_amplitude(const SystemOperators& ops, double sigma, double cutoff_sigmas,
                                   const DtPolicy& dt) {
  GaussianPulse pulse;
  pulse.sigma = sigma;
  pulse.cutoff_sigmas = cutoff_sigmas;
  check_dt(pulse, dt);
  const int steps = 4 * std::max(1, static_cast<int>(std::ceil(pulse.duration() / dt.max_dt - 1e-9)));
  // Area estimate from the truncated Gaussian integral, then bracket around it.
  const double area = sigma * std::sqrt(2.0 * std::numbers::pi) * std::erf(cutoff_sigmas / std::sqrt(2.0));
  double lo = 0.5 * (std::numbers::pi / 4.0) / area;
  double hi = 1.5 * (std::numbers::pi / 4.0) / area;
  auto f = [&](double a) {
    pulse.amplitude = a;
    return half_pi_error(ops, pulse, steps);
  };
  if (!(f(lo) > 0 && f(hi) < 0)) throw IntegrationError("pulse calibration: pi/2 amplitude not bracketed");
  for (int it = 0; it < 80 && hi - lo > 1e-13 * hi; ++it) {
    const double mid = 0.5 * (lo + hi);
    (f(mid) > 0 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

ParityCheck build_parity_check(const DeviceParams& params, bool with_decoherence,
                               const ProtocolOptions& options) {
  const SystemOperators ops = build_hamiltonian(params);
  const CollapseRates rates = with_decoherence ? CollapseRates::from_params(params) : CollapseRates{};
  const double tp = params.parity_wait();
  const double t_read = params.readout_time();

  ParityCheck check;
  Superoperator first, second;
  double gap = tp;
  if (options.pulse_shape == PulseShape::kHard) {
    first = hard_rotation(std::numbers::pi / 2.0, 0.0);
    second = hard_rotation(std::numbers::pi / 2.0, std::numbers::pi);
  } else {
    GaussianPulse p;
    p.sigma = options.sigma;
    p.cutoff_sigmas = options.cutoff_sigmas;
    p.amplitude = calibrate_half_pi_amplitude(ops, p.sigma, p.cutoff_sigmas, options.dt);
    check.pulse_amplitude = p.amplitude;
    first = pulse_propagator(ops, rates, p, options.dt);
    p.phase = std::numbers::pi;
    second = pulse_propagator(ops, rates, p, options.dt);
    if (options.wait_reference == ParityWaitReference::kPulseCenters) gap = tp - p.duration();
    if (gap < 0) throw ParameterError("parity check: pulses longer than the parity wait");
    check.duration = 2.0 * p.duration();
  }
  check.duration += gap + t_read;
  const Superoperator wait = idle_propagator(ops, rates, gap);
  const Superoperator readout = idle_propagator(ops, rates, t_read);
  check.map = readout * (second * (wait * first));
  check_trace_preserving(check.map, "parity check");
  return check;
}

double parity_flip_probability(const ParityCheck& check, int storage_n) {
  const QuantumState s = QuantumState::basis(0, storage_n);
  const Eigen::VectorXcd v = check.map * as_vec(s.rho);
  return 1.0 - ground_population(from_vec(v));
}

ProtocolResult simulate_parity_protocol(const DeviceParams& params, std::size_t trials,
                                        bool with_decoherence, std::uint64_t seed,
                                        const ProtocolOptions& options) {
  params.validate();
  if (trials == 0) throw ParameterError("parity protocol: need at least one trial");
  const ParityCheck check = build_parity_check(params, with_decoherence, options);
  const HmmModel model = build_model(params, params.t1_s);
  const Eigen::VectorXcd start = as_vec(QuantumState::basis(0, 1).rho);

  std::vector<ReadoutSequence> seqs(trials);
  std::vector<char> positive(trials, 0);
  parallel_for(trials, options.threads, [&](std::size_t t) {
    Rng rng = make_stream(seed, kProtocolStream + (with_decoherence ? 1 : 0), t);
    Eigen::VectorXcd v = start;
    ReadoutSequence& seq = seqs[t];
    seq.bits.reserve(static_cast<std::size_t>(params.n_parity));
    for (int k = 0; k < params.n_parity; ++k) {
      v = check.map * v;
      Operator rho = from_vec(v);
      seq.bits.push_back(measure(rho, params, options, rng));
      v = as_vec(rho);
    }
    positive[t] = backward_probabilities(model, seq, params.lambda_thresh).positive;
  });

  ProtocolResult r;
  r.trials = trials;
  r.positives = static_cast<std::size_t>(std::count(positive.begin(), positive.end(), 1));
  r.efficiency = static_cast<double>(r.positives) / static_cast<double>(trials);
  r.std_error = std::sqrt(r.efficiency * (1.0 - r.efficiency) / static_cast<double>(trials));
  r.with_decoherence = with_decoherence;
  r.dt = options.dt.max_dt;
  r.pulse_amplitude = check.pulse_amplitude;
  if (options.keep_sequences) r.sequences = std::move(seqs);
  return r;
}

}  // namespace fluxcount
