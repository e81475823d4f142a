#include "fluxcount/hmm_counter.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>

#include "fluxcount/errors.hpp"

namespace fluxcount {
namespace {

constexpr double kStochasticTol = 1e-12;
constexpr double kSanityLimit = 1.5;

double decay_prob(double t, double tau) { return -std::expm1(-t / tau); }

double clamp_rate(double raw, const char* name) {
  if (raw > kSanityLimit) {
    throw ParameterError(std::string("build_transition: ") + name + " = " + std::to_string(raw) +
                         " is outside the model's validity regime");
  }
  return std::clamp(raw, 0.0, 1.0);
}

}  // namespace

std::string ReadoutSequence::to_string() const {
  std::string s;
  s.reserve(bits.size());
  for (Readout r : bits) s.push_back(r == Readout::kG ? 'g' : 'e');
  return s;
}

ReadoutSequence ReadoutSequence::from_string(std::string_view text) {
  ReadoutSequence seq;
  seq.bits.reserve(text.size());
  for (char c : text) {
    if (c == 'g')
      seq.bits.push_back(Readout::kG);
    else if (c == 'e')
      seq.bits.push_back(Readout::kE);
    else
      throw ParameterError(std::string("readout sequence: unexpected character '") + c + "'");
  }
  return seq;
}

void HmmModel::validate() const {
  for (int i = 0; i < 4; ++i) {
    if ((transition.row(i).array() < 0).any() || (transition.row(i).array() > 1).any())
      throw ParameterError("HmmModel: transition entries must lie in [0, 1]");
    if (std::abs(transition.row(i).sum() - 1.0) > kStochasticTol)
      throw ParameterError("HmmModel: transition rows must sum to 1");
    if ((emission.row(i).array() < 0).any() || (emission.row(i).array() > 1).any())
      throw ParameterError("HmmModel: emission entries must lie in [0, 1]");
    if (std::abs(emission.row(i).sum() - 1.0) > kStochasticTol)
      throw ParameterError("HmmModel: emission rows must sum to 1");
  }
}

TransitionRates transition_rates(const DeviceParams& params, double t1_s) {
  if (!(t1_s > 0)) throw ParameterError("build_transition: T1_s must be positive");
  const double t_m = params.readout_time();
  const double t_p = params.parity_wait();
  const double q_decay = decay_prob(t_m, params.t1_q);
  const double q_dephase = decay_prob(t_p, params.t2_q);
  const double heat = params.nbar_q * q_decay;

  TransitionRates r;
  if (params.error_combination == ErrorCombination::kAdditive) {
    r.p_ge = heat + q_dephase;
    r.p_eg = q_decay + q_dephase;
  } else {
    r.p_ge = 1.0 - (1.0 - heat) * (1.0 - q_dephase);
    r.p_eg = 1.0 - (1.0 - q_decay) * (1.0 - q_dephase);
  }
  const double s_decay = decay_prob(t_m, t1_s);
  r.p_01 = params.nbar_s * s_decay;
  r.p_10 = s_decay;
  return r;
}

TransitionMatrix build_transition(const DeviceParams& params, double t1_s) {
  const TransitionRates raw = transition_rates(params, t1_s);
  const double p_ge = clamp_rate(raw.p_ge, "P_ge");
  const double p_eg = clamp_rate(raw.p_eg, "P_eg");
  const double p_01 = clamp_rate(raw.p_01, "P_01");
  const double p_10 = clamp_rate(raw.p_10, "P_10");
  const double p_gg = 1.0 - p_ge;
  const double p_ee = 1.0 - p_eg;
  const double p_00 = 1.0 - p_01;
  const double p_11 = 1.0 - p_10;

  TransitionMatrix t;
  // clang-format off
  t << p_00 * p_gg, p_00 * p_ge, p_01 * p_ge, p_01 * p_gg,
       p_00 * p_eg, p_00 * p_ee, p_01 * p_ee, p_01 * p_eg,
       p_10 * p_gg, p_10 * p_ge, p_11 * p_ge, p_11 * p_gg,
       p_10 * p_eg, p_10 * p_ee, p_11 * p_ee, p_11 * p_eg;
  // clang-format on
  for (int i = 0; i < 4; ++i) t.row(i) /= t.row(i).sum();
  return t;
}

EmissionMatrix build_emission(double f_gg, double f_ee) {
  if (!(f_gg > 0.5 && f_gg <= 1.0) || !(f_ee > 0.5 && f_ee <= 1.0))
    throw ParameterError("build_emission: fidelities must lie in (0.5, 1]");
  EmissionMatrix e;
  // clang-format off
  e << f_gg,       1.0 - f_gg,
       1.0 - f_ee, f_ee,
       f_gg,       1.0 - f_gg,
       1.0 - f_ee, f_ee;
  // clang-format on
  return e;
}

HmmModel build_model(const DeviceParams& params, double t1_s) {
  HmmModel m;
  m.transition = build_transition(params, t1_s);
  m.emission = build_emission(params.f_gg, params.f_ee);
  m.t_m = params.readout_time();
  m.t_p = params.parity_wait();
  return m;
}

ReadoutSequence sample_sequence(const HmmModel& model, int initial_storage, Readout initial_transmon,
                                int n, Rng& rng) {
  if (n < 1) throw ParameterError("sample_sequence: N must be at least 1");
  if (initial_storage != 0 && initial_storage != 1)
    throw ParameterError("sample_sequence: storage must start in 0 or 1");
  ReadoutSequence seq;
  seq.bits.resize(static_cast<std::size_t>(n));
  int state = joint_state(initial_storage, static_cast<int>(initial_transmon));
  for (int k = 0; k < n; ++k) {
    seq.bits[k] = uniform01(rng) < model.emission(state, 0) ? Readout::kG : Readout::kE;
    if (k + 1 == n) break;
    const double u = uniform01(rng);
    double acc = 0.0;
    int next = 3;
    for (int j = 0; j < 4; ++j) {
      acc += model.transition(state, j);
      if (u < acc) {
        next = j;
        break;
      }
    }
    // Guard against rounding in the cumulative sum landing on a zero-probability state.
    while (model.transition(state, next) == 0.0 && next > 0) --next;
    state = next;
  }
  return seq;
}

double CountVerdict::p0() const { return std::exp(log_p0); }
double CountVerdict::p1() const { return std::exp(log_p1); }

double CountVerdict::lambda() const {
  if (std::isinf(log_p0) && log_p0 < 0) {
    return std::isinf(log_p1) && log_p1 < 0 ? std::numeric_limits<double>::quiet_NaN()
                                            : std::numeric_limits<double>::infinity();
  }
  return std::exp(log_p1 - log_p0);
}

CountVerdict backward_probabilities(const HmmModel& model, std::span<const Readout> seq,
                                    double lambda_thresh) {
  if (seq.empty()) throw ParameterError("backward_probabilities: empty sequence");
  const double neg_inf = -std::numeric_limits<double>::infinity();

  const auto n = seq.size();
  Eigen::Vector4d beta = model.emission.col(static_cast<int>(seq[n - 1]));
  double log_scale = 0.0;
  for (std::size_t k = n - 1; k-- > 0;) {
    const double mx = beta.maxCoeff();
    if (mx == 0.0) break;
    beta /= mx;
    log_scale += std::log(mx);
    beta = model.emission.col(static_cast<int>(seq[k])).cwiseProduct(model.transition * beta);
  }
  CountVerdict v;
  const double p0 = beta[k0g] + beta[k0e];
  const double p1 = beta[k1g] + beta[k1e];
  v.log_p0 = p0 > 0 ? std::log(p0) + log_scale : neg_inf;
  v.log_p1 = p1 > 0 ? std::log(p1) + log_scale : neg_inf;
  v.positive = classify(v, lambda_thresh);
  return v;
}

bool classify(const CountVerdict& verdict, double lambda_thresh) {
  if (!(lambda_thresh > 0)) throw DomainError("classify: threshold must be positive");
  const bool p0_zero = std::isinf(verdict.log_p0) && verdict.log_p0 < 0;
  const bool p1_zero = std::isinf(verdict.log_p1) && verdict.log_p1 < 0;
  if (p0_zero && p1_zero) throw DomainError("classify: both storage hypotheses have zero likelihood");
  if (p0_zero) return true;
  if (p1_zero) return false;
  return verdict.log_p1 - verdict.log_p0 >= std::log(lambda_thresh);
}

void write_sequences(std::ostream& out, std::span<const ReadoutSequence> batch) {
  for (const auto& s : batch) out << s.to_string() << '\n';
}

std::vector<ReadoutSequence> read_sequences(std::istream& in) {
  std::vector<ReadoutSequence> batch;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    batch.push_back(ReadoutSequence::from_string(line));
  }
  return batch;
}

void write_model_csv(std::ostream& out, const HmmModel& model) {
  static constexpr const char* kNames[] = {"0g", "0e", "1g", "1e"};
  out.precision(17);
  out << "matrix,from,to_0g,to_0e,to_1g,to_1e\n";
  for (int i = 0; i < 4; ++i) {
    out << "T," << kNames[i];
    for (int j = 0; j < 4; ++j) out << ',' << model.transition(i, j);
    out << '\n';
  }
  out << "matrix,from,g,e\n";
  for (int i = 0; i < 4; ++i)
    out << "E," << kNames[i] << ',' << model.emission(i, 0) << ',' << model.emission(i, 1) << '\n';
}

}  // namespace fluxcount
