#include "fluxcount/exclusion.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <string>

#include <Eigen/Eigenvalues>
#include <boost/math/special_functions/gamma.hpp>
#include <boost/math/tools/roots.hpp>

#include "fluxcount/device_model.hpp"
#include "fluxcount/errors.hpp"
#include "fluxcount/parallel.hpp"
#include "fluxcount/rng.hpp"
#include "fluxcount/savgol.hpp"

namespace fluxcount {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kEpsStart = 1e-16;
constexpr double kEpsFloor = 1e-18;
constexpr double kEpsCeil = 1e-10;
constexpr std::uint64_t kNuisanceStream = 0x4e554953ULL;  // "NUIS"

double log_sum_exp_cdf(unsigned n, double mu) {
  const double lmu = std::log(mu);
  double peak = -kInf;
  std::vector<double> terms(n + 1);
  for (unsigned k = 0; k <= n; ++k) {
    terms[k] = k * lmu - mu - std::lgamma(k + 1.0);
    peak = std::max(peak, terms[k]);
  }
  double s = 0.0;
  for (double t : terms) s += std::exp(t - peak);
  return peak + std::log(s);
}

unsigned as_count(double value, const char* what) {
  const double r = std::nearbyint(value);
  if (!(value >= 0) || std::abs(value - r) > 1e-9 || r > 4e9)
    throw ParameterError(std::string(what) + " must be a non-negative integer count");
  return static_cast<unsigned>(r);
}

// Background-normalized CLs with the background CDF precomputed.
double cls_from_log_cdf(unsigned n_obs, double n_back, double log_cdf_back, double n_test) {
  if (n_test <= 0.0) return 0.0;
  const double ratio = std::exp(poisson_log_cdf(n_obs, n_back + n_test) - log_cdf_back);
  return std::clamp(1.0 - ratio, 0.0, 1.0);
}

struct Axis {
  std::vector<double> value;
  std::vector<double> weight;
};

Axis gh_axis(double mean, double sigma, const std::vector<QuadratureNode>& rule) {
  Axis a;
  if (sigma == 0.0) {
    a.value = {mean};
    a.weight = {1.0};
    return a;
  }
  const double inv_sqrt_pi = 1.0 / std::sqrt(std::numbers::pi);
  for (const auto& n : rule) {
    a.value.push_back(mean + std::sqrt(2.0) * sigma * n.x);
    a.weight.push_back(n.w * inv_sqrt_pi);
  }
  return a;
}

// Gauss-Legendre nodes on [-1, 1] (Golub-Welsch).
std::vector<QuadratureNode> gauss_legendre(int n) {
  Eigen::MatrixXd j = Eigen::MatrixXd::Zero(n, n);
  for (int k = 1; k < n; ++k) j(k, k - 1) = j(k - 1, k) = k / std::sqrt(4.0 * k * k - 1.0);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(j);
  std::vector<QuadratureNode> rule(n);
  for (int i = 0; i < n; ++i) {
    const double v0 = es.eigenvectors()(0, i);
    rule[i] = {es.eigenvalues()[i], 2.0 * v0 * v0};
  }
  return rule;
}

constexpr double kTruncationMass = 1e-9;
constexpr int kTruncatedNodes = 48;

// Normal(mean, sigma) restricted to (lo, hi). Gauss-Hermite while the mass
// outside the support is negligible; otherwise Gauss-Legendre on the
// truncated interval with the normal density folded into the weights.
Axis nuisance_axis(double mean, double sigma, double lo, double hi, const std::vector<QuadratureNode>& rule) {
  if (sigma == 0.0) return gh_axis(mean, sigma, rule);
  const double outside = 0.5 * std::erfc((mean - lo) / (std::sqrt(2.0) * sigma)) +
                         0.5 * std::erfc((hi - mean) / (std::sqrt(2.0) * sigma));
  if (outside < kTruncationMass) return gh_axis(mean, sigma, rule);
  const double a = std::max(lo, mean - 8.0 * sigma), b = std::min(hi, mean + 8.0 * sigma);
  if (!(b > a)) throw DomainError("signal_kernel: nuisance distribution has no mass on its physical support");
  Axis ax;
  double total = 0.0;
  for (const auto& n : gauss_legendre(std::max(kTruncatedNodes, static_cast<int>(rule.size())))) {
    const double x = 0.5 * (a + b) + 0.5 * (b - a) * n.x;
    const double z = (x - mean) / sigma;
    ax.value.push_back(x);
    ax.weight.push_back(n.w * std::exp(-0.5 * z * z));
    total += ax.weight.back();
  }
  for (double& w : ax.weight) w /= total;
  return ax;
}

bool physical(double eta, double q_s, double freq, double volume, double g) {
  return eta > 0.0 && eta <= 1.0 && q_s > 0.0 && freq > 0.0 && volume > 0.0 && g > 0.0 && g < 1.0;
}

double kernel_coefficient(const ScanBin& bin, double rho, double q_dm, double eta, double q_s,
                          double freq, double volume, double g) {
  return eta * rho * q_dm * g * volume * (q_s / (kTwoPi * freq)) * bin.n_meas;
}

// Maxwellian sqrt(x) e^{-x}: peak at x = 1/2; width factor = FWHM in x units.
struct MaxwellShape {
  double peak_x = 0.5;
  double peak_value = std::sqrt(0.5) * std::exp(-0.5);
  double fwhm_x = 0.0;

  MaxwellShape() {
    auto f = [&](double x) { return std::sqrt(x) * std::exp(-x) - 0.5 * peak_value; };
    boost::math::tools::eps_tolerance<double> tol(52);
    std::uintmax_t it = 200;
    const auto lo = boost::math::tools::toms748_solve(f, 1e-12, peak_x, tol, it);
    it = 200;
    const auto hi = boost::math::tools::toms748_solve(f, peak_x, 20.0, tol, it);
    fwhm_x = 0.5 * (hi.first + hi.second) - 0.5 * (lo.first + lo.second);
  }
  double operator()(double x) const {
    return x <= 0.0 ? 0.0 : std::sqrt(x / peak_x) * std::exp(-(x - peak_x));
  }
};

const MaxwellShape& maxwell() {
  static const MaxwellShape shape;
  return shape;
}

}  // namespace

double form_factor_rect() { return (1.0 / 3.0) * 64.0 / std::pow(std::numbers::pi, 4); }

void SignalModel::validate() const {
  if (!(form_factor > 0.0 && form_factor < 1.0)) throw ParameterError("signal model: G must lie in (0, 1)");
  if (!(volume_cm3 > 0.0)) throw ParameterError("signal model: volume must be positive");
  if (!(q_dm > 0.0)) throw ParameterError("signal model: Q_DM must be positive");
  if (!(rho_dm_gev_cm3 > 0.0) || !(quoted_rho_rad_s_cm3 > 0.0))
    throw ParameterError("signal model: rho_DM must be positive");
  for (double s : {sigma.eta, sigma.q_s, sigma.freq_hz, sigma.volume_cm3, sigma.form_factor})
    if (!(s >= 0.0)) throw ParameterError("signal model: nuisance sigmas must be non-negative");
}

double SignalModel::rho_rate_density() const {
  switch (rho_convention) {
    case RhoConvention::kEnergyOverHbar:
      return rho_dm_gev_cm3 * 1e9 * phys::kElectronVolt / phys::kHbar;
    case RhoConvention::kQuotedConstant:
      return quoted_rho_rad_s_cm3;
    case RhoConvention::kUnresolved:
      break;
  }
  throw ConfigError("exclusion.rho_convention", "dark-matter density unit convention is unresolved");
}

double signal_counts(double epsilon, const ScanBin& bin, const SignalModel& model) {
  if (!(epsilon >= 0.0)) throw ParameterError("signal_counts: epsilon must be non-negative");
  return epsilon * epsilon *
         kernel_coefficient(bin, model.rho_rate_density(), model.q_dm, bin.eta, bin.q_s, bin.freq_hz,
                            model.volume_cm3, model.form_factor);
}

double signal_counts_t1(double epsilon, const ScanBin& bin, const SignalModel& model) {
  if (!(epsilon >= 0.0)) throw ParameterError("signal_counts: epsilon must be non-negative");
  const double rate = epsilon * epsilon * model.rho_rate_density() * model.q_dm * model.form_factor *
                      model.volume_cm3;
  return bin.eta * rate * integration_time(bin);
}

void check_signal_forms(const ScanBin& bin, const SignalModel& model) {
  const double a = signal_counts(1.0, bin, model);
  const double b = signal_counts_t1(1.0, bin, model);
  if (std::abs(a - b) > 1e-12 * std::max(std::abs(a), std::abs(b)))
    throw ParameterError("signal model: Q_s/omega_s and T1_s forms disagree for bin at " +
                         std::to_string(bin.freq_hz) + " Hz");
}

double integration_time(const ScanBin& bin) { return bin.t1_s * bin.n_meas; }

double poisson_log_cdf(unsigned n, double mu) {
  if (!(mu >= 0.0)) throw ParameterError("poisson_log_cdf: mean must be non-negative");
  if (mu == 0.0) return 0.0;
  if (mu <= 600.0) {
    // P(N <= n) = e^{-mu} sum_k mu^k/k!, nested as 1 + mu/1 (1 + mu/2 (1 + ...)).
    double acc = 1.0;
    for (unsigned k = n; k >= 1; --k) acc = 1.0 + acc * mu / k;
    return std::log(acc) - mu;
  }
  const double q = boost::math::gamma_q(static_cast<double>(n) + 1.0, mu);
  if (q > 1e-290) return std::log(q);
  return log_sum_exp_cdf(n, mu);
}

double cls_probability(unsigned n_obs, double n_back, double n_test) {
  if (!(n_back >= 0.0) || !(n_test >= 0.0))
    throw ParameterError("cls_probability: background and signal must be non-negative");
  return cls_from_log_cdf(n_obs, n_back, poisson_log_cdf(n_obs, n_back), n_test);
}

double local_p_value(unsigned n_obs, double n_back) {
  if (!(n_back >= 0.0)) throw ParameterError("local_p_value: background must be non-negative");
  if (n_obs == 0) return 1.0;
  if (n_back == 0.0) return 0.0;
  return boost::math::gamma_p(static_cast<double>(n_obs), n_back);
}

std::vector<QuadratureNode> gauss_hermite(int n) {
  if (n < 1) throw ParameterError("gauss_hermite: need at least one node");
  // Golub-Welsch: eigen-decomposition of the symmetric Jacobi matrix.
  Eigen::MatrixXd j = Eigen::MatrixXd::Zero(n, n);
  for (int k = 1; k < n; ++k) j(k, k - 1) = j(k - 1, k) = std::sqrt(0.5 * k);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(j);
  std::vector<QuadratureNode> rule(n);
  for (int i = 0; i < n; ++i) {
    const double v0 = es.eigenvectors()(0, i);
    rule[i] = {es.eigenvalues()[i], std::sqrt(std::numbers::pi) * v0 * v0};
  }
  return rule;
}

SignalKernel signal_kernel(const ScanBin& bin, const SignalModel& model, const QuadratureSpec& quad,
                           std::uint64_t stream) {
  model.validate();
  const double rho = model.rho_rate_density();
  const NuisanceSigmas& s = model.sigma;
  SignalKernel kernel;

  if (quad.mode == Marginalization::kGaussHermite) {
    const auto rule = gauss_hermite(quad.nodes);
    constexpr double inf = std::numeric_limits<double>::infinity();
    const Axis ax[5] = {nuisance_axis(bin.eta, s.eta, 0.0, 1.0, rule),
                        nuisance_axis(bin.q_s, s.q_s, 0.0, inf, rule),
                        nuisance_axis(bin.freq_hz, s.freq_hz, 0.0, inf, rule),
                        nuisance_axis(model.volume_cm3, s.volume_cm3, 0.0, inf, rule),
                        nuisance_axis(model.form_factor, s.form_factor, 0.0, 1.0, rule)};
    double total = 0.0;
    for (std::size_t a = 0; a < ax[0].value.size(); ++a)
      for (std::size_t b = 0; b < ax[1].value.size(); ++b)
        for (std::size_t c = 0; c < ax[2].value.size(); ++c)
          for (std::size_t d = 0; d < ax[3].value.size(); ++d)
            for (std::size_t e = 0; e < ax[4].value.size(); ++e) {
              const double eta = ax[0].value[a], q = ax[1].value[b], f = ax[2].value[c];
              const double v = ax[3].value[d], g = ax[4].value[e];
              if (!physical(eta, q, f, v, g)) continue;
              const double w =
                  ax[0].weight[a] * ax[1].weight[b] * ax[2].weight[c] * ax[3].weight[d] * ax[4].weight[e];
              kernel.k.push_back(kernel_coefficient(bin, rho, model.q_dm, eta, q, f, v, g));
              kernel.w.push_back(w);
              total += w;
            }
    if (kernel.w.empty()) throw DomainError("signal_kernel: no physical quadrature nodes");
    // Renormalize only when nodes were dropped, so unperturbed rules stay exact.
    if (kernel.w.size() != ax[0].value.size() * ax[1].value.size() * ax[2].value.size() *
                               ax[3].value.size() * ax[4].value.size())
      for (double& w : kernel.w) w /= total;
    return kernel;
  }

  if (quad.mc_samples == 0) throw ParameterError("signal_kernel: Monte-Carlo mode needs samples");
  Rng rng = make_stream(quad.seed, kNuisanceStream + stream);
  std::normal_distribution<double> z;
  for (std::size_t i = 0; i < quad.mc_samples; ++i) {
    const double eta = bin.eta + s.eta * z(rng);
    const double q = bin.q_s + s.q_s * z(rng);
    const double f = bin.freq_hz + s.freq_hz * z(rng);
    const double v = model.volume_cm3 + s.volume_cm3 * z(rng);
    const double g = model.form_factor + s.form_factor * z(rng);
    if (!physical(eta, q, f, v, g)) continue;
    kernel.k.push_back(kernel_coefficient(bin, rho, model.q_dm, eta, q, f, v, g));
  }
  if (kernel.k.empty()) throw DomainError("signal_kernel: no physical Monte-Carlo draws");
  kernel.w.assign(kernel.k.size(), 1.0 / static_cast<double>(kernel.k.size()));
  return kernel;
}

double marginalized_confidence(double epsilon, const SignalKernel& kernel, unsigned n_obs,
                               double n_back) {
  if (!(n_back >= 0.0)) throw ParameterError("marginalized_confidence: background must be non-negative");
  const double log_back = poisson_log_cdf(n_obs, n_back);
  const double e2 = epsilon * epsilon;
  double u = 0.0;
  for (std::size_t j = 0; j < kernel.k.size(); ++j)
    u += kernel.w[j] * cls_from_log_cdf(n_obs, n_back, log_back, e2 * kernel.k[j]);
  return u;
}

double marginalized_confidence(double epsilon, const ScanBin& bin, const SignalModel& model,
                               const QuadratureSpec& quad) {
  return marginalized_confidence(epsilon, signal_kernel(bin, model, quad),
                                 as_count(bin.n_obs, "n_obs"), bin.n_back);
}

double solve_epsilon_95(const SignalKernel& kernel, unsigned n_obs, double n_back, double confidence) {
  if (!(confidence > 0.0 && confidence < 1.0))
    throw ParameterError("solve_epsilon_95: confidence must lie in (0, 1)");
  auto f = [&](double log_eps) {
    return marginalized_confidence(std::exp(log_eps), kernel, n_obs, n_back) - confidence;
  };
  double lo = std::log(kEpsStart), hi = lo;
  double flo = f(lo), fhi = flo;
  const double step = std::log(10.0);
  if (flo < 0.0) {
    while (fhi < 0.0) {
      lo = hi;
      flo = fhi;
      hi += step;
      if (hi > std::log(kEpsCeil) + 1e-9)
        throw DomainError("solve_epsilon_95: no bracket below 1e-10 (pathological bin)");
      fhi = f(hi);
    }
  } else {
    while (flo >= 0.0) {
      hi = lo;
      fhi = flo;
      lo -= step;
      if (lo < std::log(kEpsFloor) - 1e-9)
        throw DomainError("solve_epsilon_95: no bracket above 1e-18 (pathological bin)");
      flo = f(lo);
    }
  }
  if (fhi == 0.0) return std::exp(hi);
  boost::math::tools::eps_tolerance<double> tol(48);
  std::uintmax_t iters = 200;
  const auto r = boost::math::tools::toms748_solve(f, lo, hi, flo, fhi, tol, iters);
  return std::exp(0.5 * (r.first + r.second));
}

double solve_epsilon_95(const ScanBin& bin, const SignalModel& model, const QuadratureSpec& quad,
                        double confidence) {
  return solve_epsilon_95(signal_kernel(bin, model, quad), as_count(bin.n_obs, "n_obs"), bin.n_back,
                          confidence);
}

double solve_n_test_95(unsigned n_obs, double n_back, double confidence) {
  if (!(confidence > 0.0 && confidence < 1.0))
    throw ParameterError("solve_n_test_95: confidence must lie in (0, 1)");
  const double log_back = poisson_log_cdf(n_obs, n_back);
  auto f = [&](double s) { return cls_from_log_cdf(n_obs, n_back, log_back, s) - confidence; };
  double hi = 1.0;
  while (f(hi) < 0.0) {
    hi *= 2.0;
    if (hi > 1e12) throw DomainError("solve_n_test_95: no bracket");
  }
  boost::math::tools::eps_tolerance<double> tol(50);
  std::uintmax_t iters = 200;
  const auto r = boost::math::tools::toms748_solve(f, 0.0, hi, -confidence, f(hi), tol, iters);
  return 0.5 * (r.first + r.second);
}

double LineshapeSpec::response(double detuning_hz, double freq_hz) const {
  const double w = fwhm(freq_hz);
  switch (kind) {
    case LineshapeKind::kTopHat:
      return std::abs(detuning_hz) <= 0.5 * w ? 1.0 : 0.0;
    case LineshapeKind::kLorentzian: {
      const double x = 2.0 * detuning_hz / w;
      return 1.0 / (1.0 + x * x);
    }
    case LineshapeKind::kMaxwellian: {
      const MaxwellShape& m = maxwell();
      return m(m.peak_x + detuning_hz * m.fwhm_x / w);
    }
  }
  return 0.0;
}

std::pair<double, double> LineshapeSpec::support(double freq_hz) const {
  const double w = fwhm(freq_hz);
  std::pair<double, double> s;
  switch (kind) {
    case LineshapeKind::kTopHat:
      s = {-0.5 * w, 0.5 * w};
      break;
    case LineshapeKind::kLorentzian:
      s = {-50.0 * w, 50.0 * w};
      break;
    case LineshapeKind::kMaxwellian: {
      const MaxwellShape& m = maxwell();
      s = {-m.peak_x * w / m.fwhm_x, 40.0 * w / m.fwhm_x};
      break;
    }
  }
  if (coverage_fraction > 0.0) {
    const double c = coverage_fraction * w;
    s.first = std::max(s.first, -c);
    s.second = std::min(s.second, c);
  }
  return s;
}

std::vector<double> tuning_curve(double centre_hz, double epsilon95, std::span<const double> grid_hz,
                                 const LineshapeSpec& lineshape) {
  const auto [lo, hi] = lineshape.support(centre_hz);
  std::vector<double> out(grid_hz.size(), kInf);
  for (std::size_t i = 0; i < grid_hz.size(); ++i) {
    const double d = grid_hz[i] - centre_hz;
    if (d < lo || d > hi) continue;
    const double s = lineshape.response(d, centre_hz);
    if (s > 0.0) out[i] = epsilon95 / std::sqrt(s);
  }
  return out;
}

std::vector<double> minimum_envelope(std::span<const std::vector<double>> curves) {
  if (curves.empty()) return {};
  std::vector<double> env = curves.front();
  for (const auto& c : curves) {
    if (c.size() != env.size()) throw ParameterError("minimum_envelope: curves differ in length");
    for (std::size_t i = 0; i < env.size(); ++i) env[i] = std::min(env[i], c[i]);
  }
  return env;
}

ExclusionCurve lineshape_envelope(std::span<const double> centres_hz,
                                  std::span<const double> epsilon95,
                                  std::span<const double> grid_hz, const LineshapeSpec& lineshape) {
  if (centres_hz.size() != epsilon95.size())
    throw ParameterError("lineshape_envelope: centres and limits differ in length");
  if (!std::is_sorted(grid_hz.begin(), grid_hz.end()))
    throw ParameterError("lineshape_envelope: grid must be sorted");
  ExclusionCurve curve;
  curve.freq_hz.assign(grid_hz.begin(), grid_hz.end());
  curve.envelope.assign(grid_hz.size(), kInf);
  for (std::size_t t = 0; t < centres_hz.size(); ++t) {
    const double c = centres_hz[t];
    const auto [lo, hi] = lineshape.support(c);
    const auto first = std::lower_bound(grid_hz.begin(), grid_hz.end(), c + lo);
    const auto last = std::upper_bound(grid_hz.begin(), grid_hz.end(), c + hi);
    FamilyCurve fc;
    fc.centre_hz = c;
    fc.epsilon95 = epsilon95[t];
    for (auto it = first; it != last; ++it) {
      const double s = lineshape.response(*it - c, c);
      if (!(s > 0.0)) continue;
      const double e = epsilon95[t] / std::sqrt(s);
      const auto i = static_cast<std::size_t>(it - grid_hz.begin());
      fc.freq_hz.push_back(*it);
      fc.epsilon.push_back(e);
      curve.envelope[i] = std::min(curve.envelope[i], e);
    }
    curve.family.push_back(std::move(fc));
  }
  return curve;
}

std::vector<double> solve_bins(std::span<const ScanBin> bins, const ExclusionConfig& config) {
  config.model.validate();
  std::vector<double> eps(bins.size());
  parallel_for(bins.size(), config.threads, [&](std::size_t i) {
    const ScanBin& b = bins[i];
    const SignalKernel kernel = signal_kernel(b, config.model, config.quadrature, i);
    eps[i] = solve_epsilon_95(kernel, as_count(b.n_obs, "n_obs"), b.n_back, config.confidence);
  });
  return eps;
}

ExclusionResult run_exclusion(std::vector<ScanBin> bins, const ExclusionConfig& config) {
  config.model.validate();
  for (std::size_t i = 0; i < bins.size(); ++i) {
    const ScanBin& b = bins[i];
    if (i > 0 && !(b.freq_hz > bins[i - 1].freq_hz))
      throw ParameterError("run_exclusion: bin frequencies must be strictly increasing");
    if (!(b.n_obs <= b.n_meas)) throw ParameterError("run_exclusion: n_obs exceeds n_meas");
    if (!(b.eta > 0.0 && b.eta <= 1.0)) throw ParameterError("run_exclusion: eta must lie in (0, 1]");
    check_signal_forms(b, config.model);
  }
  ExclusionResult result;
  if (bins.empty()) return result;

  std::vector<double> counts;
  counts.reserve(bins.size());
  for (const auto& b : bins) counts.push_back(b.n_obs);
  const auto smooth = savgol_background(counts, config.window, config.order);
  for (std::size_t i = 0; i < bins.size(); ++i) bins[i].n_back = std::max(0.0, smooth[i]);

  const auto eps = solve_bins(bins, config);
  std::vector<double> centres;
  for (std::size_t i = 0; i < bins.size(); ++i) {
    BinResult r;
    r.bin = bins[i];
    r.epsilon95 = eps[i];
    r.p_value = local_p_value(as_count(bins[i].n_obs, "n_obs"), bins[i].n_back);
    r.candidate = r.p_value < config.candidate_p_value;
    result.bins.push_back(r);
    centres.push_back(bins[i].freq_hz);
  }
  result.curve = lineshape_envelope(centres, eps, centres, config.lineshape);
  return result;
}

}  // namespace fluxcount
