#include "doctest.h"

#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "fluxcount/device_model.hpp"
#include "fluxcount/errors.hpp"

using namespace fluxcount;

namespace {

constexpr double kPi = std::numbers::pi;

TuningModel two_row_tuning() {
  TuningModel t = default_tuning();
  t.flux_table = {
      {-0.2, storage_frequency(t, -0.2), 64.5e-6, 40e-6, 0.20, 0.01},
      {-0.1, storage_frequency(t, -0.1), 69.2e-6, 44e-6, 0.30, 0.02},
  };
  return t;
}

}  // namespace

TEST_SUITE("device-model") {

TEST_CASE("default parameters validate and give the parity wait") {
  const DeviceParams p;
  CHECK_NOTHROW(p.validate());
  CHECK(p.parity_wait() == doctest::Approx(kPi / (2.0 * kTwoPi * 1.655e6)).epsilon(1e-14));
  CHECK(p.parity_wait() == doctest::Approx(151.06e-9).epsilon(1e-3));
  CHECK(p.readout_time() == doctest::Approx(7.3e-6).epsilon(1e-14));
}

TEST_CASE("parameter validation rejects out-of-range values") {
  auto bad = [](auto mutate) {
    DeviceParams p;
    mutate(p);
    CHECK_THROWS_AS(p.validate(), ParameterError);
  };
  bad([](DeviceParams& p) { p.t1_q = 0.0; });
  bad([](DeviceParams& p) { p.t2_q = 2.5 * p.t1_q; });
  bad([](DeviceParams& p) { p.f_gg = 0.5; });
  bad([](DeviceParams& p) { p.f_ee = 1.01; });
  bad([](DeviceParams& p) { p.nbar_s = 1.0; });
  bad([](DeviceParams& p) { p.nbar_q = -0.1; });
  bad([](DeviceParams& p) { p.chi = 0.0; });
  CHECK_NOTHROW(ideal_device().validate());
}

TEST_CASE("avoided crossing limits") {
  const double ws = kTwoPi * 5.672e9, g = kTwoPi * 170e6;
  CHECK(avoided_crossing_upper(ws, ws, g) == doctest::Approx(ws + g).epsilon(1e-15));
  const double wc = kTwoPi * 6.5e9;
  CHECK(avoided_crossing_upper(ws, wc, 1e-3) == doctest::Approx(wc).epsilon(1e-15));

  // Dispersive limit: g^2 / Delta = 28.9 MHz at leading order; at g / Delta =
  // 0.17 the next term -g^4 / Delta^3 is about 3% of it.
  const double delta = kTwoPi * 1e9;
  const double shift = avoided_crossing_upper(ws, ws + delta, g) - (ws + delta);
  CHECK(g * g / delta / kTwoPi == doctest::Approx(28.9e6).epsilon(1e-12));
  CHECK(shift == doctest::Approx(g * g / delta).epsilon(0.035));
  CHECK(shift == doctest::Approx(g * g / delta - std::pow(g, 4) / std::pow(delta, 3)).epsilon(2e-3));
  const double exact = 0.5 * (std::sqrt(delta * delta + 4 * g * g) - delta);
  CHECK(shift == doctest::Approx(exact).epsilon(1e-9));
}

TEST_CASE("upper branch is monotone in the coupler frequency with slope in (0, 1)") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> ws_d(5e9, 6e9), det_d(-2e9, 2e9), g_d(1e6, 3e8);
  for (int i = 0; i < 1000; ++i) {
    const double ws = kTwoPi * ws_d(rng), wc = ws + kTwoPi * det_d(rng), g = kTwoPi * g_d(rng);
    const double h = 1e-6 * ws;
    const double slope = (avoided_crossing_upper(ws, wc + h, g) - avoided_crossing_upper(ws, wc - h, g)) / (2 * h);
    CHECK(slope > 0.0);
    CHECK(slope < 1.0);
  }
}

TEST_CASE("SQUID frequency law") {
  TuningModel t = default_tuning();
  CHECK(squid_frequency(t, 0.0) == doctest::Approx(t.omega_c0).epsilon(1e-15));
  CHECK(squid_frequency(t, 1.0 / 3.0) == doctest::Approx(t.omega_c0 * std::sqrt(0.5)).epsilon(1e-12));
  CHECK(squid_frequency(t, 0.5 - 1e-12) < 1e-5 * t.omega_c0);
}

TEST_CASE("default tuning spans the measured band") {
  const TuningModel t = default_tuning();
  CHECK_NOTHROW(t.validate());
  CHECK(storage_frequency(t, 0.0) / kTwoPi == doctest::Approx(5694.2e6).epsilon(1e-9));
  CHECK(storage_frequency(t, -0.4793) / kTwoPi == doctest::Approx(5671.4e6).epsilon(1e-9));
  for (const auto& row : t.flux_table) CHECK(row.omega_s >= t.omega_s_bare);
  const double phi = flux_for_storage_frequency(t, kTwoPi * 5.685e9, -0.4793, 0.0);
  CHECK(storage_frequency(t, phi) / kTwoPi == doctest::Approx(5.685e9).epsilon(1e-12));
}

TEST_CASE("flux conventions round trip") {
  CHECK(flux_from_quoted(-0.479, FluxConvention::kFluxQuanta) == -0.479);
  CHECK(flux_from_quoted(-0.479 * kPi, FluxConvention::kPhaseRadians) == doctest::Approx(-0.479).epsilon(1e-15));
  CHECK(quoted_from_flux(0.25, FluxConvention::kPhaseRadians) == doctest::Approx(0.25 * kPi).epsilon(1e-15));
}

TEST_CASE("flux table interpolation") {
  const TuningModel t = two_row_tuning();
  const FluxParams a = interpolate_flux_params(t, -0.2);
  CHECK(a.t1_s == 64.5e-6);
  CHECK(a.eta == 0.20);
  const FluxParams mid = interpolate_flux_params(t, -0.15);
  CHECK(mid.t1_s == doctest::Approx(66.85e-6).epsilon(1e-12));
  CHECK_THROWS_AS(interpolate_flux_params(t, -0.25), DomainError);
  CHECK_THROWS_AS(interpolate_flux_params(t, 0.0), DomainError);

  TuningModel one = t;
  one.flux_table.resize(1);
  CHECK(interpolate_flux_params(one, -0.2).t1_s == 64.5e-6);

  // Continuity across every node of the default table.
  const TuningModel d = default_tuning();
  for (std::size_t i = 1; i + 1 < d.flux_table.size(); ++i) {
    const double phi = d.flux_table[i].phi_ext;
    const double eps = 1e-13;
    const FluxParams lo = interpolate_flux_params(d, phi - eps), hi = interpolate_flux_params(d, phi + eps);
    CHECK(std::abs(lo.t1_s - hi.t1_s) < 1e-12);
    CHECK(std::abs(lo.eta - hi.eta) < 1e-12);
    CHECK(interpolate_flux_params(d, phi).t1_s == d.flux_table[i].t1_s);
  }
}

TEST_CASE("coherent state populations") {
  const auto vac = coherent_populations(0.0, 5);
  CHECK(vac[0] == 1.0);
  for (int n = 1; n <= 5; ++n) CHECK(vac[n] == 0.0);
  CHECK(coherent_populations(0.3, 3)[1] == doctest::Approx(0.09 * std::exp(-0.09)).epsilon(1e-14));
  CHECK(coherent_populations(0.3, 3)[1] == doctest::Approx(0.08225).epsilon(1e-4));

  const auto p = coherent_populations(1.0, 20);
  double s = 0;
  for (double x : p) s += x;
  CHECK(std::abs(s - 1.0) < 1e-12);

  // Truncated sum against an independent Poisson pmf summation.
  for (double alpha : {0.1, 0.5, 1.0}) {
    const int n_max = 6;
    const auto q = coherent_populations(alpha, n_max);
    const double mu = alpha * alpha;
    double direct = 0, term = std::exp(-mu);
    for (int n = 0; n <= n_max; ++n) {
      direct += term;
      term *= mu / (n + 1);
    }
    double sum = 0;
    for (double x : q) sum += x;
    CHECK(sum == doctest::Approx(direct).epsilon(1e-14));
    CHECK(1.0 - sum < std::exp(1.0) * std::pow(alpha, 2 * (n_max + 1)) / std::tgamma(n_max + 2));
  }
}

TEST_CASE("displacement scale fit") {
  const double c = 0.05;
  const std::vector<double> gains{1, 2, 4, 6, 8};
  std::vector<std::vector<PopulationSample>> measured;
  for (double g : gains) {
    const auto p = coherent_populations(c * g, 3);
    std::vector<PopulationSample> row;
    for (int n = 0; n <= 3; ++n) row.push_back({n, p[n]});
    measured.push_back(row);
  }
  const auto fit = fit_displacement_scale(gains, measured);
  CHECK(fit.scale_c == doctest::Approx(c).epsilon(1e-6));

  // Two gains, vacuum population only: P0 = exp(-(c g)^2).
  const std::vector<double> g2{3, 7};
  std::vector<std::vector<PopulationSample>> m2{{{0, std::exp(-std::pow(0.04 * 3, 2))}},
                                                {{0, std::exp(-std::pow(0.04 * 7, 2))}}};
  CHECK(fit_displacement_scale(g2, m2).scale_c == doctest::Approx(0.04).epsilon(1e-6));

  std::vector<std::vector<PopulationSample>> negative{{{0, -0.1}}, {{1, -0.2}}};
  CHECK_THROWS_AS(fit_displacement_scale(g2, negative), FitError);
}

TEST_CASE("thermal occupation and temperature") {
  CHECK(temperature_from_occupation(5.694e9, 8.6e-3) == doctest::Approx(57e-3).epsilon(2e-3 / 57e-3));
  CHECK(thermal_occupation(5.694e9, 1e-4) < 1e-100);
  for (double f : {1e9, 3e9, 5.694e9, 10e9})
    for (double temp : {0.01, 0.05, 0.1, 0.3})
      CHECK(temperature_from_occupation(f, thermal_occupation(f, temp)) == doctest::Approx(temp).epsilon(1e-10));
}

TEST_CASE("Ramsey ratio to occupation") {
  CHECK(thermal_from_ramsey_ratio(8.7e-3) == doctest::Approx(8.6e-3).epsilon(0.006));
  CHECK(thermal_from_ramsey_ratio(0.0) == 0.0);
  CHECK(thermal_from_ramsey_ratio(1.0 / 3.0) == doctest::Approx(0.25).epsilon(1e-15));
}

TEST_CASE("qubit temperature from populations") {
  const double t = qubit_temp_from_populations(0.985, 0.015, 4.811e9);
  CHECK(t >= 50e-3);
  CHECK(t <= 58e-3);
  CHECK(qubit_temp_from_populations(1.0 - 1e-300, 1e-300, 4.811e9) < 1e-3);
  const double f = 4.811e9;
  const double e = std::exp(1.0);
  CHECK(qubit_temp_from_populations(e / (1 + e), 1 / (1 + e), f) ==
        doctest::Approx(phys::kPlanck * f / phys::kBoltzmann).epsilon(1e-12));
}

}  // TEST_SUITE
