#pragma once

// Independent reference implementations used as test oracles. They are
// deliberately naive: direct enumeration, dense least squares, plain sums.

#include <cmath>
#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "fluxcount/hmm_counter.hpp"
#include "fluxcount/rng.hpp"

namespace oracle {

/// Random row-stochastic T and E with entries bounded away from zero.
inline fluxcount::HmmModel random_model(fluxcount::Rng& rng) {
  using fluxcount::uniform01;
  fluxcount::HmmModel m;
  for (int r = 0; r < 4; ++r) {
    double s = 0;
    for (int c = 0; c < 4; ++c) s += m.transition(r, c) = 0.05 + uniform01(rng);
    m.transition.row(r) /= s;
    const double e = 0.05 + 0.9 * uniform01(rng);
    m.emission(r, 0) = e;
    m.emission(r, 1) = 1.0 - e;
  }
  return m;
}

/// Sum over all 4^(N-1) hidden paths from each start state |i g>, |i e>.
inline std::pair<double, double> brute_force_likelihoods(const fluxcount::HmmModel& m,
                                                         std::span<const fluxcount::Readout> seq) {
  const int n = static_cast<int>(seq.size());
  double p[2] = {0.0, 0.0};
  std::vector<int> path(n);
  for (int start = 0; start < 4; ++start) {
    long long paths = 1;
    for (int k = 1; k < n; ++k) paths *= 4;
    for (long long code = 0; code < paths; ++code) {
      path[0] = start;
      long long c = code;
      for (int k = 1; k < n; ++k) {
        path[k] = static_cast<int>(c % 4);
        c /= 4;
      }
      double w = m.emission(path[0], static_cast<int>(seq[0]));
      for (int k = 1; k < n; ++k) w *= m.transition(path[k - 1], path[k]) * m.emission(path[k], static_cast<int>(seq[k]));
      p[start / 2] += w;
    }
  }
  return {p[0], p[1]};
}

/// Least-squares polynomial value at the window centre, in long double via
/// the normal equations on a centred, scaled abscissa.
inline long double savgol_centre_ls(std::span<const double> y, int order) {
  const int w = static_cast<int>(y.size());
  const long double half = (w - 1) / 2.0L;
  const int m = order + 1;
  std::vector<long double> ata(m * m, 0.0L), aty(m, 0.0L);
  for (int i = 0; i < w; ++i) {
    const long double x = (i - half) / half;
    std::vector<long double> pw(m, 1.0L);
    for (int k = 1; k < m; ++k) pw[k] = pw[k - 1] * x;
    for (int r = 0; r < m; ++r) {
      aty[r] += pw[r] * y[i];
      for (int c = 0; c < m; ++c) ata[r * m + c] += pw[r] * pw[c];
    }
  }
  // Gaussian elimination with partial pivoting.
  for (int col = 0; col < m; ++col) {
    int piv = col;
    for (int r = col + 1; r < m; ++r)
      if (std::fabs(ata[r * m + col]) > std::fabs(ata[piv * m + col])) piv = r;
    for (int c = 0; c < m; ++c) std::swap(ata[col * m + c], ata[piv * m + c]);
    std::swap(aty[col], aty[piv]);
    for (int r = col + 1; r < m; ++r) {
      const long double f = ata[r * m + col] / ata[col * m + col];
      for (int c = col; c < m; ++c) ata[r * m + c] -= f * ata[col * m + c];
      aty[r] -= f * aty[col];
    }
  }
  std::vector<long double> coef(m);
  for (int r = m - 1; r >= 0; --r) {
    long double s = aty[r];
    for (int c = r + 1; c < m; ++c) s -= ata[r * m + c] * coef[c];
    coef[r] = s / ata[r * m + r];
  }
  return coef[0];
}

/// Poisson P(N <= k; mu) by direct pmf summation.
inline double poisson_cdf(long long k, double mu) {
  double term = std::exp(-mu), s = 0.0;
  for (long long n = 0; n <= k; ++n) {
    s += term;
    term *= mu / static_cast<double>(n + 1);
  }
  return s;
}

/// CLs confidence 1 - P(<=k | b+s) / P(<=k | b).
inline double cls_confidence(long long k, double b, double s) {
  return 1.0 - poisson_cdf(k, b + s) / poisson_cdf(k, b);
}

}  // namespace oracle
