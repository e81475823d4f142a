#include "fluxcount/savgol.hpp"

#include <string>

#include <Eigen/QR>

#include "fluxcount/errors.hpp"

namespace fluxcount {
namespace {

// Row i of the hat matrix V (V^T V)^{-1} V^T, i.e. fitted value at sample i.
Eigen::MatrixXd hat_matrix(int window, int order) {
  const double half = 0.5 * (window - 1);
  Eigen::MatrixXd v(window, order + 1);
  for (int i = 0; i < window; ++i) {
    const double x = (i - half) / half;
    double p = 1.0;
    for (int k = 0; k <= order; ++k) {
      v(i, k) = p;
      p *= x;
    }
  }
  const Eigen::HouseholderQR<Eigen::MatrixXd> qr(v);
  const Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(window, order + 1);
  return q * q.transpose();
}

void check_args(int window, int order) {
  if (window < 1) throw ParameterError("savgol: window must be positive");
  if (order < 0 || order >= window)
    throw ParameterError("savgol: order must satisfy 0 <= order < window (window " +
                         std::to_string(window) + ")");
}

}  // namespace

int normalized_window(int window) { return window % 2 == 0 ? window + 1 : window; }

std::vector<double> savgol_weights(int window, int order, int position) {
  check_args(window, order);
  if (position < 0 || position >= window) throw ParameterError("savgol: position outside window");
  const Eigen::MatrixXd h = hat_matrix(window, order);
  std::vector<double> w(window);
  for (int j = 0; j < window; ++j) w[j] = h(position, j);
  return w;
}

std::vector<double> savgol_background(std::span<const double> counts, int window, int order) {
  const int w = normalized_window(window);
  check_args(w, order);
  const int n = static_cast<int>(counts.size());
  if (n < w)
    throw ParameterError("savgol: series of length " + std::to_string(n) +
                         " is shorter than the window " + std::to_string(w));
  const int half = w / 2;
  const Eigen::MatrixXd h = hat_matrix(w, order);
  const Eigen::Map<const Eigen::VectorXd> y(counts.data(), n);

  std::vector<double> out(n);
  const Eigen::VectorXd head = h.topRows(half) * y.head(w);
  const Eigen::VectorXd tail = h.bottomRows(half) * y.tail(w);
  for (int i = 0; i < half; ++i) {
    out[i] = head[i];
    out[n - half + i] = tail[i];
  }
  const Eigen::RowVectorXd centre = h.row(half);
  for (int i = half; i < n - half; ++i) out[i] = centre.dot(y.segment(i - half, w));
  return out;
}

}  // namespace fluxcount
