#pragma once

#include <span>
#include <vector>

namespace fluxcount {

/// Even windows are widened by one to the nearest symmetric odd window.
int normalized_window(int window);

/// Savitzky-Golay smoothing. Interior points use the centred window; the
/// first and last window/2 points take the polynomial fitted to the leading
/// or trailing full window. Throws ParameterError when order >= window or
/// the series is shorter than the window.
std::vector<double> savgol_background(std::span<const double> counts, int window = 112,
                                      int order = 4);

/// Smoothing weights for estimating the value at `position` (0-based within
/// a window of length `window`) from a least-squares polynomial fit.
std::vector<double> savgol_weights(int window, int order, int position);

}  // namespace fluxcount
