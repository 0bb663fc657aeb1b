#pragma once

#include <functional>
#include <limits>
#include <vector>

#include "holotile/grid.hpp"
#include "holotile/memory_ledger.hpp"

namespace holotile::metrics {

/// 10 log10(1 / MSE) for images in [0, 1]. Identical inputs return +infinity.
double psnr(const Grid<double>& a, const Grid<double>& b);

/// Per-channel PSNR, averaged (infinite channels are averaged as infinity).
double psnr_channels(const std::vector<Grid<double>>& a, const std::vector<Grid<double>>& b);

struct SsimOptions {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double dynamic_range = 1.0;
};

/// Per-window luminance and contrast-structure terms over the valid region;
/// SSIM is the mean of their product.
struct SsimTerms {
  Grid<double> luminance;
  Grid<double> contrast_structure;
};

SsimTerms ssim_terms(const Grid<double>& a, const Grid<double>& b, const SsimOptions& opt = {});

/// Single-scale SSIM with a Gaussian window (valid windows only). Throws
/// DimensionError when either side is smaller than the window.
double ssim(const Grid<double>& a, const Grid<double>& b, const SsimOptions& opt = {});

/// Normalized 1-D Gaussian taps.
std::vector<double> gaussian_window(int size, double sigma);

struct Timing {
  std::vector<double> samples;  // seconds, in run order
  double median_seconds = 0;
  double fps = 0;
};

/// Runs `op` `repeats` times on a monotonic clock and reports the median.
/// `op` must return only after all of its work has completed.
Timing stopwatch(const std::function<void()>& op, int repeats = 5);

}  // namespace holotile::metrics
