#include "holotile/metrics.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>

namespace holotile::metrics {

double psnr(const Grid<double>& a, const Grid<double>& b) {
  require_same_shape(a, b, "psnr");
  double acc = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  const double mse = acc / static_cast<double>(a.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse);
}

double psnr_channels(const std::vector<Grid<double>>& a, const std::vector<Grid<double>>& b) {
  if (a.size() != b.size() || a.empty()) throw DimensionError("psnr_channels: channel count mismatch");
  double sum = 0;
  for (std::size_t c = 0; c < a.size(); ++c) sum += psnr(a[c], b[c]);
  return sum / static_cast<double>(a.size());
}

std::vector<double> gaussian_window(int size, double sigma) {
  std::vector<double> w(size);
  const double mid = (size - 1) / 2.0;
  double total = 0;
  for (int i = 0; i < size; ++i) {
    w[i] = std::exp(-((i - mid) * (i - mid)) / (2.0 * sigma * sigma));
    total += w[i];
  }
  for (auto& v : w) v /= total;
  return w;
}

namespace {

// Separable 'valid' filtering.
Grid<double> filter_valid(const Grid<double>& x, const std::vector<double>& taps) {
  const int k = static_cast<int>(taps.size());
  const int oh = x.height() - k + 1, ow = x.width() - k + 1;
  Grid<double> rows(x.height(), ow);
  for (int r = 0; r < x.height(); ++r)
    for (int c = 0; c < ow; ++c) {
      double acc = 0;
      for (int t = 0; t < k; ++t) acc += taps[t] * x(r, c + t);
      rows(r, c) = acc;
    }
  Grid<double> out(oh, ow);
  for (int r = 0; r < oh; ++r)
    for (int c = 0; c < ow; ++c) {
      double acc = 0;
      for (int t = 0; t < k; ++t) acc += taps[t] * rows(r + t, c);
      out(r, c) = acc;
    }
  return out;
}

}  // namespace

SsimTerms ssim_terms(const Grid<double>& a, const Grid<double>& b, const SsimOptions& opt) {
  require_same_shape(a, b, "ssim");
  if (a.height() < opt.window || a.width() < opt.window)
    throw DimensionError("ssim: images must be at least " + std::to_string(opt.window) + " samples per side");
  const auto taps = gaussian_window(opt.window, opt.sigma);
  Grid<double> aa(a.height(), a.width()), bb(a.height(), a.width()), ab(a.height(), a.width());
  for (std::size_t i = 0; i < a.size(); ++i) {
    aa[i] = a[i] * a[i];
    bb[i] = b[i] * b[i];
    ab[i] = a[i] * b[i];
  }
  const auto mu_a = filter_valid(a, taps), mu_b = filter_valid(b, taps);
  const auto e_aa = filter_valid(aa, taps), e_bb = filter_valid(bb, taps), e_ab = filter_valid(ab, taps);
  const double c1 = std::pow(opt.k1 * opt.dynamic_range, 2);
  const double c2 = std::pow(opt.k2 * opt.dynamic_range, 2);

  SsimTerms t{Grid<double>(mu_a.height(), mu_a.width()), Grid<double>(mu_a.height(), mu_a.width())};
  for (std::size_t i = 0; i < mu_a.size(); ++i) {
    const double ma = mu_a[i], mb = mu_b[i];
    const double va = e_aa[i] - ma * ma, vb = e_bb[i] - mb * mb, cov = e_ab[i] - ma * mb;
    t.luminance[i] = (2 * ma * mb + c1) / (ma * ma + mb * mb + c1);
    t.contrast_structure[i] = (2 * cov + c2) / (va + vb + c2);
  }
  return t;
}

double ssim(const Grid<double>& a, const Grid<double>& b, const SsimOptions& opt) {
  const auto t = ssim_terms(a, b, opt);
  double acc = 0;
  for (std::size_t i = 0; i < t.luminance.size(); ++i) acc += t.luminance[i] * t.contrast_structure[i];
  return acc / static_cast<double>(t.luminance.size());
}

Timing stopwatch(const std::function<void()>& op, int repeats) {
  Timing t;
  repeats = std::max(repeats, 1);
  for (int k = 0; k < repeats; ++k) {
    std::atomic_thread_fence(std::memory_order_seq_cst);
    const auto start = std::chrono::steady_clock::now();
    op();
    std::atomic_thread_fence(std::memory_order_seq_cst);
    const auto stop = std::chrono::steady_clock::now();
    t.samples.push_back(std::chrono::duration<double>(stop - start).count());
  }
  auto sorted = t.samples;
  std::sort(sorted.begin(), sorted.end());
  const std::size_t n = sorted.size();
  t.median_seconds = n % 2 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
  t.fps = t.median_seconds > 0 ? 1.0 / t.median_seconds : std::numeric_limits<double>::infinity();
  return t;
}

}  // namespace holotile::metrics
