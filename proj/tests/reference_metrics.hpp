#pragma once

// Direct-formula metric references shared by the unit and acceptance tests.

#include <cmath>

#include "holotile/grid.hpp"

namespace testing {

using holotile::Grid;

inline double naive_psnr(const Grid<double>& a, const Grid<double>& b) {
  double s = 0;
  for (int r = 0; r < a.height(); ++r)
    for (int c = 0; c < a.width(); ++c) s += (a(r, c) - b(r, c)) * (a(r, c) - b(r, c));
  return -10 * std::log10(s / (a.height() * a.width()));
}

// Direct 2-D Gaussian window per output position.
inline double naive_ssim(const Grid<double>& a, const Grid<double>& b) {
  const int k = 11;
  double w[k][k], total = 0;
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j) total += w[i][j] = std::exp(-((i - 5) * (i - 5) + (j - 5) * (j - 5)) / (2 * 1.5 * 1.5));
  const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  double acc = 0;
  int n = 0;
  for (int r = 0; r + k <= a.height(); ++r)
    for (int c = 0; c + k <= a.width(); ++c) {
      double ma = 0, mb = 0;
      for (int i = 0; i < k; ++i)
        for (int j = 0; j < k; ++j) {
          ma += w[i][j] / total * a(r + i, c + j);
          mb += w[i][j] / total * b(r + i, c + j);
        }
      double va = 0, vb = 0, cov = 0;
      for (int i = 0; i < k; ++i)
        for (int j = 0; j < k; ++j) {
          const double da = a(r + i, c + j) - ma, db = b(r + i, c + j) - mb;
          va += w[i][j] / total * da * da;
          vb += w[i][j] / total * db * db;
          cov += w[i][j] / total * da * db;
        }
      acc += (2 * ma * mb + c1) * (2 * cov + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
      ++n;
    }
  return acc / n;
}

}  // namespace testing
