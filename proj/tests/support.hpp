#pragma once

// Shared fixtures for the test binaries: seeded random data and scratch dirs.

#include <complex>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>

#include "holotile/grid.hpp"
#include "holotile/wavefield.hpp"

namespace testing {

inline double uniform(std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  return lo + (hi - lo) * static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline holotile::Grid<double> random_grid(int h, int w, std::mt19937_64& rng, double lo = 0.0, double hi = 1.0) {
  holotile::Grid<double> g(h, w);
  for (auto& v : g.values()) v = uniform(rng, lo, hi);
  return g;
}

inline holotile::ComplexField<double> random_field(int h, int w, std::mt19937_64& rng, double pitch = 3.74e-6,
                                                   double wavelength = 520e-9) {
  holotile::ComplexField<double> f(h, w, pitch, wavelength);
  for (auto& v : f.data().values()) v = {uniform(rng), uniform(rng)};
  return f;
}

inline holotile::OpticalConfig grid_config(int h, int w, double distance) {
  holotile::OpticalConfig cfg;
  cfg.height = h;
  cfg.width = w;
  cfg.distance = distance;
  return cfg;
}

/// Fresh empty directory under the system temp dir, unique per name.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("holotile_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

template <class A, class B>
double max_abs_diff(const A& a, const B& b) {
  double worst = 0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, static_cast<double>(std::abs(a[i] - b[i])));
  return worst;
}

}  // namespace testing
