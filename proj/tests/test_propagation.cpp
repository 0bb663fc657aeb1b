#include <cmath>
#include <numbers>

#include "doctest.h"
#include "holotile/propagation.hpp"
#include "support.hpp"

using namespace holotile;
using testing::grid_config;
using testing::random_field;
using C = std::complex<double>;

namespace {

// Independent reference: explicit band-limited transfer function and a
// separable direct DFT, pad factor 1 only.
Grid<C> reference_propagate(const Grid<C>& x, double pitch, double lambda, double d) {
  const int h = x.height(), w = x.width();
  auto freq = [&](int k, int n) { return (k <= (n - 1) / 2 ? k : k - n) / (n * pitch); };
  auto limit = [&](int n) { return 1.0 / (lambda * std::sqrt(std::pow(2 * d / (n * pitch), 2) + 1)); };
  auto dft = [](const Grid<C>& in, int sign) {
    const int h = in.height(), w = in.width();
    Grid<C> tmp(h, w), out(h, w);
    for (int r = 0; r < h; ++r)
      for (int k = 0; k < w; ++k)
        for (int c = 0; c < w; ++c) tmp(r, k) += in(r, c) * std::polar(1.0, sign * 2 * std::numbers::pi * k * c / w);
    for (int k = 0; k < h; ++k)
      for (int c = 0; c < w; ++c)
        for (int r = 0; r < h; ++r) out(k, c) += tmp(r, c) * std::polar(1.0, sign * 2 * std::numbers::pi * k * r / h);
    return out;
  };
  auto spec = dft(x, -1);
  for (int ky = 0; ky < h; ++ky)
    for (int kx = 0; kx < w; ++kx) {
      const double fy = freq(ky, h), fx = freq(kx, w);
      const double arg = 1 / (lambda * lambda) - fx * fx - fy * fy;
      const bool pass = arg > 0 && std::abs(fx) < limit(w) && std::abs(fy) < limit(h);
      spec(ky, kx) *= pass ? std::polar(1.0, 2 * std::numbers::pi * d * std::sqrt(arg)) : C{};
    }
  auto out = dft(spec, +1);
  for (auto& v : out.values()) v /= static_cast<double>(h * w);
  return out;
}

double energy(const Grid<C>& g) {
  double e = 0;
  for (auto v : g.values()) e += std::norm(v);
  return e;
}

}  // namespace

TEST_SUITE("propagation") {

TEST_CASE("zero distance is the identity on the full band") {
  std::mt19937_64 rng(1);
  const auto cfg = grid_config(16, 12, 0.0);
  const auto tf = build_transfer<double>(cfg, 0.0, 1, 1);
  for (std::size_t i = 0; i < tf.values.size(); ++i) {
    CHECK(tf.band_mask[i] == 1);
    CHECK(std::abs(tf.values[i] - C(1, 0)) < 1e-15);
  }
  const auto x = random_field(16, 12, rng, cfg.pitch, tf.wavelength);
  CHECK(testing::max_abs_diff(propagate(x, tf).data(), x.data()) < 1e-10);
  CHECK(testing::max_abs_diff(propagate_adjoint(x, tf).data(), x.data()) < 1e-10);
  CHECK(testing::max_abs_diff(dft_oracle(x, tf).data(), x.data()) < 1e-10);
}

TEST_CASE("on-axis phase at d = lambda is one full turn") {
  auto cfg = grid_config(8, 8, 0.0);
  const double lambda = cfg.wavelengths[0];
  const auto tf = build_transfer<double>(cfg, lambda, 1, 0);
  CHECK(std::abs(tf.values(0, 0) - C(1, 0)) < 1e-12);
}

TEST_CASE("H(d) H(-d) = 1 on the band") {
  const auto cfg = grid_config(32, 32, 2e-3);
  for (int pad : {1, 2}) {
    const auto a = build_transfer<double>(cfg, 2e-3, pad, 2);
    const auto b = build_transfer<double>(cfg, -2e-3, pad, 2);
    CHECK(a.band_mask == b.band_mask);
    for (std::size_t i = 0; i < a.values.size(); ++i)
      if (a.band_mask[i]) CHECK(std::abs(a.values[i] * b.values[i] - C(1, 0)) < 1e-12);
  }
}

TEST_CASE("band mask clips exactly the evanescent and aliased bins") {
  const auto cfg = grid_config(64, 48, 0.05);
  const auto tf = build_transfer<double>(cfg, cfg.distance, 2, 0);
  const double lambda = cfg.wavelengths[0];
  std::size_t passed = 0;
  for (int ky = 0; ky < tf.height; ++ky)
    for (int kx = 0; kx < tf.width; ++kx) {
      const double fy = fft_frequency(ky, tf.height, cfg.pitch), fx = fft_frequency(kx, tf.width, cfg.pitch);
      const double ly = 1 / (lambda * std::hypot(2 * cfg.distance / (tf.height * cfg.pitch), 1.0));
      const double lx = 1 / (lambda * std::hypot(2 * cfg.distance / (tf.width * cfg.pitch), 1.0));
      const bool pass = std::abs(fx) < lx && std::abs(fy) < ly && fx * fx + fy * fy < 1 / (lambda * lambda);
      CHECK(tf.band_mask(ky, kx) == (pass ? 1 : 0));
      if (!pass) CHECK(tf.values(ky, kx) == C{});
      passed += pass;
    }
  // 5 cm over a 240 um aperture leaves only a small central band.
  CHECK(passed > 0);
  CHECK(passed < tf.values.size() / 4);
}

TEST_CASE("FFT path matches an independent direct DFT") {
  std::mt19937_64 rng(2);
  for (double d : {5e-4, 2e-3, -1e-3}) {
    const auto cfg = grid_config(12, 10, d);
    const auto tf = build_transfer<double>(cfg, d, 1, 1);
    const auto x = random_field(12, 10, rng, cfg.pitch, tf.wavelength);
    const auto ref = reference_propagate(x.data(), cfg.pitch, tf.wavelength, d);
    CHECK(testing::max_abs_diff(propagate(x, tf).data(), ref) < 1e-12);
  }
}

TEST_CASE("FFT path matches dft_oracle with padding") {
  std::mt19937_64 rng(3);
  for (int pad : {1, 2}) {
    const auto cfg = grid_config(32, 32, 2e-3);
    const auto tf = build_transfer<double>(cfg, cfg.distance, pad, 0);
    const auto x = random_field(32, 32, rng, cfg.pitch, tf.wavelength);
    CHECK(testing::max_abs_diff(propagate(x, tf).data(), dft_oracle(x, tf).data()) < 1e-10);
  }
}

TEST_CASE("constant field is multiplied by H(0, 0)") {
  const auto cfg = grid_config(8, 8, 1e-3);
  const auto tf = build_transfer<double>(cfg, cfg.distance, 1, 0);
  ComplexField<double> x(8, 8, cfg.pitch, tf.wavelength);
  for (auto& v : x.data().values()) v = {0.3, -0.2};
  const auto y = dft_oracle(x, tf);
  for (auto v : y.data().values()) CHECK(std::abs(v - C(0.3, -0.2) * tf.values(0, 0)) < 1e-12);
}

TEST_CASE("linearity") {
  std::mt19937_64 rng(4);
  const auto cfg = grid_config(24, 24, 1e-3);
  const auto tf = build_transfer<double>(cfg, cfg.distance, 2, 1);
  const auto x = random_field(24, 24, rng, cfg.pitch, tf.wavelength);
  const auto y = random_field(24, 24, rng, cfg.pitch, tf.wavelength);
  const C a(0.7, -1.3), b(-2.1, 0.4);
  ComplexField<double> z(24, 24, cfg.pitch, tf.wavelength);
  for (std::size_t i = 0; i < z.data().size(); ++i) z.data()[i] = a * x.data()[i] + b * y.data()[i];
  const auto px = propagate(x, tf), py = propagate(y, tf), pz = propagate(z, tf);
  double worst = 0;
  for (std::size_t i = 0; i < z.data().size(); ++i)
    worst = std::max(worst, std::abs(pz.data()[i] - (a * px.data()[i] + b * py.data()[i])));
  CHECK(worst < 1e-10);
}

TEST_CASE("adjoint identity") {
  std::mt19937_64 rng(5);
  const auto cfg = grid_config(16, 16, 1e-3);
  for (int pad : {1, 2}) {
    const auto tf = build_transfer<double>(cfg, cfg.distance, pad, 0);
    for (int k = 0; k < 10; ++k) {
      const auto x = random_field(16, 16, rng, cfg.pitch, tf.wavelength);
      const auto y = random_field(16, 16, rng, cfg.pitch, tf.wavelength);
      const auto ax = propagate(x, tf), aty = propagate_adjoint(y, tf);
      C lhs{}, rhs{};
      for (std::size_t i = 0; i < x.data().size(); ++i) {
        lhs += std::conj(ax.data()[i]) * y.data()[i];
        rhs += std::conj(x.data()[i]) * aty.data()[i];
      }
      CHECK(std::abs(lhs - rhs) / std::abs(lhs) < 1e-10);
    }
  }
}

TEST_CASE("adjoint equals propagation by -d when masks agree") {
  std::mt19937_64 rng(6);
  const auto cfg = grid_config(32, 32, 1.5e-3);
  const auto fwd = build_transfer<double>(cfg, cfg.distance, 2, 1);
  const auto back = build_transfer<double>(cfg, -cfg.distance, 2, 1);
  const auto y = random_field(32, 32, rng, cfg.pitch, fwd.wavelength);
  CHECK(testing::max_abs_diff(propagate_adjoint(y, fwd).data(), propagate(y, back).data()) < 1e-12);
}

TEST_CASE("energy conservation and round trip without band clipping") {
  std::mt19937_64 rng(7);
  const auto cfg = grid_config(64, 64, 5e-4);
  const auto fwd = build_transfer<double>(cfg, cfg.distance, 1, 1);
  const auto back = build_transfer<double>(cfg, -cfg.distance, 1, 1);
  for (auto m : fwd.band_mask.values()) REQUIRE(m == 1);
  for (int k = 0; k < 3; ++k) {
    const auto x = random_field(64, 64, rng, cfg.pitch, fwd.wavelength);
    const auto y = propagate(x, fwd);
    CHECK(std::abs(energy(y.data()) - energy(x.data())) / energy(x.data()) < 1e-10);
    CHECK(testing::max_abs_diff(propagate(y, back).data(), x.data()) < 1e-8);
  }
}

TEST_CASE("propagation never increases energy") {
  std::mt19937_64 rng(8);
  const auto cfg = grid_config(32, 32, 0.02);
  const auto tf = build_transfer<double>(cfg, cfg.distance, 2, 0);
  const auto x = random_field(32, 32, rng, cfg.pitch, tf.wavelength);
  CHECK(energy(propagate(x, tf).data()) <= energy(x.data()) * (1 + 1e-12));
}

TEST_CASE("float32 agrees with float64") {
  std::mt19937_64 rng(9);
  const auto cfg = grid_config(32, 32, 1e-3);
  const auto tfd = build_transfer<double>(cfg, cfg.distance, 2, 1);
  const auto tff = build_transfer<float>(cfg, cfg.distance, 2, 1);
  const auto xd = random_field(32, 32, rng, cfg.pitch, tfd.wavelength);
  ComplexField<float> xf(32, 32, cfg.pitch, tfd.wavelength);
  for (std::size_t i = 0; i < xd.data().size(); ++i) xf.data()[i] = std::complex<float>(xd.data()[i]);
  const auto yd = propagate(xd, tfd);
  const auto yf = propagate(xf, tff);
  double worst = 0;
  for (std::size_t i = 0; i < yd.data().size(); ++i)
    worst = std::max(worst, std::abs(C(yf.data()[i]) - yd.data()[i]));
  CHECK(worst < 1e-5);
}

TEST_CASE("errors") {
  const auto cfg = grid_config(8, 8, 1e-3);
  const auto tf = build_transfer<double>(cfg, cfg.distance, 1, 0);
  CHECK_THROWS_AS(propagate(ComplexField<double>(8, 4, cfg.pitch, tf.wavelength), tf), ConfigError);
  CHECK_THROWS_AS(propagate(ComplexField<double>(8, 8, 2 * cfg.pitch, tf.wavelength), tf), ConfigError);
  CHECK_THROWS_AS(propagate(ComplexField<double>(8, 8, cfg.pitch, 1e-6), tf), ConfigError);
  CHECK_THROWS_AS(build_transfer<double>(cfg, 1e-3, 3, 0), DomainError);
  CHECK_THROWS_AS(build_transfer<double>(cfg, 1e-3, 1, 3), ConfigError);
  auto bad = cfg;
  bad.pitch = 0;
  CHECK_THROWS_AS(build_transfer<double>(bad, 1e-3, 1, 0), DomainError);
  const auto big = grid_config(65, 65, 1e-3);
  const auto tf_big = build_transfer<double>(big, 1e-3, 1, 0);
  CHECK_THROWS_AS(dft_oracle(ComplexField<double>(65, 65, big.pitch, tf_big.wavelength), tf_big), RefusalError);
}

}
