#include <cmath>
#include <numbers>

#include "doctest.h"
#include "holotile/wavefield.hpp"
#include "support.hpp"

using namespace holotile;
using std::numbers::pi;

TEST_SUITE("wavefield") {

TEST_CASE("from_amplitude_phase follows Euler's identity") {
  OpticalConfig cfg;
  Grid<double> a(2, 2, 1.0), p(2, 2, 0.0);
  p(0, 1) = pi / 2;
  a(1, 0) = 0.5;
  p(1, 0) = pi;
  const auto f = from_amplitude_phase(a, p, cfg);
  CHECK(f(0, 0) == std::complex<double>(1.0, 0.0));
  CHECK(std::abs(f(0, 1) - std::complex<double>(0.0, 1.0)) < 1e-12);
  CHECK(std::abs(f(1, 0) - std::complex<double>(-0.5, 0.0)) < 1e-12);
  CHECK(f.pitch() == cfg.pitch);
  CHECK(f.wavelength() == cfg.wavelengths[0]);
}

TEST_CASE("amplitude and phase of reference samples") {
  ComplexField<double> f(1, 4, 1e-6, 5e-7);
  f(0, 0) = {3.0, 4.0};
  f(0, 1) = {0.0, 1.0};
  f(0, 2) = {-1.0, 0.0};
  f(0, 3) = {0.0, 0.0};
  const auto a = amplitude(f);
  const auto p = phase(f);
  CHECK(a(0, 0) == doctest::Approx(5.0).epsilon(1e-15));
  CHECK(a(0, 3) == 0.0);
  CHECK(p(0, 1) == doctest::Approx(pi / 2).epsilon(1e-15));
  CHECK(p(0, 2) == pi);
  CHECK(p(0, 3) == 0.0);
}

TEST_CASE("negative zero imaginary part stays on the +pi side of the cut") {
  ComplexField<double> f(1, 1, 1e-6, 5e-7);
  f(0, 0) = {-1.0, -0.0};
  CHECK(phase(f)(0, 0) == pi);
}

TEST_CASE("amplitude/phase round trip on random fields") {
  std::mt19937_64 rng(7);
  for (int k = 0; k < 20; ++k) {
    const auto f = testing::random_field(9, 7, rng);
    const auto a = amplitude(f);
    const auto p = phase(f);
    for (auto v : a.values()) CHECK(v >= 0.0);
    for (auto v : p.values()) {
      CHECK(v > -pi);
      CHECK(v <= pi);
    }
    const auto g = from_amplitude_phase(a, p, f.pitch(), f.wavelength());
    for (std::size_t i = 0; i < f.data().size(); ++i)
      CHECK(std::abs(g.data()[i] - f.data()[i]) <= 1e-12 * std::abs(f.data()[i]));
  }
}

TEST_CASE("wrap_phase lands in (-pi, pi] and preserves the angle") {
  std::mt19937_64 rng(8);
  CHECK(wrap_phase(pi) == pi);
  CHECK(wrap_phase(-pi) == pi);
  CHECK(wrap_phase(3 * pi) == doctest::Approx(pi));
  for (int k = 0; k < 1000; ++k) {
    const double x = testing::uniform(rng, -50.0, 50.0);
    const double w = wrap_phase(x);
    CHECK(w > -pi);
    CHECK(w <= pi);
    CHECK(std::abs(std::remainder(x - w, 2 * pi)) < 1e-12);
  }
}

TEST_CASE("errors") {
  OpticalConfig cfg;
  CHECK_THROWS_AS(from_amplitude_phase(Grid<double>(2, 2, -0.1), Grid<double>(2, 2), cfg), DomainError);
  CHECK_THROWS_AS(from_amplitude_phase(Grid<double>(2, 2), Grid<double>(2, 3), cfg), DimensionError);
  auto bad = cfg;
  bad.pitch = -1;
  CHECK_THROWS_AS(bad.validate(), DomainError);
  bad = cfg;
  bad.wavelengths = {5e-7, 0.0};
  CHECK_THROWS_AS(bad.validate(), DomainError);
  bad = cfg;
  bad.distance = NAN;
  CHECK_THROWS_AS(bad.validate(), DomainError);
  CHECK_NOTHROW(cfg.validate());
}

}
