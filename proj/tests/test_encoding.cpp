#include <cmath>
#include <numbers>

#include "doctest.h"
#include "holotile/encoding.hpp"
#include "support.hpp"

using namespace holotile;
using std::numbers::pi;
using C = std::complex<double>;

TEST_SUITE("encoding") {

TEST_CASE("unit amplitude keeps the phase on both checkerboard cells") {
  ComplexField<double> f(2, 2, 1e-6, 5e-7);
  for (auto& v : f.data().values()) v = std::polar(1.0, 0.8);
  const auto pm = dpac_encode(f);
  for (auto v : pm.phase.values()) CHECK(v == doctest::Approx(0.8).epsilon(1e-7));
}

TEST_CASE("zero amplitude splits into opposing quarter turns") {
  ComplexField<double> f(1, 2, 1e-6, 5e-7);
  const auto pm = dpac_encode(f);
  CHECK(pm.phase(0, 0) == doctest::Approx(pi / 2));
  CHECK(pm.phase(0, 1) == doctest::Approx(-pi / 2));
  CHECK(std::abs(std::polar(1.0, pm.phase(0, 0)) + std::polar(1.0, pm.phase(0, 1))) < 1e-15);
}

TEST_CASE("the two phasors average back to the sample") {
  std::mt19937_64 rng(1);
  ComplexField<double> f(16, 16, 1e-6, 5e-7);
  for (auto& v : f.data().values()) v = std::polar(testing::uniform(rng, 0, 1), testing::uniform(rng, -pi, pi));
  const auto pm = dpac_encode(f);
  for (int r = 0; r < 16; ++r)
    for (int c = 0; c < 16; ++c) {
      const C v = f(r, c);
      const double theta = std::acos(std::abs(v));
      const double sign = (r + c) % 2 == 0 ? 1.0 : -1.0;
      CHECK(std::abs(wrap_phase(pm.phase(r, c) - (std::arg(v) + sign * theta))) < 1e-12);
      const C avg = 0.5 * (std::polar(1.0, std::arg(v) + theta) + std::polar(1.0, std::arg(v) - theta));
      CHECK(std::abs(avg - v) < 1e-12);
    }
}

TEST_CASE("normalized encoding divides by the peak") {
  std::mt19937_64 rng(2);
  ComplexField<double> f(8, 8, 1e-6, 5e-7);
  for (auto& v : f.data().values()) v = {testing::uniform(rng, -5, 5), testing::uniform(rng, -5, 5)};
  double peak = 0;
  for (auto v : f.data().values()) peak = std::max(peak, std::abs(v));
  ComplexField<double> g = f;
  for (auto& v : g.data().values()) v /= peak;
  const auto a = dpac_encode_normalized(f), b = dpac_encode(g);
  CHECK(testing::max_abs_diff(a.phase, b.phase) < 1e-12);
  CHECK_THROWS_AS(dpac_encode(f), DomainError);
}

TEST_CASE("phase-only field has unit amplitude") {
  std::mt19937_64 rng(3);
  const auto pm = make_phase_map(testing::random_grid(6, 6, rng, -20, 20));
  for (auto v : pm.phase.values()) {
    CHECK(v > -pi);
    CHECK(v <= pi);
  }
  const auto f = phase_only_field<double>(pm, 1e-6, 5e-7);
  for (auto v : f.data().values()) CHECK(std::abs(std::abs(v) - 1.0) < 1e-15);
}

TEST_CASE("quantizer levels and bound") {
  PhaseMap pm{Grid<double>(1, 3)};
  pm.phase[0] = -pi + 1e-9;
  pm.phase[1] = pi;
  pm.phase[2] = 0.0;
  const auto q = quantize_phase(pm);
  CHECK(q[0] == 0);
  CHECK(q[1] == 255);
  CHECK(q[2] == 127);

  // Exhaustive over the 256 levels: both interval ends and the center.
  const double s = 2 * pi / 256;
  PhaseMap sweep{Grid<double>(1, 256 * 3)};
  for (int k = 0; k < 256; ++k) {
    sweep.phase[3 * k] = -pi + k * s + 1e-12;
    sweep.phase[3 * k + 1] = -pi + (k + 0.5) * s;
    sweep.phase[3 * k + 2] = -pi + (k + 1) * s - 1e-12;
  }
  const auto qs = quantize_phase(sweep);
  const auto back = dequantize_phase(qs);
  for (int k = 0; k < 256; ++k)
    for (int j = 0; j < 3; ++j) {
      CHECK(qs[3 * k + j] == k);
      CHECK(std::abs(back.phase[3 * k + j] - sweep.phase[3 * k + j]) <= pi / 256 + 1e-12);
    }
}

TEST_CASE("dequantize then quantize is idempotent") {
  std::mt19937_64 rng(4);
  for (int levels : {2, 3, 16, 256, 65536}) {
    PhaseMap pm{testing::random_grid(9, 9, rng, -pi, pi)};
    const auto q = quantize_phase(pm, levels);
    CHECK(quantize_phase(dequantize_phase(q, levels), levels) == q);
  }
  CHECK_THROWS_AS(quantize_phase(PhaseMap{Grid<double>(1, 1)}, 1), DomainError);
  CHECK_THROWS_AS(dequantize_phase(Grid<std::uint16_t>(1, 1, 4), 4), DomainError);
}

}
