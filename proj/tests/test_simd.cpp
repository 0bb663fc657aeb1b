#include <vector>

#include "doctest.h"
#include "holotile/oracle.hpp"
#include "holotile/simd.hpp"
#include "support.hpp"

using namespace holotile;

namespace {

// Restores the dispatch chosen at startup when a test overrides it.
struct IsaGuard {
  simd::Isa saved = simd::active_isa();
  ~IsaGuard() { simd::force_isa(saved); }
};

template <class T>
void check_equivalent(const simd::KernelTable<T>& ref, const simd::KernelTable<T>& fast, double tol) {
  std::mt19937_64 rng(sizeof(T));
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = trial < 40 ? static_cast<std::size_t>(trial) : rng() % 1000;
    std::vector<T> x(n), y(n);
    for (auto& v : x) v = static_cast<T>(testing::uniform(rng));
    for (auto& v : y) v = static_cast<T>(testing::uniform(rng));
    const T a = static_cast<T>(testing::uniform(rng));

    auto y1 = y, y2 = y;
    ref.axpy(a, x.data(), y1.data(), n);
    fast.axpy(a, x.data(), y2.data(), n);
    for (std::size_t i = 0; i < n; ++i) CHECK(std::abs(y1[i] - y2[i]) <= tol);

    const double d1 = ref.dot(x.data(), y.data(), n), d2 = fast.dot(x.data(), y.data(), n);
    CHECK(std::abs(d1 - d2) <= tol * std::max(1.0, std::sqrt(static_cast<double>(n))));

    std::vector<T> l1(n), l2(n);
    ref.leaky_relu(x.data(), l1.data(), n, T(0.1));
    fast.leaky_relu(x.data(), l2.data(), n, T(0.1));
    CHECK(l1 == l2);

    for (bool conj : {false, true}) {
      std::vector<std::complex<T>> p(n), q(n);
      for (std::size_t i = 0; i < n; ++i) {
        p[i] = {static_cast<T>(testing::uniform(rng)), static_cast<T>(testing::uniform(rng))};
        q[i] = {static_cast<T>(testing::uniform(rng)), static_cast<T>(testing::uniform(rng))};
      }
      auto p1 = p, p2 = p;
      ref.cmul(p1.data(), q.data(), n, conj);
      fast.cmul(p2.data(), q.data(), n, conj);
      for (std::size_t i = 0; i < n; ++i) CHECK(std::abs(p1[i] - p2[i]) <= tol);
    }
  }
}

}  // namespace

TEST_SUITE("simd") {

TEST_CASE("scalar reference kernels") {
  const auto& k = simd::scalar_kernels<double>();
  std::vector<double> x{1, -2, 3}, y{4, 5, 6};
  k.axpy(2.0, x.data(), y.data(), 3);
  CHECK(y == std::vector<double>{6, 1, 12});
  CHECK(k.dot(x.data(), y.data(), 3) == 6 - 2 + 36);
  std::vector<double> out(3);
  k.leaky_relu(x.data(), out.data(), 3, 0.1);
  CHECK(out[0] == 1.0);
  CHECK(out[1] == doctest::Approx(-0.2));
  std::complex<double> a{1, 2}, b{3, -1};
  k.cmul(&a, &b, 1, true);
  CHECK(a == std::complex<double>(1, 2) * std::complex<double>(3, 1));
}

TEST_CASE("AVX2 kernels agree with the scalar reference") {
  const auto* fd = simd::avx2_kernels<double>();
  const auto* ff = simd::avx2_kernels<float>();
  if (!fd || !ff || !simd::cpu_has_avx2()) {
    MESSAGE("AVX2 kernels unavailable on this build/CPU; equivalence not exercised");
    return;
  }
  check_equivalent(simd::scalar_kernels<double>(), *fd, 1e-12);
  check_equivalent(simd::scalar_kernels<float>(), *ff, 2e-5);
}

TEST_CASE("dispatch override and names") {
  IsaGuard guard;
  simd::force_isa(simd::Isa::Scalar);
  CHECK(simd::active_isa() == simd::Isa::Scalar);
  CHECK(&simd::kernels<double>() == &simd::scalar_kernels<double>());
  CHECK(simd::isa_name(simd::Isa::Scalar) == "scalar");
  CHECK(simd::isa_name(simd::Isa::Avx2) == "avx2");
}

TEST_CASE("oracle detects a faulty kernel") {
  IsaGuard guard;
  CHECK(oracle::check_kernels().passed);
  CHECK(oracle::check_propagation_dft().passed);
  simd::force_isa(simd::Isa::FaultyForTesting);
  CHECK_FALSE(oracle::check_kernels().passed);
  CHECK_FALSE(oracle::check_propagation_dft().passed);
}

}
