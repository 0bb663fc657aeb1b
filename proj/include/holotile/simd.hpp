#pragma once

// Data-parallel inner loops used by convolution and propagation. Every kernel
// has a portable scalar reference; an AVX2+FMA variant is selected at runtime
// when the CPU supports it. tests/test_simd.cpp checks the two agree.

#include <complex>
#include <cstddef>
#include <string_view>

namespace holotile::simd {

enum class Isa { Scalar, Avx2, FaultyForTesting };

template <class T>
struct KernelTable {
  /// y[i] += a * x[i]
  void (*axpy)(T a, const T* x, T* y, std::size_t n);
  /// sum_i x[i] * y[i]
  T (*dot)(const T* x, const T* y, std::size_t n);
  /// a[i] *= b[i] (or conj(b[i]))
  void (*cmul)(std::complex<T>* a, const std::complex<T>* b, std::size_t n, bool conj_b);
  /// y[i] = x[i] >= 0 ? x[i] : slope * x[i]
  void (*leaky_relu)(const T* x, T* y, std::size_t n, T slope);
};

template <class T>
const KernelTable<T>& scalar_kernels();

/// nullptr when the binary was built without AVX2 support.
template <class T>
const KernelTable<T>* avx2_kernels();

bool cpu_has_avx2();

/// Kernel set currently in use. Resolved once from the CPU and the
/// HOLOTILE_SIMD environment variable ("scalar", "avx2", "auto").
Isa active_isa();
std::string_view isa_name(Isa isa);

/// Overrides dispatch. FaultyForTesting installs a deliberately wrong complex
/// multiply so oracle suites can prove they detect kernel bugs.
void force_isa(Isa isa);

template <class T>
const KernelTable<T>& kernels();

template <class T>
inline void axpy(T a, const T* x, T* y, std::size_t n) {
  kernels<T>().axpy(a, x, y, n);
}
template <class T>
inline T dot(const T* x, const T* y, std::size_t n) {
  return kernels<T>().dot(x, y, n);
}
template <class T>
inline void cmul(std::complex<T>* a, const std::complex<T>* b, std::size_t n, bool conj_b = false) {
  kernels<T>().cmul(a, b, n, conj_b);
}
template <class T>
inline void leaky_relu(const T* x, T* y, std::size_t n, T slope) {
  kernels<T>().leaky_relu(x, y, n, slope);
}

}  // namespace holotile::simd
