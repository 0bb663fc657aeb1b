#include "holotile/simd.hpp"

namespace holotile::simd {
namespace {

template <class T>
void axpy_scalar(T a, const T* x, T* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

template <class T>
T dot_scalar(const T* x, const T* y, std::size_t n) {
  T acc = 0;
  for (std::size_t i = 0; i < n; ++i) acc += x[i] * y[i];
  return acc;
}

// Written out instead of std::complex operator* which carries the Annex G
// NaN recovery path.
template <class T>
void cmul_scalar(std::complex<T>* a, const std::complex<T>* b, std::size_t n, bool conj_b) {
  const T sign = conj_b ? T(-1) : T(1);
  for (std::size_t i = 0; i < n; ++i) {
    const T ar = a[i].real(), ai = a[i].imag();
    const T br = b[i].real(), bi = sign * b[i].imag();
    a[i] = {ar * br - ai * bi, ar * bi + ai * br};
  }
}

template <class T>
void leaky_relu_scalar(const T* x, T* y, std::size_t n, T slope) {
  for (std::size_t i = 0; i < n; ++i) y[i] = x[i] >= T(0) ? x[i] : slope * x[i];
}

}  // namespace

template <class T>
const KernelTable<T>& scalar_kernels() {
  static const KernelTable<T> table{&axpy_scalar<T>, &dot_scalar<T>, &cmul_scalar<T>,
                                    &leaky_relu_scalar<T>};
  return table;
}

template const KernelTable<float>& scalar_kernels<float>();
template const KernelTable<double>& scalar_kernels<double>();

}  // namespace holotile::simd
