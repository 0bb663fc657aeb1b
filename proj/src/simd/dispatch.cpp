#include <atomic>
#include <cstdlib>
#include <string>

#include "holotile/simd.hpp"

namespace holotile::simd {

#ifndef HOLOTILE_HAVE_AVX2
template <>
const KernelTable<float>* avx2_kernels<float>() {
  return nullptr;
}
template <>
const KernelTable<double>* avx2_kernels<double>() {
  return nullptr;
}
#endif

namespace {

// Conjugates the wrong operand: a plausible sign bug that every
// propagation oracle must catch.
template <class T>
void cmul_faulty(std::complex<T>* a, const std::complex<T>* b, std::size_t n, bool conj_b) {
  scalar_kernels<T>().cmul(a, b, n, !conj_b);
}

template <class T>
const KernelTable<T>& faulty_kernels() {
  static const KernelTable<T> table = [] {
    KernelTable<T> t = scalar_kernels<T>();
    t.cmul = &cmul_faulty<T>;
    return t;
  }();
  return table;
}

Isa resolve_default() {
  const bool avx2 = cpu_has_avx2() && avx2_kernels<float>() != nullptr;
  if (const char* env = std::getenv("HOLOTILE_SIMD")) {
    const std::string v(env);
    if (v == "scalar") return Isa::Scalar;
    if (v == "avx2" && avx2) return Isa::Avx2;
  }
  return avx2 ? Isa::Avx2 : Isa::Scalar;
}

std::atomic<Isa>& current() {
  static std::atomic<Isa> isa{resolve_default()};
  return isa;
}

}  // namespace

bool cpu_has_avx2() {
#if defined(__x86_64__) || defined(__i386__)
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

Isa active_isa() { return current().load(std::memory_order_relaxed); }

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::Scalar: return "scalar";
    case Isa::Avx2: return "avx2";
    case Isa::FaultyForTesting: return "faulty";
  }
  return "unknown";
}

void force_isa(Isa isa) {
  if (isa == Isa::Avx2 && (!cpu_has_avx2() || avx2_kernels<float>() == nullptr)) isa = Isa::Scalar;
  current().store(isa, std::memory_order_relaxed);
}

template <class T>
const KernelTable<T>& kernels() {
  switch (active_isa()) {
    case Isa::Avx2: return *avx2_kernels<T>();
    case Isa::FaultyForTesting: return faulty_kernels<T>();
    case Isa::Scalar: break;
  }
  return scalar_kernels<T>();
}

template const KernelTable<float>& kernels<float>();
template const KernelTable<double>& kernels<double>();

}  // namespace holotile::simd
