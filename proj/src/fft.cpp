#include "holotile/fft.hpp"

#include <fftw3.h>

#include <algorithm>
#include <map>
#include <mutex>
#include <new>
#include <tuple>

namespace holotile::fft {

namespace {

std::mutex& planner_mutex() {
  static std::mutex mu;
  return mu;
}

using Key = std::tuple<int, int, int>;

template <class T>
struct Traits;

template <>
struct Traits<double> {
  using Plan = fftw_plan;
  using Cpx = fftw_complex;
  static void* alloc(std::size_t n) { return fftw_malloc(n * sizeof(Cpx)); }
  static void release(void* p) { fftw_free(p); }
  static Plan plan(int h, int w, Cpx* buf, int sign) {
    return fftw_plan_dft_2d(h, w, buf, buf, sign, FFTW_ESTIMATE);
  }
  static void execute(Plan p, Cpx* buf) { fftw_execute_dft(p, buf, buf); }
};

template <>
struct Traits<float> {
  using Plan = fftwf_plan;
  using Cpx = fftwf_complex;
  static void* alloc(std::size_t n) { return fftwf_malloc(n * sizeof(Cpx)); }
  static void release(void* p) { fftwf_free(p); }
  static Plan plan(int h, int w, Cpx* buf, int sign) {
    return fftwf_plan_dft_2d(h, w, buf, buf, sign, FFTW_ESTIMATE);
  }
  static void execute(Plan p, Cpx* buf) { fftwf_execute_dft(p, buf, buf); }
};

template <class T>
typename Traits<T>::Plan get_plan(int h, int w, int sign) {
  using Tr = Traits<T>;
  static std::map<Key, typename Tr::Plan> cache;
  std::lock_guard lock(planner_mutex());
  const Key key{h, w, sign};
  if (auto it = cache.find(key); it != cache.end()) return it->second;
  auto* scratch = static_cast<typename Tr::Cpx*>(Tr::alloc(static_cast<std::size_t>(h) * w));
  auto p = Tr::plan(h, w, scratch, sign);
  Tr::release(scratch);
  cache.emplace(key, p);
  return p;
}

}  // namespace

template <class T>
Buffer<T>::Buffer(int height, int width)
    : height_(height),
      width_(width),
      data_(nullptr),
      charge_(static_cast<std::int64_t>(height) * width * sizeof(std::complex<T>)) {
  data_ = static_cast<std::complex<T>*>(Traits<T>::alloc(size()));
  if (!data_) throw std::bad_alloc();
  std::fill(data_, data_ + size(), std::complex<T>{});
}

template <class T>
Buffer<T>::~Buffer() {
  Traits<T>::release(data_);
}

template <class T>
void forward(Buffer<T>& buf) {
  auto p = get_plan<T>(buf.height(), buf.width(), FFTW_FORWARD);
  Traits<T>::execute(p, reinterpret_cast<typename Traits<T>::Cpx*>(buf.data()));
}

template <class T>
void inverse(Buffer<T>& buf) {
  auto p = get_plan<T>(buf.height(), buf.width(), FFTW_BACKWARD);
  Traits<T>::execute(p, reinterpret_cast<typename Traits<T>::Cpx*>(buf.data()));
}

template class Buffer<float>;
template class Buffer<double>;
template void forward(Buffer<float>&);
template void forward(Buffer<double>&);
template void inverse(Buffer<float>&);
template void inverse(Buffer<double>&);

}  // namespace holotile::fft
