#pragma once

// Thin FFTW wrapper: plans are cached per (shape, direction, precision) and
// created under a lock; execution uses the new-array interface so concurrent
// transforms on distinct buffers are safe.

#include <complex>
#include <cstddef>
#include <memory>

#include "holotile/memory_ledger.hpp"

namespace holotile::fft {

/// SIMD-aligned complex scratch buffer, charged to the active ledger stage.
template <class T>
class Buffer {
 public:
  Buffer(int height, int width);
  ~Buffer();
  Buffer(const Buffer&) = delete;
  Buffer& operator=(const Buffer&) = delete;

  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  std::size_t size() const noexcept { return static_cast<std::size_t>(height_) * width_; }
  std::complex<T>* data() noexcept { return data_; }
  const std::complex<T>* data() const noexcept { return data_; }
  std::complex<T>& operator()(int r, int c) noexcept {
    return data_[static_cast<std::size_t>(r) * width_ + c];
  }

 private:
  int height_;
  int width_;
  std::complex<T>* data_;
  metrics::ChargeToken charge_;
};

/// Unnormalized in-place 2-D DFT. forward uses exp(-j...), inverse exp(+j...).
template <class T>
void forward(Buffer<T>& buf);
template <class T>
void inverse(Buffer<T>& buf);

}  // namespace holotile::fft
