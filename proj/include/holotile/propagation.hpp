#pragma once

// Band-limited angular-spectrum propagation.
//
//   H(fx, fy) = exp(j 2 pi d sqrt(1/lambda^2 - fx^2 - fy^2))
//
// on propagating frequencies, zero for evanescent ones, and additionally zero
// outside the aliasing-free band |f_axis| < 1 / (lambda sqrt((2 d / S)^2 + 1))
// where S is the padded aperture extent along that axis.

#include <complex>
#include <cstdint>

#include "holotile/grid.hpp"
#include "holotile/wavefield.hpp"

namespace holotile {

template <class T>
struct TransferFunction {
  int height = 0;         // padded grid
  int width = 0;
  int field_height = 0;   // unpadded grid the function applies to
  int field_width = 0;
  int pad_factor = 1;
  double distance = 0;
  double wavelength = 0;
  double pitch = 0;
  Grid<std::complex<T>> values;  // unshifted FFT order
  Grid<std::uint8_t> band_mask;  // 1 where propagating and inside the band limit
};

/// Spatial frequency (cycles/m) of FFT bin k on an n-point grid.
double fft_frequency(int k, int n, double pitch);

/// cfg.height/width are the unpadded grid; wavelength is cfg.wavelengths[channel].
template <class T>
TransferFunction<T> build_transfer(const OpticalConfig& cfg, double distance, int pad_factor,
                                   std::size_t channel = 0);

template <class T>
ComplexField<T> propagate(const ComplexField<T>& field, const TransferFunction<T>& tf);

/// Adjoint operator: applies conj(H) with the same pad/crop.
template <class T>
ComplexField<T> propagate_adjoint(const ComplexField<T>& grad_out, const TransferFunction<T>& tf);

/// Grid-level entry point used by autodiff; `adjoint` selects conj(H).
template <class T>
Grid<std::complex<T>> apply_transfer(const Grid<std::complex<T>>& field,
                                     const TransferFunction<T>& tf, bool adjoint);

/// Direct O(N^4) evaluation of the same operator without an FFT. Refuses
/// fields larger than 64x64.
template <class T>
ComplexField<T> dft_oracle(const ComplexField<T>& field, const TransferFunction<T>& tf);

}  // namespace holotile
