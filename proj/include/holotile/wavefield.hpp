#pragma once

#include <complex>
#include <vector>

#include "holotile/grid.hpp"

namespace holotile {

/// Optical constants shared by every propagation. Defaults describe a 4K
/// phase-only SLM with RGB laser illumination.
struct OpticalConfig {
  double pitch = 3.74e-6;                               // meters per sample
  std::vector<double> wavelengths = {680e-9, 520e-9, 450e-9};  // meters, R/G/B
  double distance = 0.1;                                // target -> SLM, meters
  int height = 2160;
  int width = 3840;

  /// Throws DomainError on non-positive pitch/wavelength or non-finite distance.
  void validate() const;
};

/// Scalar monochromatic wavefield sampled on a square grid.
template <class T>
class ComplexField {
 public:
  using complex_type = std::complex<T>;

  ComplexField(Grid<complex_type> data, double pitch, double wavelength);
  ComplexField(int height, int width, double pitch, double wavelength);

  int height() const noexcept { return data_.height(); }
  int width() const noexcept { return data_.width(); }
  double pitch() const noexcept { return pitch_; }
  double wavelength() const noexcept { return wavelength_; }

  Grid<complex_type>& data() noexcept { return data_; }
  const Grid<complex_type>& data() const noexcept { return data_; }
  complex_type& operator()(int r, int c) noexcept { return data_(r, c); }
  const complex_type& operator()(int r, int c) const noexcept { return data_(r, c); }

  bool all_finite() const noexcept;

 private:
  Grid<complex_type> data_;
  double pitch_;
  double wavelength_;
};

/// data = amplitude * exp(j * phase). Uses cfg.pitch and the given wavelength.
template <class T>
ComplexField<T> from_amplitude_phase(const Grid<T>& amplitude, const Grid<T>& phase,
                                     double pitch, double wavelength);

/// Convenience overload: first wavelength of cfg.
template <class T>
ComplexField<T> from_amplitude_phase(const Grid<T>& amplitude, const Grid<T>& phase,
                                     const OpticalConfig& cfg);

template <class T>
Grid<T> amplitude(const ComplexField<T>& field);

/// Principal argument in (-pi, pi]; exact zeros map to 0.
template <class T>
Grid<T> phase(const ComplexField<T>& field);

/// Wraps an arbitrary angle into (-pi, pi].
template <class T>
T wrap_phase(T angle);

}  // namespace holotile
