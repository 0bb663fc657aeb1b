#include "holotile/wavefield.hpp"

#include <cmath>
#include <numbers>

namespace holotile {

void OpticalConfig::validate() const {
  if (!(pitch > 0.0) || !std::isfinite(pitch)) throw DomainError("pitch must be > 0");
  if (wavelengths.empty()) throw DomainError("at least one wavelength is required");
  for (double wl : wavelengths)
    if (!(wl > 0.0) || !std::isfinite(wl)) throw DomainError("wavelengths must be > 0");
  if (!std::isfinite(distance)) throw DomainError("distance must be finite");
  if (height < 1 || width < 1) throw DimensionError("grid dimensions must be >= 1");
}

namespace {
void check_metadata(double pitch, double wavelength) {
  if (!(pitch > 0.0) || !std::isfinite(pitch)) throw DomainError("field pitch must be > 0");
  if (!(wavelength > 0.0) || !std::isfinite(wavelength))
    throw DomainError("field wavelength must be > 0");
}
}  // namespace

template <class T>
ComplexField<T>::ComplexField(Grid<complex_type> data, double pitch, double wavelength)
    : data_(std::move(data)), pitch_(pitch), wavelength_(wavelength) {
  check_metadata(pitch, wavelength);
  if (data_.empty()) throw DimensionError("field must have at least one sample");
}

template <class T>
ComplexField<T>::ComplexField(int height, int width, double pitch, double wavelength)
    : data_(height, width), pitch_(pitch), wavelength_(wavelength) {
  check_metadata(pitch, wavelength);
}

template <class T>
bool ComplexField<T>::all_finite() const noexcept {
  for (const auto& v : data_.values())
    if (!std::isfinite(v.real()) || !std::isfinite(v.imag())) return false;
  return true;
}

template <class T>
ComplexField<T> from_amplitude_phase(const Grid<T>& amplitude, const Grid<T>& phase,
                                     double pitch, double wavelength) {
  require_same_shape(amplitude, phase, "from_amplitude_phase");
  Grid<std::complex<T>> data(amplitude.height(), amplitude.width());
  for (std::size_t i = 0; i < amplitude.size(); ++i) {
    const T a = amplitude[i];
    if (!(a >= T(0))) throw DomainError("from_amplitude_phase: amplitude must be >= 0");
    data[i] = {a * std::cos(phase[i]), a * std::sin(phase[i])};
  }
  return ComplexField<T>(std::move(data), pitch, wavelength);
}

template <class T>
ComplexField<T> from_amplitude_phase(const Grid<T>& amplitude, const Grid<T>& phase,
                                     const OpticalConfig& cfg) {
  cfg.validate();
  return from_amplitude_phase(amplitude, phase, cfg.pitch, cfg.wavelengths.front());
}

template <class T>
Grid<T> amplitude(const ComplexField<T>& field) {
  Grid<T> out(field.height(), field.width());
  const auto& d = field.data();
  for (std::size_t i = 0; i < d.size(); ++i) out[i] = std::hypot(d[i].real(), d[i].imag());
  return out;
}

template <class T>
Grid<T> phase(const ComplexField<T>& field) {
  Grid<T> out(field.height(), field.width());
  const auto& d = field.data();
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (d[i].real() == T(0) && d[i].imag() == T(0)) {
      out[i] = T(0);
      continue;
    }
    T a = std::atan2(d[i].imag(), d[i].real());
    if (a <= -std::numbers::pi_v<T>) a = std::numbers::pi_v<T>;
    out[i] = a;
  }
  return out;
}

template <class T>
T wrap_phase(T angle) {
  constexpr T two_pi = 2 * std::numbers::pi_v<T>;
  T r = std::remainder(angle, two_pi);
  if (r <= -std::numbers::pi_v<T>) r += two_pi;
  if (r > std::numbers::pi_v<T>) r -= two_pi;
  return r;
}

#define HOLOTILE_INSTANTIATE(T)                                                                 \
  template class ComplexField<T>;                                                               \
  template ComplexField<T> from_amplitude_phase(const Grid<T>&, const Grid<T>&, double, double); \
  template ComplexField<T> from_amplitude_phase(const Grid<T>&, const Grid<T>&,                 \
                                                const OpticalConfig&);                          \
  template Grid<T> amplitude(const ComplexField<T>&);                                           \
  template Grid<T> phase(const ComplexField<T>&);                                               \
  template T wrap_phase(T);

HOLOTILE_INSTANTIATE(float)
HOLOTILE_INSTANTIATE(double)
#undef HOLOTILE_INSTANTIATE

}  // namespace holotile
