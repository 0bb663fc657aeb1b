#include "holotile/encoding.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace holotile {

template <class T>
PhaseMap make_phase_map(const Grid<T>& unwrapped) {
  PhaseMap pm{Grid<double>(unwrapped.height(), unwrapped.width())};
  for (std::size_t i = 0; i < unwrapped.size(); ++i)
    pm.phase[i] = wrap_phase(static_cast<double>(unwrapped[i]));
  return pm;
}

template <class T>
PhaseMap dpac_encode(const ComplexField<T>& field) {
  PhaseMap pm{Grid<double>(field.height(), field.width())};
  for (int r = 0; r < field.height(); ++r) {
    for (int c = 0; c < field.width(); ++c) {
      const std::complex<double> v(field(r, c).real(), field(r, c).imag());
      double a = std::abs(v);
      if (a > 1.0 + 1e-12) throw DomainError("dpac_encode: amplitude exceeds 1 after normalization");
      a = std::min(a, 1.0);
      const double phi = a > 0.0 ? std::arg(v) : 0.0;
      const double theta = std::acos(a);
      pm.phase(r, c) = wrap_phase((r + c) % 2 == 0 ? phi + theta : phi - theta);
    }
  }
  return pm;
}

template <class T>
PhaseMap dpac_encode_normalized(const ComplexField<T>& field) {
  double peak = 0.0;
  for (const auto& v : field.data().values())
    peak = std::max(peak, std::hypot(static_cast<double>(v.real()), static_cast<double>(v.imag())));
  if (peak == 0.0) return dpac_encode(field);
  Grid<std::complex<T>> scaled(field.height(), field.width());
  for (std::size_t i = 0; i < scaled.size(); ++i)
    scaled[i] = field.data()[i] / static_cast<T>(peak);
  return dpac_encode(ComplexField<T>(std::move(scaled), field.pitch(), field.wavelength()));
}

template <class T>
ComplexField<T> phase_only_field(const PhaseMap& pm, double pitch, double wavelength) {
  Grid<std::complex<T>> data(pm.height(), pm.width());
  for (std::size_t i = 0; i < data.size(); ++i)
    data[i] = {static_cast<T>(std::cos(pm.phase[i])), static_cast<T>(std::sin(pm.phase[i]))};
  return ComplexField<T>(std::move(data), pitch, wavelength);
}

Grid<std::uint16_t> quantize_phase(const PhaseMap& pm, int levels) {
  if (levels < 2 || levels > 65536) throw DomainError("quantize_phase: levels must be in [2, 65536]");
  const double step = 2.0 * std::numbers::pi / levels;
  Grid<std::uint16_t> q(pm.height(), pm.width());
  for (std::size_t i = 0; i < q.size(); ++i) {
    const double x = (pm.phase[i] + std::numbers::pi) / step;
    const long k = static_cast<long>(std::ceil(x)) - 1;
    q[i] = static_cast<std::uint16_t>(std::clamp<long>(k, 0, levels - 1));
  }
  return q;
}

PhaseMap dequantize_phase(const Grid<std::uint16_t>& q, int levels) {
  if (levels < 2 || levels > 65536) throw DomainError("dequantize_phase: levels must be in [2, 65536]");
  const double step = 2.0 * std::numbers::pi / levels;
  PhaseMap pm{Grid<double>(q.height(), q.width())};
  for (std::size_t i = 0; i < q.size(); ++i) {
    if (q[i] >= levels) throw DomainError("dequantize_phase: level out of range");
    pm.phase[i] = -std::numbers::pi + (q[i] + 0.5) * step;
  }
  return pm;
}

#define HOLOTILE_INSTANTIATE(T)                                              \
  template PhaseMap make_phase_map(const Grid<T>&);                         \
  template PhaseMap dpac_encode(const ComplexField<T>&);                    \
  template PhaseMap dpac_encode_normalized(const ComplexField<T>&);         \
  template ComplexField<T> phase_only_field<T>(const PhaseMap&, double, double);

HOLOTILE_INSTANTIATE(float)
HOLOTILE_INSTANTIATE(double)
#undef HOLOTILE_INSTANTIATE

}  // namespace holotile
