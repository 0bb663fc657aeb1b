#pragma once

#include <cstdint>

#include "holotile/grid.hpp"
#include "holotile/wavefield.hpp"

namespace holotile {

/// Phase-only hologram with values in (-pi, pi].
struct PhaseMap {
  Grid<double> phase;

  int height() const noexcept { return phase.height(); }
  int width() const noexcept { return phase.width(); }
};

/// Wraps arbitrary phases into a PhaseMap.
template <class T>
PhaseMap make_phase_map(const Grid<T>& unwrapped);

/// Double-phase amplitude coding on a checkerboard: sample a e^{j phi} becomes
/// phi + acos(a) where (row + col) is even and phi - acos(a) where odd.
/// Requires every amplitude <= 1 (DomainError otherwise).
template <class T>
PhaseMap dpac_encode(const ComplexField<T>& field);

/// Divides by the global max amplitude, then encodes.
template <class T>
PhaseMap dpac_encode_normalized(const ComplexField<T>& field);

/// Unit-amplitude field exp(j phase) with the given metadata.
template <class T>
ComplexField<T> phase_only_field(const PhaseMap& pm, double pitch, double wavelength);

/// Uniform quantizer on (-pi, pi]: level k covers (-pi + k s, -pi + (k + 1) s],
/// s = 2 pi / levels. levels must lie in [2, 65536].
Grid<std::uint16_t> quantize_phase(const PhaseMap& pm, int levels = 256);

/// Level k -> interval center -pi + (k + 1/2) s.
PhaseMap dequantize_phase(const Grid<std::uint16_t>& q, int levels = 256);

}  // namespace holotile
