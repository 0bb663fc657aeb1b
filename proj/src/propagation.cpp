#include "holotile/propagation.hpp"

#include <cmath>
#include <numbers>
#include <vector>

#include "holotile/fft.hpp"
#include "holotile/simd.hpp"

namespace holotile {

using metrics::Stage;
using metrics::StageScope;

double fft_frequency(int k, int n, double pitch) {
  const int shifted = k < (n + 1) / 2 ? k : k - n;
  return static_cast<double>(shifted) / (static_cast<double>(n) * pitch);
}

template <class T>
TransferFunction<T> build_transfer(const OpticalConfig& cfg, double distance, int pad_factor,
                                   std::size_t channel) {
  cfg.validate();
  if (pad_factor != 1 && pad_factor != 2)
    throw DomainError("pad_factor must be 1 or 2, got " + std::to_string(pad_factor));
  if (!std::isfinite(distance)) throw DomainError("propagation distance must be finite");
  if (channel >= cfg.wavelengths.size()) throw ConfigError("wavelength channel out of range");

  StageScope stage(Stage::Asm);
  TransferFunction<T> tf;
  tf.field_height = cfg.height;
  tf.field_width = cfg.width;
  tf.pad_factor = pad_factor;
  tf.height = cfg.height * pad_factor;
  tf.width = cfg.width * pad_factor;
  tf.distance = distance;
  tf.wavelength = cfg.wavelengths[channel];
  tf.pitch = cfg.pitch;
  tf.values = Grid<std::complex<T>>(tf.height, tf.width);
  tf.band_mask = Grid<std::uint8_t>(tf.height, tf.width);

  const double lambda = tf.wavelength;
  const double inv_l2 = 1.0 / (lambda * lambda);
  const double extent_y = tf.height * cfg.pitch;
  const double extent_x = tf.width * cfg.pitch;
  const double limit_y = 1.0 / (lambda * std::sqrt(std::pow(2.0 * distance / extent_y, 2) + 1.0));
  const double limit_x = 1.0 / (lambda * std::sqrt(std::pow(2.0 * distance / extent_x, 2) + 1.0));

  for (int ky = 0; ky < tf.height; ++ky) {
    const double fy = fft_frequency(ky, tf.height, cfg.pitch);
    for (int kx = 0; kx < tf.width; ++kx) {
      const double fx = fft_frequency(kx, tf.width, cfg.pitch);
      const double arg = inv_l2 - fx * fx - fy * fy;
      const bool pass = arg > 0.0 && std::abs(fx) < limit_x && std::abs(fy) < limit_y;
      tf.band_mask(ky, kx) = pass ? 1 : 0;
      if (pass) {
        const double ph = 2.0 * std::numbers::pi * distance * std::sqrt(arg);
        tf.values(ky, kx) = {static_cast<T>(std::cos(ph)), static_cast<T>(std::sin(ph))};
      } else {
        tf.values(ky, kx) = {};
      }
    }
  }
  return tf;
}

namespace {

template <class T>
void check_compatible(int height, int width, const TransferFunction<T>& tf) {
  if (height != tf.field_height || width != tf.field_width)
    throw ConfigError("field grid " + std::to_string(height) + "x" + std::to_string(width) +
                      " does not match transfer function grid " +
                      std::to_string(tf.field_height) + "x" + std::to_string(tf.field_width));
}

template <class T>
void check_metadata(const ComplexField<T>& field, const TransferFunction<T>& tf) {
  check_compatible(field.height(), field.width(), tf);
  auto close = [](double a, double b) { return std::abs(a - b) <= 1e-12 * std::abs(b); };
  if (!close(field.pitch(), tf.pitch)) throw ConfigError("field pitch does not match transfer function");
  if (!close(field.wavelength(), tf.wavelength))
    throw ConfigError("field wavelength does not match transfer function");
}

}  // namespace

template <class T>
Grid<std::complex<T>> apply_transfer(const Grid<std::complex<T>>& field,
                                     const TransferFunction<T>& tf, bool adjoint) {
  check_compatible(field.height(), field.width(), tf);
  StageScope stage(Stage::Asm);
  const int h = field.height(), w = field.width();
  const int oy = (tf.height - h) / 2, ox = (tf.width - w) / 2;

  fft::Buffer<T> buf(tf.height, tf.width);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) buf(r + oy, c + ox) = field(r, c);

  fft::forward(buf);
  simd::cmul(buf.data(), tf.values.data(), buf.size(), adjoint);
  fft::inverse(buf);

  const T norm = T(1) / static_cast<T>(buf.size());
  Grid<std::complex<T>> out(h, w);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) out(r, c) = buf(r + oy, c + ox) * norm;
  return out;
}

template <class T>
ComplexField<T> propagate(const ComplexField<T>& field, const TransferFunction<T>& tf) {
  check_metadata(field, tf);
  return ComplexField<T>(apply_transfer(field.data(), tf, false), field.pitch(), field.wavelength());
}

template <class T>
ComplexField<T> propagate_adjoint(const ComplexField<T>& grad_out, const TransferFunction<T>& tf) {
  check_metadata(grad_out, tf);
  return ComplexField<T>(apply_transfer(grad_out.data(), tf, true), grad_out.pitch(),
                         grad_out.wavelength());
}

template <class T>
ComplexField<T> dft_oracle(const ComplexField<T>& field, const TransferFunction<T>& tf) {
  if (field.height() > 64 || field.width() > 64)
    throw RefusalError("dft_oracle refuses grids larger than 64x64");
  check_metadata(field, tf);

  using C = std::complex<double>;
  const int h = field.height(), w = field.width();
  const int ph = tf.height, pw = tf.width;
  const int oy = (ph - h) / 2, ox = (pw - w) / 2;

  // Twiddle tables exp(-j 2 pi m / n); indices reduced mod n keep them exact.
  auto table = [](int n) {
    std::vector<C> t(n);
    for (int m = 0; m < n; ++m) {
      const double a = -2.0 * std::numbers::pi * m / n;
      t[m] = {std::cos(a), std::sin(a)};
    }
    return t;
  };
  const auto ty = table(ph), tx = table(pw);

  // Spectrum of the zero-padded field, multiplied by H.
  std::vector<C> spectrum(static_cast<std::size_t>(ph) * pw);
  for (int ky = 0; ky < ph; ++ky) {
    for (int kx = 0; kx < pw; ++kx) {
      C acc{};
      for (int r = 0; r < h; ++r) {
        const C wy = ty[(static_cast<long>(ky) * (r + oy)) % ph];
        for (int c = 0; c < w; ++c) {
          const C wx = tx[(static_cast<long>(kx) * (c + ox)) % pw];
          const auto v = field(r, c);
          acc += C(v.real(), v.imag()) * wy * wx;
        }
      }
      const auto hv = tf.values(ky, kx);
      spectrum[static_cast<std::size_t>(ky) * pw + kx] = acc * C(hv.real(), hv.imag());
    }
  }

  // Inverse transform evaluated only on the cropped output window.
  Grid<std::complex<T>> out(h, w);
  const double norm = 1.0 / (static_cast<double>(ph) * pw);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      C acc{};
      for (int ky = 0; ky < ph; ++ky) {
        const C wy = std::conj(ty[(static_cast<long>(ky) * (r + oy)) % ph]);
        for (int kx = 0; kx < pw; ++kx) {
          const C wx = std::conj(tx[(static_cast<long>(kx) * (c + ox)) % pw]);
          acc += spectrum[static_cast<std::size_t>(ky) * pw + kx] * wy * wx;
        }
      }
      acc *= norm;
      out(r, c) = {static_cast<T>(acc.real()), static_cast<T>(acc.imag())};
    }
  }
  return ComplexField<T>(std::move(out), field.pitch(), field.wavelength());
}

#define HOLOTILE_INSTANTIATE(T)                                                                \
  template TransferFunction<T> build_transfer<T>(const OpticalConfig&, double, int, std::size_t); \
  template ComplexField<T> propagate(const ComplexField<T>&, const TransferFunction<T>&);      \
  template ComplexField<T> propagate_adjoint(const ComplexField<T>&, const TransferFunction<T>&); \
  template Grid<std::complex<T>> apply_transfer(const Grid<std::complex<T>>&,                  \
                                                const TransferFunction<T>&, bool);             \
  template ComplexField<T> dft_oracle(const ComplexField<T>&, const TransferFunction<T>&);

HOLOTILE_INSTANTIATE(float)
HOLOTILE_INSTANTIATE(double)
#undef HOLOTILE_INSTANTIATE

}  // namespace holotile
