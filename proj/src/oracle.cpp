#include "holotile/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "holotile/optimize.hpp"
#include "holotile/propagation.hpp"
#include "holotile/simd.hpp"
#include "holotile/tiling.hpp"

namespace holotile::oracle {

using ad::Shape;
using ad::Tape;
using Tensor = ad::Tensor<double>;

namespace {

CheckResult verdict(std::string name, double measured, double tolerance, std::string detail = {}) {
  return {std::move(name), std::isfinite(measured) && measured < tolerance, measured, tolerance,
          std::move(detail)};
}

double uniform(std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  // Explicit mapping so draws are identical across standard libraries.
  return lo + (hi - lo) * static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

ComplexField<double> random_field(int h, int w, double pitch, double wavelength, std::mt19937_64& rng) {
  ComplexField<double> f(h, w, pitch, wavelength);
  for (auto& v : f.data().values()) v = {uniform(rng), uniform(rng)};
  return f;
}

OpticalConfig grid_config(int n, double distance) {
  OpticalConfig cfg;
  cfg.height = cfg.width = n;
  cfg.distance = distance;
  return cfg;
}

std::complex<double> inner(const Grid<std::complex<double>>& a, const Grid<std::complex<double>>& b) {
  std::complex<double> acc = 0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += std::conj(a[i]) * b[i];
  return acc;
}

double energy(const Grid<std::complex<double>>& a) {
  double acc = 0;
  for (const auto& v : a.values()) acc += std::norm(v);
  return acc;
}

Tensor random_tensor(Shape s, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  auto t = Tensor::zeros(s, true);
  for (auto& v : t.mutable_values()) v = uniform(rng, lo, hi);
  return t;
}

std::vector<double> random_values(std::size_t n, std::mt19937_64& rng) {
  std::vector<double> v(n);
  for (auto& x : v) x = uniform(rng);
  return v;
}

// sum(w * y) for a fixed random w, so every output element is exercised.
Tensor project(Tape<double>& tape, const Tensor& y, const std::vector<double>& w) {
  return ad::sum(tape, ad::mul_const(tape, y, std::span<const double>(w)));
}

}  // namespace

double gradient_error(const LossBuilder& loss, const std::vector<Tensor>& inputs, const GradientOptions& opt) {
  for (auto in : inputs) in.zero_grad();
  {
    Tape<double> tape;
    tape.backward(loss(tape, inputs));
  }
  std::mt19937_64 rng(opt.seed);
  double worst = 0, all_diff = 0, all_na = 0, all_nf = 0;
  for (auto in : inputs) {
    auto values = in.mutable_values();
    std::vector<std::size_t> idx(values.size());
    std::iota(idx.begin(), idx.end(), 0);
    if (opt.max_elements && idx.size() > opt.max_elements) {
      for (std::size_t i = 0; i < opt.max_elements; ++i) std::swap(idx[i], idx[i + rng() % (idx.size() - i)]);
      idx.resize(opt.max_elements);
    }
    double diff = 0, na = 0, nf = 0;
    for (auto i : idx) {
      const double analytic = in.has_grad() ? in.grad()[i] : 0.0;
      const double saved = values[i];
      values[i] = saved + opt.step;
      Tape<double> tp(false);
      const double lp = loss(tp, inputs).item();
      values[i] = saved - opt.step;
      Tape<double> tm(false);
      const double lm = loss(tm, inputs).item();
      values[i] = saved;
      const double fd = (lp - lm) / (2.0 * opt.step);
      diff += (analytic - fd) * (analytic - fd);
      na += analytic * analytic;
      nf += fd * fd;
    }
    const double rel = std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nf), 1e-12});
    worst = std::max(worst, rel);
    all_diff += diff;
    all_na += na;
    all_nf += nf;
    in.zero_grad();
  }
  if (opt.combined) return std::sqrt(all_diff) / std::max({std::sqrt(all_na), std::sqrt(all_nf), 1e-12});
  return worst;
}

CheckResult check_propagation_dft() {
  std::mt19937_64 rng(11);
  double worst = 0;
  for (int pad : {1, 2}) {
    const auto cfg = grid_config(32, 2e-3);
    const auto tf = build_transfer<double>(cfg, cfg.distance, pad, 1);
    const auto x = random_field(32, 32, cfg.pitch, tf.wavelength, rng);
    const auto fast = propagate(x, tf);
    const auto slow = dft_oracle(x, tf);
    for (std::size_t i = 0; i < fast.data().size(); ++i)
      worst = std::max(worst, std::abs(fast.data()[i] - slow.data()[i]));
  }
  return verdict("propagation_vs_direct_dft", worst, 1e-10, "32x32 float64, pad 1 and 2");
}

CheckResult check_adjoint() {
  std::mt19937_64 rng(12);
  double worst = 0;
  const auto cfg = grid_config(16, 1e-3);
  for (int pad : {1, 2}) {
    const auto tf = build_transfer<double>(cfg, cfg.distance, pad, 0);
    for (int k = 0; k < 10; ++k) {
      const auto x = random_field(16, 16, cfg.pitch, tf.wavelength, rng);
      const auto y = random_field(16, 16, cfg.pitch, tf.wavelength, rng);
      const auto lhs = inner(propagate(x, tf).data(), y.data());
      const auto rhs = inner(x.data(), propagate_adjoint(y, tf).data());
      worst = std::max(worst, std::abs(lhs - rhs) / std::max(std::abs(lhs), std::abs(rhs)));
    }
  }
  return verdict("adjoint_identity", worst, 1e-10, "10 random 16x16 pairs, pad 1 and 2");
}

CheckResult check_unitarity() {
  std::mt19937_64 rng(13);
  // 0.5 mm on a 64-sample grid clips nothing: every bin propagates.
  const auto cfg = grid_config(64, 5e-4);
  const auto tf = build_transfer<double>(cfg, cfg.distance, 1, 1);
  const bool full_band = std::all_of(tf.band_mask.values().begin(), tf.band_mask.values().end(),
                                     [](std::uint8_t m) { return m == 1; });
  const auto x = random_field(64, 64, cfg.pitch, tf.wavelength, rng);
  const double rel = std::abs(energy(propagate(x, tf).data()) - energy(x.data())) / energy(x.data());
  auto r = verdict("energy_conservation", full_band ? rel : INFINITY, 1e-10, "64x64, pad 1, full band");
  if (!full_band) r.detail = "band mask unexpectedly clips the spectrum";
  return r;
}

CheckResult check_round_trip() {
  std::mt19937_64 rng(14);
  const auto cfg = grid_config(64, 5e-4);
  const auto fwd = build_transfer<double>(cfg, cfg.distance, 1, 1);
  const auto back = build_transfer<double>(cfg, -cfg.distance, 1, 1);
  const auto x = random_field(64, 64, cfg.pitch, fwd.wavelength, rng);
  const auto y = propagate(propagate(x, fwd), back);
  double worst = 0;
  for (std::size_t i = 0; i < x.data().size(); ++i) worst = std::max(worst, std::abs(y.data()[i] - x.data()[i]));
  return verdict("propagation_round_trip", worst, 1e-8, "64x64, +z then -z, pad 1");
}

CheckResult check_tiling() {
  std::mt19937_64 rng(15);
  std::size_t mismatches = 0;
  for (int r = 1; r <= 4; ++r) {
    for (int k = 0; k < 5; ++k) {
      const int h = r * static_cast<int>(1 + rng() % 7), w = r * static_cast<int>(1 + rng() % 7);
      Grid<int> x(h, w);
      for (auto& v : x.values()) v = static_cast<int>(rng() % 100000);
      const auto stack = pixel_unshuffle(x, r);
      if (!(pixel_shuffle(stack, r) == x)) ++mismatches;
      if (!(pixel_unshuffle(pixel_shuffle(stack, r), r).tiles == stack.tiles)) ++mismatches;
    }
  }
  for (int k = 0; k < 5; ++k) {
    const int h = 4 * static_cast<int>(1 + rng() % 6), w = 4 * static_cast<int>(1 + rng() % 6);
    Grid<int> x(h, w);
    for (auto& v : x.values()) v = static_cast<int>(rng() % 100000);
    const auto groups = group_tiles(pixel_unshuffle(x, 4));
    TileStack<int> merged{2, {}};
    for (const auto& g : groups) merged.tiles.push_back(pixel_shuffle(g, 2));
    if (!(pixel_shuffle(merged, 2) == x)) ++mismatches;
  }
  return verdict("tiling_bijections", static_cast<double>(mismatches), 0.5,
                 "r in 1..4 round trips; two-stage x2 merge equals x4 shuffle");
}

namespace {

template <class T>
double kernel_error(std::mt19937_64& rng) {
  const auto& ref = simd::scalar_kernels<T>();
  const auto& act = simd::kernels<T>();
  double worst = 0;
  auto rel = [](double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1.0}); };
  for (std::size_t n : {0u, 1u, 3u, 4u, 7u, 8u, 15u, 16u, 33u, 67u, 256u}) {
    std::vector<T> x(n), y(n), y2;
    for (auto& v : x) v = static_cast<T>(uniform(rng));
    for (auto& v : y) v = static_cast<T>(uniform(rng));
    y2 = y;
    const T a = static_cast<T>(uniform(rng));
    ref.axpy(a, x.data(), y.data(), n);
    act.axpy(a, x.data(), y2.data(), n);
    for (std::size_t i = 0; i < n; ++i) worst = std::max(worst, rel(y[i], y2[i]));
    worst = std::max(worst, rel(ref.dot(x.data(), y.data(), n), act.dot(x.data(), y.data(), n)) /
                                std::max<double>(1.0, std::sqrt(static_cast<double>(n))));
    std::vector<T> l1(n), l2(n);
    ref.leaky_relu(x.data(), l1.data(), n, T(0.1));
    act.leaky_relu(x.data(), l2.data(), n, T(0.1));
    for (std::size_t i = 0; i < n; ++i) worst = std::max(worst, rel(l1[i], l2[i]));
    for (bool conj : {false, true}) {
      std::vector<std::complex<T>> p(n), q(n);
      for (std::size_t i = 0; i < n; ++i) {
        p[i] = {static_cast<T>(uniform(rng)), static_cast<T>(uniform(rng))};
        q[i] = {static_cast<T>(uniform(rng)), static_cast<T>(uniform(rng))};
      }
      auto p2 = p;
      ref.cmul(p.data(), q.data(), n, conj);
      act.cmul(p2.data(), q.data(), n, conj);
      for (std::size_t i = 0; i < n; ++i) worst = std::max(worst, static_cast<double>(std::abs(p[i] - p2[i])));
    }
  }
  return worst;
}

}  // namespace

CheckResult check_kernels() {
  std::mt19937_64 rng(16);
  const double ed = kernel_error<double>(rng);
  const double ef = kernel_error<float>(rng);
  // Normalize the float error to the double tolerance scale.
  const double measured = std::max(ed, ef * 1e-7);
  return verdict("simd_kernels_vs_scalar", measured, 1e-12,
                 std::string("active kernels: ") + std::string(simd::isa_name(simd::active_isa())));
}

std::vector<CheckResult> check_op_gradients(int seeds) {
  struct Case {
    const char* name;
    std::vector<Shape> inputs;
    std::function<Tensor(Tape<double>&, const std::vector<Tensor>&, const std::vector<double>&)> body;
    std::size_t out_size;
  };
  const Shape x4{1, 2, 5, 5};
  // `body` returns a scalar; `w` projects tensor outputs to one.
  std::vector<Case> cases = {
      {"conv2d", {{1, 2, 5, 5}, {3, 2, 3, 3}, {1, 3, 1, 1}},
       [](auto& t, const auto& in, const auto& w) { return project(t, ad::conv2d(t, in[0], in[1], in[2]), w); }, 75},
      {"leaky_relu", {x4}, [](auto& t, const auto& in, const auto& w) { return project(t, ad::leaky_relu(t, in[0]), w); }, 50},
      {"sigmoid", {x4}, [](auto& t, const auto& in, const auto& w) { return project(t, ad::sigmoid(t, in[0]), w); }, 50},
      {"cos", {x4}, [](auto& t, const auto& in, const auto& w) { return project(t, ad::cos(t, in[0]), w); }, 50},
      {"sin", {x4}, [](auto& t, const auto& in, const auto& w) { return project(t, ad::sin(t, in[0]), w); }, 50},
      {"grn", {{1, 3, 4, 4}, {1, 3, 1, 1}, {1, 3, 1, 1}},
       [](auto& t, const auto& in, const auto& w) { return project(t, ad::grn(t, in[0], in[1], in[2]), w); }, 48},
      {"add", {x4, x4}, [](auto& t, const auto& in, const auto& w) { return project(t, ad::add(t, in[0], in[1]), w); }, 50},
      {"add_broadcast", {x4, {1, 2, 1, 1}},
       [](auto& t, const auto& in, const auto& w) { return project(t, ad::add(t, in[0], in[1]), w); }, 50},
      {"mul", {x4, x4}, [](auto& t, const auto& in, const auto& w) { return project(t, ad::mul(t, in[0], in[1]), w); }, 50},
      {"mul_broadcast", {x4, {1, 2, 1, 1}},
       [](auto& t, const auto& in, const auto& w) { return project(t, ad::mul(t, in[0], in[1]), w); }, 50},
      {"scale", {x4}, [](auto& t, const auto& in, const auto& w) { return project(t, ad::scale(t, in[0], 1.7), w); }, 50},
      {"pixel_shuffle", {{1, 8, 3, 3}},
       [](auto& t, const auto& in, const auto& w) { return project(t, ad::pixel_shuffle_t(t, in[0], 2), w); }, 72},
      {"pixel_unshuffle", {{1, 2, 6, 6}},
       [](auto& t, const auto& in, const auto& w) { return project(t, ad::pixel_unshuffle_t(t, in[0], 3), w); }, 72},
      {"concat_channels", {x4, {1, 1, 5, 5}},
       [](auto& t, const auto& in, const auto& w) {
         return project(t, ad::concat_channels(t, std::vector<Tensor>{in[0], in[1]}), w);
       }, 75},
      {"select_channels", {{1, 3, 4, 4}},
       [](auto& t, const auto& in, const auto& w) { return project(t, ad::select_channels(t, in[0], {2, 0}), w); }, 32},
      {"sum", {x4}, [](auto& t, const auto& in, const auto&) { return ad::sum(t, in[0]); }, 0},
      {"mse_loss", {x4}, [](auto& t, const auto& in, const auto& w) { return ad::mse_loss(t, in[0], std::span<const double>(w)); }, 50},
      {"l2_scaled_loss", {x4},
       [](auto& t, const auto& in, const auto& w) { return ad::l2_scaled_loss(t, in[0], std::span<const double>(w)); }, 50},
  };

  std::vector<CheckResult> out;
  for (const auto& c : cases) {
    double worst = 0;
    for (int s = 0; s < seeds; ++s) {
      std::mt19937_64 rng(1000 + 17 * s);
      std::vector<Tensor> inputs;
      for (const auto& shape : c.inputs) inputs.push_back(random_tensor(shape, rng));
      const auto w = random_values(std::max<std::size_t>(c.out_size, 1), rng);
      worst = std::max(worst, gradient_error([&](auto& t, const auto& in) { return c.body(t, in, w); }, inputs));
    }
    out.push_back(verdict(std::string("grad_") + c.name, worst, 1e-5));
  }

  // Propagation and complex magnitude on an 8x8 grid.
  {
    const auto cfg = grid_config(8, 3e-4);
    const auto tf = build_transfer<double>(cfg, cfg.distance, 2, 0);
    double worst_prop = 0, worst_abs = 0;
    for (int s = 0; s < seeds; ++s) {
      std::mt19937_64 rng(2000 + 17 * s);
      std::vector<Tensor> inputs{random_tensor({1, 1, 8, 8}, rng), random_tensor({1, 1, 8, 8}, rng)};
      const auto wr = random_values(64, rng), wi = random_values(64, rng);
      worst_prop = std::max(worst_prop, gradient_error([&](auto& t, const auto& in) {
        const auto y = ad::propagate(t, ad::ComplexPair<double>{in[0], in[1]}, tf);
        return ad::add(t, project(t, y.re, wr), project(t, y.im, wi));
      }, inputs));
      worst_abs = std::max(worst_abs, gradient_error([&](auto& t, const auto& in) {
        return project(t, ad::complex_abs(t, ad::ComplexPair<double>{in[0], in[1]}), wr);
      }, inputs));
    }
    out.push_back(verdict("grad_propagate", worst_prop, 1e-5));
    out.push_back(verdict("grad_complex_abs", worst_abs, 1e-5));
  }
  return out;
}

CheckResult check_pipeline_gradient(int seeds) {
  opt::PipelineConfig cfg;
  cfg.scale = 2;
  cfg.optical.height = cfg.optical.width = 16;
  cfg.optical.distance = 3e-4;
  cfg.backbone_width = 4;
  cfg.backbone_levels = 2;
  cfg.lfmn.features = 4;
  cfg.lfmn.blocks = 1;
  const auto optics = opt::make_optics<double>(cfg);
  double worst = 0;
  for (int s = 0; s < seeds; ++s) {
    auto params = opt::init_pipeline<double>(cfg, 100 + s);
    std::mt19937_64 rng(3000 + 17 * s);
    const auto list = params.list();
    // Move GRN and biases off zero so every path carries gradient.
    for (auto [name, t] : list)
      for (auto& v : t.mutable_values()) v += 0.05 * uniform(rng);
    Grid<double> image(16, 16);
    for (auto& v : image.values()) v = uniform(rng, 0.0, 1.0);
    std::vector<Tensor> inputs;
    for (const auto& p : list) inputs.push_back(p.second);
    worst = std::max(worst, gradient_error([&](auto& t, const auto&) {
      return opt::pipeline_graph(t, image, params, optics, cfg).loss;
    }, inputs, {1e-6, 6, static_cast<std::uint64_t>(s), true}));
  }
  return verdict("grad_pipeline_16x16_r2", worst, 1e-4);
}

std::vector<CheckResult> run_all(int gradient_seeds) {
  std::vector<CheckResult> out{check_propagation_dft(), check_adjoint(), check_unitarity(),
                               check_round_trip(),      check_tiling(),  check_kernels()};
  for (auto& r : check_op_gradients(gradient_seeds)) out.push_back(std::move(r));
  out.push_back(check_pipeline_gradient(gradient_seeds));
  return out;
}

}  // namespace holotile::oracle
