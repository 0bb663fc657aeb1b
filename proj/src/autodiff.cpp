#include "holotile/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "holotile/simd.hpp"

namespace holotile::ad {

using metrics::TrackedVector;

std::string Shape::str() const {
  return "(" + std::to_string(n) + "," + std::to_string(c) + "," + std::to_string(h) + "," +
         std::to_string(w) + ")";
}

template <class T>
TrackedVector<T>& Node<T>::ensure_grad() {
  if (grad.empty()) {
    metrics::StageScope stage(metrics::Stage::AutodiffTape);
    TrackedVector<T> g;
    g.assign(shape.size(), T(0));
    grad = std::move(g);
  }
  return grad;
}

// ---- Tensor ----------------------------------------------------------------

template <class T>
Tensor<T> Tensor<T>::zeros(Shape shape, bool requires_grad) {
  return filled(shape, T(0), requires_grad);
}

template <class T>
Tensor<T> Tensor<T>::filled(Shape shape, T value, bool requires_grad) {
  if (shape.n < 1 || shape.c < 1 || shape.h < 1 || shape.w < 1)
    throw DimensionError("tensor dimensions must be >= 1, got " + shape.str());
  auto node = std::make_shared<Node<T>>();
  node->shape = shape;
  node->value.assign(shape.size(), value);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

template <class T>
Tensor<T> Tensor<T>::from_values(Shape shape, std::span<const T> values, bool requires_grad) {
  if (values.size() != shape.size())
    throw DimensionError("from_values: " + std::to_string(values.size()) +
                         " values for shape " + shape.str());
  auto t = zeros(shape, requires_grad);
  std::copy(values.begin(), values.end(), t.mutable_values().begin());
  return t;
}

template <class T>
T Tensor<T>::item() const {
  if (size() != 1) throw UsageError("item() on tensor of shape " + shape().str());
  return node_->value[0];
}

template <class T>
T Tensor<T>::at(int n, int c, int h, int w) const {
  const auto& s = shape();
  return node_->value[((static_cast<std::size_t>(n) * s.c + c) * s.h + h) * s.w + w];
}

// ---- Tape ------------------------------------------------------------------

template <class T>
Tensor<T> Tape<T>::record(Shape shape, TrackedVector<T> value, std::vector<Tensor<T>> parents,
                          std::function<void(Node<T>&)> backward_fn) {
  auto node = std::make_shared<Node<T>>();
  node->shape = shape;
  node->value = std::move(value);
  node->requires_grad = recording_ && std::any_of(parents.begin(), parents.end(),
                                                  [](const Tensor<T>& p) { return p.requires_grad(); });
  if (node->requires_grad) {
    node->on_tape = true;
    node->backward = std::move(backward_fn);
    for (auto& p : parents) node->parents.push_back(p.node_ptr());
    nodes_.push_back(node);
  }
  return Tensor<T>(std::move(node));
}

template <class T>
void Tape<T>::backward(const Tensor<T>& loss) {
  if (!loss.defined() || loss.size() != 1)
    throw UsageError("backward requires a scalar loss");
  if (!loss.requires_grad()) return;
  metrics::StageScope stage(metrics::Stage::AutodiffTape);
  loss.node().ensure_grad()[0] += T(1);
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    Node<T>& node = **it;
    if (node.grad.empty() || !node.backward) continue;
    node.backward(node);
    node.grad.clear();
    node.grad.shrink_to_fit();
  }
}

namespace {

template <class T>
TrackedVector<T> buffer(std::size_t n) {
  TrackedVector<T> v;
  v.assign(n, T(0));
  return v;
}

// Per-channel broadcast of y over x.
template <class T>
bool broadcast_channel(const Tensor<T>& x, const Tensor<T>& y, const char* op) {
  if (x.shape() == y.shape()) return false;
  const auto& ys = y.shape();
  if (ys.n == 1 && ys.c == x.shape().c && ys.h == 1 && ys.w == 1) return true;
  throw DimensionError(std::string(op) + ": incompatible shapes " + x.shape().str() + " and " +
                       ys.str());
}

template <class T>
void require_parent_grad(const std::shared_ptr<Node<T>>& p, std::function<void(TrackedVector<T>&)> f) {
  if (p->requires_grad) f(p->ensure_grad());
}

}  // namespace

// ---- conv2d ----------------------------------------------------------------

namespace {

struct ConvGeom {
  int n, cin, cout, h, w, k, pad;
};

// Visits every (output row range, input row offset, column window) for one
// kernel tap. When the tap has no horizontal shift the rows are contiguous
// and are handled as one run.
template <class F>
void for_tap_runs(const ConvGeom& g, int ky, int kx, F&& run) {
  const int dy = ky - g.pad, dx = kx - g.pad;
  const int i0 = std::max(0, -dy), i1 = std::min(g.h, g.h - dy);
  const int j0 = std::max(0, -dx), j1 = std::min(g.w, g.w - dx);
  if (i0 >= i1 || j0 >= j1) return;
  if (dx == 0) {
    run(static_cast<std::size_t>(i0) * g.w, static_cast<std::size_t>(i0 + dy) * g.w,
        static_cast<std::size_t>(i1 - i0) * g.w);
    return;
  }
  const std::size_t len = static_cast<std::size_t>(j1 - j0);
  for (int i = i0; i < i1; ++i)
    run(static_cast<std::size_t>(i) * g.w + j0, static_cast<std::size_t>(i + dy) * g.w + j0 + dx, len);
}

}  // namespace

template <class T>
Tensor<T> conv2d(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias) {
  const auto& xs = x.shape();
  const auto& ws = weight.shape();
  if (ws.c != xs.c)
    throw DimensionError("conv2d: weight expects " + std::to_string(ws.c) + " input channels, got " +
                         std::to_string(xs.c));
  if (ws.h != ws.w || ws.h % 2 == 0) throw DimensionError("conv2d: kernel must be square and odd");
  if (bias.shape() != Shape{1, ws.n, 1, 1}) throw DimensionError("conv2d: bias shape " + bias.shape().str());

  const ConvGeom g{xs.n, xs.c, ws.n, xs.h, xs.w, ws.h, ws.h / 2};
  const std::size_t plane = xs.plane();
  const Shape out_shape{xs.n, g.cout, xs.h, xs.w};
  auto y = buffer<T>(out_shape.size());

  const T* xv = x.values().data();
  const T* wv = weight.values().data();
  const T* bv = bias.values().data();
  for (int n = 0; n < g.n; ++n) {
    for (int o = 0; o < g.cout; ++o) {
      T* yp = y.data() + (static_cast<std::size_t>(n) * g.cout + o) * plane;
      std::fill(yp, yp + plane, bv[o]);
      for (int c = 0; c < g.cin; ++c) {
        const T* xp = xv + (static_cast<std::size_t>(n) * g.cin + c) * plane;
        const T* wk = wv + (static_cast<std::size_t>(o) * g.cin + c) * g.k * g.k;
        for (int ky = 0; ky < g.k; ++ky)
          for (int kx = 0; kx < g.k; ++kx) {
            const T a = wk[ky * g.k + kx];
            if (a == T(0)) continue;
            for_tap_runs(g, ky, kx, [&](std::size_t yo, std::size_t xo, std::size_t len) {
              simd::axpy(a, xp + xo, yp + yo, len);
            });
          }
      }
    }
  }

  auto xn = x.node_ptr(), wn = weight.node_ptr(), bn = bias.node_ptr();
  return tape.record(out_shape, std::move(y), {x, weight, bias}, [=](Node<T>& self) {
    const T* gy = self.grad.data();
    if (bn->requires_grad) {
      auto& gb = bn->ensure_grad();
      for (int n = 0; n < g.n; ++n)
        for (int o = 0; o < g.cout; ++o) {
          const T* gp = gy + (static_cast<std::size_t>(n) * g.cout + o) * plane;
          gb[o] += std::accumulate(gp, gp + plane, T(0));
        }
    }
    if (wn->requires_grad) {
      auto& gw = wn->ensure_grad();
      const T* xv2 = xn->value.data();
      for (int n = 0; n < g.n; ++n)
        for (int o = 0; o < g.cout; ++o) {
          const T* gp = gy + (static_cast<std::size_t>(n) * g.cout + o) * plane;
          for (int c = 0; c < g.cin; ++c) {
            const T* xp = xv2 + (static_cast<std::size_t>(n) * g.cin + c) * plane;
            T* gk = gw.data() + (static_cast<std::size_t>(o) * g.cin + c) * g.k * g.k;
            for (int ky = 0; ky < g.k; ++ky)
              for (int kx = 0; kx < g.k; ++kx) {
                T acc = 0;
                for_tap_runs(g, ky, kx, [&](std::size_t yo, std::size_t xo, std::size_t len) {
                  acc += simd::dot(xp + xo, gp + yo, len);
                });
                gk[ky * g.k + kx] += acc;
              }
          }
        }
    }
    if (xn->requires_grad) {
      auto& gx = xn->ensure_grad();
      const T* wv2 = wn->value.data();
      for (int n = 0; n < g.n; ++n)
        for (int o = 0; o < g.cout; ++o) {
          const T* gp = gy + (static_cast<std::size_t>(n) * g.cout + o) * plane;
          for (int c = 0; c < g.cin; ++c) {
            T* gxp = gx.data() + (static_cast<std::size_t>(n) * g.cin + c) * plane;
            const T* wk = wv2 + (static_cast<std::size_t>(o) * g.cin + c) * g.k * g.k;
            for (int ky = 0; ky < g.k; ++ky)
              for (int kx = 0; kx < g.k; ++kx) {
                const T a = wk[ky * g.k + kx];
                if (a == T(0)) continue;
                for_tap_runs(g, ky, kx, [&](std::size_t yo, std::size_t xo, std::size_t len) {
                  simd::axpy(a, gp + yo, gxp + xo, len);
                });
              }
          }
        }
    }
  });
}

// ---- activations -----------------------------------------------------------

template <class T>
Tensor<T> leaky_relu(Tape<T>& tape, const Tensor<T>& x, T slope) {
  auto y = buffer<T>(x.size());
  simd::leaky_relu(x.values().data(), y.data(), x.size(), slope);
  auto xn = x.node_ptr();
  return tape.record(x.shape(), std::move(y), {x}, [xn, slope](Node<T>& self) {
    auto& gx = xn->ensure_grad();
    const T* xv = xn->value.data();
    for (std::size_t i = 0; i < gx.size(); ++i)
      gx[i] += xv[i] >= T(0) ? self.grad[i] : slope * self.grad[i];
  });
}

template <class T>
Tensor<T> sigmoid(Tape<T>& tape, const Tensor<T>& x) {
  auto y = buffer<T>(x.size());
  const T* xv = x.values().data();
  for (std::size_t i = 0; i < y.size(); ++i) {
    // Split by sign so exp never overflows.
    if (xv[i] >= T(0)) {
      y[i] = T(1) / (T(1) + std::exp(-xv[i]));
    } else {
      const T e = std::exp(xv[i]);
      y[i] = e / (T(1) + e);
    }
  }
  auto xn = x.node_ptr();
  return tape.record(x.shape(), std::move(y), {x}, [xn](Node<T>& self) {
    auto& gx = xn->ensure_grad();
    for (std::size_t i = 0; i < gx.size(); ++i) {
      const T s = self.value[i];
      gx[i] += self.grad[i] * s * (T(1) - s);
    }
  });
}

template <class T>
Tensor<T> cos(Tape<T>& tape, const Tensor<T>& x) {
  auto y = buffer<T>(x.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = std::cos(x.values()[i]);
  auto xn = x.node_ptr();
  return tape.record(x.shape(), std::move(y), {x}, [xn](Node<T>& self) {
    auto& gx = xn->ensure_grad();
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] -= self.grad[i] * std::sin(xn->value[i]);
  });
}

template <class T>
Tensor<T> sin(Tape<T>& tape, const Tensor<T>& x) {
  auto y = buffer<T>(x.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = std::sin(x.values()[i]);
  auto xn = x.node_ptr();
  return tape.record(x.shape(), std::move(y), {x}, [xn](Node<T>& self) {
    auto& gx = xn->ensure_grad();
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += self.grad[i] * std::cos(xn->value[i]);
  });
}

// ---- GRN -------------------------------------------------------------------

template <class T>
Tensor<T> grn(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps) {
  const auto s = x.shape();
  const Shape chan{1, s.c, 1, 1};
  if (gamma.shape() != chan || beta.shape() != chan)
    throw DimensionError("grn: gamma/beta must have shape " + chan.str());
  const std::size_t plane = s.plane();
  const T* xv = x.values().data();
  const T* gv = gamma.values().data();
  const T* bv = beta.values().data();

  // Per (n, c): norm g and normalized factor nf.
  std::vector<T> norms(static_cast<std::size_t>(s.n) * s.c), factors(norms.size());
  std::vector<T> denoms(s.n);
  for (int n = 0; n < s.n; ++n) {
    T mean = 0;
    for (int c = 0; c < s.c; ++c) {
      const T* xp = xv + (static_cast<std::size_t>(n) * s.c + c) * plane;
      T ss = 0;
      for (std::size_t i = 0; i < plane; ++i) ss += xp[i] * xp[i];
      norms[n * s.c + c] = std::sqrt(ss);
      mean += norms[n * s.c + c];
    }
    mean /= static_cast<T>(s.c);
    denoms[n] = mean + eps;
    for (int c = 0; c < s.c; ++c) factors[n * s.c + c] = norms[n * s.c + c] / denoms[n];
  }

  auto y = buffer<T>(s.size());
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c) {
      const std::size_t off = (static_cast<std::size_t>(n) * s.c + c) * plane;
      const T k = gv[c] * factors[n * s.c + c] + T(1);
      for (std::size_t i = 0; i < plane; ++i) y[off + i] = k * xv[off + i] + bv[c];
    }

  auto xn = x.node_ptr(), gn = gamma.node_ptr(), bn = beta.node_ptr();
  return tape.record(s, std::move(y), {x, gamma, beta},
                     [=, norms = std::move(norms), factors = std::move(factors),
                      denoms = std::move(denoms)](Node<T>& self) {
    const T* gy = self.grad.data();
    const T* xv2 = xn->value.data();
    const T* gam = gn->value.data();
    // sg[c] = sum_{hw} grad * x per (n, c)
    std::vector<T> sg(static_cast<std::size_t>(s.n) * s.c);
    for (std::size_t nc = 0; nc < sg.size(); ++nc)
      sg[nc] = simd::dot(gy + nc * plane, xv2 + nc * plane, plane);

    if (gn->requires_grad) {
      auto& gg = gn->ensure_grad();
      for (int n = 0; n < s.n; ++n)
        for (int c = 0; c < s.c; ++c) gg[c] += sg[n * s.c + c] * factors[n * s.c + c];
    }
    if (bn->requires_grad) {
      auto& gb = bn->ensure_grad();
      for (int n = 0; n < s.n; ++n)
        for (int c = 0; c < s.c; ++c) {
          const T* gp = gy + (static_cast<std::size_t>(n) * s.c + c) * plane;
          gb[c] += std::accumulate(gp, gp + plane, T(0));
        }
    }
    if (xn->requires_grad) {
      auto& gx = xn->ensure_grad();
      for (int n = 0; n < s.n; ++n) {
        const T d = denoms[n];
        // dL/dnf_c = gamma_c * sg_c; nf_c = g_c / d, d = mean(g) + eps
        T cross = 0;  // sum_c dL/dnf_c * g_c
        for (int c = 0; c < s.c; ++c) cross += gam[c] * sg[n * s.c + c] * norms[n * s.c + c];
        for (int c = 0; c < s.c; ++c) {
          const std::size_t nc = static_cast<std::size_t>(n) * s.c + c;
          const T dnf = gam[c] * sg[nc];
          const T dg = dnf / d - cross / (d * d * static_cast<T>(s.c));
          const T direct = gam[c] * factors[nc] + T(1);
          const T via_norm = norms[nc] > T(0) ? dg / norms[nc] : T(0);
          const T* gp = gy + nc * plane;
          const T* xp = xv2 + nc * plane;
          T* gxp = gx.data() + nc * plane;
          for (std::size_t i = 0; i < plane; ++i) gxp[i] += direct * gp[i] + via_norm * xp[i];
        }
      }
    }
  });
}

// ---- elementwise -----------------------------------------------------------

template <class T>
Tensor<T> add(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& y) {
  const bool bc = broadcast_channel(x, y, "add");
  const auto s = x.shape();
  const std::size_t plane = s.plane();
  auto out = buffer<T>(s.size());
  const T* xv = x.values().data();
  const T* yv = y.values().data();
  if (!bc) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] + yv[i];
  } else {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] + yv[(i / plane) % s.c];
  }
  auto xn = x.node_ptr(), yn = y.node_ptr();
  return tape.record(s, std::move(out), {x, y}, [=](Node<T>& self) {
    if (xn->requires_grad) {
      auto& gx = xn->ensure_grad();
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += self.grad[i];
    }
    if (yn->requires_grad) {
      auto& gy = yn->ensure_grad();
      if (!bc) {
        for (std::size_t i = 0; i < gy.size(); ++i) gy[i] += self.grad[i];
      } else {
        for (std::size_t i = 0; i < self.grad.size(); ++i) gy[(i / plane) % s.c] += self.grad[i];
      }
    }
  });
}

template <class T>
Tensor<T> mul(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& y) {
  const bool bc = broadcast_channel(x, y, "mul");
  const auto s = x.shape();
  const std::size_t plane = s.plane();
  auto out = buffer<T>(s.size());
  const T* xv = x.values().data();
  const T* yv = y.values().data();
  auto yi = [&](std::size_t i) { return bc ? (i / plane) % s.c : i; };
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] * yv[yi(i)];
  auto xn = x.node_ptr(), yn = y.node_ptr();
  return tape.record(s, std::move(out), {x, y}, [=](Node<T>& self) {
    auto idx = [&](std::size_t i) { return bc ? (i / plane) % s.c : i; };
    if (xn->requires_grad) {
      auto& gx = xn->ensure_grad();
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += self.grad[i] * yn->value[idx(i)];
    }
    if (yn->requires_grad) {
      auto& gy = yn->ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) gy[idx(i)] += self.grad[i] * xn->value[i];
    }
  });
}

template <class T>
Tensor<T> scale(Tape<T>& tape, const Tensor<T>& x, T factor) {
  auto out = buffer<T>(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = factor * x.values()[i];
  auto xn = x.node_ptr();
  return tape.record(x.shape(), std::move(out), {x}, [xn, factor](Node<T>& self) {
    auto& gx = xn->ensure_grad();
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += factor * self.grad[i];
  });
}

template <class T>
Tensor<T> mul_const(Tape<T>& tape, const Tensor<T>& x, std::span<const T> c) {
  if (c.size() != x.size()) throw DimensionError("mul_const: size mismatch");
  auto out = buffer<T>(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.values()[i] * c[i];
  std::vector<T> cc(c.begin(), c.end());
  auto xn = x.node_ptr();
  return tape.record(x.shape(), std::move(out), {x}, [xn, cc = std::move(cc)](Node<T>& self) {
    auto& gx = xn->ensure_grad();
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += cc[i] * self.grad[i];
  });
}

// ---- rearrangements --------------------------------------------------------

namespace {

// Index map for pixel shuffle: for every output element, the input element.
// Shared by forward and the inverse-permutation backward.
template <class F>
void shuffle_map(const Shape& in, int r, F&& f) {
  const int oc = in.c / (r * r);
  const int oh = in.h * r, ow = in.w * r;
  for (int n = 0; n < in.n; ++n)
    for (int c = 0; c < oc; ++c)
      for (int a = 0; a < r; ++a)
        for (int b = 0; b < r; ++b) {
          const int ic = c * r * r + a * r + b;
          for (int i = 0; i < in.h; ++i)
            for (int j = 0; j < in.w; ++j) {
              const std::size_t src = ((static_cast<std::size_t>(n) * in.c + ic) * in.h + i) * in.w + j;
              const std::size_t dst =
                  ((static_cast<std::size_t>(n) * oc + c) * oh + (i * r + a)) * ow + (j * r + b);
              f(src, dst);
            }
        }
}

}  // namespace

template <class T>
Tensor<T> pixel_shuffle_t(Tape<T>& tape, const Tensor<T>& x, int r) {
  const auto s = x.shape();
  if (r < 1 || s.c % (r * r) != 0)
    throw DimensionError("pixel_shuffle_t: channels " + std::to_string(s.c) +
                         " not divisible by r^2 = " + std::to_string(r * r));
  const Shape out_shape{s.n, s.c / (r * r), s.h * r, s.w * r};
  auto out = buffer<T>(s.size());
  const T* xv = x.values().data();
  shuffle_map(s, r, [&](std::size_t src, std::size_t dst) { out[dst] = xv[src]; });
  auto xn = x.node_ptr();
  return tape.record(out_shape, std::move(out), {x}, [xn, s, r](Node<T>& self) {
    auto& gx = xn->ensure_grad();
    shuffle_map(s, r, [&](std::size_t src, std::size_t dst) { gx[src] += self.grad[dst]; });
  });
}

template <class T>
Tensor<T> pixel_unshuffle_t(Tape<T>& tape, const Tensor<T>& x, int r) {
  const auto s = x.shape();
  if (r < 1 || s.h % r != 0 || s.w % r != 0)
    throw DimensionError("pixel_unshuffle_t: spatial " + std::to_string(s.h) + "x" +
                         std::to_string(s.w) + " not divisible by " + std::to_string(r));
  const Shape out_shape{s.n, s.c * r * r, s.h / r, s.w / r};
  auto out = buffer<T>(s.size());
  const T* xv = x.values().data();
  shuffle_map(out_shape, r, [&](std::size_t src, std::size_t dst) { out[src] = xv[dst]; });
  auto xn = x.node_ptr();
  return tape.record(out_shape, std::move(out), {x}, [xn, out_shape, r](Node<T>& self) {
    auto& gx = xn->ensure_grad();
    shuffle_map(out_shape, r, [&](std::size_t src, std::size_t dst) { gx[dst] += self.grad[src]; });
  });
}

template <class T>
Tensor<T> concat_channels(Tape<T>& tape, const std::vector<Tensor<T>>& xs) {
  if (xs.empty()) throw DimensionError("concat_channels: no inputs");
  Shape s = xs.front().shape();
  int total_c = 0;
  for (const auto& x : xs) {
    const auto& xsh = x.shape();
    if (xsh.n != s.n || xsh.h != s.h || xsh.w != s.w)
      throw DimensionError("concat_channels: mismatched " + xsh.str() + " vs " + s.str());
    total_c += xsh.c;
  }
  const Shape out_shape{s.n, total_c, s.h, s.w};
  const std::size_t plane = s.plane();
  auto out = buffer<T>(out_shape.size());
  std::vector<int> offsets;
  int c0 = 0;
  for (const auto& x : xs) {
    offsets.push_back(c0);
    const int xc = x.shape().c;
    for (int n = 0; n < s.n; ++n)
      std::copy_n(x.values().data() + static_cast<std::size_t>(n) * xc * plane, xc * plane,
                  out.data() + (static_cast<std::size_t>(n) * total_c + c0) * plane);
    c0 += xc;
  }
  std::vector<std::shared_ptr<Node<T>>> nodes;
  for (const auto& x : xs) nodes.push_back(x.node_ptr());
  return tape.record(out_shape, std::move(out), xs, [=](Node<T>& self) {
    for (std::size_t k = 0; k < nodes.size(); ++k) {
      if (!nodes[k]->requires_grad) continue;
      auto& gx = nodes[k]->ensure_grad();
      const int xc = nodes[k]->shape.c;
      for (int n = 0; n < s.n; ++n) {
        const T* src = self.grad.data() + (static_cast<std::size_t>(n) * total_c + offsets[k]) * plane;
        T* dst = gx.data() + static_cast<std::size_t>(n) * xc * plane;
        for (std::size_t i = 0; i < xc * plane; ++i) dst[i] += src[i];
      }
    }
  });
}

template <class T>
Tensor<T> select_channels(Tape<T>& tape, const Tensor<T>& x, const std::vector<int>& channels) {
  const auto s = x.shape();
  for (int c : channels)
    if (c < 0 || c >= s.c) throw DimensionError("select_channels: channel out of range");
  if (channels.empty()) throw DimensionError("select_channels: empty selection");
  const Shape out_shape{s.n, static_cast<int>(channels.size()), s.h, s.w};
  const std::size_t plane = s.plane();
  auto out = buffer<T>(out_shape.size());
  for (int n = 0; n < s.n; ++n)
    for (std::size_t k = 0; k < channels.size(); ++k)
      std::copy_n(x.values().data() + (static_cast<std::size_t>(n) * s.c + channels[k]) * plane, plane,
                  out.data() + (static_cast<std::size_t>(n) * channels.size() + k) * plane);
  auto xn = x.node_ptr();
  return tape.record(out_shape, std::move(out), {x}, [=](Node<T>& self) {
    auto& gx = xn->ensure_grad();
    for (int n = 0; n < s.n; ++n)
      for (std::size_t k = 0; k < channels.size(); ++k) {
        const T* src = self.grad.data() + (static_cast<std::size_t>(n) * channels.size() + k) * plane;
        T* dst = gx.data() + (static_cast<std::size_t>(n) * s.c + channels[k]) * plane;
        for (std::size_t i = 0; i < plane; ++i) dst[i] += src[i];
      }
  });
}

// ---- reductions and losses -------------------------------------------------

template <class T>
Tensor<T> sum(Tape<T>& tape, const Tensor<T>& x) {
  double acc = 0;
  for (T v : x.values()) acc += v;
  auto out = buffer<T>(1);
  out[0] = static_cast<T>(acc);
  auto xn = x.node_ptr();
  return tape.record(Shape{}, std::move(out), {x}, [xn](Node<T>& self) {
    auto& gx = xn->ensure_grad();
    for (auto& g : gx) g += self.grad[0];
  });
}

template <class T>
Tensor<T> mse_loss(Tape<T>& tape, const Tensor<T>& x, std::span<const T> target) {
  if (target.size() != x.size()) throw DimensionError("mse_loss: size mismatch");
  double acc = 0;
  for (std::size_t i = 0; i < target.size(); ++i) {
    const double d = static_cast<double>(x.values()[i]) - target[i];
    acc += d * d;
  }
  const double n = static_cast<double>(target.size());
  auto out = buffer<T>(1);
  out[0] = static_cast<T>(acc / n);
  std::vector<T> tgt(target.begin(), target.end());
  auto xn = x.node_ptr();
  return tape.record(Shape{}, std::move(out), {x}, [xn, tgt = std::move(tgt), n](Node<T>& self) {
    auto& gx = xn->ensure_grad();
    const T k = static_cast<T>(2.0 / n) * self.grad[0];
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += k * (xn->value[i] - tgt[i]);
  });
}

template <class T>
Tensor<T> l2_scaled_loss(Tape<T>& tape, const Tensor<T>& x, std::span<const T> target) {
  if (target.size() != x.size()) throw DimensionError("l2_scaled_loss: size mismatch");
  double xt = 0, xx = 0;
  for (std::size_t i = 0; i < target.size(); ++i) {
    xt += static_cast<double>(x.values()[i]) * target[i];
    xx += static_cast<double>(x.values()[i]) * x.values()[i];
  }
  const double s = xx > 0 ? xt / xx : 0.0;
  double acc = 0;
  for (std::size_t i = 0; i < target.size(); ++i) {
    const double d = s * x.values()[i] - target[i];
    acc += d * d;
  }
  const double n = static_cast<double>(target.size());
  auto out = buffer<T>(1);
  out[0] = static_cast<T>(acc / n);
  std::vector<T> tgt(target.begin(), target.end());
  auto xn = x.node_ptr();
  return tape.record(Shape{}, std::move(out), {x}, [xn, tgt = std::move(tgt), n, s](Node<T>& self) {
    auto& gx = xn->ensure_grad();
    const double k = 2.0 * s / n * self.grad[0];
    for (std::size_t i = 0; i < gx.size(); ++i)
      gx[i] += static_cast<T>(k * (s * xn->value[i] - tgt[i]));
  });
}

// ---- complex field ops -----------------------------------------------------

template <class T>
ComplexPair<T> propagate(Tape<T>& tape, const ComplexPair<T>& field, const TransferFunction<T>& tf) {
  const auto s = field.re.shape();
  if (field.im.shape() != s) throw DimensionError("propagate: real/imag shapes differ");
  if (s.h != tf.field_height || s.w != tf.field_width)
    throw ConfigError("propagate: tensor grid " + std::to_string(s.h) + "x" + std::to_string(s.w) +
                      " does not match transfer function");
  const std::size_t plane = s.plane();
  const std::size_t planes = static_cast<std::size_t>(s.n) * s.c;

  // Applies the operator (or its adjoint) plane by plane on split storage.
  auto apply = [&tf, s, plane, planes](const T* re, const T* im, T* out_re, T* out_im, bool adjoint) {
    for (std::size_t p = 0; p < planes; ++p) {
      Grid<std::complex<T>> g(s.h, s.w);
      for (std::size_t i = 0; i < plane; ++i) g[i] = {re[p * plane + i], im[p * plane + i]};
      auto r = apply_transfer(g, tf, adjoint);
      for (std::size_t i = 0; i < plane; ++i) {
        out_re[p * plane + i] += r[i].real();
        out_im[p * plane + i] += r[i].imag();
      }
    }
  };

  auto ore = buffer<T>(s.size()), oim = buffer<T>(s.size());
  apply(field.re.values().data(), field.im.values().data(), ore.data(), oim.data(), false);

  auto out_re = tape.record(s, std::move(ore), {field.re, field.im}, nullptr);
  auto ren = out_re.node_ptr();
  auto rin = field.re.node_ptr(), iin = field.im.node_ptr();
  // The imaginary output node is recorded last, so it is visited first in
  // backward, after every consumer of either output: it pushes both.
  auto out_im = tape.record(s, std::move(oim), {field.re, field.im, out_re},
                            [=](Node<T>& self) {
    const std::size_t total = s.size();
    std::vector<T> zeros;
    const T* g_re = ren->grad.data();
    if (ren->grad.empty()) {
      zeros.assign(total, T(0));
      g_re = zeros.data();
    }
    auto gre = buffer<T>(total), gim = buffer<T>(total);
    apply(g_re, self.grad.data(), gre.data(), gim.data(), true);
    if (rin->requires_grad) {
      auto& gx = rin->ensure_grad();
      for (std::size_t i = 0; i < total; ++i) gx[i] += gre[i];
    }
    if (iin->requires_grad) {
      auto& gx = iin->ensure_grad();
      for (std::size_t i = 0; i < total; ++i) gx[i] += gim[i];
    }
    ren->grad.clear();
  });
  // If only the real output receives a gradient, the imaginary node must
  // still run; seeding an empty gradient guarantees the visit.
  if (out_im.requires_grad()) out_im.node().ensure_grad();
  return {out_re, out_im};
}

template <class T>
Tensor<T> complex_abs(Tape<T>& tape, const ComplexPair<T>& field) {
  const auto s = field.re.shape();
  if (field.im.shape() != s) throw DimensionError("complex_abs: real/imag shapes differ");
  auto out = buffer<T>(s.size());
  const T* re = field.re.values().data();
  const T* im = field.im.values().data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::hypot(re[i], im[i]);
  auto rn = field.re.node_ptr(), in = field.im.node_ptr();
  return tape.record(s, std::move(out), {field.re, field.im}, [rn, in](Node<T>& self) {
    const std::size_t n = self.value.size();
    if (rn->requires_grad) {
      auto& g = rn->ensure_grad();
      for (std::size_t i = 0; i < n; ++i)
        if (self.value[i] > T(0)) g[i] += self.grad[i] * rn->value[i] / self.value[i];
    }
    if (in->requires_grad) {
      auto& g = in->ensure_grad();
      for (std::size_t i = 0; i < n; ++i)
        if (self.value[i] > T(0)) g[i] += self.grad[i] * in->value[i] / self.value[i];
    }
  });
}

#define HOLOTILE_INSTANTIATE(T)                                                                  \
  template struct Node<T>;                                                                       \
  template class Tensor<T>;                                                                      \
  template class Tape<T>;                                                                        \
  template Tensor<T> conv2d(Tape<T>&, const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);     \
  template Tensor<T> leaky_relu(Tape<T>&, const Tensor<T>&, T);                                  \
  template Tensor<T> sigmoid(Tape<T>&, const Tensor<T>&);                                        \
  template Tensor<T> grn(Tape<T>&, const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, T);     \
  template Tensor<T> add(Tape<T>&, const Tensor<T>&, const Tensor<T>&);                          \
  template Tensor<T> mul(Tape<T>&, const Tensor<T>&, const Tensor<T>&);                          \
  template Tensor<T> scale(Tape<T>&, const Tensor<T>&, T);                                       \
  template Tensor<T> mul_const(Tape<T>&, const Tensor<T>&, std::span<const T>);                  \
  template Tensor<T> pixel_shuffle_t(Tape<T>&, const Tensor<T>&, int);                           \
  template Tensor<T> pixel_unshuffle_t(Tape<T>&, const Tensor<T>&, int);                         \
  template Tensor<T> concat_channels(Tape<T>&, const std::vector<Tensor<T>>&);                   \
  template Tensor<T> select_channels(Tape<T>&, const Tensor<T>&, const std::vector<int>&);       \
  template Tensor<T> cos(Tape<T>&, const Tensor<T>&);                                            \
  template Tensor<T> sin(Tape<T>&, const Tensor<T>&);                                            \
  template Tensor<T> sum(Tape<T>&, const Tensor<T>&);                                            \
  template Tensor<T> mse_loss(Tape<T>&, const Tensor<T>&, std::span<const T>);                   \
  template Tensor<T> l2_scaled_loss(Tape<T>&, const Tensor<T>&, std::span<const T>);             \
  template ComplexPair<T> propagate(Tape<T>&, const ComplexPair<T>&, const TransferFunction<T>&); \
  template Tensor<T> complex_abs(Tape<T>&, const ComplexPair<T>&);

HOLOTILE_INSTANTIATE(float)
HOLOTILE_INSTANTIATE(double)
#undef HOLOTILE_INSTANTIATE

}  // namespace holotile::ad
