#pragma once

// Minimal reverse-mode autodiff over NCHW real tensors.
//
// A Tape records every operation whose inputs require gradients, in creation
// order; backward() walks it in reverse, so each node is visited once and
// after all of its consumers. Leaf tensors (parameters, inputs) are not on any
// tape and may be shared read-only by several tapes.

#include <complex>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "holotile/errors.hpp"
#include "holotile/memory_ledger.hpp"
#include "holotile/propagation.hpp"

namespace holotile::ad {

struct Shape {
  int n = 1, c = 1, h = 1, w = 1;

  std::size_t size() const noexcept {
    return static_cast<std::size_t>(n) * c * h * w;
  }
  std::size_t plane() const noexcept { return static_cast<std::size_t>(h) * w; }
  friend bool operator==(const Shape&, const Shape&) = default;
  std::string str() const;
};

template <class T>
struct Node {
  Shape shape;
  metrics::TrackedVector<T> value;
  metrics::TrackedVector<T> grad;  // empty until a gradient reaches the node
  bool requires_grad = false;
  bool on_tape = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;  // pushes this->grad into parents

  /// Zero-initializes grad if absent; returns it.
  metrics::TrackedVector<T>& ensure_grad();
};

template <class T>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor filled(Shape shape, T value, bool requires_grad = false);
  static Tensor from_values(Shape shape, std::span<const T> values, bool requires_grad = false);

  bool defined() const noexcept { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  std::size_t size() const { return node_->shape.size(); }
  bool requires_grad() const { return node_->requires_grad; }

  std::span<const T> values() const { return {node_->value.data(), node_->value.size()}; }
  /// Direct write access, for parameter updates and initialization only.
  std::span<T> mutable_values() { return {node_->value.data(), node_->value.size()}; }
  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const T> grad() const { return {node_->grad.data(), node_->grad.size()}; }
  void zero_grad() { node_->grad.clear(); node_->grad.shrink_to_fit(); }

  /// Value of a single-element tensor.
  T item() const;
  T at(int n, int c, int h, int w) const;

  Node<T>& node() const { return *node_; }
  const std::shared_ptr<Node<T>>& node_ptr() const { return node_; }

 private:
  std::shared_ptr<Node<T>> node_;
};

template <class T>
class Tape {
 public:
  /// A non-recording tape evaluates ops without keeping any graph; use it
  /// for inference.
  explicit Tape(bool recording = true) : recording_(recording) {}

  bool recording() const noexcept { return recording_; }

  /// Creates the output of an op. The node joins the tape only when some
  /// parent requires gradients; otherwise it is a constant and `backward_fn`
  /// is discarded.
  Tensor<T> record(Shape shape, metrics::TrackedVector<T> value,
                   std::vector<Tensor<T>> parents, std::function<void(Node<T>&)> backward_fn);

  /// d(loss)/d(p) for every reachable p that requires gradients. Gradients
  /// of intermediate nodes are released as soon as they have been pushed to
  /// their parents; leaf gradients accumulate across calls.
  void backward(const Tensor<T>& loss);

  std::size_t size() const noexcept { return nodes_.size(); }
  void clear() { nodes_.clear(); }

 private:
  std::vector<std::shared_ptr<Node<T>>> nodes_;
  bool recording_ = true;
};

// ---- operations -----------------------------------------------------------
// Broadcasting: binary ops accept identical shapes, or a right operand of
// shape (1, C, 1, 1) broadcast per channel.

template <class T>
Tensor<T> conv2d(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias);

template <class T>
Tensor<T> leaky_relu(Tape<T>& tape, const Tensor<T>& x, T slope = T(0.1));

template <class T>
Tensor<T> sigmoid(Tape<T>& tape, const Tensor<T>& x);

/// Global response normalization with residual:
///   g_c = ||x_c||_2 over (H, W);  n_c = g_c / (mean_c g + eps)
///   out = gamma_c * (x * n_c) + beta_c + x
template <class T>
Tensor<T> grn(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
              T eps = T(1e-6));

template <class T>
Tensor<T> add(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& y);
template <class T>
Tensor<T> mul(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& y);
template <class T>
Tensor<T> scale(Tape<T>& tape, const Tensor<T>& x, T factor);
template <class T>
inline Tensor<T> residual_add(Tape<T>& tape, const Tensor<T>& branch, const Tensor<T>& skip) {
  return add(tape, branch, skip);
}

/// (N, C r^2, H, W) -> (N, C, H r, W r), channel c r^2 + a r + b -> offset (a, b).
template <class T>
Tensor<T> pixel_shuffle_t(Tape<T>& tape, const Tensor<T>& x, int r);
/// Inverse of pixel_shuffle_t.
template <class T>
Tensor<T> pixel_unshuffle_t(Tape<T>& tape, const Tensor<T>& x, int r);

template <class T>
Tensor<T> concat_channels(Tape<T>& tape, const std::vector<Tensor<T>>& xs);
template <class T>
Tensor<T> select_channels(Tape<T>& tape, const Tensor<T>& x, const std::vector<int>& channels);

template <class T>
Tensor<T> cos(Tape<T>& tape, const Tensor<T>& x);
template <class T>
Tensor<T> sin(Tape<T>& tape, const Tensor<T>& x);

template <class T>
Tensor<T> sum(Tape<T>& tape, const Tensor<T>& x);

/// Elementwise x * c with a constant (non-differentiable) multiplier of the same shape.
template <class T>
Tensor<T> mul_const(Tape<T>& tape, const Tensor<T>& x, std::span<const T> c);

/// mean((x - target)^2) against a constant target.
template <class T>
Tensor<T> mse_loss(Tape<T>& tape, const Tensor<T>& x, std::span<const T> target);

/// mean((s x - target)^2) with s = <x, target> / <x, x> (0 when x == 0).
/// Because s is optimal, d/ds vanishes and the VJP is 2 s (s x - target) / N.
template <class T>
Tensor<T> l2_scaled_loss(Tape<T>& tape, const Tensor<T>& x, std::span<const T> target);

/// Complex field stored as a (real, imag) pair of (1, 1, H, W) tensors.
template <class T>
struct ComplexPair {
  Tensor<T> re;
  Tensor<T> im;
};

/// Band-limited angular-spectrum propagation of a complex pair, plane by
/// plane. The VJP of a complex-linear map A on (re, im) is A^H applied to
/// (grad_re + j grad_im). `tf` must outlive the tape's backward pass.
template <class T>
ComplexPair<T> propagate(Tape<T>& tape, const ComplexPair<T>& field, const TransferFunction<T>& tf);

/// |re + j im|; the subgradient at 0 is taken as 0.
template <class T>
Tensor<T> complex_abs(Tape<T>& tape, const ComplexPair<T>& field);

}  // namespace holotile::ad
