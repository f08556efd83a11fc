#pragma once

// Minimal reverse-mode differentiation over NCHW tensors.
//
// A Var is a shared handle to a graph node. Ops build new nodes only when at
// least one input requires a gradient; otherwise they return plain constants,
// so inference and frozen sub-networks cost no graph memory.

#include <functional>
#include <memory>
#include <vector>

#include "mrsr/kernels.hpp"
#include "mrsr/tensor.hpp"

namespace mrsr {

template <typename T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward_fn;

  bool is_leaf() const { return !backward_fn; }
  // Zero-initialised on first use.
  Tensor<T>& grad_buffer() {
    if (grad.size() != value.size()) grad = Tensor<T>(value.shape());
    return grad;
  }
};

template <typename T>
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

  static Var constant(Tensor<T> value) {
    auto n = std::make_shared<Node<T>>();
    n->value = std::move(value);
    return Var(std::move(n));
  }
  static Var parameter(Tensor<T> value) {
    Var v = constant(std::move(value));
    v.node_->requires_grad = true;
    return v;
  }

  bool defined() const { return static_cast<bool>(node_); }
  const Tensor<T>& value() const { return node_->value; }
  Tensor<T>& mutable_value() { return node_->value; }
  const Shape4& shape() const { return node_->value.shape(); }

  bool requires_grad() const { return node_ && node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }

  bool has_grad() const { return node_->grad.size() == node_->value.size(); }
  // Gradient tensor; zeros if nothing has been accumulated yet.
  const Tensor<T>& grad() const { return node_->grad_buffer(); }
  Tensor<T>& mutable_grad() { return node_->grad_buffer(); }
  void zero_grad() { node_->grad = Tensor<T>(); }

  Var detach() const { return constant(node_->value); }

  const std::shared_ptr<Node<T>>& node() const { return node_; }

 private:
  std::shared_ptr<Node<T>> node_;
};

// While alive on the current thread, ops record no graph (inference mode).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

  static bool grad_enabled();

 private:
  bool previous_;
};

// Seeds d(root)/d(root) = 1 and propagates to every reachable leaf that
// requires a gradient. Leaf gradients accumulate across calls.
template <typename T>
void backward(const Var<T>& root);

// Power-iteration state for one spectrally normalised weight.
template <typename T>
struct SpectralState {
  std::vector<T> u;  // left singular vector estimate, length = out_channels
  std::vector<T> v;  // right singular vector estimate, length = in*k*k
};

namespace ops {

// bias may be an undefined Var.
template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias, const ConvGeometry& g);

template <typename T>
Var<T> leaky_relu(const Var<T>& x, T slope);

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b);

template <typename T>
Var<T> scale(const Var<T>& a, T factor);

template <typename T>
Var<T> concat_channels(const std::vector<Var<T>>& parts);

template <typename T>
Var<T> upsample_nearest2(const Var<T>& x);

// x2 bilinear with the half-pixel convention, edge-clamped source indices.
template <typename T>
Var<T> upsample_bilinear2(const Var<T>& x);

template <typename T>
Var<T> max_pool2(const Var<T>& x);

// Maps a 1-channel input to means.size() channels, (x - mean[c]) / std[c].
// A multi-channel input must already have means.size() channels.
template <typename T>
Var<T> channel_normalize(const Var<T>& x, const std::vector<T>& means, const std::vector<T>& stds);

// Scalar mean of |a - b|.
template <typename T>
Var<T> l1_mean(const Var<T>& a, const Var<T>& b);

template <typename T>
Var<T> mean(const Var<T>& x);

// x - s for a scalar Var s, broadcast over every element.
template <typename T>
Var<T> sub_scalar(const Var<T>& x, const Var<T>& s);

// Mean binary cross entropy of sigmoid(logits) against a constant target,
// evaluated in the overflow-free logit form.
template <typename T>
Var<T> bce_with_logits_mean(const Var<T>& logits, T target);

// weight / sigma where sigma is the power-iteration estimate of the top
// singular value of weight viewed as (out, in*k*k). With update = true one
// power iteration refreshes state first. u and v are treated as constants
// for differentiation.
template <typename T>
Var<T> spectral_normalize(const Var<T>& weight, SpectralState<T>& state, bool update);

}  // namespace ops

// sigma = u^T W v for the current state (no update).
template <typename T>
T spectral_sigma(const Tensor<T>& weight, const SpectralState<T>& state);

// Runs `iterations` power iterations on state in place.
template <typename T>
void power_iterate(const Tensor<T>& weight, SpectralState<T>& state, int iterations);

}  // namespace mrsr
