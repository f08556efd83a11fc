#include "mrsr/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_set>

namespace mrsr {

namespace {

thread_local bool g_grad_enabled = true;

template <typename T>
Var<T> make_result(Tensor<T> value, std::vector<Var<T>> inputs,
                   std::function<void(Node<T>&)> fn) {
  auto node = std::make_shared<Node<T>>();
  node->value = std::move(value);
  const bool any = g_grad_enabled && std::any_of(inputs.begin(), inputs.end(),
                               [](const Var<T>& v) { return v.requires_grad(); });
  if (any) {
    node->requires_grad = true;
    for (auto& v : inputs) node->inputs.push_back(v.node());
    node->backward_fn = std::move(fn);
  }
  return Var<T>(std::move(node));
}

template <typename T>
void require_same_shape(const Var<T>& a, const Var<T>& b, const char* op) {
  if (!(a.shape() == b.shape())) {
    throw ShapeError(std::string(op) + ": shape mismatch " + a.shape().str() + " vs " +
                     b.shape().str());
  }
}

template <typename T>
void require_scalar(const Var<T>& s, const char* op) {
  if (s.value().size() != 1) throw ShapeError(std::string(op) + ": expected a scalar");
}

// Source taps for x2 bilinear upsampling of one axis.
struct LinearTap {
  int i0;
  int i1;
  double w0;
  double w1;
};

std::vector<LinearTap> bilinear2_taps(int in) {
  std::vector<LinearTap> taps(static_cast<std::size_t>(in) * 2);
  for (int o = 0; o < in * 2; ++o) {
    double src = (o + 0.5) / 2.0 - 0.5;
    if (src < 0) src = 0;
    const int i0 = static_cast<int>(src);
    const int i1 = i0 < in - 1 ? i0 + 1 : i0;
    const double l = src - i0;
    taps[o] = {i0, i1, 1.0 - l, l};
  }
  return taps;
}

}  // namespace

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool NoGradGuard::grad_enabled() { return g_grad_enabled; }

template <typename T>
void backward(const Var<T>& root) {
  if (!root.defined()) throw Error("backward on undefined Var");
  if (root.value().size() != 1) throw ShapeError("backward requires a scalar root");
  if (!root.requires_grad()) return;

  // Iterative post-order DFS gives a topological order.
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> seen;
  std::vector<std::pair<Node<T>*, std::size_t>> stack;
  stack.emplace_back(root.node().get(), 0);
  seen.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node<T>* child = node->inputs[next++].get();
      if (child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  Node<T>* r = root.node().get();
  r->grad_buffer().data()[0] += T{1};
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* node = *it;
    if (node->is_leaf()) continue;
    if (node->grad.size() != node->value.size()) continue;  // no gradient reached it
    node->backward_fn(*node);
    node->grad = Tensor<T>();  // intermediate gradients are not needed afterwards
  }
}

template <typename T>
T spectral_sigma(const Tensor<T>& weight, const SpectralState<T>& state) {
  const int rows = weight.n();
  const int cols = static_cast<int>(weight.size() / rows);
  std::vector<T> wv(rows, T{0});
  kernels::gemm<T>(false, false, rows, 1, cols, T{1}, weight.data(), cols, state.v.data(), 1, T{0},
                   wv.data(), 1);
  return std::inner_product(state.u.begin(), state.u.end(), wv.begin(), T{0});
}

template <typename T>
void power_iterate(const Tensor<T>& weight, SpectralState<T>& state, int iterations) {
  const int rows = weight.n();
  const int cols = static_cast<int>(weight.size() / rows);
  auto normalize = [](std::vector<T>& x) {
    T s{0};
    for (T e : x) s += e * e;
    const T inv = T{1} / std::max(std::sqrt(s), T(1e-12));
    for (T& e : x) e *= inv;
  };
  state.v.resize(cols);
  for (int it = 0; it < iterations; ++it) {
    kernels::gemm<T>(true, false, cols, 1, rows, T{1}, weight.data(), cols, state.u.data(), 1,
                     T{0}, state.v.data(), 1);
    normalize(state.v);
    kernels::gemm<T>(false, false, rows, 1, cols, T{1}, weight.data(), cols, state.v.data(), 1,
                     T{0}, state.u.data(), 1);
    normalize(state.u);
  }
}

namespace ops {

template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias, const ConvGeometry& g) {
  const T* b = bias.defined() ? bias.value().data() : nullptr;
  Tensor<T> y = kernels::parallel::conv2d_forward(x.value(), weight.value(), b, g);
  std::vector<Var<T>> inputs{x, weight};
  if (bias.defined()) inputs.push_back(bias);
  return make_result<T>(std::move(y), inputs, [g](Node<T>& self) {
    Node<T>& xin = *self.inputs[0];
    Node<T>& w = *self.inputs[1];
    Node<T>* bn = self.inputs.size() > 2 ? self.inputs[2].get() : nullptr;
    if (xin.requires_grad) {
      kernels::parallel::conv2d_backward_input(self.grad, w.value, g, xin.grad_buffer());
    }
    const bool want_bias = bn != nullptr && bn->requires_grad;
    if (w.requires_grad) {
      kernels::parallel::conv2d_backward_weight(xin.value, self.grad, g, w.grad_buffer(),
                                                want_bias ? bn->grad_buffer().data() : nullptr);
    } else if (want_bias) {
      T* gb = bn->grad_buffer().data();
      const std::size_t plane = self.grad.shape().plane();
      for (int n = 0; n < self.grad.n(); ++n)
        for (int c = 0; c < self.grad.c(); ++c) {
          const T* p = self.grad.plane(n, c);
          gb[c] = std::accumulate(p, p + plane, gb[c]);
        }
    }
  });
}

template <typename T>
Var<T> leaky_relu(const Var<T>& x, T slope) {
  const Tensor<T>& xv = x.value();
  Tensor<T> y(xv.shape());
  const std::size_t n = xv.size();
  const T* src = xv.data();
  T* dst = y.data();
#pragma omp parallel for schedule(static) if (n > 65536)
  for (std::size_t i = 0; i < n; ++i) dst[i] = src[i] > T{0} ? src[i] : src[i] * slope;
  return make_result<T>(std::move(y), {x}, [slope](Node<T>& self) {
    Node<T>& in = *self.inputs[0];
    T* gx = in.grad_buffer().data();
    const T* xs = in.value.data();
    const T* go = self.grad.data();
    const std::size_t count = self.grad.size();
#pragma omp parallel for schedule(static) if (count > 65536)
    for (std::size_t i = 0; i < count; ++i) gx[i] += xs[i] > T{0} ? go[i] : go[i] * slope;
  });
}

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a, b, "add");
  Tensor<T> y = a.value();
  const T* bs = b.value().data();
  T* d = y.data();
  const std::size_t n = y.size();
#pragma omp parallel for schedule(static) if (n > 65536)
  for (std::size_t i = 0; i < n; ++i) d[i] += bs[i];
  return make_result<T>(std::move(y), {a, b}, [](Node<T>& self) {
    const std::size_t count = self.grad.size();
    const T* go = self.grad.data();
    for (auto& in : self.inputs) {
      if (!in->requires_grad) continue;
      T* g = in->grad_buffer().data();
#pragma omp parallel for schedule(static) if (count > 65536)
      for (std::size_t i = 0; i < count; ++i) g[i] += go[i];
    }
  });
}

template <typename T>
Var<T> scale(const Var<T>& a, T factor) {
  Tensor<T> y = a.value();
  for (T& v : y.values()) v *= factor;
  return make_result<T>(std::move(y), {a}, [factor](Node<T>& self) {
    T* g = self.inputs[0]->grad_buffer().data();
    const T* go = self.grad.data();
    for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += factor * go[i];
  });
}

template <typename T>
Var<T> concat_channels(const std::vector<Var<T>>& parts) {
  if (parts.empty()) throw ShapeError("concat_channels: no inputs");
  const Shape4 first = parts.front().shape();
  int channels = 0;
  for (const auto& p : parts) {
    const Shape4& s = p.shape();
    if (s.n != first.n || s.h != first.h || s.w != first.w) {
      throw ShapeError("concat_channels: incompatible " + s.str() + " vs " + first.str());
    }
    channels += s.c;
  }
  Tensor<T> y({first.n, channels, first.h, first.w});
  const std::size_t plane = first.plane();
  for (int n = 0; n < first.n; ++n) {
    int c0 = 0;
    for (const auto& p : parts) {
      const std::size_t count = static_cast<std::size_t>(p.shape().c) * plane;
      std::copy_n(p.value().plane(n, 0), count, y.plane(n, c0));
      c0 += p.shape().c;
    }
  }
  return make_result<T>(std::move(y), parts, [plane](Node<T>& self) {
    for (int n = 0; n < self.grad.n(); ++n) {
      int c0 = 0;
      for (auto& in : self.inputs) {
        const int c = in->value.c();
        if (in->requires_grad) {
          const T* go = self.grad.plane(n, c0);
          T* g = in->grad_buffer().plane(n, 0);
          const std::size_t count = static_cast<std::size_t>(c) * plane;
          for (std::size_t i = 0; i < count; ++i) g[i] += go[i];
        }
        c0 += c;
      }
    }
  });
}

template <typename T>
Var<T> upsample_nearest2(const Var<T>& x) {
  const Shape4 s = x.shape();
  Tensor<T> y({s.n, s.c, s.h * 2, s.w * 2});
  const Tensor<T>& xv = x.value();
#pragma omp parallel for collapse(2) schedule(static)
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c) {
      const T* src = xv.plane(n, c);
      T* dst = y.plane(n, c);
      for (int oy = 0; oy < s.h * 2; ++oy) {
        const T* srow = src + static_cast<std::size_t>(oy / 2) * s.w;
        T* drow = dst + static_cast<std::size_t>(oy) * s.w * 2;
        for (int ox = 0; ox < s.w * 2; ++ox) drow[ox] = srow[ox / 2];
      }
    }
  return make_result<T>(std::move(y), {x}, [s](Node<T>& self) {
    Tensor<T>& gx = self.inputs[0]->grad_buffer();
#pragma omp parallel for collapse(2) schedule(static)
    for (int n = 0; n < s.n; ++n)
      for (int c = 0; c < s.c; ++c) {
        const T* go = self.grad.plane(n, c);
        T* g = gx.plane(n, c);
        for (int oy = 0; oy < s.h * 2; ++oy) {
          const T* grow = go + static_cast<std::size_t>(oy) * s.w * 2;
          T* drow = g + static_cast<std::size_t>(oy / 2) * s.w;
          for (int ox = 0; ox < s.w * 2; ++ox) drow[ox / 2] += grow[ox];
        }
      }
  });
}

template <typename T>
Var<T> upsample_bilinear2(const Var<T>& x) {
  const Shape4 s = x.shape();
  const auto ty = bilinear2_taps(s.h);
  const auto tx = bilinear2_taps(s.w);
  const int oh = s.h * 2;
  const int ow = s.w * 2;
  Tensor<T> y({s.n, s.c, oh, ow});
  const Tensor<T>& xv = x.value();
#pragma omp parallel for collapse(2) schedule(static)
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c) {
      const T* src = xv.plane(n, c);
      T* dst = y.plane(n, c);
      for (int oy = 0; oy < oh; ++oy) {
        const LinearTap& a = ty[oy];
        const T* r0 = src + static_cast<std::size_t>(a.i0) * s.w;
        const T* r1 = src + static_cast<std::size_t>(a.i1) * s.w;
        for (int ox = 0; ox < ow; ++ox) {
          const LinearTap& b = tx[ox];
          const double top = b.w0 * r0[b.i0] + b.w1 * r0[b.i1];
          const double bot = b.w0 * r1[b.i0] + b.w1 * r1[b.i1];
          dst[static_cast<std::size_t>(oy) * ow + ox] = static_cast<T>(a.w0 * top + a.w1 * bot);
        }
      }
    }
  return make_result<T>(std::move(y), {x}, [s, ty, tx, oh, ow](Node<T>& self) {
    Tensor<T>& gx = self.inputs[0]->grad_buffer();
#pragma omp parallel for collapse(2) schedule(static)
    for (int n = 0; n < s.n; ++n)
      for (int c = 0; c < s.c; ++c) {
        const T* go = self.grad.plane(n, c);
        T* g = gx.plane(n, c);
        for (int oy = 0; oy < oh; ++oy) {
          const LinearTap& a = ty[oy];
          T* r0 = g + static_cast<std::size_t>(a.i0) * s.w;
          T* r1 = g + static_cast<std::size_t>(a.i1) * s.w;
          for (int ox = 0; ox < ow; ++ox) {
            const LinearTap& b = tx[ox];
            const double v = go[static_cast<std::size_t>(oy) * ow + ox];
            r0[b.i0] += static_cast<T>(a.w0 * b.w0 * v);
            r0[b.i1] += static_cast<T>(a.w0 * b.w1 * v);
            r1[b.i0] += static_cast<T>(a.w1 * b.w0 * v);
            r1[b.i1] += static_cast<T>(a.w1 * b.w1 * v);
          }
        }
      }
  });
}

template <typename T>
Var<T> max_pool2(const Var<T>& x) {
  const Shape4 s = x.shape();
  const int oh = s.h / 2;
  const int ow = s.w / 2;
  if (oh == 0 || ow == 0) throw ShapeError("max_pool2: input " + s.str() + " too small");
  Tensor<T> y({s.n, s.c, oh, ow});
  std::vector<std::uint32_t> argmax(y.size());
  const Tensor<T>& xv = x.value();
#pragma omp parallel for collapse(2) schedule(static)
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c) {
      const T* src = xv.plane(n, c);
      const std::size_t base = y.offset(n, c, 0, 0);
      for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox) {
          std::uint32_t best = static_cast<std::uint32_t>((2 * oy) * s.w + 2 * ox);
          for (int dy = 0; dy < 2; ++dy)
            for (int dx = 0; dx < 2; ++dx) {
              const auto idx = static_cast<std::uint32_t>((2 * oy + dy) * s.w + 2 * ox + dx);
              if (src[idx] > src[best]) best = idx;
            }
          const std::size_t o = base + static_cast<std::size_t>(oy) * ow + ox;
          y.data()[o] = src[best];
          argmax[o] = best;
        }
    }
  return make_result<T>(std::move(y), {x}, [s, oh, ow, argmax = std::move(argmax)](Node<T>& self) {
    Tensor<T>& gx = self.inputs[0]->grad_buffer();
    const std::size_t per_plane = static_cast<std::size_t>(oh) * ow;
    for (int n = 0; n < s.n; ++n)
      for (int c = 0; c < s.c; ++c) {
        const std::size_t base = self.grad.offset(n, c, 0, 0);
        T* g = gx.plane(n, c);
        for (std::size_t i = 0; i < per_plane; ++i) g[argmax[base + i]] += self.grad.data()[base + i];
      }
  });
}

template <typename T>
Var<T> channel_normalize(const Var<T>& x, const std::vector<T>& means, const std::vector<T>& stds) {
  const Shape4 s = x.shape();
  const int out_c = static_cast<int>(means.size());
  if (stds.size() != means.size()) throw ShapeError("channel_normalize: mean/std length mismatch");
  if (s.c != 1 && s.c != out_c) {
    throw ShapeError("channel_normalize: input " + s.str() + " cannot map to " +
                     std::to_string(out_c) + " channels");
  }
  const bool replicate = s.c == 1 && out_c != 1;
  Tensor<T> y({s.n, out_c, s.h, s.w});
  const std::size_t plane = s.plane();
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < out_c; ++c) {
      const T* src = x.value().plane(n, replicate ? 0 : c);
      T* dst = y.plane(n, c);
      for (std::size_t i = 0; i < plane; ++i) dst[i] = (src[i] - means[c]) / stds[c];
    }
  return make_result<T>(std::move(y), {x}, [replicate, stds, plane](Node<T>& self) {
    Tensor<T>& gx = self.inputs[0]->grad_buffer();
    for (int n = 0; n < self.grad.n(); ++n)
      for (int c = 0; c < self.grad.c(); ++c) {
        const T* go = self.grad.plane(n, c);
        T* g = gx.plane(n, replicate ? 0 : c);
        const T inv = T{1} / stds[c];
        for (std::size_t i = 0; i < plane; ++i) g[i] += go[i] * inv;
      }
  });
}

template <typename T>
Var<T> l1_mean(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a, b, "l1_mean");
  const std::size_t n = a.value().size();
  if (n == 0) throw ShapeError("l1_mean: empty input");
  const T* pa = a.value().data();
  const T* pb = b.value().data();
  double acc = 0.0;
#pragma omp parallel for reduction(+ : acc) schedule(static) if (n > 65536)
  for (std::size_t i = 0; i < n; ++i) acc += std::abs(static_cast<double>(pa[i]) - pb[i]);
  return make_result<T>(Tensor<T>::scalar(static_cast<T>(acc / n)), {a, b}, [n](Node<T>& self) {
    const T go = self.grad.data()[0] / static_cast<T>(n);
    Node<T>& na = *self.inputs[0];
    Node<T>& nb = *self.inputs[1];
    const T* va = na.value.data();
    const T* vb = nb.value.data();
    T* ga = na.requires_grad ? na.grad_buffer().data() : nullptr;
    T* gb = nb.requires_grad ? nb.grad_buffer().data() : nullptr;
#pragma omp parallel for schedule(static) if (n > 65536)
    for (std::size_t i = 0; i < n; ++i) {
      const T d = va[i] - vb[i];
      const T sgn = d > T{0} ? T{1} : (d < T{0} ? T{-1} : T{0});
      if (ga) ga[i] += go * sgn;
      if (gb) gb[i] -= go * sgn;
    }
  });
}

template <typename T>
Var<T> mean(const Var<T>& x) {
  const std::size_t n = x.value().size();
  if (n == 0) throw ShapeError("mean: empty input");
  double acc = 0.0;
  for (T v : x.value().values()) acc += v;
  return make_result<T>(Tensor<T>::scalar(static_cast<T>(acc / n)), {x}, [n](Node<T>& self) {
    const T go = self.grad.data()[0] / static_cast<T>(n);
    for (T& g : self.inputs[0]->grad_buffer().values()) g += go;
  });
}

template <typename T>
Var<T> sub_scalar(const Var<T>& x, const Var<T>& s) {
  require_scalar(s, "sub_scalar");
  Tensor<T> y = x.value();
  const T sv = s.value().data()[0];
  for (T& v : y.values()) v -= sv;
  return make_result<T>(std::move(y), {x, s}, [](Node<T>& self) {
    Node<T>& nx = *self.inputs[0];
    Node<T>& ns = *self.inputs[1];
    double total = 0.0;
    T* gx = nx.requires_grad ? nx.grad_buffer().data() : nullptr;
    const T* go = self.grad.data();
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      if (gx) gx[i] += go[i];
      total += go[i];
    }
    if (ns.requires_grad) ns.grad_buffer().data()[0] -= static_cast<T>(total);
  });
}

template <typename T>
Var<T> bce_with_logits_mean(const Var<T>& logits, T target) {
  const std::size_t n = logits.value().size();
  if (n == 0) throw ShapeError("bce_with_logits_mean: empty input");
  double acc = 0.0;
  for (T z : logits.value().values()) {
    if (!std::isfinite(z)) throw NumericError("non-finite logit in adversarial loss");
    const double zd = z;
    acc += std::max(zd, 0.0) - zd * target + std::log1p(std::exp(-std::abs(zd)));
  }
  return make_result<T>(Tensor<T>::scalar(static_cast<T>(acc / n)), {logits},
                        [n, target](Node<T>& self) {
                          const T go = self.grad.data()[0] / static_cast<T>(n);
                          Node<T>& in = *self.inputs[0];
                          T* g = in.grad_buffer().data();
                          const T* z = in.value.data();
                          for (std::size_t i = 0; i < n; ++i) {
                            const double sig = 1.0 / (1.0 + std::exp(-static_cast<double>(z[i])));
                            g[i] += go * static_cast<T>(sig - target);
                          }
                        });
}

template <typename T>
Var<T> spectral_normalize(const Var<T>& weight, SpectralState<T>& state, bool update) {
  const Tensor<T>& w = weight.value();
  const int rows = w.n();
  if (state.u.size() != static_cast<std::size_t>(rows)) {
    throw ShapeError("spectral state does not match weight rows");
  }
  if (update) power_iterate(w, state, 1);
  const T sigma = spectral_sigma(w, state);
  if (!(sigma > T{0}) || !std::isfinite(sigma)) {
    throw NumericError("spectral normalization: non-positive sigma");
  }
  Tensor<T> y = w;
  for (T& v : y.values()) v /= sigma;
  // u, v, sigma are frozen for the backward pass.
  return make_result<T>(std::move(y), {weight},
                        [sigma, u = state.u, v = state.v](Node<T>& self) {
                          const std::size_t cols = v.size();
                          const T* go = self.grad.data();
                          const T* wn = self.value.data();
                          double inner = 0.0;
                          for (std::size_t i = 0; i < self.grad.size(); ++i) inner += go[i] * wn[i];
                          T* g = self.inputs[0]->grad_buffer().data();
                          for (std::size_t r = 0; r < u.size(); ++r)
                            for (std::size_t c = 0; c < cols; ++c) {
                              const std::size_t i = r * cols + c;
                              g[i] += (go[i] - static_cast<T>(inner) * u[r] * v[c]) / sigma;
                            }
                        });
}

}  // namespace ops

#define MRSR_INSTANTIATE_AUTOGRAD(T)                                                          \
  template void backward<T>(const Var<T>&);                                                   \
  template T spectral_sigma<T>(const Tensor<T>&, const SpectralState<T>&);                    \
  template void power_iterate<T>(const Tensor<T>&, SpectralState<T>&, int);                   \
  template Var<T> ops::conv2d<T>(const Var<T>&, const Var<T>&, const Var<T>&,                 \
                                 const ConvGeometry&);                                        \
  template Var<T> ops::leaky_relu<T>(const Var<T>&, T);                                       \
  template Var<T> ops::add<T>(const Var<T>&, const Var<T>&);                                  \
  template Var<T> ops::scale<T>(const Var<T>&, T);                                            \
  template Var<T> ops::concat_channels<T>(const std::vector<Var<T>>&);                        \
  template Var<T> ops::upsample_nearest2<T>(const Var<T>&);                                   \
  template Var<T> ops::upsample_bilinear2<T>(const Var<T>&);                                  \
  template Var<T> ops::max_pool2<T>(const Var<T>&);                                           \
  template Var<T> ops::channel_normalize<T>(const Var<T>&, const std::vector<T>&,             \
                                            const std::vector<T>&);                           \
  template Var<T> ops::l1_mean<T>(const Var<T>&, const Var<T>&);                              \
  template Var<T> ops::mean<T>(const Var<T>&);                                                \
  template Var<T> ops::sub_scalar<T>(const Var<T>&, const Var<T>&);                           \
  template Var<T> ops::bce_with_logits_mean<T>(const Var<T>&, T);                             \
  template Var<T> ops::spectral_normalize<T>(const Var<T>&, SpectralState<T>&, bool);

MRSR_INSTANTIATE_AUTOGRAD(float)
MRSR_INSTANTIATE_AUTOGRAD(double)

#undef MRSR_INSTANTIATE_AUTOGRAD

}  // namespace mrsr
