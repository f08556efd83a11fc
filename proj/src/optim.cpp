#include "mrsr/optim.hpp"

#include <cmath>

namespace mrsr {

template <typename T>
Adam<T>::Adam(std::vector<NamedParam<T>> params, AdamConfig cfg)
    : params_(std::move(params)), cfg_(cfg) {
  if (!(cfg_.learning_rate > 0)) throw ConfigError("learning_rate must be > 0");
  if (cfg_.beta1 < 0 || cfg_.beta1 >= 1 || cfg_.beta2 < 0 || cfg_.beta2 >= 1) {
    throw ConfigError("Adam betas must lie in [0, 1)");
  }
  for (const auto& p : params_) {
    m_.emplace_back(p.var.value().size(), T{0});
    v_.emplace_back(p.var.value().size(), T{0});
  }
}

template <typename T>
void Adam<T>::zero_grad() {
  for (auto& p : params_) p.var.zero_grad();
}

template <typename T>
void Adam<T>::step() {
  ++steps_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(steps_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(steps_));
  const T b1 = static_cast<T>(cfg_.beta1);
  const T b2 = static_cast<T>(cfg_.beta2);
  const T step_size = static_cast<T>(cfg_.learning_rate / bc1);
  const T inv_sqrt_bc2 = static_cast<T>(1.0 / std::sqrt(bc2));
  const T eps = static_cast<T>(cfg_.epsilon);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Var<T>& var = params_[i].var;
    if (!var.has_grad()) continue;
    T* w = var.mutable_value().data();
    const T* g = var.grad().data();
    T* m = m_[i].data();
    T* v = v_[i].data();
    const std::size_t n = m_[i].size();
#pragma omp parallel for schedule(static) if (n > 65536)
    for (std::size_t k = 0; k < n; ++k) {
      m[k] = b1 * m[k] + (T{1} - b1) * g[k];
      v[k] = b2 * v[k] + (T{1} - b2) * g[k] * g[k];
      w[k] -= step_size * m[k] / (std::sqrt(v[k]) * inv_sqrt_bc2 + eps);
    }
  }
}

template <typename T>
double Adam<T>::grad_norm() const {
  double acc = 0.0;
  for (const auto& p : params_) {
    if (!p.var.has_grad()) continue;
    for (T g : p.var.grad().values()) acc += static_cast<double>(g) * g;
  }
  return std::sqrt(acc);
}

template <typename T>
void Adam<T>::clip_grad_norm(double max_norm) {
  const double norm = grad_norm();
  if (!(norm > max_norm) || norm == 0.0) return;
  const T factor = static_cast<T>(max_norm / norm);
  for (auto& p : params_) {
    if (!p.var.has_grad()) continue;
    for (T& g : p.var.mutable_grad().values()) g *= factor;
  }
}

template <typename T>
void Adam<T>::save(TensorArchive& ar, const std::string& prefix) const {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    ar.put_vector(prefix + ".m." + params_[i].name, m_[i]);
    ar.put_vector(prefix + ".v." + params_[i].name, v_[i]);
  }
  ar.metadata[prefix + ".steps"] = steps_;
}

template <typename T>
void Adam<T>::load(const TensorArchive& ar, const std::string& prefix) {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto m = ar.get_vector<T>(prefix + ".m." + params_[i].name);
    auto v = ar.get_vector<T>(prefix + ".v." + params_[i].name);
    if (m.size() != m_[i].size() || v.size() != v_[i].size()) {
      throw ConfigError("optimizer state for " + params_[i].name + " has the wrong size");
    }
    m_[i] = std::move(m);
    v_[i] = std::move(v);
  }
  steps_ = ar.metadata.at(prefix + ".steps").get<std::int64_t>();
}

template class Adam<float>;
template class Adam<double>;

}  // namespace mrsr
