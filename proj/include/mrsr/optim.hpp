#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mrsr/checkpoint.hpp"
#include "mrsr/models.hpp"

namespace mrsr {

struct AdamConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.99;
  double epsilon = 1e-8;
};

// Adam with bias correction, no weight decay, constant learning rate.
template <typename T>
class Adam {
 public:
  Adam(std::vector<NamedParam<T>> params, AdamConfig cfg);

  void zero_grad();
  void step();

  // L2 norm over all parameter gradients.
  double grad_norm() const;
  // Rescales gradients so their global norm is at most max_norm.
  void clip_grad_norm(double max_norm);

  std::int64_t steps() const { return steps_; }
  const AdamConfig& config() const { return cfg_; }

  void save(TensorArchive& ar, const std::string& prefix) const;
  void load(const TensorArchive& ar, const std::string& prefix);

 private:
  std::vector<NamedParam<T>> params_;
  AdamConfig cfg_;
  std::vector<std::vector<T>> m_;
  std::vector<std::vector<T>> v_;
  std::int64_t steps_ = 0;
};

}  // namespace mrsr
