#pragma once

#include "mrsr/autograd.hpp"
#include "mrsr/feature_extractor.hpp"

namespace mrsr {

struct LossWeights {
  double pixel = 1.0;
  double perceptual = 1.0;
  double adversarial = 1.0;
  bool operator==(const LossWeights&) const = default;
};

// Scalar summary of one training step's objectives.
struct LossBundle {
  double pixel = 0.0;
  double perceptual = 0.0;
  double adversarial_g = 0.0;
  double total_g = 0.0;
  double adversarial_d = 0.0;
  LossWeights weights;
};

// Mean absolute difference over all elements.
template <typename T>
Var<T> pixel_loss(const Var<T>& sr, const Var<T>& hr);

// Sum over taps of weight * mean |phi(sr) - phi(hr)|. The hr branch is
// evaluated without recording a graph.
template <typename T>
Var<T> perceptual_loss(const FeatureExtractor<T>& extractor, const Var<T>& sr, const Var<T>& hr);

template <typename T>
struct AdversarialLosses {
  Var<T> generator;      // BCE(fake - E[real], 1) + BCE(real - E[fake], 0)
  Var<T> discriminator;  // BCE(real - E[fake], 1) + BCE(fake - E[real], 0)
};

// Relativistic-average losses over per-pixel logit maps; the opponent mean
// runs over the whole batch and every pixel position.
template <typename T>
AdversarialLosses<T> adversarial_losses(const Var<T>& real_logits, const Var<T>& fake_logits);

LossBundle combine(double pixel, double perceptual, double adversarial_g,
                   const LossWeights& weights = {});

}  // namespace mrsr
