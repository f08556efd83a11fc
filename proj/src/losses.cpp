#include "mrsr/losses.hpp"

#include <cmath>

namespace mrsr {

template <typename T>
Var<T> pixel_loss(const Var<T>& sr, const Var<T>& hr) {
  return ops::l1_mean(sr, hr);
}

template <typename T>
Var<T> perceptual_loss(const FeatureExtractor<T>& extractor, const Var<T>& sr, const Var<T>& hr) {
  if (!(sr.shape() == hr.shape())) {
    throw ShapeError("perceptual_loss: shape mismatch " + sr.shape().str() + " vs " +
                     hr.shape().str());
  }
  std::vector<Var<T>> target;
  {
    NoGradGuard guard;
    target = extractor.features(hr.detach());
  }
  const std::vector<Var<T>> pred = extractor.features(sr);
  Var<T> total;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const T w = static_cast<T>(extractor.spec().taps[i].weight);
    Var<T> term = ops::scale(ops::l1_mean(pred[i], target[i]), w);
    total = total.defined() ? ops::add(total, term) : term;
  }
  return total;
}

template <typename T>
AdversarialLosses<T> adversarial_losses(const Var<T>& real_logits, const Var<T>& fake_logits) {
  if (!(real_logits.shape() == fake_logits.shape())) {
    throw ShapeError("adversarial_losses: shape mismatch " + real_logits.shape().str() + " vs " +
                     fake_logits.shape().str());
  }
  for (const Var<T>* v : {&real_logits, &fake_logits}) {
    for (T z : v->value().values()) {
      if (!std::isfinite(z)) throw NumericError("non-finite discriminator logit");
    }
  }
  const Var<T> real_rel = ops::sub_scalar(real_logits, ops::mean(fake_logits));
  const Var<T> fake_rel = ops::sub_scalar(fake_logits, ops::mean(real_logits));
  AdversarialLosses<T> out;
  out.discriminator = ops::add(ops::bce_with_logits_mean(real_rel, T{1}),
                               ops::bce_with_logits_mean(fake_rel, T{0}));
  out.generator = ops::add(ops::bce_with_logits_mean(fake_rel, T{1}),
                           ops::bce_with_logits_mean(real_rel, T{0}));
  return out;
}

LossBundle combine(double pixel, double perceptual, double adversarial_g,
                   const LossWeights& weights) {
  for (double v : {pixel, perceptual, adversarial_g}) {
    if (!std::isfinite(v)) throw NumericError("non-finite loss term");
  }
  LossBundle b;
  b.pixel = pixel;
  b.perceptual = perceptual;
  b.adversarial_g = adversarial_g;
  b.weights = weights;
  b.total_g = weights.pixel * pixel + weights.perceptual * perceptual +
              weights.adversarial * adversarial_g;
  return b;
}

template Var<float> pixel_loss<float>(const Var<float>&, const Var<float>&);
template Var<double> pixel_loss<double>(const Var<double>&, const Var<double>&);
template Var<float> perceptual_loss<float>(const FeatureExtractor<float>&, const Var<float>&,
                                           const Var<float>&);
template Var<double> perceptual_loss<double>(const FeatureExtractor<double>&, const Var<double>&,
                                             const Var<double>&);
template AdversarialLosses<float> adversarial_losses<float>(const Var<float>&, const Var<float>&);
template AdversarialLosses<double> adversarial_losses<double>(const Var<double>&,
                                                              const Var<double>&);

}  // namespace mrsr
