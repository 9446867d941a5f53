#pragma once

#include "advdepth/autograd.hpp"

#include <atomic>
#include <optional>

namespace advdepth {

/// Scores are clamped into [kScoreClamp, 1 - kScoreClamp] before any log.
inline constexpr double kScoreClamp = 1e-7;

/// Number of score cells clamped since process start (or the last reset).
long clamp_events();
void reset_clamp_events();

enum class AdversarialForm { nonsaturating, saturating };

struct LossBundle {
  std::optional<double> d_loss;  // absent when adversarial training is off
  double g_adv_loss = 0.0;
  double g_l1_loss = 0.0;
  double g_total = 0.0;
  double lambda = 100.0;
};

// Scalar reference forms on plain tensors.

/// mean over cells of -[log(real) + log(1 - fake)].
template <typename Scalar>
double discriminator_loss(const Tensor<Scalar>& score_real, const Tensor<Scalar>& score_fake);
/// nonsaturating: mean -log(fake); saturating: mean log(1 - fake).
template <typename Scalar>
double generator_adversarial_loss(const Tensor<Scalar>& score_fake, AdversarialForm form);
template <typename Scalar>
double l1_loss(const Tensor<Scalar>& pred, const Tensor<Scalar>& target);

// Differentiable forms. Clamped cells pass the gradient evaluated at the
// clamped score.

template <typename Scalar>
Var<Scalar> discriminator_loss(Var<Scalar> score_real, Var<Scalar> score_fake);
template <typename Scalar>
Var<Scalar> generator_adversarial_loss(Var<Scalar> score_fake, AdversarialForm form);
template <typename Scalar>
Var<Scalar> l1_loss(Var<Scalar> pred, Var<Scalar> target);

/// g_total = adversarial + lambda * L1, with the components recorded.
template <typename Scalar>
struct GeneratorLoss {
  Var<Scalar> total;
  LossBundle bundle;
};

template <typename Scalar>
GeneratorLoss<Scalar> combined_generator_loss(Var<Scalar> score_fake, Var<Scalar> pred, Var<Scalar> target,
                                              double lambda, AdversarialForm form = AdversarialForm::nonsaturating);

}  // namespace advdepth
