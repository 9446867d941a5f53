#include "advdepth/losses.hpp"

#include "advdepth/ops.hpp"

#include <cmath>

namespace advdepth {

namespace {

std::atomic<long> g_clamp_events{0};

template <typename S>
Eigen::Array<double, Eigen::Dynamic, 1> clamped(const Tensor<S>& scores) {
  Eigen::Array<double, Eigen::Dynamic, 1> a = scores.array().template cast<double>();
  long hits = 0;
  for (Index i = 0; i < a.size(); ++i) {
    if (a[i] < kScoreClamp) {
      a[i] = kScoreClamp;
      ++hits;
    } else if (a[i] > 1.0 - kScoreClamp) {
      a[i] = 1.0 - kScoreClamp;
      ++hits;
    }
  }
  if (hits) g_clamp_events += hits;
  return a;
}

template <typename S>
void check_same(const Tensor<S>& a, const Tensor<S>& b, const char* what) {
  if (a.shape() != b.shape())
    throw DimensionError("shape", std::string(what) + ": " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

}  // namespace

long clamp_events() { return g_clamp_events.load(); }
void reset_clamp_events() { g_clamp_events = 0; }

template <typename S>
double discriminator_loss(const Tensor<S>& score_real, const Tensor<S>& score_fake) {
  check_same(score_real, score_fake, "discriminator_loss");
  const auto r = clamped(score_real);
  const auto f = clamped(score_fake);
  return -(r.log() + (1.0 - f).log()).mean();
}

template <typename S>
double generator_adversarial_loss(const Tensor<S>& score_fake, AdversarialForm form) {
  const auto f = clamped(score_fake);
  return form == AdversarialForm::nonsaturating ? -f.log().mean() : (1.0 - f).log().mean();
}

template <typename S>
double l1_loss(const Tensor<S>& pred, const Tensor<S>& target) {
  check_same(pred, target, "l1_loss");
  return (pred.array() - target.array()).abs().template cast<double>().mean();
}

template <typename S>
Var<S> discriminator_loss(Var<S> score_real, Var<S> score_fake) {
  check_same(score_real.value(), score_fake.value(), "discriminator_loss");
  const double value = discriminator_loss(score_real.value(), score_fake.value());
  return score_real.graph->record(
      Tensor<S>::constant({1}, static_cast<S>(value)), {score_real, score_fake},
      [score_real, score_fake](const Tensor<S>& gout, Graph<S>& g, const Tensor<S>&) {
        const double n = static_cast<double>(score_real.value().size());
        const double go = static_cast<double>(gout[0]);
        if (score_real.requires_grad()) {
          const auto r = clamped(score_real.value());
          g.accumulate(score_real, Tensor<S>(score_real.shape(), (-go / (n * r)).template cast<S>()));
        }
        if (score_fake.requires_grad()) {
          const auto f = clamped(score_fake.value());
          g.accumulate(score_fake, Tensor<S>(score_fake.shape(), (go / (n * (1.0 - f))).template cast<S>()));
        }
      });
}

template <typename S>
Var<S> generator_adversarial_loss(Var<S> score_fake, AdversarialForm form) {
  const double value = generator_adversarial_loss(score_fake.value(), form);
  return score_fake.graph->record(
      Tensor<S>::constant({1}, static_cast<S>(value)), {score_fake},
      [score_fake, form](const Tensor<S>& gout, Graph<S>& g, const Tensor<S>&) {
        const double n = static_cast<double>(score_fake.value().size());
        const double go = static_cast<double>(gout[0]);
        const auto f = clamped(score_fake.value());
        Eigen::Array<double, Eigen::Dynamic, 1> d =
            form == AdversarialForm::nonsaturating ? (-go / (n * f)).eval() : (-go / (n * (1.0 - f))).eval();
        g.accumulate(score_fake, Tensor<S>(score_fake.shape(), d.template cast<S>()));
      });
}

template <typename S>
Var<S> l1_loss(Var<S> pred, Var<S> target) {
  check_same(pred.value(), target.value(), "l1_loss");
  const double value = l1_loss(pred.value(), target.value());
  return pred.graph->record(Tensor<S>::constant({1}, static_cast<S>(value)), {pred, target},
                            [pred, target](const Tensor<S>& gout, Graph<S>& g, const Tensor<S>&) {
                              const S scale = gout[0] / static_cast<S>(pred.value().size());
                              const auto diff = pred.value().array() - target.value().array();
                              Tensor<S> gp(pred.shape(), diff.sign() * scale);
                              if (target.requires_grad()) g.accumulate(target, Tensor<S>(target.shape(), -gp.array()));
                              g.accumulate(pred, std::move(gp));
                            });
}

template <typename S>
GeneratorLoss<S> combined_generator_loss(Var<S> score_fake, Var<S> pred, Var<S> target, double lambda,
                                         AdversarialForm form) {
  if (!(lambda > 0.0)) throw InvalidArgument("lambda must be positive");
  Var<S> adv = generator_adversarial_loss(score_fake, form);
  Var<S> l1 = l1_loss(pred, target);
  Var<S> total = add(adv, scale(l1, static_cast<S>(lambda)));
  LossBundle b;
  b.g_adv_loss = static_cast<double>(adv.value()[0]);
  b.g_l1_loss = static_cast<double>(l1.value()[0]);
  b.g_total = b.g_adv_loss + lambda * b.g_l1_loss;
  b.lambda = lambda;
  return {total, b};
}

#define ADVDEPTH_INSTANTIATE_LOSSES(S)                                                       \
  template double discriminator_loss(const Tensor<S>&, const Tensor<S>&);                    \
  template double generator_adversarial_loss(const Tensor<S>&, AdversarialForm);             \
  template double l1_loss(const Tensor<S>&, const Tensor<S>&);                               \
  template Var<S> discriminator_loss(Var<S>, Var<S>);                                        \
  template Var<S> generator_adversarial_loss(Var<S>, AdversarialForm);                       \
  template Var<S> l1_loss(Var<S>, Var<S>);                                                   \
  template GeneratorLoss<S> combined_generator_loss(Var<S>, Var<S>, Var<S>, double, AdversarialForm);

ADVDEPTH_INSTANTIATE_LOSSES(float)
ADVDEPTH_INSTANTIATE_LOSSES(double)

}  // namespace advdepth
