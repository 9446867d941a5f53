#pragma once

#include "advdepth/autograd.hpp"

#include <cmath>
#include <map>
#include <span>
#include <string>

namespace advdepth {

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Bias-corrected Adam. Moment buffers are keyed by parameter name and persist
/// across calls; each optimizer instance owns one step counter, so generator
/// and discriminator groups run independent instances with their own rates.
template <typename Scalar>
class Adam {
 public:
  struct Moments {
    Tensor<Scalar> m;
    Tensor<Scalar> v;
  };

  explicit Adam(AdamOptions opts = {}) : opts_(opts) {}

  /// One update of every parameter in `params` at learning rate `lr`.
  /// Throws NumericError naming the parameter if any gradient is non-finite.
  void step(std::span<Parameter<Scalar>* const> params, double lr) {
    for (const Parameter<Scalar>* p : params)
      if (!p->grad.all_finite()) throw NumericError("non-finite gradient in parameter '" + p->name + "'");
    ++step_count_;
    const double c1 = 1.0 - std::pow(opts_.beta1, static_cast<double>(step_count_));
    const double c2 = 1.0 - std::pow(opts_.beta2, static_cast<double>(step_count_));
    const auto b1 = static_cast<Scalar>(opts_.beta1);
    const auto b2 = static_cast<Scalar>(opts_.beta2);
    for (Parameter<Scalar>* p : params) {
      auto [it, fresh] = moments_.try_emplace(p->name);
      Moments& mo = it->second;
      if (fresh || mo.m.shape() != p->value.shape()) {
        mo.m = Tensor<Scalar>::zeros(p->value.shape());
        mo.v = Tensor<Scalar>::zeros(p->value.shape());
      }
      const auto& g = p->grad.array();
      mo.m.array() = b1 * mo.m.array() + (Scalar(1) - b1) * g;
      mo.v.array() = b2 * mo.v.array() + (Scalar(1) - b2) * g.square();
      const auto m_hat = mo.m.array() / static_cast<Scalar>(c1);
      const auto v_hat = mo.v.array() / static_cast<Scalar>(c2);
      p->value.array() -= static_cast<Scalar>(lr) * m_hat / (v_hat.sqrt() + static_cast<Scalar>(opts_.eps));
    }
  }

  long step_count() const noexcept { return step_count_; }
  void set_step_count(long n) noexcept { step_count_ = n; }
  const std::map<std::string, Moments>& moments() const noexcept { return moments_; }
  std::map<std::string, Moments>& moments() noexcept { return moments_; }
  const AdamOptions& options() const noexcept { return opts_; }

 private:
  AdamOptions opts_;
  long step_count_ = 0;
  std::map<std::string, Moments> moments_;
};

}  // namespace advdepth
