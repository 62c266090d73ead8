#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "advkit/tensor.hpp"

namespace advkit {
inline namespace ADVKIT_PRECISION_NS {

struct AdamOptions {
  Real learning_rate = Real(1e-3);
  Real beta1 = Real(0.9);
  Real beta2 = Real(0.999);
  Real epsilon = Real(1e-8);
};

/// First and second moment buffers for one parameter tensor.
struct AdamMoments {
  std::vector<Real> m;
  std::vector<Real> v;
  std::int64_t step = 0;

  static AdamMoments like(const Tensor& param);
};

/// One bias-corrected Adam update of `param` in place.
void adam_step(Tensor& param, std::span<const Real> grad, AdamMoments& state, const AdamOptions& opt);

/// Adam over a fixed parameter list, reading each parameter's accumulated grad.
class Adam {
 public:
  Adam(std::vector<Tensor> params, AdamOptions opt);

  void step();
  void zero_grad();
  const AdamOptions& options() const { return opt_; }

 private:
  std::vector<Tensor> params_;
  std::vector<AdamMoments> moments_;
  AdamOptions opt_;
};

}  // namespace ADVKIT_PRECISION_NS
}  // namespace advkit
