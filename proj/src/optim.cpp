#include "advkit/optim.hpp"

#include <cmath>

namespace advkit {
inline namespace ADVKIT_PRECISION_NS {

AdamMoments AdamMoments::like(const Tensor& param) {
  AdamMoments s;
  s.m.assign(param.numel(), Real(0));
  s.v.assign(param.numel(), Real(0));
  return s;
}

void adam_step(Tensor& param, std::span<const Real> grad, AdamMoments& state, const AdamOptions& opt) {
  const std::size_t n = param.numel();
  if (grad.size() != n || state.m.size() != n || state.v.size() != n) {
    throw InvalidShape("adam_step: parameter, gradient and moment sizes differ");
  }
  ++state.step;
  const double bc1 = 1.0 - std::pow(static_cast<double>(opt.beta1), static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(static_cast<double>(opt.beta2), static_cast<double>(state.step));
  auto p = param.mutable_data();
  for (std::size_t i = 0; i < n; ++i) {
    state.m[i] = opt.beta1 * state.m[i] + (1 - opt.beta1) * grad[i];
    state.v[i] = opt.beta2 * state.v[i] + (1 - opt.beta2) * grad[i] * grad[i];
    const double m_hat = static_cast<double>(state.m[i]) / bc1;
    const double v_hat = static_cast<double>(state.v[i]) / bc2;
    p[i] -= static_cast<Real>(static_cast<double>(opt.learning_rate) * m_hat /
                              (std::sqrt(v_hat) + static_cast<double>(opt.epsilon)));
  }
}

Adam::Adam(std::vector<Tensor> params, AdamOptions opt) : params_(std::move(params)), opt_(opt) {
  moments_.reserve(params_.size());
  for (const auto& p : params_) moments_.push_back(AdamMoments::like(p));
}

void Adam::step() {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    std::vector<Real> zeros;
    std::span<const Real> g = params_[i].grad();
    if (g.empty()) {
      zeros.assign(params_[i].numel(), Real(0));
      g = zeros;
    }
    adam_step(params_[i], g, moments_[i], opt_);
  }
}

void Adam::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

}  // namespace ADVKIT_PRECISION_NS
}  // namespace advkit
