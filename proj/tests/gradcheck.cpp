#include "gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "advkit/attacks.hpp"
#include "advkit/model.hpp"
#include "advkit/ops.hpp"

namespace gradcheck {

using namespace advkit;
static_assert(sizeof(Real) == 8, "gradcheck must build against the real64 flavour");

namespace {

Architecture tiny_cnn() {
  Architecture a;
  a.name = "gradcheck";
  a.input = {1, 6, 6};
  a.num_classes = 5;
  a.layers = {ConvLayer{1, 3}, ReluLayer{}, MaxPoolLayer{}, ConvLayer{3, 4}, ReluLayer{}, FlattenLayer{},
              DenseLayer{4 * 3 * 3, 5}};
  a.feature_tap = 1;
  return a;
}

// Which side of each ReLU and which max-pool winner the forward took.
std::vector<int> activation_pattern(const Model& m, const Tensor& x) {
  const auto outs = m.forward_all(x);
  const auto& layers = m.architecture().layers;
  std::vector<int> pat;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (std::holds_alternative<ReluLayer>(layers[i])) {
      const Tensor& pre = i == 0 ? x : outs[i - 1];
      for (Real v : pre.data()) pat.push_back(v > 0);
    } else if (const auto* p = std::get_if<MaxPoolLayer>(&layers[i])) {
      const Tensor& in = outs[i - 1];
      const std::size_t c = in.size(1), h = in.size(2), w = in.size(3);
      for (std::size_t ch = 0; ch < c; ++ch) {
        for (std::size_t oy = 0; oy + p->window <= h; oy += p->stride) {
          for (std::size_t ox = 0; ox + p->window <= w; ox += p->stride) {
            int best = 0;
            Real bv = -1e300;
            for (std::size_t ky = 0; ky < p->window; ++ky) {
              for (std::size_t kx = 0; kx < p->window; ++kx) {
                const Real v = in.data()[(ch * h + oy + ky) * w + ox + kx];
                if (v > bv) {
                  bv = v;
                  best = static_cast<int>(ky * p->window + kx);
                }
              }
            }
            pat.push_back(best);
          }
        }
      }
    }
  }
  return pat;
}

double loss_of(const Model& m, const Tensor& x, int label) {
  const Tensor z = m.forward(x).logits;
  return cross_entropy(z, std::span<const int>(&label, 1)).item();
}

}  // namespace

double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
  return std::abs(analytic - numeric) / denom;
}

Report cnn(std::uint64_t seed, double h) {
  Model m(tiny_cnn());
  m.initialize(seed);
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  // nonzero biases so ReLUs sit away from the origin for some units
  for (auto& p : m.parameters()) {
    if (p.value.rank() == 1) {
      for (Real& v : p.value.mutable_data()) v = std::uniform_real_distribution<Real>(-0.1, 0.1)(rng);
    }
  }
  Tensor x = Tensor::uniform(Shape{1, 1, 6, 6}, 0, 1, rng);
  const int label = static_cast<int>(rng() % 5);

  // analytic
  m.set_requires_grad(true);
  x.set_requires_grad(true);
  {
    Tape tape;
    TapeScope scope(tape);
    const Tensor z = m.forward(x).logits;
    tape.backward(cross_entropy(z, std::span<const int>(&label, 1)));
  }
  std::vector<Tensor> targets = m.parameter_tensors();
  targets.push_back(x);
  std::vector<std::vector<Real>> analytic;
  for (const auto& t : targets) {
    analytic.emplace_back(t.grad().begin(), t.grad().end());
    if (analytic.back().empty()) analytic.back().assign(t.numel(), 0);
  }
  m.set_requires_grad(false);
  x.set_requires_grad(false);

  const auto base = activation_pattern(m, x);
  Report r;
  for (std::size_t t = 0; t < targets.size(); ++t) {
    auto data = targets[t].mutable_data();
    for (std::size_t i = 0; i < data.size(); ++i) {
      const Real keep = data[i];
      data[i] = keep + h;
      const bool kink_plus = activation_pattern(m, x) != base;
      const double fp = loss_of(m, x, label);
      data[i] = keep - h;
      const bool kink_minus = activation_pattern(m, x) != base;
      const double fm = loss_of(m, x, label);
      data[i] = keep;
      if (kink_plus || kink_minus) {
        ++r.skipped;
        continue;
      }
      const double numeric = (fp - fm) / (2 * h);
      r.max_rel_error = std::max(r.max_rel_error, relative_error(analytic[t][i], numeric));
      ++r.checked;
    }
  }
  return r;
}

Report margin_loss(std::uint64_t seed, double h) {
  Model m(tiny_cnn());
  m.initialize(seed);
  std::mt19937_64 rng(seed + 101);
  const Tensor x0 = Tensor::uniform(Shape{1, 1, 6, 6}, 0, 1, rng);
  Tensor x = x0.clone();
  for (Real& v : x.mutable_data()) v += std::uniform_real_distribution<Real>(-0.05, 0.05)(rng);
  const int label = static_cast<int>(rng() % 5);
  const Real kappa = 0.5, c2 = 0.3;

  auto loss_at = [&](const Tensor& at) { return loss_J(m.forward(at).logits, label, at, x0, kappa, c2).item(); };
  // runner-up class and whether the clamp is active
  auto margin_state = [&](const Tensor& at) {
    const Tensor z = m.forward(at).logits;
    int best = -1;
    for (int j = 0; j < 5; ++j) {
      if (j != label && (best < 0 || z.data()[j] > z.data()[best])) best = j;
    }
    const bool clamped = z.data()[label] - z.data()[best] < -kappa;
    return std::pair{best, clamped};
  };

  x.set_requires_grad(true);
  {
    Tape tape;
    TapeScope scope(tape);
    tape.backward(loss_J(m.forward(x).logits, label, x, x0, kappa, c2));
  }
  const std::vector<Real> analytic(x.grad().begin(), x.grad().end());
  x.set_requires_grad(false);

  const auto base_pattern = activation_pattern(m, x);
  const auto base_state = margin_state(x);
  Report r;
  auto data = x.mutable_data();
  for (std::size_t i = 0; i < data.size(); ++i) {
    const Real keep = data[i];
    bool kink = false;
    data[i] = keep + h;
    kink |= activation_pattern(m, x) != base_pattern || margin_state(x) != base_state;
    const double fp = loss_at(x);
    data[i] = keep - h;
    kink |= activation_pattern(m, x) != base_pattern || margin_state(x) != base_state;
    const double fm = loss_at(x);
    data[i] = keep;
    if (kink) {
      ++r.skipped;
      continue;
    }
    r.max_rel_error = std::max(r.max_rel_error, relative_error(analytic[i], (fp - fm) / (2 * h)));
    ++r.checked;
  }
  return r;
}

}  // namespace gradcheck
