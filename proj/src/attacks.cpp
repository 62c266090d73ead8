#include "advkit/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "advkit/ops.hpp"
#include "advkit/optim.hpp"
#include "advkit/parallel.hpp"
#include "advkit/tape.hpp"

namespace advkit {
inline namespace ADVKIT_PRECISION_NS {

std::string attack_name(AttackKind kind) {
  switch (kind) {
    case AttackKind::kFgsm: return "fgsm";
    case AttackKind::kBim: return "bim";
    case AttackKind::kPgd: return "pgd";
    case AttackKind::kMiFgsm: return "mi-fgsm";
    case AttackKind::kDeepFool: return "deepfool";
    case AttackKind::kCw: return "cw";
    case AttackKind::kFineFool: return "finefool";
  }
  return "unknown";
}

AttackKind parse_attack(const std::string& name) {
  for (AttackKind k : all_attacks()) {
    if (attack_name(k) == name) return k;
  }
  if (name == "mifgsm") return AttackKind::kMiFgsm;
  throw InvalidArgument("unknown attack \"" + name + "\"");
}

std::vector<AttackKind> all_attacks() {
  return {AttackKind::kFgsm,     AttackKind::kPgd, AttackKind::kBim,     AttackKind::kMiFgsm,
          AttackKind::kDeepFool, AttackKind::kCw,  AttackKind::kFineFool};
}

std::string step_norm_name(StepNorm norm) {
  switch (norm) {
    case StepNorm::kRaw: return "raw";
    case StepNorm::kLinf: return "linf";
    case StepNorm::kL2: return "l2";
  }
  return "unknown";
}

StepNorm parse_step_norm(const std::string& name) {
  for (StepNorm n : {StepNorm::kRaw, StepNorm::kLinf, StepNorm::kL2}) {
    if (step_norm_name(n) == name) return n;
  }
  throw InvalidArgument("unknown step normalisation \"" + name + "\"");
}

void AttackConfig::validate() const {
  if (!(epsilon >= 0 && epsilon <= 1)) throw InvalidArgument("epsilon must lie in [0,1]");
  if (!(cw_learning_rate > 0)) throw InvalidArgument("cw_learning_rate must be > 0");
  if (alpha && !(*alpha > 0)) throw InvalidArgument("alpha must be > 0");
  if (iterations < 1) throw InvalidArgument("iterations must be >= 1");
  if (!(mu >= 0)) throw InvalidArgument("mu must be >= 0");
  if (!(kappa >= 0)) throw InvalidArgument("kappa must be >= 0");
  if (!(c2 >= 0)) throw InvalidArgument("c2 must be >= 0");
  if (cw_steps < 1) throw InvalidArgument("cw_steps must be >= 1");
  if (deepfool_max_iterations < 1) throw InvalidArgument("deepfool_max_iterations must be >= 1");
  if (!(deepfool_overshoot >= 0)) throw InvalidArgument("deepfool_overshoot must be >= 0");
}

void project_to_budget(std::span<Real> x, std::span<const Real> x0, Real epsilon) {
  for (std::size_t i = 0; i < x.size(); ++i) {
    const Real lo = std::max(Real(0), x0[i] - epsilon);
    const Real hi = std::min(Real(1), x0[i] + epsilon);
    x[i] = std::clamp(x[i], lo, hi);
  }
}

namespace {

std::size_t runner_up(std::span<const Real> z, std::size_t excluded) {
  std::size_t best = excluded == 0 ? 1 : 0;
  for (std::size_t j = 0; j < z.size(); ++j) {
    if (j != excluded && z[j] > z[best]) best = j;
  }
  return best;
}

bool is_success(std::span<const Real> logits, int y, const std::optional<int>& target) {
  const int pred = argmax(logits);
  return target ? pred == *target : pred != y;
}

Real sgn(Real v) { return v > 0 ? Real(1) : (v < 0 ? Real(-1) : Real(0)); }

double l1(std::span<const Real> v) {
  double s = 0;
  for (Real x : v) s += std::abs(static_cast<double>(x));
  return s;
}

// What an attack differentiates at each iterate.
enum class Objective {
  kCrossEntropy,  // ascended (descended towards the target when targeted)
  kMargin,        // loss_J, descended
};

struct Probe {
  std::vector<Real> logits;
  Tensor gradient;     // [1,C,H,W]; empty when not requested
  Tensor feature_map;  // [1,c,h,w]; detached
};

class Session {
 public:
  Session(const Model& model, const Tensor& x0, int y, const AttackConfig& cfg, std::string name)
      : model_(model), x0_(x0), y_(y), cfg_(cfg) {
    cfg.validate();
    if (x0.rank() != 4 || x0.size(0) != 1) throw InvalidShape("attacks take a single image [1,C,H,W]");
    if (y < 0 || static_cast<std::size_t>(y) >= model.num_classes()) throw InvalidArgument("label out of range");
    if (cfg.target && (*cfg.target < 0 || static_cast<std::size_t>(*cfg.target) >= model.num_classes())) {
      throw InvalidArgument("target label out of range");
    }
    result_.attack = std::move(name);
    result_.label = y;
    // bookkeeping for the report, not an attacker query
    const Tensor z = model.forward(x0).logits;
    result_.clean_logits.assign(z.data().begin(), z.data().end());
    check_finite(result_.clean_logits);
  }

  // Forward (and optionally backward) at x; counts one model query.
  Probe probe(const Tensor& x, std::optional<Objective> objective) {
    ++result_.queries;
    Probe p;
    if (!objective) {
      const ForwardResult fr = model_.forward(x);
      p.logits.assign(fr.logits.data().begin(), fr.logits.data().end());
      check_finite(p.logits);
      return p;
    }
    Tensor xv = x.clone();
    xv.set_requires_grad(true);
    Tape tape;
    TapeScope scope(tape);
    const ForwardResult fr = model_.forward(xv);
    p.logits.assign(fr.logits.data().begin(), fr.logits.data().end());
    check_finite(p.logits);
    if (fr.feature_map.numel() > 0) p.feature_map = fr.feature_map.clone();
    Tensor loss;
    if (*objective == Objective::kCrossEntropy) {
      const int label = cfg_.target ? *cfg_.target : y_;
      loss = cross_entropy(fr.logits, std::span<const int>(&label, 1));
      if (cfg_.target) loss = mul(loss, Real(-1));
    } else {
      loss = loss_J(fr.logits, y_, xv, x0_, cfg_.kappa, cfg_.c2, cfg_.target);
    }
    tape.backward(loss);
    p.gradient = xv.grad_tensor();
    return p;
  }

  // Records the iterate's logits; returns true when it already fools the model.
  bool observe(const std::vector<Real>& logits) {
    result_.logits_trace.push_back(logits);
    return is_success(logits, y_, cfg_.target);
  }

  AttackResult finish(const Tensor& x_star, int iterations, bool success) {
    result_.x_star = x_star;
    result_.iterations_used = iterations;
    result_.success = success;
    result_.predicted = argmax(result_.logits_trace.back());
    Tensor rho(x_star.shape());
    auto rd = rho.mutable_data();
    for (std::size_t i = 0; i < rd.size(); ++i) rd[i] = x_star.data()[i] - x0_.data()[i];
    result_.perturbation = rho;
    return std::move(result_);
  }

  AttackResult& result() { return result_; }
  const AttackConfig& cfg() const { return cfg_; }
  const Tensor& x0() const { return x0_; }
  int label() const { return y_; }

 private:
  static void check_finite(const std::vector<Real>& logits) {
    for (Real v : logits) {
      if (!std::isfinite(v)) throw NumericError("model produced non-finite logits");
    }
  }

  const Model& model_;
  Tensor x0_;
  int y_;
  const AttackConfig& cfg_;
  AttackResult result_;
};

Tensor squeeze_batch(const Tensor& t) { return t.reshaped_copy(Shape{t.size(1), t.size(2), t.size(3)}); }

// Shared loop of the sign-gradient family (BIM, PGD, MI-FGSM).
AttackResult sign_iterations(Session& s, Tensor x, bool momentum) {
  const AttackConfig& cfg = s.cfg();
  const Real alpha = cfg.step_size();
  const auto x0 = s.x0().data();
  std::vector<Real> g(x.numel(), Real(0));
  for (int i = 0;; ++i) {
    const bool last = i == cfg.iterations;
    Probe p = s.probe(x, last ? std::nullopt : std::optional(Objective::kCrossEntropy));
    if (s.observe(p.logits)) {
      if (momentum) s.result().momentum = Tensor(x.shape(), g);
      return s.finish(x, i, true);
    }
    if (last) break;
    const auto grad = p.gradient.data();
    if (momentum) {
      const double norm = l1(grad);
      for (std::size_t k = 0; k < g.size(); ++k) {
        g[k] = cfg.mu * g[k] + (norm > 0 ? static_cast<Real>(grad[k] / norm) : Real(0));
      }
    } else {
      std::copy(grad.begin(), grad.end(), g.begin());
    }
    if (cfg.record_trace) s.result().records.push_back({squeeze_batch(p.gradient), Tensor()});
    Tensor next = x.clone();
    auto nd = next.mutable_data();
    for (std::size_t k = 0; k < nd.size(); ++k) nd[k] += alpha * sgn(g[k]);
    project_to_budget(nd, x0, cfg.epsilon);
    x = next;
  }
  if (momentum) s.result().momentum = Tensor(x.shape(), g);
  return s.finish(x, cfg.iterations, false);
}

void scale_step(std::vector<Real>& step, const std::vector<Real>& g, Real alpha, StepNorm norm) {
  double scale = alpha;
  if (norm == StepNorm::kLinf) {
    double mx = 0;
    for (Real v : g) mx = std::max(mx, std::abs(static_cast<double>(v)));
    scale = mx > 0 ? alpha / mx : 0.0;
  } else if (norm == StepNorm::kL2) {
    double ss = 0;
    for (Real v : g) ss += static_cast<double>(v) * v;
    scale = ss > 0 ? alpha * std::sqrt(static_cast<double>(g.size()) / ss) : 0.0;
  }
  for (std::size_t k = 0; k < g.size(); ++k) step[k] = static_cast<Real>(scale * g[k]);
}

}  // namespace

Tensor loss_J(const Tensor& logits, int y, const Tensor& x, const Tensor& x0, Real kappa, Real c2,
              std::optional<int> target) {
  const std::size_t k = logits.numel();
  if (k < 2) throw InvalidArgument("loss_J needs at least two classes");
  if (logits.rank() > 2 || (logits.rank() == 2 && logits.size(0) != 1)) {
    throw InvalidShape("loss_J takes logits of one example");
  }
  if (y < 0 || static_cast<std::size_t>(y) >= k) throw InvalidArgument("loss_J: label out of range");
  if (x.shape() != x0.shape()) throw InvalidShape("loss_J: x and x0 shapes differ");
  const auto z = logits.data();
  Tensor margin;
  if (target) {
    if (*target < 0 || static_cast<std::size_t>(*target) >= k) throw InvalidArgument("loss_J: target out of range");
    const std::size_t other = runner_up(z, static_cast<std::size_t>(*target));
    margin = sub(pick(logits, other), pick(logits, static_cast<std::size_t>(*target)));
  } else {
    const std::size_t other = runner_up(z, static_cast<std::size_t>(y));
    margin = sub(pick(logits, static_cast<std::size_t>(y)), pick(logits, other));
  }
  const Tensor hinge = clamp(margin, -kappa, std::numeric_limits<Real>::max());
  const Tensor d = sub(x, x0);
  return add(hinge, mul(sum(mul(d, d)), c2));
}

AttackResult fgsm(const Model& model, const Tensor& x, int y, const AttackConfig& cfg) {
  Session s(model, x, y, cfg, "fgsm");
  Probe p = s.probe(x, Objective::kCrossEntropy);
  if (s.observe(p.logits)) return s.finish(x.clone(), 0, true);
  if (cfg.record_trace) s.result().records.push_back({squeeze_batch(p.gradient), Tensor()});
  Tensor next = x.clone();
  auto nd = next.mutable_data();
  const auto grad = p.gradient.data();
  for (std::size_t k = 0; k < nd.size(); ++k) nd[k] += cfg.epsilon * sgn(grad[k]);
  project_to_budget(nd, x.data(), cfg.epsilon);
  const bool ok = s.observe(s.probe(next, std::nullopt).logits);
  return s.finish(next, 1, ok);
}

AttackResult bim(const Model& model, const Tensor& x, int y, const AttackConfig& cfg) {
  Session s(model, x, y, cfg, "bim");
  return sign_iterations(s, x.clone(), false);
}

AttackResult pgd(const Model& model, const Tensor& x, int y, const AttackConfig& cfg) {
  Session s(model, x, y, cfg, "pgd");
  Tensor start = x.clone();
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  auto sd = start.mutable_data();
  for (auto& v : sd) v += static_cast<Real>(cfg.epsilon * dist(rng));
  project_to_budget(sd, x.data(), cfg.epsilon);
  return sign_iterations(s, start, false);
}

AttackResult mi_fgsm(const Model& model, const Tensor& x, int y, const AttackConfig& cfg) {
  Session s(model, x, y, cfg, "mi-fgsm");
  return sign_iterations(s, x.clone(), true);
}

AttackResult finefool(const Model& model, const Tensor& x, int y, const AttackConfig& cfg) {
  if (!model.feature_tap()) throw InvalidArgument("finefool needs a model with a feature tap");
  Session s(model, x, y, cfg, "finefool");
  const Real alpha = cfg.step_size();
  const Tensor image = squeeze_batch(x);
  const auto x0 = x.data();
  std::vector<Real> g(x.numel(), Real(0));
  std::vector<Real> step(x.numel());
  Tensor cur = x.clone();
  for (int i = 0;; ++i) {
    const bool last = i == cfg.iterations;
    Probe p = s.probe(cur, last ? std::nullopt : std::optional(Objective::kMargin));
    if (s.observe(p.logits)) {
      s.result().momentum = Tensor(x.shape(), g);
      return s.finish(cur, i, true);
    }
    if (last) break;
    const Tensor grad = squeeze_batch(p.gradient);
    const AttentionMap map = compute_attention(image, squeeze_batch(p.feature_map));
    Tensor shaped;
    try {
      shaped = shape_perturbation(grad, map);
    } catch (const ZeroGradient&) {
      s.result().diagnostic = "zero gradient at iteration " + std::to_string(i);
      s.result().momentum = Tensor(x.shape(), g);
      return s.finish(cur, i, false);
    }
    if (cfg.record_trace) s.result().records.push_back({grad, map.weights});
    const auto sh = shaped.data();
    for (std::size_t k = 0; k < g.size(); ++k) g[k] = cfg.mu * g[k] + sh[k];
    scale_step(step, g, alpha, cfg.finefool_step);
    Tensor next = cur.clone();
    auto nd = next.mutable_data();
    // descend J
    for (std::size_t k = 0; k < nd.size(); ++k) nd[k] -= step[k];
    project_to_budget(nd, x0, cfg.epsilon);
    cur = next;
  }
  s.result().momentum = Tensor(x.shape(), g);
  return s.finish(cur, cfg.iterations, false);
}

AttackResult deepfool(const Model& model, const Tensor& x, int y, const AttackConfig& cfg) {
  Session s(model, x, y, cfg, "deepfool");
  const std::size_t k = model.num_classes();
  const std::size_t n = x.numel();
  const auto x0 = x.data();
  std::vector<double> r_total(n, 0.0);
  Tensor cur = x.clone();

  // Gradient of logit `cls` at `at`; one query each.
  auto logit_gradient = [&](const Tensor& at, std::size_t cls) {
    ++s.result().queries;
    Tensor xv = at.clone();
    xv.set_requires_grad(true);
    Tape tape;
    TapeScope scope(tape);
    const Tensor z = model.forward(xv).logits;
    tape.backward(pick(z, cls));
    return xv.grad_tensor();
  };

  const int max_iter = cfg.deepfool_max_iterations;
  for (int i = 0;; ++i) {
    Probe p = s.probe(cur, std::nullopt);
    if (s.observe(p.logits)) return s.finish(cur, i, true);
    if (i == max_iter) break;

    const std::size_t ref = cfg.target ? runner_up(p.logits, static_cast<std::size_t>(*cfg.target))
                                       : static_cast<std::size_t>(y);
    std::vector<std::size_t> candidates;
    if (cfg.target) {
      candidates.push_back(static_cast<std::size_t>(*cfg.target));
    } else {
      for (std::size_t c = 0; c < k; ++c) {
        if (c != ref) candidates.push_back(c);
      }
    }
    const Tensor g_ref = logit_gradient(cur, ref);
    double best_dist = std::numeric_limits<double>::infinity();
    std::vector<double> best_w;
    double best_f = 0;
    for (std::size_t c : candidates) {
      const Tensor g_c = logit_gradient(cur, c);
      std::vector<double> w(n);
      double ww = 0;
      for (std::size_t j = 0; j < n; ++j) {
        w[j] = static_cast<double>(g_c.data()[j]) - static_cast<double>(g_ref.data()[j]);
        ww += w[j] * w[j];
      }
      const double f = static_cast<double>(p.logits[c]) - static_cast<double>(p.logits[ref]);
      if (ww == 0) continue;
      const double dist = std::abs(f) / std::sqrt(ww);
      if (dist < best_dist) {
        best_dist = dist;
        best_w = std::move(w);
        best_f = f;
      }
    }
    if (best_w.empty()) {
      s.result().diagnostic = "zero gradient at iteration " + std::to_string(i);
      return s.finish(cur, i, false);
    }
    double ww = 0;
    for (double v : best_w) ww += v * v;
    const double coef = std::abs(best_f) / ww;
    for (std::size_t j = 0; j < n; ++j) r_total[j] += coef * best_w[j];
    s.result().step_distances.push_back(best_dist);

    Tensor next = x.clone();
    auto nd = next.mutable_data();
    const double scale = 1.0 + static_cast<double>(cfg.deepfool_overshoot);
    for (std::size_t j = 0; j < n; ++j) nd[j] = static_cast<Real>(static_cast<double>(x0[j]) + scale * r_total[j]);
    project_to_budget(nd, x0, cfg.epsilon);
    cur = next;
  }
  return s.finish(cur, max_iter, false);
}

AttackResult cw(const Model& model, const Tensor& x, int y, const AttackConfig& cfg) {
  Session s(model, x, y, cfg, "cw");
  const std::size_t n = x.numel();
  const auto x0 = x.data();
  // x' = lo + (hi - lo)(tanh(w) + 1)/2 keeps every candidate inside the
  // ε-ball and [0,1].
  std::vector<Real> lo(n), hi(n), w0(n);
  for (std::size_t j = 0; j < n; ++j) {
    lo[j] = std::max(Real(0), x0[j] - cfg.epsilon);
    hi[j] = std::min(Real(1), x0[j] + cfg.epsilon);
    const double range = static_cast<double>(hi[j] - lo[j]);
    const double unit = range > 0 ? 2.0 * static_cast<double>(x0[j] - lo[j]) / range - 1.0 : 0.0;
    w0[j] = static_cast<Real>(std::atanh(std::clamp(unit, -1.0 + 1e-4, 1.0 - 1e-4)));
  }
  Tensor w(x.shape(), w0);
  Tensor lo_t(x.shape(), lo);
  Tensor half_range(x.shape());
  for (std::size_t j = 0; j < n; ++j) half_range.mutable_data()[j] = (hi[j] - lo[j]) / 2;

  AdamMoments moments = AdamMoments::like(w);
  const AdamOptions adam{cfg.cw_learning_rate};
  Tensor best;
  double best_l2 = std::numeric_limits<double>::infinity();
  std::vector<Real> best_logits;
  Tensor cur;
  for (int step = 0; step < cfg.cw_steps; ++step) {
    w.zero_grad();
    w.set_requires_grad(true);
    Tape tape;
    TapeScope scope(tape);
    const Tensor xp = add(lo_t, mul(add(tanh(w), Real(1)), half_range));
    ++s.result().queries;
    const Tensor z = model.forward(xp).logits;
    std::vector<Real> logits(z.data().begin(), z.data().end());
    for (Real v : logits) {
      if (!std::isfinite(v)) throw NumericError("model produced non-finite logits");
    }
    s.result().logits_trace.push_back(logits);
    cur = xp.clone();
    if (is_success(logits, y, cfg.target)) {
      double l2 = 0;
      for (std::size_t j = 0; j < n; ++j) {
        const double d = static_cast<double>(cur.data()[j]) - static_cast<double>(x0[j]);
        l2 += d * d;
      }
      if (l2 < best_l2) {
        best_l2 = l2;
        best = cur;
        best_logits = logits;
      }
    }
    const Tensor loss = loss_J(z, y, xp, x, cfg.kappa, cfg.c2, cfg.target);
    tape.backward(loss);
    const std::vector<Real> grad = w.grad_buffer();
    w.set_requires_grad(false);
    adam_step(w, grad, moments, adam);
  }
  if (best.numel() > 0) {
    s.result().logits_trace.push_back(best_logits);
    return s.finish(best, cfg.cw_steps, true);
  }
  s.result().logits_trace.push_back(s.result().logits_trace.back());
  return s.finish(cur, cfg.cw_steps, false);
}

AttackResult run_attack(AttackKind kind, const Model& model, const Tensor& x, int y, const AttackConfig& cfg) {
  switch (kind) {
    case AttackKind::kFgsm: return fgsm(model, x, y, cfg);
    case AttackKind::kBim: return bim(model, x, y, cfg);
    case AttackKind::kPgd: return pgd(model, x, y, cfg);
    case AttackKind::kMiFgsm: return mi_fgsm(model, x, y, cfg);
    case AttackKind::kDeepFool: return deepfool(model, x, y, cfg);
    case AttackKind::kCw: return cw(model, x, y, cfg);
    case AttackKind::kFineFool: return finefool(model, x, y, cfg);
  }
  throw InvalidArgument("unknown attack kind");
}

bool confirm_success(const Model& model, const AttackResult& result, const AttackConfig& cfg) {
  const Tensor z = model.forward(result.x_star).logits;
  return is_success(z.data(), result.label, cfg.target);
}

std::vector<AttackResult> attack_dataset(AttackKind kind, const Model& model, const Dataset& data,
                                         const AttackConfig& cfg, std::size_t workers) {
  std::vector<AttackResult> results(data.size());
  parallel_for(data.size(), workers, [&](std::size_t i) {
    AttackConfig local = cfg;
    std::seed_seq seq{static_cast<std::uint32_t>(cfg.seed), static_cast<std::uint32_t>(cfg.seed >> 32),
                      static_cast<std::uint32_t>(i)};
    std::uint32_t mixed[2];
    seq.generate(mixed, mixed + 2);
    local.seed = (static_cast<std::uint64_t>(mixed[0]) << 32) | mixed[1];
    results[i] = run_attack(kind, model, data.image(i), data.labels[i], local);
  });
  return results;
}

}  // namespace ADVKIT_PRECISION_NS
}  // namespace advkit
