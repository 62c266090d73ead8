#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "advkit/attention.hpp"
#include "advkit/dataset.hpp"
#include "advkit/model.hpp"
#include "advkit/tensor.hpp"

namespace advkit {
inline namespace ADVKIT_PRECISION_NS {

enum class AttackKind { kFgsm, kBim, kPgd, kMiFgsm, kDeepFool, kCw, kFineFool };

std::string attack_name(AttackKind kind);
/// Accepts "fgsm", "bim", "pgd", "mi-fgsm", "deepfool", "cw", "finefool".
AttackKind parse_attack(const std::string& name);
std::vector<AttackKind> all_attacks();

/// How FineFool turns the accumulated velocity g into a pixel step.
enum class StepNorm {
  /// ρ = α·g exactly as accumulated.
  kRaw,
  /// ρ = α·g / max|g|: the most-weighted pixel moves by α.
  kLinf,
  /// ρ = α·sqrt(n)·g / ||g||₂: same L2 length as an n-pixel sign step of size α.
  kL2,
};

std::string step_norm_name(StepNorm norm);
StepNorm parse_step_norm(const std::string& name);

struct AttackConfig {
  Real epsilon = Real(0.1);
  /// Step length; defaults to epsilon / iterations.
  std::optional<Real> alpha;
  int iterations = 10;
  Real mu = Real(1);
  Real kappa = Real(0);
  std::optional<int> target;
  Real c2 = Real(0.01);
  std::uint64_t seed = 0;

  StepNorm finefool_step = StepNorm::kL2;
  int cw_steps = 100;
  Real cw_learning_rate = Real(0.05);
  Real deepfool_overshoot = Real(0.02);
  int deepfool_max_iterations = 50;

  /// Keep per-iteration gradients and weights in the result.
  bool record_trace = false;

  Real step_size() const { return alpha ? *alpha : epsilon / static_cast<Real>(iterations); }
  /// Throws InvalidArgument on out-of-range hyper-parameters.
  void validate() const;
};

/// Gradient (and spatial weight, for FineFool) that fed one momentum update.
struct IterationRecord {
  Tensor gradient;  // [C,H,W]
  Tensor weight;    // [1,H,W] attention map; empty for unweighted updates
};

struct AttackResult {
  std::string attack;
  Tensor x_star;        // [1,C,H,W]
  Tensor perturbation;  // x_star - x
  int label = 0;
  int predicted = 0;
  bool success = false;
  int iterations_used = 0;
  int queries = 0;
  /// Logits of the unperturbed input. PGD's random start and C&W's first
  /// iterate differ from it, so the trace alone does not tell.
  std::vector<Real> clean_logits;
  /// Logits of every evaluated iterate, in order.
  std::vector<std::vector<Real>> logits_trace;
  /// Final velocity for momentum attacks.
  Tensor momentum;
  std::vector<IterationRecord> records;
  /// DeepFool: minimal linearised boundary distance of each step.
  std::vector<double> step_distances;
  std::string diagnostic;
};

/// max(-κ, Z_y - max_{j≠y} Z_j) + c2·||x - x0||², or for a target t
/// max(-κ, max_{j≠t} Z_j - Z_t) + c2·||x - x0||². Attackers minimise it.
/// Logits are [K] or [1,K]; throws InvalidArgument when K < 2.
Tensor loss_J(const Tensor& logits, int y, const Tensor& x, const Tensor& x0, Real kappa, Real c2,
              std::optional<int> target = std::nullopt);

/// x and every returned iterate are [1,C,H,W]; y is the true label.
AttackResult fgsm(const Model& model, const Tensor& x, int y, const AttackConfig& cfg);
AttackResult bim(const Model& model, const Tensor& x, int y, const AttackConfig& cfg);
AttackResult pgd(const Model& model, const Tensor& x, int y, const AttackConfig& cfg);
AttackResult mi_fgsm(const Model& model, const Tensor& x, int y, const AttackConfig& cfg);
AttackResult deepfool(const Model& model, const Tensor& x, int y, const AttackConfig& cfg);
AttackResult cw(const Model& model, const Tensor& x, int y, const AttackConfig& cfg);
AttackResult finefool(const Model& model, const Tensor& x, int y, const AttackConfig& cfg);

AttackResult run_attack(AttackKind kind, const Model& model, const Tensor& x, int y, const AttackConfig& cfg);

/// Recomputes the verdict for `result.x_star` with a fresh forward pass.
bool confirm_success(const Model& model, const AttackResult& result, const AttackConfig& cfg);

/// Attacks every sample of `data` on a bounded worker pool. Results are in
/// sample order and independent of the worker count; sample i uses seed
/// derived from (cfg.seed, i).
std::vector<AttackResult> attack_dataset(AttackKind kind, const Model& model, const Dataset& data,
                                         const AttackConfig& cfg, std::size_t workers = 1);

/// Euclidean projection onto the ε-ball around x0 intersected with [0,1].
void project_to_budget(std::span<Real> x, std::span<const Real> x0, Real epsilon);

}  // namespace ADVKIT_PRECISION_NS
}  // namespace advkit
