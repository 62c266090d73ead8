#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "advkit/attacks.hpp"
#include "advkit/netpbm.hpp"
#include "advkit/tensor.hpp"

namespace advkit {
inline namespace ADVKIT_PRECISION_NS {

/// mean_rho on the [0,1] scale; l2 and linf on the 0-255 scale; l0 is the
/// percentage of pixels where any channel moved by more than 1/255.
struct PerturbationMetrics {
  double mean_rho = 0;
  double l0_percent = 0;
  double l2 = 0;
  double linf = 0;
};

/// rho is [C,H,W] or [1,C,H,W].
PerturbationMetrics perturbation_metrics(const Tensor& rho);
/// Throws InvalidShape when x and x_star differ in shape.
PerturbationMetrics compute_metrics(const Tensor& x, const Tensor& x_star);
PerturbationMetrics mean_metrics(std::span<const PerturbationMetrics> all);

/// True when the clean logits pick the true label.
bool clean_correct(const AttackResult& r);
/// Percentage of successful attacks among clean-correct results; 0 when none.
double asr(std::span<const AttackResult> results);
/// Percentage of clean-correct results still classified as their label.
double accuracy_under_attack(std::span<const AttackResult> results);

struct ExperimentReport {
  std::string model;
  std::optional<std::string> substitute;
  std::string attack;
  std::optional<std::string> defense;
  PerturbationMetrics metrics;
  double asr = 0;
  double accuracy = 0;
  std::size_t samples = 0;
};

/// Aggregates the clean-correct results of one attack run.
ExperimentReport summarize(const std::string& model, const std::string& attack,
                           std::span<const AttackResult> results);

/// One parsed row of the results table.
struct TableRow {
  std::string model;
  std::string attack;
  double mean_rho = 0;
  double l0_percent = 0;
  double l2 = 0;
  double linf = 0;
  double asr = 0;
};

/// Columns: model, attack, mean_rho, l0_percent, l2, linf, asr.
std::string table_csv(std::span<const ExperimentReport> reports);
std::string table_markdown(std::span<const ExperimentReport> reports);
std::vector<TableRow> parse_table_csv(std::string_view text);

/// RFC-4180 field quoting and parsing (quoted fields may hold commas,
/// doubled quotes and line breaks).
std::string csv_field(std::string_view value);
std::string csv_line(const std::vector<std::string>& fields);
std::vector<std::vector<std::string>> parse_csv(std::string_view text);

/// iteration,logit_true,logit_adv where logit_adv is the target logit for a
/// targeted run and the best non-true logit otherwise.
std::string logits_curve_csv(const std::vector<std::vector<Real>>& trace, int label,
                             std::optional<int> target = std::nullopt);

/// Pixels of a [C,H,W] / [1,C,H,W] image in [0,1] as 8-bit (C must be 1 or 3).
Image8 to_image8(const Tensor& image);
/// |rho| magnified: byte = clamp(255 * 255 * |rho|, 0, 255), i.e. the
/// perturbation in 0-255 units times 255.
Image8 perturbation_image(const Tensor& rho);

}  // namespace ADVKIT_PRECISION_NS
}  // namespace advkit
