#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "advkit/attacks.hpp"
#include "advkit/dataset.hpp"
#include "advkit/defenses.hpp"
#include "advkit/report.hpp"
#include "advkit/train.hpp"

namespace advkit {
inline namespace ADVKIT_PRECISION_NS {

/// Everything a CLI command needs. Filled from defaults, then an optional
/// INI file, then command-line flags.
struct ExperimentSpec {
  std::filesystem::path dataset;
  /// "idx" or "cifar".
  std::string format = "idx";
  std::string model = "small-a";
  /// Target weights; transfer evaluates on every entry.
  std::vector<std::filesystem::path> weights;
  /// Transfer: models the adversarials are crafted on.
  std::vector<std::filesystem::path> substitutes;
  std::vector<AttackKind> attacks = all_attacks();
  AttackConfig attack;
  /// Filters evaluated by `defend` in addition to the undefended column.
  std::vector<DefenseConfig> defenses;
  TrainOptions train;
  std::size_t samples = 100;
  std::uint64_t seed = 0;
  std::filesystem::path out = "out";
  std::size_t workers = 1;
  /// Per-attack logits curves and images are written for this many samples.
  std::size_t artifacts = 5;
  bool attention_overlay = false;

  /// Throws InvalidArgument for a zero sample count or unknown format.
  void validate() const;
};

/// Reads an INI file with sections [data], [model], [train], [attack],
/// [defense] and [run] into `spec`; unknown keys are rejected.
void apply_config_file(ExperimentSpec& spec, const std::filesystem::path& path);
/// The effective configuration in the same INI layout.
std::string spec_to_ini(const ExperimentSpec& spec);

/// IDX (labels path derived from the images path) or CIFAR-10 binary.
Dataset load_dataset(const std::filesystem::path& path, const std::string& format);

/// Indices of the first `count` samples the model labels correctly.
std::vector<std::size_t> correctly_classified(const Model& model, const Dataset& data, std::size_t count);

struct AttackRun {
  AttackKind kind;
  std::vector<AttackResult> results;
  ExperimentReport report;
};

/// Runs each attack over every sample of `fixture`.
std::vector<AttackRun> evaluate_attacks(const Model& model, const std::string& model_id, const Dataset& fixture,
                                        const std::vector<AttackKind>& attacks, const AttackConfig& cfg,
                                        std::size_t workers);

struct DefenseCell {
  std::string attack;  // "clean" for the unattacked baseline
  std::string defense;
  double asr = 0;
  double accuracy = 0;
};

/// ASR and accuracy of adversarials (crafted on the undefended model) when
/// classified through `defense`. Only clean-correct results count.
DefenseCell evaluate_defense(const Model& model, const DefenseConfig& defense, const std::string& attack,
                             std::span<const AttackResult> results, std::optional<int> target = std::nullopt);

struct TransferCell {
  std::string substitute;
  std::string target;
  std::string attack;
  double asr = 0;
  std::size_t samples = 0;
  bool white_box = false;
};

std::string defense_csv(std::span<const DefenseCell> cells);
std::string transfer_csv(std::span<const TransferCell> cells);

TrainLog run_train(const ExperimentSpec& spec);
std::vector<ExperimentReport> run_attack(const ExperimentSpec& spec);
std::vector<TransferCell> run_transfer(const ExperimentSpec& spec);
std::vector<DefenseCell> run_defend(const ExperimentSpec& spec);
/// Writes one grid per sample: row 0 holds the clean image then each
/// adversarial, row 1 holds the attention map (or black) then each
/// magnified perturbation. Returns the written paths.
std::vector<std::filesystem::path> run_visualize(const ExperimentSpec& spec);

}  // namespace ADVKIT_PRECISION_NS
}  // namespace advkit
