#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "advkit/dataset.hpp"
#include "advkit/model.hpp"

namespace advkit {
inline namespace ADVKIT_PRECISION_NS {

struct TrainOptions {
  int epochs = 4;
  Real learning_rate = Real(2e-3);
  std::size_t batch_size = 32;
  std::uint64_t seed = 1;
};

struct EpochStats {
  int epoch = 0;
  double mean_loss = 0;
  double accuracy = 0;  // fraction of training samples classified correctly during the epoch
};

struct TrainLog {
  std::vector<EpochStats> epochs;
};

/// Adam on mean cross-entropy with per-epoch shuffling from `seed`.
/// Parameters are updated in place; deterministic for a fixed seed.
/// Throws TrainingFailure naming the epoch when the loss becomes non-finite.
TrainLog train(Model& model, const Dataset& data, const TrainOptions& opt,
               const std::function<void(const EpochStats&)>& on_epoch = {});

/// Fraction of `data` the model labels correctly.
double accuracy(const Model& model, const Dataset& data, std::size_t batch_size = 256);

}  // namespace ADVKIT_PRECISION_NS
}  // namespace advkit
