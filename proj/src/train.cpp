#include "advkit/train.hpp"

#include <cmath>
#include <numeric>
#include <random>

#include "advkit/ops.hpp"
#include "advkit/optim.hpp"
#include "advkit/tape.hpp"

namespace advkit {
inline namespace ADVKIT_PRECISION_NS {

TrainLog train(Model& model, const Dataset& data, const TrainOptions& opt,
               const std::function<void(const EpochStats&)>& on_epoch) {
  if (data.size() == 0) throw InvalidArgument("cannot train on an empty dataset");
  if (opt.batch_size == 0) throw InvalidArgument("batch size must be positive");
  if (data.image_shape() != model.input_shape()) throw InvalidShape("dataset images do not match model input");

  TrainLog log;
  if (opt.epochs <= 0) return log;

  model.set_requires_grad(true);
  Adam adam(model.parameter_tensors(), AdamOptions{opt.learning_rate});
  std::mt19937_64 rng(opt.seed);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 1; epoch <= opt.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < order.size(); start += opt.batch_size) {
      const std::size_t count = std::min(opt.batch_size, order.size() - start);
      const std::vector<std::size_t> idx(order.begin() + start, order.begin() + start + count);
      const Dataset batch = data.select(idx);

      Tape tape;
      TapeScope scope(tape);
      adam.zero_grad();
      const Tensor logits = model.forward(batch.images).logits;
      const Tensor loss = cross_entropy(logits, batch.labels);
      if (!std::isfinite(loss.item())) {
        model.set_requires_grad(false);
        throw TrainingFailure(epoch, "loss is " + std::to_string(loss.item()));
      }
      tape.backward(loss);
      adam.step();

      loss_sum += static_cast<double>(loss.item()) * static_cast<double>(count);
      const std::size_t k = logits.size(1);
      for (std::size_t b = 0; b < count; ++b) {
        if (argmax(logits.data().subspan(b * k, k)) == batch.labels[b]) ++correct;
      }
    }
    EpochStats stats{epoch, loss_sum / static_cast<double>(data.size()),
                     static_cast<double>(correct) / static_cast<double>(data.size())};
    log.epochs.push_back(stats);
    if (on_epoch) on_epoch(stats);
  }
  adam.zero_grad();
  model.set_requires_grad(false);
  return log;
}

double accuracy(const Model& model, const Dataset& data, std::size_t batch_size) {
  if (data.size() == 0) return 0.0;
  std::size_t correct = 0;
  for (std::size_t start = 0; start < data.size(); start += batch_size) {
    const std::size_t count = std::min(batch_size, data.size() - start);
    const Dataset batch = data.subset(start, count);
    const auto pred = model.predict(batch.images);
    for (std::size_t i = 0; i < count; ++i) correct += pred[i] == batch.labels[i];
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

}  // namespace ADVKIT_PRECISION_NS
}  // namespace advkit
