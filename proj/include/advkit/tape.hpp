#pragma once

#include <functional>
#include <span>
#include <vector>

#include "advkit/tensor.hpp"

namespace advkit {
inline namespace ADVKIT_PRECISION_NS {

/// Ordered record of differentiable operations. Operations record onto the
/// tape that is active on the calling thread (see TapeScope) whenever one of
/// their inputs requires grad. A tape supports exactly one backward pass;
/// reset() makes it reusable.
class Tape {
 public:
  using Adjoint = std::function<void(std::span<const Real> output_grad)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  void record(Tensor output, std::vector<Tensor> inputs, Adjoint adjoint);

  /// Propagates adjoints from a scalar loss to every recorded tensor that
  /// requires grad. Throws InvalidArgument for non-scalar losses and
  /// StateError when the tape was already consumed.
  void backward(const Tensor& loss);

  void reset();
  bool consumed() const { return consumed_; }
  std::size_t size() const { return nodes_.size(); }

  /// Tape active on this thread, or nullptr.
  static Tape* active();

 private:
  friend class TapeScope;

  struct Node {
    Tensor output;
    std::vector<Tensor> inputs;
    Adjoint adjoint;
  };
  std::vector<Node> nodes_;
  bool consumed_ = false;
};

/// Makes a tape active on the current thread for the scope's lifetime.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

/// Returns the active tape if any of `inputs` requires grad, else nullptr.
Tape* recording_tape(std::initializer_list<const Tensor*> inputs);

}  // namespace ADVKIT_PRECISION_NS
}  // namespace advkit
