#include "advkit/tape.hpp"

#include <cmath>

namespace advkit {
inline namespace ADVKIT_PRECISION_NS {

namespace {
thread_local Tape* g_active_tape = nullptr;
}

Tape* Tape::active() { return g_active_tape; }

TapeScope::TapeScope(Tape& tape) : previous_(g_active_tape) { g_active_tape = &tape; }

TapeScope::~TapeScope() { g_active_tape = previous_; }

Tape* recording_tape(std::initializer_list<const Tensor*> inputs) {
  Tape* tape = Tape::active();
  if (tape == nullptr) return nullptr;
  for (const Tensor* t : inputs) {
    if (t->requires_grad()) return tape;
  }
  return nullptr;
}

void Tape::record(Tensor output, std::vector<Tensor> inputs, Adjoint adjoint) {
  if (consumed_) throw StateError("cannot record onto a consumed tape; call reset() first");
  output.set_requires_grad(true);
  nodes_.push_back(Node{std::move(output), std::move(inputs), std::move(adjoint)});
}

void Tape::backward(const Tensor& loss) {
  if (consumed_) throw StateError("backward already ran on this tape");
  if (loss.numel() != 1) {
    throw InvalidArgument("backward needs a scalar loss, got shape " + shape_str(loss.shape()));
  }
  if (!loss.requires_grad()) {
    throw InvalidArgument("loss does not depend on any tensor that requires grad");
  }
  consumed_ = true;

  Tensor seed = loss;
  seed.grad_buffer().assign(1, Real(1));
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    if (!it->output.has_grad()) continue;
    it->adjoint(it->output.grad());
  }

  for (const auto& node : nodes_) {
    for (const auto& in : node.inputs) {
      for (Real g : in.grad()) {
        if (!std::isfinite(g)) throw NumericError("non-finite gradient produced by backward");
      }
    }
  }
  nodes_.clear();
}

void Tape::reset() {
  nodes_.clear();
  consumed_ = false;
}

}  // namespace ADVKIT_PRECISION_NS
}  // namespace advkit
