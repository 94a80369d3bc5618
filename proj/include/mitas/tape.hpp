// Reverse-mode differentiation tape.
//
// Primitives record a backward closure in forward order; backward() replays
// them in reverse, accumulating into Tensor::grad. A tape is confined to one
// thread and to one backward pass; running forward with a null tape performs
// no recording and is safe for concurrent use over frozen weights.
#pragma once

#include <functional>
#include <stdexcept>
#include <vector>

#include "mitas/tensor.hpp"

namespace mitas {

template <typename S>
class Tape {
 public:
  void record(std::function<void()> backward_fn) {
    ops_.push_back(std::move(backward_fn));
  }

  // Seeds d(loss)/d(loss) = 1 and replays the recorded primitives in reverse
  // order. A second call without reset() is rejected: gradients would
  // double-accumulate.
  void backward(const TensorPtr<S>& loss) {
    if (!loss || !loss->is_scalar()) {
      throw std::invalid_argument("backward: loss must be a scalar tensor");
    }
    if (consumed_) {
      throw std::logic_error("backward: tape already consumed; reset() before reusing");
    }
    if (!loss->requires_grad) {
      throw std::invalid_argument("backward: loss does not require grad (was it recorded on this tape?)");
    }
    consumed_ = true;
    loss->grad.assign(loss->data.size(), S(0));
    loss->grad[0] = S(1);
    for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
  }

  void reset() {
    ops_.clear();
    consumed_ = false;
  }

  size_t size() const { return ops_.size(); }
  bool consumed() const { return consumed_; }

 private:
  std::vector<std::function<void()>> ops_;
  bool consumed_ = false;
};

}  // namespace mitas
