#pragma once

// Reverse-mode autodiff tape.
//
// Operations whose inputs live on a tape append a node holding a backward
// closure. backward() walks nodes in exact reverse recording order and adds
// the resulting gradients into a persistent store; repeated calls accumulate
// until reset_grads(). Nodes never reached by a backward pass have no entry.

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

#include "szoo/tensor.hpp"

namespace szoo {

/// Backward closure: given the output gradient, fill grads[i] for every input
/// with needs[i] set. Entries left undefined are treated as zero.
using BackwardFn =
    std::function<void(const Tensor& grad_out, std::span<Tensor> grads, std::span<const bool> needs)>;

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Registers a leaf node; returned tensor shares storage with t.
  Tensor watch(const Tensor& t);

  /// Records an operation. Returns `out` linked to the new node if any input
  /// is on this tape; otherwise returns `out` unchanged and drops `fn`.
  Tensor record(Tensor out, std::initializer_list<const Tensor*> inputs, BackwardFn fn);
  Tensor record(Tensor out, const std::vector<const Tensor*>& inputs, BackwardFn fn);

  /// Seeds d(loss)/d(loss) = 1 and propagates. loss must be a scalar on this tape.
  void backward(const Tensor& loss);

  /// Accumulated gradient for a tensor's node, if any backward pass reached it.
  std::optional<Tensor> grad(const Tensor& t) const;
  bool has_grad(const Tensor& t) const;
  void reset_grads() { grads_.clear(); }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    std::vector<std::int64_t> inputs;  // node indices, -1 for constants
    BackwardFn fn;
    Shape shape;
    Precision precision = Precision::f32;
  };
  std::vector<Node> nodes_;
  std::unordered_map<std::uint32_t, Tensor> grads_;
};

/// Finds the tape shared by the given tensors (nullptr if none is taped).
/// Throws if tensors belong to different tapes.
Tape* common_tape(std::initializer_list<const Tensor*> ts);
Tape* common_tape(const std::vector<const Tensor*>& ts);

}  // namespace szoo
