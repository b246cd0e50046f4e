#pragma once

#include <initializer_list>
#include <utility>

#include "szoo/ops.hpp"

namespace szoo::detail {

/// Records `out` on the inputs' tape using the closure built by make(); the
/// closure is only constructed when some input is taped.
template <typename MakeFn>
Tensor finish(Tensor out, std::initializer_list<const Tensor*> inputs, MakeFn&& make) {
  Tape* tape = common_tape(inputs);
  if (!tape) return out;
  return tape->record(std::move(out), inputs, make());
}

inline void require_same_precision(const Tensor& a, const Tensor& b, const char* op) {
  if (a.precision() != b.precision())
    throw ShapeError(std::string(op) + ": precision mismatch (" + to_string(a.precision()) + " vs " +
                     to_string(b.precision()) + ")");
}

inline int normalize_axis(int axis, std::size_t rank, const char* op) {
  const int r = static_cast<int>(rank);
  const int a = axis < 0 ? axis + r : axis;
  if (a < 0 || a >= r) throw ShapeError(std::string(op) + ": axis " + std::to_string(axis) + " out of range");
  return a;
}

}  // namespace szoo::detail
