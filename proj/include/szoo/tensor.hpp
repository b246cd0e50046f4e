#pragma once

// Dense n-dimensional tensors with an optional handle onto an autodiff tape.
//
// Storage is shared between shallow copies (like a reference-counted blob);
// use clone() when an independent copy is required. Two precisions are
// supported: f32 for the production path and f64 for gradient verification.

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <new>
#include <variant>
#include <vector>

namespace szoo {

enum class Precision : std::uint8_t { f32, f64 };

const char* to_string(Precision p);
Precision parse_precision(const std::string& s);

using Shape = std::vector<std::int64_t>;

std::int64_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

/// Raised for any shape or argument contract violation in the tensor layer.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class Tape;

struct NodeRef {
  Tape* tape = nullptr;
  std::uint32_t index = 0;
  explicit operator bool() const { return tape != nullptr; }
};

/// 64-byte aligned allocation. Vectorized kernels peel a different number of
/// leading elements depending on alignment, which changes summation order;
/// fixed alignment keeps results independent of heap addresses.
template <typename T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};
  AlignedAllocator() = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}
  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlign); }
  template <typename U>
  bool operator==(const AlignedAllocator<U>&) const noexcept { return true; }
};

template <typename T>
using AlignedVector = std::vector<T, AlignedAllocator<T>>;

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, Precision p = Precision::f32);

  static Tensor zeros(Shape shape, Precision p = Precision::f32) { return Tensor(std::move(shape), p); }
  static Tensor full(Shape shape, double value, Precision p = Precision::f32);
  static Tensor from(Shape shape, std::vector<float> values);
  static Tensor from(Shape shape, std::vector<double> values);
  /// Values given in f64 and stored at the requested precision.
  static Tensor from(Shape shape, std::initializer_list<double> values, Precision p = Precision::f32);
  static Tensor scalar(double v, Precision p = Precision::f32) { return full({}, v, p); }

  bool defined() const { return static_cast<bool>(storage_); }
  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  /// Extent along an axis, negative axes count from the back.
  std::int64_t dim(int axis) const;
  std::int64_t numel() const { return shape_numel(shape_); }
  Precision precision() const { return precision_; }
  bool is_f64() const { return precision_ == Precision::f64; }

  template <typename T>
  std::span<T> data();
  template <typename T>
  std::span<const T> data() const;

  double item() const;
  double at(std::int64_t flat) const;
  void set(std::int64_t flat, double v);
  std::vector<double> to_vector() const;

  /// Deep copy without tape linkage.
  Tensor clone() const;
  /// Shares storage, drops tape linkage.
  Tensor detach() const;
  Tensor to(Precision p) const;
  /// Shallow view with a new shape; the element count must match.
  Tensor view(Shape shape) const;

  /// Overwrite element values from another tensor of the same shape (any precision).
  void copy_from(const Tensor& other);
  void fill(double v);

  NodeRef node() const { return node_; }
  bool on_tape() const { return static_cast<bool>(node_); }
  void set_node(NodeRef n) { node_ = n; }

  bool same_storage(const Tensor& o) const { return storage_ == o.storage_; }

 private:
  using Storage = std::variant<AlignedVector<float>, AlignedVector<double>>;
  Shape shape_;
  Precision precision_ = Precision::f32;
  std::shared_ptr<Storage> storage_;
  NodeRef node_;
};

/// Bitwise equality of shape, precision and payload.
bool bit_equal(const Tensor& a, const Tensor& b);
/// Largest |a - b| over all elements; shapes must match.
double max_abs_diff(const Tensor& a, const Tensor& b);

/// Calls fn.template operator()<T>() with T = float or double.
template <typename Fn>
decltype(auto) dispatch(Precision p, Fn&& fn) {
  if (p == Precision::f64) return fn.template operator()<double>();
  return fn.template operator()<float>();
}

template <typename T>
std::span<T> Tensor::data() {
  if (!storage_) throw ShapeError("access to undefined tensor");
  auto* v = std::get_if<AlignedVector<T>>(storage_.get());
  if (!v) throw ShapeError("tensor precision does not match requested element type");
  return {v->data(), v->size()};
}

template <typename T>
std::span<const T> Tensor::data() const {
  if (!storage_) throw ShapeError("access to undefined tensor");
  const auto* v = std::get_if<AlignedVector<T>>(storage_.get());
  if (!v) throw ShapeError("tensor precision does not match requested element type");
  return {v->data(), v->size()};
}

}  // namespace szoo
