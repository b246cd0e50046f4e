#include "szoo/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>

namespace szoo {

const char* to_string(Precision p) { return p == Precision::f64 ? "f64" : "f32"; }

Precision parse_precision(const std::string& s) {
  if (s == "f32") return Precision::f32;
  if (s == "f64") return Precision::f64;
  throw std::invalid_argument("unknown precision '" + s + "' (expected f32 or f64)");
}

std::int64_t shape_numel(const Shape& s) {
  std::int64_t n = 1;
  for (auto e : s) {
    if (e < 0) throw ShapeError("negative extent in shape " + shape_str(s));
    n *= e;
  }
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, Precision p) : shape_(std::move(shape)), precision_(p) {
  const auto n = static_cast<std::size_t>(shape_numel(shape_));
  if (p == Precision::f64)
    storage_ = std::make_shared<Storage>(AlignedVector<double>(n, 0.0));
  else
    storage_ = std::make_shared<Storage>(AlignedVector<float>(n, 0.0f));
}

Tensor Tensor::full(Shape shape, double value, Precision p) {
  Tensor t(std::move(shape), p);
  t.fill(value);
  return t;
}

Tensor Tensor::from(Shape shape, std::vector<float> values) {
  if (shape_numel(shape) != static_cast<std::int64_t>(values.size()))
    throw ShapeError("value count " + std::to_string(values.size()) + " does not match shape " + shape_str(shape));
  Tensor t;
  t.shape_ = std::move(shape);
  t.precision_ = Precision::f32;
  t.storage_ = std::make_shared<Storage>(std::in_place_type<AlignedVector<decltype(values)::value_type>>, values.begin(), values.end());
  return t;
}

Tensor Tensor::from(Shape shape, std::vector<double> values) {
  if (shape_numel(shape) != static_cast<std::int64_t>(values.size()))
    throw ShapeError("value count " + std::to_string(values.size()) + " does not match shape " + shape_str(shape));
  Tensor t;
  t.shape_ = std::move(shape);
  t.precision_ = Precision::f64;
  t.storage_ = std::make_shared<Storage>(std::in_place_type<AlignedVector<decltype(values)::value_type>>, values.begin(), values.end());
  return t;
}

Tensor Tensor::from(Shape shape, std::initializer_list<double> values, Precision p) {
  Tensor t = from(std::move(shape), std::vector<double>(values));
  return p == Precision::f64 ? t : t.to(p);
}

std::int64_t Tensor::dim(int axis) const {
  const int r = static_cast<int>(shape_.size());
  const int a = axis < 0 ? axis + r : axis;
  if (a < 0 || a >= r)
    throw ShapeError("axis " + std::to_string(axis) + " out of range for shape " + shape_str(shape_));
  return shape_[static_cast<std::size_t>(a)];
}

double Tensor::item() const {
  if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape_));
  return at(0);
}

double Tensor::at(std::int64_t flat) const {
  return dispatch(precision_, [&]<typename T>() { return static_cast<double>(data<T>()[static_cast<std::size_t>(flat)]); });
}

void Tensor::set(std::int64_t flat, double v) {
  dispatch(precision_, [&]<typename T>() { data<T>()[static_cast<std::size_t>(flat)] = static_cast<T>(v); });
}

std::vector<double> Tensor::to_vector() const {
  std::vector<double> out(static_cast<std::size_t>(numel()));
  dispatch(precision_, [&]<typename T>() {
    auto d = data<T>();
    std::copy(d.begin(), d.end(), out.begin());
  });
  return out;
}

Tensor Tensor::clone() const {
  Tensor t;
  t.shape_ = shape_;
  t.precision_ = precision_;
  if (storage_) t.storage_ = std::make_shared<Storage>(*storage_);
  return t;
}

Tensor Tensor::detach() const {
  Tensor t = *this;
  t.node_ = {};
  return t;
}

Tensor Tensor::to(Precision p) const {
  if (p == precision_) return clone();
  Tensor t(shape_, p);
  t.copy_from(*this);
  return t;
}

Tensor Tensor::view(Shape shape) const {
  if (shape_numel(shape) != numel())
    throw ShapeError("cannot view " + shape_str(shape_) + " as " + shape_str(shape));
  Tensor t = *this;
  t.shape_ = std::move(shape);
  t.node_ = {};
  return t;
}

void Tensor::copy_from(const Tensor& other) {
  if (other.numel() != numel())
    throw ShapeError("copy_from size mismatch: " + shape_str(other.shape_) + " into " + shape_str(shape_));
  dispatch(precision_, [&]<typename D>() {
    auto dst = data<D>();
    dispatch(other.precision_, [&]<typename S>() {
      auto src = other.data<S>();
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<D>(src[i]);
    });
  });
}

void Tensor::fill(double v) {
  dispatch(precision_, [&]<typename T>() {
    auto d = data<T>();
    std::fill(d.begin(), d.end(), static_cast<T>(v));
  });
}

bool bit_equal(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape() || a.precision() != b.precision()) return false;
  return dispatch(a.precision(), [&]<typename T>() {
    auto x = a.data<T>();
    auto y = b.data<T>();
    return std::memcmp(x.data(), y.data(), x.size_bytes()) == 0;
  });
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (a.numel() != b.numel())
    throw ShapeError("max_abs_diff size mismatch: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  const auto x = a.to_vector();
  const auto y = b.to_vector();
  double m = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) m = std::max(m, std::abs(x[i] - y[i]));
  return m;
}

}  // namespace szoo
