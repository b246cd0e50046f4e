#include <algorithm>
#include <cmath>
#include <numeric>

#include "ops_internal.hpp"

namespace szoo {

using detail::finish;

namespace {

std::vector<std::int64_t> contiguous_strides(const Shape& s) {
  std::vector<std::int64_t> st(s.size(), 1);
  for (std::size_t i = s.size(); i-- > 1;) st[i - 1] = st[i] * s[i];
  return st;
}

struct BroadcastPlan {
  Shape out;
  std::vector<std::int64_t> stride_a, stride_b;
};

Shape left_pad(const Shape& s, std::size_t rank) {
  Shape r(rank - s.size(), 1);
  r.insert(r.end(), s.begin(), s.end());
  return r;
}

/// Strides of `small` aligned to `out`, zero along broadcast axes.
std::vector<std::int64_t> broadcast_strides(const Shape& small, const Shape& out) {
  const Shape padded = left_pad(small, out.size());
  auto st = contiguous_strides(padded);
  for (std::size_t i = 0; i < out.size(); ++i)
    if (padded[i] == 1 && out[i] != 1) st[i] = 0;
  return st;
}

BroadcastPlan plan_broadcast(const Shape& a, const Shape& b, const char* op) {
  const std::size_t r = std::max(a.size(), b.size());
  const Shape pa = left_pad(a, r), pb = left_pad(b, r);
  BroadcastPlan p;
  p.out.resize(r);
  for (std::size_t i = 0; i < r; ++i) {
    if (pa[i] == pb[i] || pb[i] == 1)
      p.out[i] = pa[i];
    else if (pa[i] == 1)
      p.out[i] = pb[i];
    else
      throw ShapeError(std::string(op) + ": cannot broadcast " + shape_str(a) + " with " + shape_str(b) +
                       " (axis " + std::to_string(i) + ")");
  }
  p.stride_a = broadcast_strides(a, p.out);
  p.stride_b = broadcast_strides(b, p.out);
  return p;
}

/// Visits every output element with the matching offsets into a and b.
template <typename F>
void for_each_broadcast(const Shape& out, const std::vector<std::int64_t>& sa, const std::vector<std::int64_t>& sb,
                        F&& f) {
  const std::int64_t n = shape_numel(out);
  if (n == 0) return;
  const std::size_t r = out.size();
  if (r == 0) {
    f(0, 0, 0);
    return;
  }
  const std::int64_t inner = out[r - 1];
  const std::int64_t ia_step = sa[r - 1], ib_step = sb[r - 1];
  std::vector<std::int64_t> idx(r, 0);
  std::int64_t oa = 0, ob = 0, flat = 0;
  const std::int64_t outer = n / inner;
  for (std::int64_t o = 0; o < outer; ++o) {
    for (std::int64_t j = 0; j < inner; ++j) f(flat++, oa + j * ia_step, ob + j * ib_step);
    for (std::size_t d = r - 1; d-- > 0;) {
      ++idx[d];
      oa += sa[d];
      ob += sb[d];
      if (idx[d] < out[d]) break;
      oa -= sa[d] * out[d];
      ob -= sb[d] * out[d];
      idx[d] = 0;
    }
  }
}

/// Sums g (shape `out`) down to `target` by summing over broadcast axes.
Tensor reduce_to(const Tensor& g, const Shape& target) {
  if (g.shape() == target) return g;
  Tensor r(target, g.precision());
  const auto st = broadcast_strides(target, g.shape());
  const std::vector<std::int64_t> zero(g.rank(), 0);
  dispatch(g.precision(), [&]<typename T>() {
    auto src = g.data<T>();
    auto dst = r.data<T>();
    for_each_broadcast(g.shape(), st, zero, [&](std::int64_t flat, std::int64_t it, std::int64_t) { dst[it] += src[flat]; });
  });
  return r;
}

enum class BinaryKind { add, sub, mul };

Tensor binary(const Tensor& a, const Tensor& b, BinaryKind kind, const char* name) {
  detail::require_same_precision(a, b, name);
  const auto plan = plan_broadcast(a.shape(), b.shape(), name);
  Tensor out(plan.out, a.precision());
  dispatch(a.precision(), [&]<typename T>() {
    auto x = a.data<T>();
    auto y = b.data<T>();
    auto o = out.data<T>();
    if (a.shape() == b.shape()) {
      for (std::size_t i = 0; i < o.size(); ++i)
        o[i] = kind == BinaryKind::add ? x[i] + y[i] : kind == BinaryKind::sub ? x[i] - y[i] : x[i] * y[i];
      return;
    }
    for_each_broadcast(plan.out, plan.stride_a, plan.stride_b, [&](std::int64_t f, std::int64_t ia, std::int64_t ib) {
      o[f] = kind == BinaryKind::add ? x[ia] + y[ib] : kind == BinaryKind::sub ? x[ia] - y[ib] : x[ia] * y[ib];
    });
  });
  return finish(out, {&a, &b}, [&] {
    return [a = a.detach(), b = b.detach(), kind, plan](const Tensor& g, std::span<Tensor> gi, std::span<const bool> needs) {
      if (kind == BinaryKind::mul) {
        // d(a*b)/da = b broadcast, d/db = a broadcast.
        auto times = [&](const Tensor& other, const std::vector<std::int64_t>& so) {
          Tensor r(plan.out, g.precision());
          const std::vector<std::int64_t> self = contiguous_strides(plan.out);
          dispatch(g.precision(), [&]<typename T>() {
            auto gd = g.data<T>();
            auto od = other.data<T>();
            auto rd = r.data<T>();
            for_each_broadcast(plan.out, self, so, [&](std::int64_t f, std::int64_t, std::int64_t io) { rd[f] = gd[f] * od[io]; });
          });
          return r;
        };
        if (needs[0]) gi[0] = reduce_to(times(b, plan.stride_b), left_pad(a.shape(), plan.out.size())).view(a.shape());
        if (needs[1]) gi[1] = reduce_to(times(a, plan.stride_a), left_pad(b.shape(), plan.out.size())).view(b.shape());
        return;
      }
      if (needs[0]) gi[0] = reduce_to(g, left_pad(a.shape(), plan.out.size())).view(a.shape());
      if (needs[1]) {
        Tensor gb = reduce_to(g, left_pad(b.shape(), plan.out.size())).view(b.shape());
        gi[1] = kind == BinaryKind::sub ? scale(gb, -1.0) : gb;
      }
    };
  });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return binary(a, b, BinaryKind::add, "add"); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary(a, b, BinaryKind::sub, "sub"); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary(a, b, BinaryKind::mul, "mul"); }

Tensor scale(const Tensor& a, double s) {
  Tensor out(a.shape(), a.precision());
  dispatch(a.precision(), [&]<typename T>() {
    auto x = a.data<T>();
    auto o = out.data<T>();
    const T k = static_cast<T>(s);
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] * k;
  });
  return finish(out, {&a}, [&] {
    return [s](const Tensor& g, std::span<Tensor> gi, std::span<const bool>) { gi[0] = scale(g.detach(), s); };
  });
}

Tensor square(const Tensor& a) { return mul(a, a); }

Tensor sum(const Tensor& a) {
  Tensor out(Shape{}, a.precision());
  dispatch(a.precision(), [&]<typename T>() {
    auto x = a.data<T>();
    T acc = 0;
    for (T v : x) acc += v;
    out.data<T>()[0] = acc;
  });
  return finish(out, {&a}, [&] {
    return [shape = a.shape()](const Tensor& g, std::span<Tensor> gi, std::span<const bool>) {
      gi[0] = Tensor::full(shape, g.item(), g.precision());
    };
  });
}

Tensor mean(const Tensor& a) {
  const auto n = a.numel();
  if (n == 0) throw ShapeError("mean of empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(n));
}

namespace {

struct AxisSplit {
  std::int64_t outer = 1, len = 1, inner = 1;
};

AxisSplit split_axis(const Shape& s, int axis) {
  AxisSplit r;
  for (int i = 0; i < axis; ++i) r.outer *= s[static_cast<std::size_t>(i)];
  r.len = s[static_cast<std::size_t>(axis)];
  for (std::size_t i = static_cast<std::size_t>(axis) + 1; i < s.size(); ++i) r.inner *= s[i];
  return r;
}

}  // namespace

Tensor reduce_mean(const Tensor& a, int axis) {
  const int ax = detail::normalize_axis(axis, a.rank(), "reduce_mean");
  const auto sp = split_axis(a.shape(), ax);
  if (sp.len == 0) throw ShapeError("reduce_mean over empty axis");
  Shape os = a.shape();
  os[static_cast<std::size_t>(ax)] = 1;
  Tensor out(os, a.precision());
  dispatch(a.precision(), [&]<typename T>() {
    auto x = a.data<T>();
    auto o = out.data<T>();
    for (std::int64_t p = 0; p < sp.outer; ++p)
      for (std::int64_t q = 0; q < sp.inner; ++q) {
        T acc = 0;
        for (std::int64_t l = 0; l < sp.len; ++l) acc += x[static_cast<std::size_t>((p * sp.len + l) * sp.inner + q)];
        o[static_cast<std::size_t>(p * sp.inner + q)] = acc / static_cast<T>(sp.len);
      }
  });
  return finish(out, {&a}, [&] {
    return [shape = a.shape(), sp](const Tensor& g, std::span<Tensor> gi, std::span<const bool>) {
      Tensor r(shape, g.precision());
      dispatch(g.precision(), [&]<typename T>() {
        auto gd = g.data<T>();
        auto rd = r.data<T>();
        const T inv = T(1) / static_cast<T>(sp.len);
        for (std::int64_t p = 0; p < sp.outer; ++p)
          for (std::int64_t l = 0; l < sp.len; ++l)
            for (std::int64_t q = 0; q < sp.inner; ++q)
              rd[static_cast<std::size_t>((p * sp.len + l) * sp.inner + q)] = gd[static_cast<std::size_t>(p * sp.inner + q)] * inv;
      });
      gi[0] = r;
    };
  });
}

Tensor reduce_max(const Tensor& a, int axis) {
  const int ax = detail::normalize_axis(axis, a.rank(), "reduce_max");
  const auto sp = split_axis(a.shape(), ax);
  if (sp.len == 0) throw ShapeError("reduce_max over empty axis");
  Shape os = a.shape();
  os[static_cast<std::size_t>(ax)] = 1;
  Tensor out(os, a.precision());
  std::vector<std::int64_t> arg(static_cast<std::size_t>(sp.outer * sp.inner));
  dispatch(a.precision(), [&]<typename T>() {
    auto x = a.data<T>();
    auto o = out.data<T>();
    for (std::int64_t p = 0; p < sp.outer; ++p)
      for (std::int64_t q = 0; q < sp.inner; ++q) {
        std::int64_t best = (p * sp.len) * sp.inner + q;
        for (std::int64_t l = 1; l < sp.len; ++l) {
          const std::int64_t i = (p * sp.len + l) * sp.inner + q;
          if (x[static_cast<std::size_t>(i)] > x[static_cast<std::size_t>(best)]) best = i;
        }
        arg[static_cast<std::size_t>(p * sp.inner + q)] = best;
        o[static_cast<std::size_t>(p * sp.inner + q)] = x[static_cast<std::size_t>(best)];
      }
  });
  return finish(out, {&a}, [&] {
    return [shape = a.shape(), arg = std::move(arg)](const Tensor& g, std::span<Tensor> gi, std::span<const bool>) {
      Tensor r(shape, g.precision());
      dispatch(g.precision(), [&]<typename T>() {
        auto gd = g.data<T>();
        auto rd = r.data<T>();
        for (std::size_t i = 0; i < arg.size(); ++i) rd[static_cast<std::size_t>(arg[i])] += gd[i];
      });
      gi[0] = r;
    };
  });
}

Tensor reshape(const Tensor& a, Shape shape) {
  std::int64_t known = 1;
  int infer = -1;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (shape[i] == -1) {
      if (infer >= 0) throw ShapeError("reshape: more than one inferred axis");
      infer = static_cast<int>(i);
    } else {
      known *= shape[i];
    }
  }
  if (infer >= 0) {
    if (known == 0 || a.numel() % known != 0)
      throw ShapeError("reshape: cannot infer axis for " + shape_str(a.shape()) + " -> " + shape_str(shape));
    shape[static_cast<std::size_t>(infer)] = a.numel() / known;
  }
  Tensor out = a.view(shape);
  return finish(out, {&a}, [&] {
    return [orig = a.shape()](const Tensor& g, std::span<Tensor> gi, std::span<const bool>) { gi[0] = g.view(orig); };
  });
}

namespace {

Tensor permute_raw(const Tensor& a, const std::vector<int>& dims) {
  const std::size_t r = a.rank();
  Shape os(r);
  for (std::size_t i = 0; i < r; ++i) os[i] = a.shape()[static_cast<std::size_t>(dims[i])];
  const auto in_st = contiguous_strides(a.shape());
  std::vector<std::int64_t> src_st(r);
  for (std::size_t i = 0; i < r; ++i) src_st[i] = in_st[static_cast<std::size_t>(dims[i])];
  Tensor out(os, a.precision());
  const std::vector<std::int64_t> zero(r, 0);
  dispatch(a.precision(), [&]<typename T>() {
    auto x = a.data<T>();
    auto o = out.data<T>();
    for_each_broadcast(os, src_st, zero, [&](std::int64_t f, std::int64_t is, std::int64_t) { o[f] = x[is]; });
  });
  return out;
}

}  // namespace

Tensor permute(const Tensor& a, const std::vector<int>& dims) {
  if (dims.size() != a.rank()) throw ShapeError("permute: expected " + std::to_string(a.rank()) + " axes");
  std::vector<int> seen(dims.size(), 0);
  for (int d : dims) {
    if (d < 0 || d >= static_cast<int>(dims.size()) || seen[static_cast<std::size_t>(d)]++)
      throw ShapeError("permute: invalid axis order");
  }
  Tensor out = permute_raw(a, dims);
  return finish(out, {&a}, [&] {
    std::vector<int> inv(dims.size());
    for (std::size_t i = 0; i < dims.size(); ++i) inv[static_cast<std::size_t>(dims[i])] = static_cast<int>(i);
    return [inv](const Tensor& g, std::span<Tensor> gi, std::span<const bool>) { gi[0] = permute_raw(g, inv); };
  });
}

Tensor concat(const std::vector<Tensor>& xs, int axis) {
  if (xs.empty()) throw ShapeError("concat of zero tensors");
  const int ax = detail::normalize_axis(axis, xs[0].rank(), "concat");
  Shape os = xs[0].shape();
  os[static_cast<std::size_t>(ax)] = 0;
  std::vector<std::int64_t> lens;
  for (const auto& t : xs) {
    detail::require_same_precision(xs[0], t, "concat");
    if (t.rank() != xs[0].rank()) throw ShapeError("concat: rank mismatch");
    for (std::size_t i = 0; i < t.rank(); ++i)
      if (static_cast<int>(i) != ax && t.shape()[i] != xs[0].shape()[i])
        throw ShapeError("concat: extent mismatch on axis " + std::to_string(i) + ": " + shape_str(t.shape()) +
                         " vs " + shape_str(xs[0].shape()));
    lens.push_back(t.shape()[static_cast<std::size_t>(ax)]);
    os[static_cast<std::size_t>(ax)] += lens.back();
  }
  const auto sp = split_axis(os, ax);
  Tensor out(os, xs[0].precision());
  dispatch(out.precision(), [&]<typename T>() {
    auto o = out.data<T>();
    std::int64_t offset = 0;
    for (std::size_t k = 0; k < xs.size(); ++k) {
      auto x = xs[k].data<T>();
      const std::int64_t block = lens[k] * sp.inner;
      for (std::int64_t p = 0; p < sp.outer; ++p)
        std::copy_n(x.data() + p * block, block, o.data() + p * sp.len * sp.inner + offset * sp.inner);
      offset += lens[k];
    }
  });
  std::vector<const Tensor*> ins;
  for (const auto& t : xs) ins.push_back(&t);
  Tape* tape = common_tape(ins);
  if (!tape) return out;
  return tape->record(out, ins, [ax, lens](const Tensor& g, std::span<Tensor> gi, std::span<const bool> needs) {
    std::int64_t offset = 0;
    for (std::size_t k = 0; k < lens.size(); ++k) {
      if (needs[k]) gi[k] = slice(g.detach(), ax, offset, lens[k]);
      offset += lens[k];
    }
  });
}

Tensor slice(const Tensor& a, int axis, std::int64_t start, std::int64_t length) {
  const int ax = detail::normalize_axis(axis, a.rank(), "slice");
  const auto sp = split_axis(a.shape(), ax);
  if (start < 0 || length < 0 || start + length > sp.len)
    throw ShapeError("slice [" + std::to_string(start) + ", " + std::to_string(start + length) + ") out of range on axis " +
                     std::to_string(ax) + " of " + shape_str(a.shape()));
  Shape os = a.shape();
  os[static_cast<std::size_t>(ax)] = length;
  Tensor out(os, a.precision());
  dispatch(a.precision(), [&]<typename T>() {
    auto x = a.data<T>();
    auto o = out.data<T>();
    for (std::int64_t p = 0; p < sp.outer; ++p)
      std::copy_n(x.data() + (p * sp.len + start) * sp.inner, length * sp.inner, o.data() + p * length * sp.inner);
  });
  return finish(out, {&a}, [&] {
    return [shape = a.shape(), sp, start, length](const Tensor& g, std::span<Tensor> gi, std::span<const bool>) {
      Tensor r(shape, g.precision());
      dispatch(g.precision(), [&]<typename T>() {
        auto gd = g.data<T>();
        auto rd = r.data<T>();
        for (std::int64_t p = 0; p < sp.outer; ++p)
          std::copy_n(gd.data() + p * length * sp.inner, length * sp.inner, rd.data() + (p * sp.len + start) * sp.inner);
      });
      gi[0] = r;
    };
  });
}

namespace {

template <typename T>
T sigmoid_scalar(T z) {
  if (z >= 0) return T(1) / (T(1) + std::exp(-z));
  const T e = std::exp(z);
  return e / (T(1) + e);
}

}  // namespace

Tensor activation(const Tensor& x, Activation kind) {
  Tensor out(x.shape(), x.precision());
  if (kind == Activation::softmax && x.rank() == 0) throw ShapeError("softmax needs at least one axis");
  const std::int64_t row = kind == Activation::softmax ? x.dim(-1) : 1;
  dispatch(x.precision(), [&]<typename T>() {
    auto in = x.data<T>();
    auto o = out.data<T>();
    switch (kind) {
      case Activation::relu:
        for (std::size_t i = 0; i < o.size(); ++i) o[i] = in[i] > T(0) ? in[i] : T(0);
        break;
      case Activation::sigmoid:
        for (std::size_t i = 0; i < o.size(); ++i) o[i] = sigmoid_scalar(in[i]);
        break;
      case Activation::swish:
        for (std::size_t i = 0; i < o.size(); ++i) o[i] = in[i] * sigmoid_scalar(in[i]);
        break;
      case Activation::gelu:
        for (std::size_t i = 0; i < o.size(); ++i)
          o[i] = T(0.5) * in[i] * (T(1) + std::erf(in[i] / std::sqrt(T(2))));
        break;
      case Activation::softmax:
        for (std::size_t base = 0; base < o.size(); base += static_cast<std::size_t>(row)) {
          T m = in[base];
          for (std::int64_t j = 1; j < row; ++j) m = std::max(m, in[base + static_cast<std::size_t>(j)]);
          T s = 0;
          for (std::int64_t j = 0; j < row; ++j) {
            const T e = std::exp(in[base + static_cast<std::size_t>(j)] - m);
            o[base + static_cast<std::size_t>(j)] = e;
            s += e;
          }
          for (std::int64_t j = 0; j < row; ++j) o[base + static_cast<std::size_t>(j)] /= s;
        }
        break;
    }
  });
  return finish(out, {&x}, [&] {
    return [x = x.detach(), y = out.detach(), kind, row](const Tensor& g, std::span<Tensor> gi, std::span<const bool>) {
      Tensor r(x.shape(), x.precision());
      dispatch(x.precision(), [&]<typename T>() {
        auto in = x.data<T>();
        auto yo = y.data<T>();
        auto gd = g.data<T>();
        auto rd = r.data<T>();
        switch (kind) {
          case Activation::relu:
            for (std::size_t i = 0; i < rd.size(); ++i) rd[i] = in[i] > T(0) ? gd[i] : T(0);
            break;
          case Activation::sigmoid:
            for (std::size_t i = 0; i < rd.size(); ++i) rd[i] = gd[i] * yo[i] * (T(1) - yo[i]);
            break;
          case Activation::swish:
            for (std::size_t i = 0; i < rd.size(); ++i) {
              const T s = sigmoid_scalar(in[i]);
              rd[i] = gd[i] * (s + in[i] * s * (T(1) - s));
            }
            break;
          case Activation::gelu: {
            const T inv_sqrt2pi = T(0.3989422804014327);
            for (std::size_t i = 0; i < rd.size(); ++i) {
              const T cdf = T(0.5) * (T(1) + std::erf(in[i] / std::sqrt(T(2))));
              rd[i] = gd[i] * (cdf + in[i] * inv_sqrt2pi * std::exp(-T(0.5) * in[i] * in[i]));
            }
            break;
          }
          case Activation::softmax:
            for (std::size_t base = 0; base < rd.size(); base += static_cast<std::size_t>(row)) {
              T dot = 0;
              for (std::int64_t j = 0; j < row; ++j) dot += gd[base + static_cast<std::size_t>(j)] * yo[base + static_cast<std::size_t>(j)];
              for (std::int64_t j = 0; j < row; ++j) {
                const auto k = base + static_cast<std::size_t>(j);
                rd[k] = yo[k] * (gd[k] - dot);
              }
            }
            break;
        }
      });
      gi[0] = r;
    };
  });
}

Tensor bce_with_logits(const Tensor& logits, const Tensor& targets) {
  if (logits.shape() != targets.shape())
    throw ShapeError("bce_with_logits: logits " + shape_str(logits.shape()) + " vs targets " + shape_str(targets.shape()));
  const auto n = logits.numel();
  if (n == 0) throw ShapeError("bce_with_logits on empty batch");
  const Tensor t = targets.precision() == logits.precision() ? targets.detach() : targets.to(logits.precision());
  Tensor out(Shape{}, logits.precision());
  dispatch(logits.precision(), [&]<typename T>() {
    auto z = logits.data<T>();
    auto y = t.data<T>();
    // max(z,0) - z*y + log(1 + exp(-|z|))
    double acc = 0;
    for (std::size_t i = 0; i < z.size(); ++i)
      acc += static_cast<double>(std::max(z[i], T(0)) - z[i] * y[i] + std::log1p(std::exp(-std::abs(z[i]))));
    out.data<T>()[0] = static_cast<T>(acc / static_cast<double>(n));
  });
  return finish(out, {&logits}, [&] {
    return [z = logits.detach(), t, n](const Tensor& g, std::span<Tensor> gi, std::span<const bool>) {
      Tensor r(z.shape(), z.precision());
      dispatch(z.precision(), [&]<typename T>() {
        auto zd = z.data<T>();
        auto yd = t.data<T>();
        auto rd = r.data<T>();
        const T k = static_cast<T>(g.item() / static_cast<double>(n));
        for (std::size_t i = 0; i < rd.size(); ++i) rd[i] = (sigmoid_scalar(zd[i]) - yd[i]) * k;
      });
      gi[0] = r;
    };
  });
}

}  // namespace szoo
