#include "szoo/module.hpp"

#include <cmath>
#include <stdexcept>

namespace szoo {

ParamId ParameterStore::add(std::string name, Tensor init, bool trainable) {
  if (index_.count(name)) throw std::invalid_argument("duplicate parameter name '" + name + "'");
  const ParamId id = entries_.size();
  index_.emplace(name, id);
  entries_.push_back({std::move(name), std::move(init), trainable});
  return id;
}

std::optional<ParamId> ParameterStore::find(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::int64_t ParameterStore::total_elements() const {
  std::int64_t n = 0;
  for (const auto& e : entries_) n += e.value.numel();
  return n;
}

std::int64_t ParameterStore::trainable_elements() const {
  std::int64_t n = 0;
  for (const auto& e : entries_)
    if (e.trainable) n += e.value.numel();
  return n;
}

ParameterStore ParameterStore::clone() const {
  ParameterStore s;
  s.index_ = index_;
  s.entries_.reserve(entries_.size());
  for (const auto& e : entries_) s.entries_.push_back({e.name, e.value.clone(), e.trainable});
  return s;
}

void ParameterStore::convert(Precision p) {
  for (auto& e : entries_)
    if (e.value.precision() != p) e.value = e.value.to(p);
}

Tensor Context::param(ParamId id) {
  auto& e = store_->entry(id);
  if (!tape_ || !e.trainable || is_frozen(id)) return e.value.detach();
  auto it = watched_.find(id);
  if (it != watched_.end()) return it->second;
  Tensor w = tape_->watch(e.value);
  watched_.emplace(id, w);
  return w;
}

std::optional<Tensor> Context::grad(ParamId id) const {
  auto it = watched_.find(id);
  if (it == watched_.end() || !tape_) return std::nullopt;
  return tape_->grad(it->second);
}

Builder Builder::sub(const std::string& name) const {
  Builder b = *this;
  b.prefix_ = full(name);
  return b;
}

ParamId Builder::param(const std::string& name, Tensor init, bool trainable) {
  return store_->add(full(name), std::move(init), trainable);
}

Tensor Builder::uniform(Shape shape, double bound) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<double> dist(-bound, bound);
  auto d = t.data<float>();
  for (auto& v : d) v = static_cast<float>(dist(*rng_));
  return t;
}

Tensor Builder::he_uniform(Shape shape, std::int64_t fan_in) {
  return uniform(std::move(shape), std::sqrt(6.0 / static_cast<double>(std::max<std::int64_t>(fan_in, 1))));
}

Conv2dLayer Conv2dLayer::make(Builder b, std::int64_t in, std::int64_t out, int kernel, int stride, bool bias, Padding padding) {
  Conv2dLayer l;
  l.weight = b.param("weight", b.he_uniform({out, in, kernel, kernel}, in * kernel * kernel));
  if (bias) l.bias = b.param("bias", Tensor({out}));
  l.stride = stride;
  l.padding = padding;
  return l;
}

Tensor Conv2dLayer::forward(Context& ctx, const Tensor& x) const {
  return conv2d(x, ctx.param(weight), bias ? ctx.param(*bias) : Tensor(), stride, padding);
}

DepthwiseConv2dLayer DepthwiseConv2dLayer::make(Builder b, std::int64_t channels, int kernel, int stride, bool bias) {
  DepthwiseConv2dLayer l;
  l.weight = b.param("weight", b.he_uniform({channels, 1, kernel, kernel}, kernel * kernel));
  if (bias) l.bias = b.param("bias", Tensor({channels}));
  l.stride = stride;
  return l;
}

Tensor DepthwiseConv2dLayer::forward(Context& ctx, const Tensor& x) const {
  return depthwise_conv2d(x, ctx.param(weight), bias ? ctx.param(*bias) : Tensor(), stride, Padding::same);
}

DenseLayer DenseLayer::make(Builder b, std::int64_t in, std::int64_t out, bool bias) {
  DenseLayer l;
  l.weight = b.param("weight", b.he_uniform({in, out}, in));
  if (bias) l.bias = b.param("bias", Tensor({out}));
  return l;
}

Tensor DenseLayer::forward(Context& ctx, const Tensor& x) const {
  return dense(x, ctx.param(weight), bias ? ctx.param(*bias) : Tensor());
}

BatchNormLayer BatchNormLayer::make(Builder b, std::int64_t channels, double eps, double momentum) {
  BatchNormLayer l;
  l.scale = b.param("gamma", Tensor::full({channels}, 1.0));
  l.shift = b.param("beta", Tensor({channels}));
  l.running_mean = b.param("running_mean", Tensor({channels}), false);
  l.running_var = b.param("running_var", Tensor::full({channels}, 1.0), false);
  l.eps = eps;
  l.momentum = momentum;
  return l;
}

Tensor BatchNormLayer::forward(Context& ctx, const Tensor& x) const {
  BatchNormOptions opt;
  opt.training = ctx.training() && !ctx.is_frozen(scale);
  opt.eps = eps;
  opt.momentum = momentum;
  opt.collective = ctx.bn_collective;
  Tensor g = ctx.param(scale), b = ctx.param(shift);
  return batchnorm2d(x, g, b, ctx.buffer(running_mean), ctx.buffer(running_var), opt);
}

LayerNormLayer LayerNormLayer::make(Builder b, std::int64_t features, double eps) {
  LayerNormLayer l;
  l.scale = b.param("gamma", Tensor::full({features}, 1.0));
  l.shift = b.param("beta", Tensor({features}));
  l.eps = eps;
  return l;
}

Tensor LayerNormLayer::forward(Context& ctx, const Tensor& x) const {
  return layernorm(x, ctx.param(scale), ctx.param(shift), eps);
}

}  // namespace szoo
