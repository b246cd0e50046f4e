#pragma once

// Named parameter storage, forward-pass context, and the primitive layers
// every network is assembled from.

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "szoo/ops.hpp"

namespace szoo {

using ParamId = std::size_t;

struct NamedParam {
  std::string name;
  Tensor value;
  bool trainable = true;  // false for running statistics
};

class ParameterStore {
 public:
  ParamId add(std::string name, Tensor init, bool trainable = true);

  std::size_t size() const { return entries_.size(); }
  const NamedParam& entry(ParamId id) const { return entries_.at(id); }
  NamedParam& entry(ParamId id) { return entries_.at(id); }
  const std::vector<NamedParam>& entries() const { return entries_; }
  std::optional<ParamId> find(const std::string& name) const;

  /// Total element count over every stored tensor, trainable or not.
  std::int64_t total_elements() const;
  std::int64_t trainable_elements() const;

  /// Deep copy of every tensor.
  ParameterStore clone() const;
  void convert(Precision p);

 private:
  std::vector<NamedParam> entries_;
  std::unordered_map<std::string, ParamId> index_;
};

/// Per-forward state: which store to read, whether BN runs in train mode,
/// and the tape (if gradients are wanted).
class Context {
 public:
  Context(ParameterStore& store, Tape* tape, bool training) : store_(&store), tape_(tape), training_(training) {}

  bool training() const { return training_; }
  Tape* tape() const { return tape_; }
  ParameterStore& store() { return *store_; }

  /// Trainable parameters are watched on the tape (once per context).
  Tensor param(ParamId id);
  /// Mutable access for running statistics.
  Tensor& buffer(ParamId id) { return store_->entry(id).value; }
  /// Gradient of a watched parameter after tape->backward().
  std::optional<Tensor> grad(ParamId id) const;

  /// Frozen parameters are read as constants and their norm layers run in eval mode.
  void freeze(std::function<bool(const std::string&)> predicate) { frozen_ = std::move(predicate); }
  bool is_frozen(ParamId id) const { return frozen_ && frozen_(store_->entry(id).name); }

  /// Hook used by synchronized batch norm during data-parallel training.
  BatchNormCollective* bn_collective = nullptr;

 private:
  ParameterStore* store_;
  Tape* tape_;
  bool training_;
  std::unordered_map<ParamId, Tensor> watched_;
  std::function<bool(const std::string&)> frozen_;
};

/// Deterministic initializer stream plus hierarchical naming.
class Builder {
 public:
  Builder(ParameterStore& store, std::uint64_t seed) : store_(&store), rng_(std::make_shared<std::mt19937_64>(seed)) {}

  Builder sub(const std::string& name) const;
  const std::string& prefix() const { return prefix_; }

  ParamId param(const std::string& name, Tensor init, bool trainable = true);
  /// He-style fan-in scaled uniform: U(-sqrt(6/fan_in), sqrt(6/fan_in)).
  Tensor he_uniform(Shape shape, std::int64_t fan_in);
  Tensor uniform(Shape shape, double bound);

 private:
  std::string full(const std::string& name) const { return prefix_.empty() ? name : prefix_ + "." + name; }
  ParameterStore* store_;
  std::shared_ptr<std::mt19937_64> rng_;
  std::string prefix_;
};

class Module {
 public:
  virtual ~Module() = default;
  virtual Tensor forward(Context& ctx, const Tensor& x) const = 0;
};

// --- primitive layers ----------------------------------------------------------

struct Conv2dLayer {
  ParamId weight{};
  std::optional<ParamId> bias;
  int stride = 1;
  Padding padding = Padding::same;

  static Conv2dLayer make(Builder b, std::int64_t in, std::int64_t out, int kernel, int stride, bool bias,
                          Padding padding = Padding::same);
  Tensor forward(Context& ctx, const Tensor& x) const;
};

struct DepthwiseConv2dLayer {
  ParamId weight{};
  std::optional<ParamId> bias;
  int stride = 1;

  static DepthwiseConv2dLayer make(Builder b, std::int64_t channels, int kernel, int stride, bool bias);
  Tensor forward(Context& ctx, const Tensor& x) const;
};

struct DenseLayer {
  ParamId weight{};
  std::optional<ParamId> bias;

  static DenseLayer make(Builder b, std::int64_t in, std::int64_t out, bool bias = true);
  Tensor forward(Context& ctx, const Tensor& x) const;
};

struct BatchNormLayer {
  ParamId scale{}, shift{}, running_mean{}, running_var{};
  double eps = 1e-3;
  double momentum = 0.99;

  static BatchNormLayer make(Builder b, std::int64_t channels, double eps = 1e-3, double momentum = 0.99);
  Tensor forward(Context& ctx, const Tensor& x) const;
};

struct LayerNormLayer {
  ParamId scale{}, shift{};
  double eps = 1e-6;

  static LayerNormLayer make(Builder b, std::int64_t features, double eps = 1e-6);
  Tensor forward(Context& ctx, const Tensor& x) const;
};

}  // namespace szoo
