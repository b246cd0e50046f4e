#pragma once

// Shared helpers for the test binaries: seeded random tensors and a central
// finite-difference gradient checker.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "szoo/module.hpp"
#include "szoo/ops.hpp"
#include "szoo/tape.hpp"

namespace szoo::test {

inline Tensor random_tensor(const Shape& s, std::uint64_t seed, Precision p = Precision::f64, double lo = -1.0,
                            double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> d(lo, hi);
  Tensor t(s, Precision::f64);
  for (auto& v : t.data<double>()) v = d(rng);
  return p == Precision::f64 ? t : t.to(p);
}

/// Norm-wise relative error max|a-n| / max(max|a|, max|n|, floor).
inline double relative_error(const std::vector<double>& a, const std::vector<double>& n) {
  double diff = 0, scale = 1e-8;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff = std::max(diff, std::abs(a[i] - n[i]));
    scale = std::max({scale, std::abs(a[i]), std::abs(n[i])});
  }
  return diff / scale;
}

struct GradCheckResult {
  double max_rel_error = 0;
  std::size_t checked = 0;
};

using TensorFn = std::function<Tensor(const std::vector<Tensor>&)>;

/// Errors are measured norm-wise over every probed entry of one check, so a
/// gradient that is identically zero in exact arithmetic (a bias feeding a
/// train-mode batch norm) does not turn rounding noise into a failure.
///
/// Contracts f's output with a fixed random tensor so every output element
/// carries a distinct upstream gradient, then compares analytic gradients of
/// each input with central differences. At most max_elems entries per input
/// are probed.
inline GradCheckResult gradcheck(const TensorFn& f, std::vector<Tensor> inputs, std::uint64_t seed = 99,
                                 double h = 1e-6, std::size_t max_elems = 64) {
  GradCheckResult res;
  Tensor probe;
  auto objective = [&](const Tensor& out) {
    if (!probe.defined()) probe = random_tensor(out.shape(), seed, out.precision());
    return sum(mul(out, probe));
  };
  Tape tape;
  std::vector<Tensor> watched;
  for (auto& t : inputs) watched.push_back(tape.watch(t));
  tape.backward(objective(f(watched)));

  std::mt19937_64 rng(seed + 1);
  std::vector<double> an, nu;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    auto g = tape.grad(watched[i]);
    Tensor& x = inputs[i];
    std::vector<std::int64_t> idx(static_cast<std::size_t>(x.numel()));
    for (std::size_t k = 0; k < idx.size(); ++k) idx[k] = static_cast<std::int64_t>(k);
    std::shuffle(idx.begin(), idx.end(), rng);
    if (idx.size() > max_elems) idx.resize(max_elems);
    for (auto k : idx) {
      const double v = x.at(k);
      x.set(k, v + h);
      const double fp = objective(f(inputs)).item();
      x.set(k, v - h);
      const double fm = objective(f(inputs)).item();
      x.set(k, v);
      nu.push_back((fp - fm) / (2 * h));
      an.push_back(g ? g->at(k) : 0.0);
    }
    res.checked += idx.size();
  }
  res.max_rel_error = relative_error(an, nu);
  return res;
}

using ModuleFn = std::function<Tensor(Context&, const Tensor&)>;

/// Gradient check of a parameterized computation with respect to its input
/// and every trainable parameter in the store (which must be f64).
inline GradCheckResult gradcheck_module(ParameterStore& store, const ModuleFn& f, Tensor x, bool training = true,
                                        std::uint64_t seed = 99, double h = 1e-6, std::size_t max_elems = 24) {
  GradCheckResult res;
  Tensor probe;
  auto objective = [&](const Tensor& out) {
    if (!probe.defined()) probe = random_tensor(out.shape(), seed, out.precision());
    return sum(mul(out, probe));
  };
  Tape tape;
  Context ctx(store, &tape, training);
  Tensor wx = tape.watch(x);
  tape.backward(objective(f(ctx, wx)));
  auto eval = [&] {
    Context plain(store, nullptr, training);
    return objective(f(plain, x)).item();
  };

  std::mt19937_64 rng(seed + 1);
  std::vector<double> an, nu;
  auto probe_tensor = [&](Tensor& t, const std::optional<Tensor>& g) {
    std::vector<std::int64_t> idx(static_cast<std::size_t>(t.numel()));
    for (std::size_t k = 0; k < idx.size(); ++k) idx[k] = static_cast<std::int64_t>(k);
    std::shuffle(idx.begin(), idx.end(), rng);
    if (idx.size() > max_elems) idx.resize(max_elems);
    for (auto k : idx) {
      const double v = t.at(k);
      t.set(k, v + h);
      const double fp = eval();
      t.set(k, v - h);
      const double fm = eval();
      t.set(k, v);
      nu.push_back((fp - fm) / (2 * h));
      an.push_back(g ? g->at(k) : 0.0);
    }
    res.checked += idx.size();
  };
  probe_tensor(x, tape.grad(wx));
  for (ParamId id = 0; id < store.size(); ++id) {
    if (!store.entry(id).trainable) continue;
    probe_tensor(store.entry(id).value, ctx.grad(id));
  }
  res.max_rel_error = relative_error(an, nu);
  return res;
}

}  // namespace szoo::test
