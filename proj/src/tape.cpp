#include "szoo/tape.hpp"

#include <memory>
#include <string>

namespace szoo {

namespace {

void accumulate_into(Tensor& dst, const Tensor& src) {
  if (!dst.defined()) {
    dst = src.clone();
    return;
  }
  if (dst.shape() != src.shape())
    throw ShapeError("gradient shape " + shape_str(src.shape()) + " does not match node shape " +
                     shape_str(dst.shape()));
  dispatch(dst.precision(), [&]<typename T>() {
    auto d = dst.data<T>();
    auto s = src.data<T>();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
  });
}

}  // namespace

Tape* common_tape(std::initializer_list<const Tensor*> ts) {
  Tape* tape = nullptr;
  for (const Tensor* t : ts) {
    if (!t || !t->on_tape()) continue;
    if (tape && tape != t->node().tape) throw ShapeError("operation mixes tensors from different tapes");
    tape = t->node().tape;
  }
  return tape;
}

Tape* common_tape(const std::vector<const Tensor*>& ts) {
  Tape* tape = nullptr;
  for (const Tensor* t : ts) {
    if (!t || !t->on_tape()) continue;
    if (tape && tape != t->node().tape) throw ShapeError("operation mixes tensors from different tapes");
    tape = t->node().tape;
  }
  return tape;
}

Tensor Tape::watch(const Tensor& t) {
  Node n;
  n.shape = t.shape();
  n.precision = t.precision();
  nodes_.push_back(std::move(n));
  Tensor out = t.detach();
  out.set_node({this, static_cast<std::uint32_t>(nodes_.size() - 1)});
  return out;
}

Tensor Tape::record(Tensor out, std::initializer_list<const Tensor*> inputs, BackwardFn fn) {
  return record(std::move(out), std::vector<const Tensor*>(inputs), std::move(fn));
}

Tensor Tape::record(Tensor out, const std::vector<const Tensor*>& inputs, BackwardFn fn) {
  Node n;
  bool any = false;
  n.inputs.reserve(inputs.size());
  for (const Tensor* t : inputs) {
    if (t && t->on_tape()) {
      if (t->node().tape != this) throw ShapeError("operation mixes tensors from different tapes");
      n.inputs.push_back(t->node().index);
      any = true;
    } else {
      n.inputs.push_back(-1);
    }
  }
  out = out.detach();
  if (!any) return out;
  n.fn = std::move(fn);
  n.shape = out.shape();
  n.precision = out.precision();
  nodes_.push_back(std::move(n));
  out.set_node({this, static_cast<std::uint32_t>(nodes_.size() - 1)});
  return out;
}

void Tape::backward(const Tensor& loss) {
  if (!loss.on_tape() || loss.node().tape != this) throw ShapeError("backward: loss is not recorded on this tape");
  if (loss.numel() != 1) throw ShapeError("backward: loss must be a scalar, got shape " + shape_str(loss.shape()));

  const std::size_t root = loss.node().index;
  std::vector<Tensor> local(root + 1);
  local[root] = Tensor::full(loss.shape(), 1.0, loss.precision());

  for (std::size_t i = root + 1; i-- > 0;) {
    if (!local[i].defined()) continue;
    Node& node = nodes_[i];
    if (!node.fn) {
      accumulate_into(grads_[static_cast<std::uint32_t>(i)], local[i]);
      local[i] = Tensor();
      continue;
    }
    std::vector<Tensor> g(node.inputs.size());
    auto needs = std::make_unique<bool[]>(node.inputs.size());
    for (std::size_t k = 0; k < node.inputs.size(); ++k) needs[k] = node.inputs[k] >= 0;
    node.fn(local[i], g, std::span<const bool>(needs.get(), node.inputs.size()));
    local[i] = Tensor();
    for (std::size_t k = 0; k < node.inputs.size(); ++k) {
      if (node.inputs[k] < 0 || !g[k].defined()) continue;
      const auto src = static_cast<std::size_t>(node.inputs[k]);
      if (g[k].shape() != nodes_[src].shape)
        throw ShapeError("backward produced gradient " + shape_str(g[k].shape()) + " for node of shape " +
                         shape_str(nodes_[src].shape));
      accumulate_into(local[src], g[k]);
    }
  }
}

std::optional<Tensor> Tape::grad(const Tensor& t) const {
  if (!t.on_tape() || t.node().tape != this) return std::nullopt;
  auto it = grads_.find(t.node().index);
  if (it == grads_.end()) return std::nullopt;
  return it->second;
}

bool Tape::has_grad(const Tensor& t) const { return grad(t).has_value(); }

}  // namespace szoo
