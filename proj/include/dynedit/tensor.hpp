#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace dynedit {

#define DYN_CHECK(cond, msg)                                  \
  do {                                                        \
    if (!(cond)) {                                            \
      std::ostringstream os_;                                 \
      os_ << "dynedit: " << msg;                              \
      throw std::runtime_error(os_.str());                    \
    }                                                         \
  } while (0)

using Shape = std::vector<std::int64_t>;

inline std::int64_t shape_numel(const Shape& s) {
  std::int64_t n = 1;
  for (auto d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string r = "(";
  for (size_t i = 0; i < s.size(); ++i) r += (i ? "," : "") + std::to_string(s[i]);
  return r + ")";
}

// Reverse-mode autodiff on a dynamically built graph. Backward functions are
// expressed through the public op layer, so when grad mode stays on during a
// backward pass the produced gradients are themselves graph nodes; that is
// what makes second-order terms (gradient penalties) differentiable.
namespace grad_mode {
inline bool& flag() {
  thread_local bool enabled = true;
  return enabled;
}
inline bool enabled() { return flag(); }
struct Guard {
  explicit Guard(bool on) : prev(flag()) { flag() = on; }
  ~Guard() { flag() = prev; }
  Guard(const Guard&) = delete;
  bool prev;
};
}  // namespace grad_mode

using GradGuard = grad_mode::Guard;

template <class S>
class Tensor;

template <class S>
struct TensorNode : std::enable_shared_from_this<TensorNode<S>> {
  Shape shape;
  std::vector<S> value;
  bool requires_grad = false;
  bool is_leaf = false;
  // Persistent gradient buffer, filled by backward() for leaves only.
  std::vector<S> grad_buf;
  std::vector<Tensor<S>> parents;
  // Maps the upstream gradient to one gradient per parent (same order).
  std::function<std::vector<Tensor<S>>(const Tensor<S>& upstream, const Tensor<S>& self)> vjp;
};

template <class S>
class Tensor {
 public:
  using Scalar = S;

  Tensor() = default;

  Tensor(Shape shape, std::vector<S> value, bool requires_grad = false) {
    DYN_CHECK(shape_numel(shape) == static_cast<std::int64_t>(value.size()),
              "tensor shape " << shape_str(shape) << " does not match value count " << value.size());
    node_ = std::make_shared<TensorNode<S>>();
    node_->shape = std::move(shape);
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
    node_->is_leaf = true;
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    std::vector<S> v(static_cast<size_t>(shape_numel(shape)), S(0));
    return Tensor(std::move(shape), std::move(v), requires_grad);
  }

  static Tensor full(Shape shape, S x) {
    std::vector<S> v(static_cast<size_t>(shape_numel(shape)), x);
    return Tensor(std::move(shape), std::move(v), false);
  }

  static Tensor scalar(S x) { return Tensor({}, {x}, false); }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::int64_t numel() const { return static_cast<std::int64_t>(node_->value.size()); }
  std::int64_t dim(int i) const { return node_->shape[static_cast<size_t>(i)]; }
  int ndim() const { return static_cast<int>(node_->shape.size()); }

  const std::vector<S>& data() const { return node_->value; }
  std::vector<S>& mutable_data() { return node_->value; }

  S item() const {
    DYN_CHECK(numel() == 1, "item() on tensor of " << numel() << " elements");
    return node_->value[0];
  }

  bool requires_grad() const { return node_ && node_->requires_grad; }
  bool is_leaf() const { return node_ && node_->is_leaf; }

  void set_requires_grad(bool rg) {
    DYN_CHECK(node_ && node_->is_leaf, "set_requires_grad on non-leaf");
    node_->requires_grad = rg;
  }

  // Leaf gradient accumulated by backward(); empty until first use.
  const std::vector<S>& grad() const { return node_->grad_buf; }
  void zero_grad() { node_->grad_buf.clear(); }

  TensorNode<S>* node() const { return node_.get(); }

  static Tensor from_node(std::shared_ptr<TensorNode<S>> n) {
    Tensor t;
    t.node_ = std::move(n);
    return t;
  }

 private:
  std::shared_ptr<TensorNode<S>> node_;
};

// Builds an op result node. Records parents and the backward function only
// when grad mode is on and some parent needs gradients.
template <class S>
Tensor<S> make_op(Shape shape, std::vector<S> value, std::vector<Tensor<S>> parents,
                  std::function<std::vector<Tensor<S>>(const Tensor<S>&, const Tensor<S>&)> vjp) {
  DYN_CHECK(shape_numel(shape) == static_cast<std::int64_t>(value.size()),
            "op result shape " << shape_str(shape) << " vs " << value.size() << " values");
  auto n = std::make_shared<TensorNode<S>>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  bool track = false;
  if (grad_mode::enabled()) {
    for (const auto& p : parents)
      if (p.requires_grad()) track = true;
  }
  if (track) {
    n->requires_grad = true;
    n->parents = std::move(parents);
    n->vjp = std::move(vjp);
  }
  return Tensor<S>::from_node(std::move(n));
}

namespace detail {

template <class S>
void topo_sort(TensorNode<S>* root, std::vector<TensorNode<S>*>& order) {
  std::unordered_set<TensorNode<S>*> seen;
  std::vector<std::pair<TensorNode<S>*, size_t>> stack;
  stack.emplace_back(root, 0);
  seen.insert(root);
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->parents.size()) {
      TensorNode<S>* p = node->parents[idx].node();
      ++idx;
      if (p && p->requires_grad && !seen.count(p)) {
        seen.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  // order is parents-first; reverse iteration visits root first.
}

}  // namespace detail

template <class S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b);  // ops.hpp

// Core reverse sweep. Returns gradients for `wrt` (graph tensors when
// create_graph is true). When accumulate_leaves is set, numeric gradients of
// every reachable leaf are added into its persistent buffer.
template <class S>
std::vector<Tensor<S>> run_backward(const Tensor<S>& output, const std::vector<Tensor<S>>& wrt,
                                    bool create_graph, bool accumulate_leaves,
                                    Tensor<S> seed_grad = {}) {
  DYN_CHECK(output.requires_grad(), "backward on tensor that does not require grad");
  if (!seed_grad.defined()) {
    DYN_CHECK(output.numel() == 1, "backward needs explicit seed for non-scalar output");
    seed_grad = Tensor<S>::full(output.shape(), S(1));
  }
  std::vector<TensorNode<S>*> order;
  detail::topo_sort(output.node(), order);

  std::unordered_map<TensorNode<S>*, Tensor<S>> grads;
  grads[output.node()] = seed_grad;

  {
    grad_mode::Guard g(create_graph);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      TensorNode<S>* n = *it;
      auto gi = grads.find(n);
      if (gi == grads.end()) continue;
      if (n->is_leaf || !n->vjp) continue;
      Tensor<S> self = Tensor<S>::from_node(n->shared_from_this());
      std::vector<Tensor<S>> pg = n->vjp(gi->second, self);
      DYN_CHECK(pg.size() == n->parents.size(), "vjp arity mismatch");
      for (size_t i = 0; i < pg.size(); ++i) {
        TensorNode<S>* p = n->parents[i].node();
        if (!p || !p->requires_grad || !pg[i].defined()) continue;
        auto pi = grads.find(p);
        if (pi == grads.end())
          grads[p] = pg[i];
        else
          pi->second = add(pi->second, pg[i]);
      }
    }
  }

  if (accumulate_leaves) {
    for (auto* n : order) {
      if (!n->is_leaf || !n->requires_grad) continue;
      auto gi = grads.find(n);
      if (gi == grads.end()) continue;
      const auto& gv = gi->second.data();
      if (n->grad_buf.empty()) n->grad_buf.assign(n->value.size(), S(0));
      for (size_t i = 0; i < gv.size(); ++i) n->grad_buf[i] += gv[i];
    }
  }

  std::vector<Tensor<S>> out;
  out.reserve(wrt.size());
  for (const auto& w : wrt) {
    auto gi = grads.find(w.node());
    out.push_back(gi == grads.end() ? Tensor<S>() : gi->second);
  }
  return out;
}

// Accumulates gradients into every reachable leaf's grad buffer.
template <class S>
void backward(const Tensor<S>& loss) {
  run_backward(loss, {}, /*create_graph=*/false, /*accumulate_leaves=*/true);
}

// Gradients of output w.r.t. selected tensors, optionally keeping the result
// differentiable for a second backward pass.
template <class S>
std::vector<Tensor<S>> grad_of(const Tensor<S>& output, const std::vector<Tensor<S>>& wrt,
                               bool create_graph) {
  return run_backward(output, wrt, create_graph, /*accumulate_leaves=*/false);
}

}  // namespace dynedit
