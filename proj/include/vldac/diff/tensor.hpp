#pragma once

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "vldac/errors.hpp"

// Minimal reverse-mode autodiff over dense rank-1/rank-2 double tensors.
// Every op records its inputs and a backprop closure on a dynamic graph;
// backward() linearizes the reachable subgraph and pushes gradients from the
// scalar root to the leaves. Scalars are shape {1}.

namespace vldac::diff {

using Shape = std::vector<int>;

int shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

namespace detail {

struct Node;
using NodePtr = std::shared_ptr<Node>;

struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until first needed
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<NodePtr> parents;            // recorded only while grads enabled
  std::function<void(Node&)> backprop;     // pull this->grad into parents

  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
  }
  bool is_leaf() const { return !backprop; }
};

}  // namespace detail

bool grad_enabled();

// Disables tape recording while alive (nestable). Ops still compute values;
// they just record no parents, so nothing built under the guard participates
// in backward().
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(const Shape& shape, bool requires_grad = false);
  static Tensor full(const Shape& shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor from(const Shape& shape, std::vector<double> data, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  int numel() const;
  int rows() const;  // rank-2 only
  int cols() const;
  bool requires_grad() const;

  std::span<const double> data() const;
  std::span<double> raw_data();  // leaf mutation (optimizer, init); not taped

  bool has_grad() const;
  std::span<const double> grad() const;  // RankError if never populated
  std::span<double> raw_grad();          // allocates zeros on first call
  void zero_grad();

  double value() const;  // scalar convenience
  double at(int i) const;
  double at(int r, int c) const;

  detail::NodePtr node() const { return node_; }
  static Tensor wrap(detail::NodePtr n) { return Tensor(std::move(n)); }

 private:
  explicit Tensor(detail::NodePtr n) : node_(std::move(n)) {}
  detail::NodePtr node_;
};

// --- fixed op set -----------------------------------------------------------
// add/mul accept equal shapes, or a {1} scalar on either side.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor tanh(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor softmax_rows(const Tensor& x);  // rank-2 rowwise (rank-1 = one row)
Tensor log(const Tensor& x);           // inputs floored at 1e-12
Tensor exp(const Tensor& x);
Tensor gather_index(const Tensor& m, const std::vector<int>& indices);  // [n,k],[n] -> [n]
Tensor sum(const Tensor& x);   // -> {1}
Tensor mean(const Tensor& x);  // -> {1}
Tensor clip(const Tensor& x, double lo, double hi);  // grad passes iff lo <= x <= hi
Tensor stop_grad(const Tensor& x);  // value-identical leaf, never requires grad

inline constexpr double kLogFloor = 1e-12;

// --- compositions (no new graph op kinds) -----------------------------------
Tensor neg(const Tensor& x);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double c);
Tensor add_const(const Tensor& x, double c);
Tensor minimum(const Tensor& a, const Tensor& b);  // b - relu(b - a)

enum class OpKind {
  matmul,
  add,
  mul,
  tanh,
  relu,
  softmax_rows,
  log,
  exp,
  gather_index,
  sum,
  mean,
  clip,
  stop_grad,
};

const char* op_name(OpKind k);

struct OpAttrs {
  double lo = 0.0;
  double hi = 0.0;
  std::vector<int> indices;
};

// Uniform dispatcher; clip reads lo/hi, gather_index reads indices.
Tensor forward_op(OpKind kind, const std::vector<Tensor>& inputs, const OpAttrs& attrs = {});

// Linearized reachable subgraph of one root, in execution order (every node
// appears after all of its parents); each node exactly once.
class Tape {
 public:
  static Tape linearize(const Tensor& root);
  size_t size() const { return order_.size(); }
  const std::vector<detail::NodePtr>& order() const { return order_; }

 private:
  std::vector<detail::NodePtr> order_;
};

// Reverse pass from a scalar loss. Leaf grads accumulate additively across
// calls; intermediate grads are reset per call. Throws RankError for
// non-scalar roots, NumericsError if the loss value is non-finite.
void backward(const Tensor& loss);

}  // namespace vldac::diff
