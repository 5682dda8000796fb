#include "vldac/diff/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

namespace vldac::diff {

int shape_numel(const Shape& s) {
  if (s.empty()) return 0;
  int n = 1;
  for (int d : s) {
    if (d <= 0) return 0;
    n *= d;
  }
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << "]";
  return os.str();
}

namespace {

thread_local int g_no_grad_depth = 0;

using detail::Node;
using detail::NodePtr;

NodePtr make_leaf(Shape shape, std::vector<double> data, bool requires_grad) {
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->data = std::move(data);
  n->requires_grad = requires_grad;
  return n;
}

bool any_requires(std::initializer_list<const Tensor*> ts) {
  for (const Tensor* t : ts)
    if (t->node() && t->node()->requires_grad) return true;
  return false;
}

// Build the result node; tape it only when grads are on and some input needs them.
Tensor make_op(const char* op, Shape shape, std::vector<double> data,
               std::initializer_list<const Tensor*> inputs,
               std::function<void(Node&)> backprop) {
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->data = std::move(data);
  n->op = op;
  if (grad_enabled() && any_requires(inputs)) {
    n->requires_grad = true;
    n->parents.reserve(inputs.size());
    for (const Tensor* t : inputs) n->parents.push_back(t->node());
    n->backprop = std::move(backprop);
  }
  return Tensor::wrap(n);
}

void check_defined(const char* op, std::initializer_list<const Tensor*> ts) {
  for (const Tensor* t : ts)
    if (!t->defined()) throw ShapeError(std::string(op) + ": undefined tensor input");
}

[[noreturn]] void shape_fail(const char* op, const Tensor& a) {
  throw ShapeError(std::string(op) + ": bad input shape " + shape_str(a.shape()));
}

[[noreturn]] void shape_fail2(const char* op, const Tensor& a, const Tensor& b) {
  throw ShapeError(std::string(op) + ": incompatible shapes " + shape_str(a.shape()) + " and " +
                   shape_str(b.shape()));
}

bool rank2(const Tensor& t) { return t.shape().size() == 2; }

}  // namespace

bool grad_enabled() { return g_no_grad_depth == 0; }

NoGradGuard::NoGradGuard() { ++g_no_grad_depth; }
NoGradGuard::~NoGradGuard() { --g_no_grad_depth; }

// --- Tensor basics -----------------------------------------------------------

Tensor Tensor::zeros(const Shape& shape, bool requires_grad) {
  return full(shape, 0.0, requires_grad);
}

Tensor Tensor::full(const Shape& shape, double value, bool requires_grad) {
  int n = shape_numel(shape);
  if (n <= 0 || shape.size() > 2) throw ShapeError("tensor: invalid shape " + shape_str(shape));
  return Tensor(make_leaf(shape, std::vector<double>(static_cast<size_t>(n), value), requires_grad));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return full({1}, value, requires_grad);
}

Tensor Tensor::from(const Shape& shape, std::vector<double> data, bool requires_grad) {
  int n = shape_numel(shape);
  if (n <= 0 || shape.size() > 2) throw ShapeError("tensor: invalid shape " + shape_str(shape));
  if (static_cast<size_t>(n) != data.size())
    throw ShapeError("tensor: data size " + std::to_string(data.size()) + " does not match shape " +
                     shape_str(shape));
  return Tensor(make_leaf(shape, std::move(data), requires_grad));
}

const Shape& Tensor::shape() const {
  if (!node_) throw ShapeError("shape() on undefined tensor");
  return node_->shape;
}

int Tensor::numel() const { return shape_numel(shape()); }

int Tensor::rows() const {
  if (!rank2(*this)) throw RankError("rows() on non-rank-2 tensor " + shape_str(shape()));
  return shape()[0];
}

int Tensor::cols() const {
  if (!rank2(*this)) throw RankError("cols() on non-rank-2 tensor " + shape_str(shape()));
  return shape()[1];
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

std::span<const double> Tensor::data() const {
  if (!node_) throw ShapeError("data() on undefined tensor");
  return {node_->data.data(), node_->data.size()};
}

std::span<double> Tensor::raw_data() {
  if (!node_) throw ShapeError("raw_data() on undefined tensor");
  return {node_->data.data(), node_->data.size()};
}

bool Tensor::has_grad() const { return node_ && node_->grad.size() == node_->data.size(); }

std::span<const double> Tensor::grad() const {
  if (!has_grad()) throw RankError("grad() before any backward touched this tensor");
  return {node_->grad.data(), node_->grad.size()};
}

std::span<double> Tensor::raw_grad() {
  if (!node_) throw ShapeError("raw_grad() on undefined tensor");
  node_->ensure_grad();
  return {node_->grad.data(), node_->grad.size()};
}

void Tensor::zero_grad() {
  if (node_ && !node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

double Tensor::value() const {
  if (numel() != 1) throw RankError("value() on non-scalar tensor " + shape_str(shape()));
  return node_->data[0];
}

double Tensor::at(int i) const {
  if (i < 0 || i >= numel()) throw ShapeError("at(): index out of range");
  return node_->data[static_cast<size_t>(i)];
}

double Tensor::at(int r, int c) const {
  int nc = cols();
  if (r < 0 || r >= rows() || c < 0 || c >= nc) throw ShapeError("at(): index out of range");
  return node_->data[static_cast<size_t>(r) * nc + c];
}

// --- ops ----------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  check_defined("matmul", {&a, &b});
  if (!rank2(a) || !rank2(b) || a.cols() != b.rows()) shape_fail2("matmul", a, b);
  const int n = a.rows(), k = a.cols(), m = b.cols();
  std::vector<double> out(static_cast<size_t>(n) * m, 0.0);
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  for (int i = 0; i < n; ++i) {
    const double* arow = pa + static_cast<size_t>(i) * k;
    double* orow = out.data() + static_cast<size_t>(i) * m;
    for (int kk = 0; kk < k; ++kk) {
      const double av = arow[kk];
      if (av == 0.0) continue;
      const double* brow = pb + static_cast<size_t>(kk) * m;
      for (int j = 0; j < m; ++j) orow[j] += av * brow[j];
    }
  }
  auto an = a.node(), bn = b.node();
  return make_op("matmul", {n, m}, std::move(out), {&a, &b}, [an, bn, n, k, m](Node& self) {
    const double* g = self.grad.data();
    if (an->requires_grad) {
      an->ensure_grad();
      // dA = G @ B^T
      for (int i = 0; i < n; ++i) {
        const double* grow = g + static_cast<size_t>(i) * m;
        double* arow = an->grad.data() + static_cast<size_t>(i) * k;
        for (int kk = 0; kk < k; ++kk) {
          const double* brow = bn->data.data() + static_cast<size_t>(kk) * m;
          double acc = 0;
          for (int j = 0; j < m; ++j) acc += grow[j] * brow[j];
          arow[kk] += acc;
        }
      }
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      // dB = A^T @ G
      for (int kk = 0; kk < k; ++kk) {
        double* brow = bn->grad.data() + static_cast<size_t>(kk) * m;
        for (int i = 0; i < n; ++i) {
          const double av = an->data[static_cast<size_t>(i) * k + kk];
          if (av == 0.0) continue;
          const double* grow = g + static_cast<size_t>(i) * m;
          for (int j = 0; j < m; ++j) brow[j] += av * grow[j];
        }
      }
    }
  });
}

namespace {

enum class EwMode { same, scalar_rhs, scalar_lhs };

EwMode ew_mode(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() == b.shape()) return EwMode::same;
  if (b.numel() == 1) return EwMode::scalar_rhs;
  if (a.numel() == 1) return EwMode::scalar_lhs;
  shape_fail2(op, a, b);
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  check_defined("add", {&a, &b});
  EwMode mode = ew_mode("add", a, b);
  const Tensor& big = (mode == EwMode::scalar_lhs) ? b : a;
  std::vector<double> out(big.data().begin(), big.data().end());
  if (mode == EwMode::same) {
    const double* pb = b.data().data();
    for (size_t i = 0; i < out.size(); ++i) out[i] += pb[i];
  } else {
    const double s = (mode == EwMode::scalar_rhs) ? b.value() : a.value();
    for (auto& x : out) x += s;
  }
  auto an = a.node(), bn = b.node();
  return make_op("add", big.shape(), std::move(out), {&a, &b}, [an, bn](Node& self) {
    auto pull = [&](const NodePtr& p) {
      if (!p->requires_grad) return;
      p->ensure_grad();
      if (p->data.size() == self.grad.size()) {
        for (size_t i = 0; i < self.grad.size(); ++i) p->grad[i] += self.grad[i];
      } else {
        double acc = 0;
        for (double g : self.grad) acc += g;
        p->grad[0] += acc;
      }
    };
    pull(an);
    pull(bn);
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_defined("mul", {&a, &b});
  EwMode mode = ew_mode("mul", a, b);
  const Tensor& big = (mode == EwMode::scalar_lhs) ? b : a;
  std::vector<double> out(big.data().begin(), big.data().end());
  if (mode == EwMode::same) {
    const double* pb = b.data().data();
    for (size_t i = 0; i < out.size(); ++i) out[i] *= pb[i];
  } else {
    const double s = (mode == EwMode::scalar_rhs) ? b.value() : a.value();
    for (auto& x : out) x *= s;
  }
  auto an = a.node(), bn = b.node();
  return make_op("mul", big.shape(), std::move(out), {&a, &b}, [an, bn](Node& self) {
    auto pull = [&](const NodePtr& dst, const NodePtr& other) {
      if (!dst->requires_grad) return;
      dst->ensure_grad();
      if (dst->data.size() == self.grad.size()) {
        if (other->data.size() == 1) {
          const double s = other->data[0];
          for (size_t i = 0; i < self.grad.size(); ++i) dst->grad[i] += self.grad[i] * s;
        } else {
          for (size_t i = 0; i < self.grad.size(); ++i) dst->grad[i] += self.grad[i] * other->data[i];
        }
      } else {
        double acc = 0;
        for (size_t i = 0; i < self.grad.size(); ++i) acc += self.grad[i] * other->data[i];
        dst->grad[0] += acc;
      }
    };
    pull(an, bn);
    pull(bn, an);
  });
}

Tensor tanh(const Tensor& x) {
  check_defined("tanh", {&x});
  std::vector<double> out(x.data().begin(), x.data().end());
  for (auto& v : out) v = std::tanh(v);
  auto xn = x.node();
  return make_op("tanh", x.shape(), std::move(out), {&x}, [xn](Node& self) {
    if (!xn->requires_grad) return;
    xn->ensure_grad();
    for (size_t i = 0; i < self.grad.size(); ++i) {
      const double y = self.data[i];
      xn->grad[i] += self.grad[i] * (1.0 - y * y);
    }
  });
}

Tensor relu(const Tensor& x) {
  check_defined("relu", {&x});
  std::vector<double> out(x.data().begin(), x.data().end());
  for (auto& v : out) v = v > 0 ? v : 0.0;
  auto xn = x.node();
  return make_op("relu", x.shape(), std::move(out), {&x}, [xn](Node& self) {
    if (!xn->requires_grad) return;
    xn->ensure_grad();
    for (size_t i = 0; i < self.grad.size(); ++i)
      if (xn->data[i] > 0) xn->grad[i] += self.grad[i];
  });
}

Tensor softmax_rows(const Tensor& x) {
  check_defined("softmax_rows", {&x});
  const int r = rank2(x) ? x.shape()[0] : 1;
  const int c = rank2(x) ? x.shape()[1] : x.shape()[0];
  std::vector<double> out(x.data().begin(), x.data().end());
  for (int i = 0; i < r; ++i) {
    double* row = out.data() + static_cast<size_t>(i) * c;
    double mx = row[0];
    for (int j = 1; j < c; ++j) mx = std::max(mx, row[j]);
    double z = 0;
    for (int j = 0; j < c; ++j) {
      row[j] = std::exp(row[j] - mx);
      z += row[j];
    }
    for (int j = 0; j < c; ++j) row[j] /= z;
  }
  auto xn = x.node();
  return make_op("softmax_rows", x.shape(), std::move(out), {&x}, [xn, r, c](Node& self) {
    if (!xn->requires_grad) return;
    xn->ensure_grad();
    for (int i = 0; i < r; ++i) {
      const double* p = self.data.data() + static_cast<size_t>(i) * c;
      const double* g = self.grad.data() + static_cast<size_t>(i) * c;
      double dot = 0;
      for (int j = 0; j < c; ++j) dot += g[j] * p[j];
      double* gx = xn->grad.data() + static_cast<size_t>(i) * c;
      for (int j = 0; j < c; ++j) gx[j] += p[j] * (g[j] - dot);
    }
  });
}

Tensor log(const Tensor& x) {
  check_defined("log", {&x});
  std::vector<double> out(x.data().begin(), x.data().end());
  for (auto& v : out) v = std::log(std::max(v, kLogFloor));
  auto xn = x.node();
  return make_op("log", x.shape(), std::move(out), {&x}, [xn](Node& self) {
    if (!xn->requires_grad) return;
    xn->ensure_grad();
    for (size_t i = 0; i < self.grad.size(); ++i) {
      const double v = xn->data[i];
      if (v > kLogFloor) xn->grad[i] += self.grad[i] / v;  // flat below the floor
    }
  });
}

Tensor exp(const Tensor& x) {
  check_defined("exp", {&x});
  std::vector<double> out(x.data().begin(), x.data().end());
  for (auto& v : out) v = std::exp(v);
  auto xn = x.node();
  return make_op("exp", x.shape(), std::move(out), {&x}, [xn](Node& self) {
    if (!xn->requires_grad) return;
    xn->ensure_grad();
    for (size_t i = 0; i < self.grad.size(); ++i) xn->grad[i] += self.grad[i] * self.data[i];
  });
}

Tensor gather_index(const Tensor& m, const std::vector<int>& indices) {
  check_defined("gather_index", {&m});
  if (!rank2(m)) shape_fail("gather_index", m);
  const int n = m.rows(), k = m.cols();
  if (static_cast<int>(indices.size()) != n)
    throw ShapeError("gather_index: " + std::to_string(indices.size()) + " indices for " +
                     std::to_string(n) + " rows");
  for (int idx : indices)
    if (idx < 0 || idx >= k)
      throw ShapeError("gather_index: index " + std::to_string(idx) + " out of range [0," +
                       std::to_string(k) + ")");
  std::vector<double> out(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) out[static_cast<size_t>(i)] = m.at(i, indices[static_cast<size_t>(i)]);
  auto mn = m.node();
  auto idx = indices;
  return make_op("gather_index", {n}, std::move(out), {&m}, [mn, idx, k](Node& self) {
    if (!mn->requires_grad) return;
    mn->ensure_grad();
    for (size_t i = 0; i < self.grad.size(); ++i)
      mn->grad[i * k + static_cast<size_t>(idx[i])] += self.grad[i];
  });
}

Tensor sum(const Tensor& x) {
  check_defined("sum", {&x});
  double acc = 0;
  for (double v : x.data()) acc += v;
  auto xn = x.node();
  return make_op("sum", {1}, {acc}, {&x}, [xn](Node& self) {
    if (!xn->requires_grad) return;
    xn->ensure_grad();
    const double g = self.grad[0];
    for (auto& gv : xn->grad) gv += g;
  });
}

Tensor mean(const Tensor& x) {
  check_defined("mean", {&x});
  double acc = 0;
  for (double v : x.data()) acc += v;
  const double n = static_cast<double>(x.numel());
  auto xn = x.node();
  return make_op("mean", {1}, {acc / n}, {&x}, [xn, n](Node& self) {
    if (!xn->requires_grad) return;
    xn->ensure_grad();
    const double g = self.grad[0] / n;
    for (auto& gv : xn->grad) gv += g;
  });
}

Tensor clip(const Tensor& x, double lo, double hi) {
  check_defined("clip", {&x});
  if (!(lo <= hi)) throw Error("clip: lo > hi");
  std::vector<double> out(x.data().begin(), x.data().end());
  for (auto& v : out) v = std::clamp(v, lo, hi);
  auto xn = x.node();
  return make_op("clip", x.shape(), std::move(out), {&x}, [xn, lo, hi](Node& self) {
    if (!xn->requires_grad) return;
    xn->ensure_grad();
    for (size_t i = 0; i < self.grad.size(); ++i) {
      const double v = xn->data[i];
      if (v >= lo && v <= hi) xn->grad[i] += self.grad[i];
    }
  });
}

Tensor stop_grad(const Tensor& x) {
  check_defined("stop_grad", {&x});
  auto n = make_leaf(x.shape(), std::vector<double>(x.data().begin(), x.data().end()), false);
  n->op = "stop_grad";
  return Tensor::wrap(n);
}

// --- compositions -------------------------------------------------------------

Tensor neg(const Tensor& x) { return mul(x, Tensor::scalar(-1.0)); }
Tensor sub(const Tensor& a, const Tensor& b) { return add(a, neg(b)); }
Tensor scale(const Tensor& x, double c) { return mul(x, Tensor::scalar(c)); }
Tensor add_const(const Tensor& x, double c) { return add(x, Tensor::scalar(c)); }

Tensor minimum(const Tensor& a, const Tensor& b) {
  // min(a,b) = b - relu(b - a); exact, and gradient goes to the smaller branch
  // (ties route gradient to b, since relu'(0) = 0).
  return sub(b, relu(sub(b, a)));
}

const char* op_name(OpKind k) {
  switch (k) {
    case OpKind::matmul: return "matmul";
    case OpKind::add: return "add";
    case OpKind::mul: return "mul";
    case OpKind::tanh: return "tanh";
    case OpKind::relu: return "relu";
    case OpKind::softmax_rows: return "softmax_rows";
    case OpKind::log: return "log";
    case OpKind::exp: return "exp";
    case OpKind::gather_index: return "gather_index";
    case OpKind::sum: return "sum";
    case OpKind::mean: return "mean";
    case OpKind::clip: return "clip";
    case OpKind::stop_grad: return "stop_grad";
  }
  return "?";
}

namespace {

void need_arity(OpKind k, const std::vector<Tensor>& in, size_t n) {
  if (in.size() != n)
    throw ShapeError(std::string(op_name(k)) + ": expected " + std::to_string(n) + " inputs, got " +
                     std::to_string(in.size()));
}

}  // namespace

Tensor forward_op(OpKind kind, const std::vector<Tensor>& inputs, const OpAttrs& attrs) {
  switch (kind) {
    case OpKind::matmul: need_arity(kind, inputs, 2); return matmul(inputs[0], inputs[1]);
    case OpKind::add: need_arity(kind, inputs, 2); return add(inputs[0], inputs[1]);
    case OpKind::mul: need_arity(kind, inputs, 2); return mul(inputs[0], inputs[1]);
    case OpKind::tanh: need_arity(kind, inputs, 1); return tanh(inputs[0]);
    case OpKind::relu: need_arity(kind, inputs, 1); return relu(inputs[0]);
    case OpKind::softmax_rows: need_arity(kind, inputs, 1); return softmax_rows(inputs[0]);
    case OpKind::log: need_arity(kind, inputs, 1); return log(inputs[0]);
    case OpKind::exp: need_arity(kind, inputs, 1); return exp(inputs[0]);
    case OpKind::gather_index: need_arity(kind, inputs, 1); return gather_index(inputs[0], attrs.indices);
    case OpKind::sum: need_arity(kind, inputs, 1); return sum(inputs[0]);
    case OpKind::mean: need_arity(kind, inputs, 1); return mean(inputs[0]);
    case OpKind::clip: need_arity(kind, inputs, 1); return clip(inputs[0], attrs.lo, attrs.hi);
    case OpKind::stop_grad: need_arity(kind, inputs, 1); return stop_grad(inputs[0]);
  }
  throw Error("forward_op: unknown op kind");
}

// --- tape / backward -----------------------------------------------------------

Tape Tape::linearize(const Tensor& root) {
  Tape t;
  if (!root.defined()) return t;
  std::unordered_set<const Node*> seen;
  // Iterative post-order: parents land in order_ before their dependents.
  std::vector<std::pair<NodePtr, size_t>> stack;
  if (seen.insert(root.node().get()).second) stack.emplace_back(root.node(), 0);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      NodePtr p = node->parents[next++];
      if (seen.insert(p.get()).second) stack.emplace_back(std::move(p), 0);
    } else {
      t.order_.push_back(node);
      stack.pop_back();
    }
  }
  return t;
}

void backward(const Tensor& loss) {
  if (!loss.defined()) throw ShapeError("backward: undefined tensor");
  if (loss.numel() != 1) throw RankError("backward: loss must be scalar, got " + shape_str(loss.shape()));
  if (!std::isfinite(loss.value())) throw NumericsError("backward: non-finite loss value");
  if (!loss.node()->requires_grad) {
    return;  // constant loss: nothing reachable carries grad
  }
  Tape tape = Tape::linearize(loss);
  for (const auto& n : tape.order()) {
    if (!n->is_leaf()) {
      n->grad.assign(n->data.size(), 0.0);  // intermediates reset each pass
    } else if (n->requires_grad) {
      n->ensure_grad();  // contract: reachable grad leaves are populated after backward
    }
  }
  loss.node()->ensure_grad();
  loss.node()->grad[0] += 1.0;
  const auto& order = tape.order();
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node& n = **it;
    if (n.backprop && n.requires_grad) n.backprop(n);
  }
}

}  // namespace vldac::diff
