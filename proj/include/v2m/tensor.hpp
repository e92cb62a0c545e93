#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

namespace v2m {

// Reverse-mode autodiff over dense row-major tensors.
//
// Values and gradients are double precision. Finite-difference agreement at
// the tolerances the gradient suite enforces (1e-3 relative and tighter) is
// out of reach for f32 arithmetic: a central difference at h=1e-3 on an
// f32-rounded loss already carries ~5e-4 absolute noise.
using Shape = std::vector<int>;

std::string shape_str(const Shape& s);
int64_t numel_of(const Shape& s);

enum class OpKind {
  Matmul,
  Add,
  Mul,
  Sub,
  Scale,
  Transpose,
  Reshape,
  Concat,
  Slice,
  Softmax,
  LayerNorm,
  Sigmoid,
  Gelu,
  EmbeddingLookup,
  Mean,
  Sum,
  MseLoss,
  BroadcastAdd,
};

const char* op_name(OpKind k);

struct TensorImpl;
using TensorImplPtr = std::shared_ptr<TensorImpl>;

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // allocated the first time backward reaches this node
  bool requires_grad = false;

  // Recorded edge of the computation graph; absent on leaves.
  bool has_op = false;
  OpKind op = OpKind::Add;
  std::vector<TensorImplPtr> parents;
  std::function<void(TensorImpl&)> backward_fn;
  int64_t seq = 0;  // creation order; parents always precede children

  int64_t numel() const { return static_cast<int64_t>(data.size()); }
  void ensure_grad();
};

// Value-semantics handle sharing the underlying node.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(TensorImplPtr p) : impl_(std::move(p)) {}

  static Tensor leaf(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  int64_t numel() const;
  std::vector<double>& data();
  const std::vector<double>& data() const;
  // Empty until a backward pass reaches this tensor.
  const std::vector<double>& grad() const;
  bool requires_grad() const;
  void set_requires_grad(bool v);
  void zero_grad();
  double item() const;  // single-element tensors only

  TensorImplPtr impl() const { return impl_; }

 private:
  TensorImplPtr impl_;
};

// Materialized view of the recorded graph reaching a root, in creation
// (= topological) order: every node's inputs appear before the node.
struct GraphNode {
  OpKind kind;
  const TensorImpl* output;
  std::vector<const TensorImpl*> inputs;
};

struct Graph {
  std::vector<GraphNode> nodes;
  static Graph trace(const Tensor& root);
};

// Accumulates gradients of a scalar loss into every reachable tensor that
// requires grad. Repeated calls keep accumulating; zero_grad resets.
void backward(const Tensor& loss);

// ---- ops -------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double alpha);
Tensor transpose(const Tensor& a);
Tensor reshape(const Tensor& a, Shape target);
Tensor concat(const std::vector<Tensor>& parts, int axis);
Tensor slice(const Tensor& a, int axis, int start, int len);
Tensor softmax(const Tensor& a, int axis);
Tensor layer_norm(const Tensor& a, int axis, double eps = 1e-5);
Tensor sigmoid(const Tensor& a);
Tensor gelu(const Tensor& a);
Tensor embedding_lookup(const Tensor& table, const std::vector<int>& indices);
Tensor mean(const Tensor& a);
Tensor sum(const Tensor& a);
Tensor mse_loss(const Tensor& pred, const Tensor& target);
// Adds b to a with b's leading axes broadcast (bias-add and friends):
// after left-padding b's shape with 1s, every axis must match a's or be 1.
Tensor broadcast_add(const Tensor& a, const Tensor& b);

// Dynamic dispatch surface over the same op set. Unknown kinds and missing
// attributes are errors naming the op.
struct OpAttrs {
  std::map<std::string, double> scalars;
  std::map<std::string, std::vector<int>> int_lists;

  double get_scalar(const std::string& key, const std::string& op) const;
  double get_scalar_or(const std::string& key, double fallback) const;
  const std::vector<int>& get_ints(const std::string& key, const std::string& op) const;
};

Tensor apply_op(const std::string& kind, const std::vector<Tensor>& inputs, const OpAttrs& attrs);

// Max over input elements of |analytic - numeric| / max(|analytic|, 1e-6),
// where numeric is the central difference of fn's scalar output. fn must
// rebuild its graph on every call.
double grad_check(const std::function<Tensor(const Tensor&)>& fn, Tensor input, double h = 1e-3);

}  // namespace v2m
