#include "v2m/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <stdexcept>
#include <unordered_set>

namespace v2m {

namespace {

std::atomic<int64_t> g_seq{1};

void check(bool ok, const std::string& msg) {
  if (!ok) throw std::runtime_error(msg);
}

// outer * axis * inner decomposition for strided per-lane loops
struct Lanes {
  int64_t outer, axis, inner;
};

Lanes lanes_for(const Shape& s, int axis) {
  Lanes l{1, s[axis], 1};
  for (int i = 0; i < axis; ++i) l.outer *= s[i];
  for (size_t i = axis + 1; i < s.size(); ++i) l.inner *= s[i];
  return l;
}

int normalize_axis(int axis, int rank, const char* op) {
  int a = axis < 0 ? axis + rank : axis;
  check(a >= 0 && a < rank, std::string(op) + ": axis " + std::to_string(axis) +
                                " out of range for rank " + std::to_string(rank));
  return a;
}

}  // namespace

std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

int64_t numel_of(const Shape& s) {
  int64_t n = 1;
  for (int d : s) n *= d;
  return n;
}

const char* op_name(OpKind k) {
  switch (k) {
    case OpKind::Matmul: return "matmul";
    case OpKind::Add: return "add";
    case OpKind::Mul: return "mul";
    case OpKind::Sub: return "sub";
    case OpKind::Scale: return "scale";
    case OpKind::Transpose: return "transpose";
    case OpKind::Reshape: return "reshape";
    case OpKind::Concat: return "concat";
    case OpKind::Slice: return "slice";
    case OpKind::Softmax: return "softmax";
    case OpKind::LayerNorm: return "layer_norm";
    case OpKind::Sigmoid: return "sigmoid";
    case OpKind::Gelu: return "gelu";
    case OpKind::EmbeddingLookup: return "embedding_lookup";
    case OpKind::Mean: return "mean";
    case OpKind::Sum: return "sum";
    case OpKind::MseLoss: return "mse_loss";
    case OpKind::BroadcastAdd: return "broadcast_add";
  }
  return "?";
}

void TensorImpl::ensure_grad() {
  if (grad.empty()) grad.assign(data.size(), 0.0);
}

Tensor Tensor::leaf(Shape shape, std::vector<double> values, bool requires_grad) {
  check(!shape.empty(), "tensor: empty shape");
  for (int d : shape) check(d > 0, "tensor: non-positive dim in " + shape_str(shape));
  check(numel_of(shape) == static_cast<int64_t>(values.size()),
        "tensor: " + shape_str(shape) + " holds " + std::to_string(numel_of(shape)) +
            " values, got " + std::to_string(values.size()));
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(values);
  impl->requires_grad = requires_grad;
  impl->seq = g_seq.fetch_add(1);
  return Tensor(impl);
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  int64_t n = numel_of(shape);
  return leaf(std::move(shape), std::vector<double>(n, value), requires_grad);
}

const Shape& Tensor::shape() const {
  check(defined(), "tensor: use of empty handle");
  return impl_->shape;
}

int64_t Tensor::numel() const { return impl_ ? impl_->numel() : 0; }

std::vector<double>& Tensor::data() {
  check(defined(), "tensor: use of empty handle");
  return impl_->data;
}

const std::vector<double>& Tensor::data() const {
  check(defined(), "tensor: use of empty handle");
  return impl_->data;
}

const std::vector<double>& Tensor::grad() const {
  check(defined(), "tensor: use of empty handle");
  return impl_->grad;
}

bool Tensor::requires_grad() const { return impl_ && impl_->requires_grad; }

void Tensor::set_requires_grad(bool v) {
  check(defined(), "tensor: use of empty handle");
  impl_->requires_grad = v;
}

void Tensor::zero_grad() {
  check(defined(), "tensor: use of empty handle");
  impl_->grad.clear();
}

double Tensor::item() const {
  check(defined() && numel() == 1,
        "tensor: item() needs exactly one element, shape is " +
            (defined() ? shape_str(impl_->shape) : std::string("<empty>")));
  return impl_->data[0];
}

namespace {

Tensor make_result(Shape shape, std::vector<double> values, OpKind op,
                   std::vector<TensorImplPtr> parents,
                   std::function<void(TensorImpl&)> backward_fn) {
  Tensor out = Tensor::leaf(std::move(shape), std::move(values), false);
  bool needs = false;
  for (const auto& p : parents)
    if (p->requires_grad) needs = true;
  if (needs) {
    auto impl = out.impl();
    impl->requires_grad = true;
    impl->has_op = true;
    impl->op = op;
    impl->parents = std::move(parents);
    impl->backward_fn = std::move(backward_fn);
  }
  return out;
}

void accum(TensorImpl& dst, int64_t idx, double v) {
  if (!dst.requires_grad) return;
  dst.ensure_grad();
  dst.grad[idx] += v;
}

}  // namespace

Graph Graph::trace(const Tensor& root) {
  check(root.defined(), "graph: empty root");
  std::vector<const TensorImpl*> order;
  std::unordered_set<const TensorImpl*> seen;
  std::vector<TensorImpl*> stack{root.impl().get()};
  while (!stack.empty()) {
    TensorImpl* cur = stack.back();
    stack.pop_back();
    if (!seen.insert(cur).second) continue;
    order.push_back(cur);
    for (const auto& p : cur->parents) stack.push_back(p.get());
  }
  std::sort(order.begin(), order.end(),
            [](const TensorImpl* a, const TensorImpl* b) { return a->seq < b->seq; });
  Graph g;
  for (const TensorImpl* t : order) {
    if (!t->has_op) continue;
    GraphNode node;
    node.kind = t->op;
    node.output = t;
    for (const auto& p : t->parents) node.inputs.push_back(p.get());
    g.nodes.push_back(std::move(node));
  }
  return g;
}

void backward(const Tensor& loss) {
  check(loss.defined(), "backward: empty loss");
  check(loss.numel() == 1,
        "backward: loss must be scalar, shape is " + shape_str(loss.shape()));
  check(loss.requires_grad(),
        "backward: loss is detached from any recorded graph (requires_grad is false)");

  // Topological order falls out of creation order: parents precede children.
  std::vector<TensorImpl*> order;
  std::unordered_set<TensorImpl*> seen;
  std::vector<TensorImpl*> stack{loss.impl().get()};
  while (!stack.empty()) {
    TensorImpl* cur = stack.back();
    stack.pop_back();
    if (!seen.insert(cur).second) continue;
    order.push_back(cur);
    for (const auto& p : cur->parents) stack.push_back(p.get());
  }
  std::sort(order.begin(), order.end(),
            [](const TensorImpl* a, const TensorImpl* b) { return a->seq > b->seq; });

  loss.impl()->ensure_grad();
  loss.impl()->grad[0] += 1.0;
  for (TensorImpl* node : order) {
    if (node->has_op && !node->grad.empty()) node->backward_fn(*node);
  }
}

// ---- binary elementwise ------------------------------------------------

namespace {

Tensor elementwise_binary(const Tensor& a, const Tensor& b, OpKind kind) {
  check(a.shape() == b.shape(), std::string(op_name(kind)) + ": shape mismatch " +
                                    shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  const auto& av = a.data();
  const auto& bv = b.data();
  std::vector<double> out(av.size());
  switch (kind) {
    case OpKind::Add:
      for (size_t i = 0; i < av.size(); ++i) out[i] = av[i] + bv[i];
      break;
    case OpKind::Sub:
      for (size_t i = 0; i < av.size(); ++i) out[i] = av[i] - bv[i];
      break;
    case OpKind::Mul:
      for (size_t i = 0; i < av.size(); ++i) out[i] = av[i] * bv[i];
      break;
    default:
      throw std::runtime_error("elementwise: bad kind");
  }
  auto pa = a.impl(), pb = b.impl();
  return make_result(a.shape(), std::move(out), kind, {pa, pb},
                     [pa, pb, kind](TensorImpl& self) {
                       const auto& g = self.grad;
                       for (size_t i = 0; i < g.size(); ++i) {
                         switch (kind) {
                           case OpKind::Add:
                             accum(*pa, i, g[i]);
                             accum(*pb, i, g[i]);
                             break;
                           case OpKind::Sub:
                             accum(*pa, i, g[i]);
                             accum(*pb, i, -g[i]);
                             break;
                           case OpKind::Mul:
                             accum(*pa, i, g[i] * pb->data[i]);
                             accum(*pb, i, g[i] * pa->data[i]);
                             break;
                           default:
                             break;
                         }
                       }
                     });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return elementwise_binary(a, b, OpKind::Add); }
Tensor sub(const Tensor& a, const Tensor& b) { return elementwise_binary(a, b, OpKind::Sub); }
Tensor mul(const Tensor& a, const Tensor& b) { return elementwise_binary(a, b, OpKind::Mul); }

Tensor matmul(const Tensor& a, const Tensor& b) {
  check(a.shape().size() == 2 && b.shape().size() == 2,
        "matmul: expects 2-D operands, got " + shape_str(a.shape()) + " and " +
            shape_str(b.shape()));
  const int m = a.shape()[0], k = a.shape()[1];
  const int k2 = b.shape()[0], n = b.shape()[1];
  check(k == k2, "matmul: inner dims " + std::to_string(k) + " vs " + std::to_string(k2) +
                     " for " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  const double* A = a.data().data();
  const double* B = b.data().data();
  std::vector<double> out(static_cast<size_t>(m) * n, 0.0);
  for (int i = 0; i < m; ++i) {
    const double* arow = A + static_cast<int64_t>(i) * k;
    double* crow = out.data() + static_cast<int64_t>(i) * n;
    for (int p = 0; p < k; ++p) {
      const double aip = arow[p];
      if (aip == 0.0) continue;
      const double* brow = B + static_cast<int64_t>(p) * n;
      for (int j = 0; j < n; ++j) crow[j] += aip * brow[j];
    }
  }
  auto pa = a.impl(), pb = b.impl();
  return make_result({m, n}, std::move(out), OpKind::Matmul, {pa, pb},
                     [pa, pb, m, k, n](TensorImpl& self) {
                       const double* G = self.grad.data();
                       if (pa->requires_grad) {
                         pa->ensure_grad();
                         double* dA = pa->grad.data();
                         const double* B = pb->data.data();
                         // dA = G * B^T
                         for (int i = 0; i < m; ++i)
                           for (int j = 0; j < n; ++j) {
                             const double gij = G[static_cast<int64_t>(i) * n + j];
                             if (gij == 0.0) continue;
                             const double* brow = B;  // row p, col j
                             for (int p = 0; p < k; ++p)
                               dA[static_cast<int64_t>(i) * k + p] +=
                                   gij * brow[static_cast<int64_t>(p) * n + j];
                           }
                       }
                       if (pb->requires_grad) {
                         pb->ensure_grad();
                         double* dB = pb->grad.data();
                         const double* A = pa->data.data();
                         // dB = A^T * G
                         for (int p = 0; p < k; ++p)
                           for (int i = 0; i < m; ++i) {
                             const double aip = A[static_cast<int64_t>(i) * k + p];
                             if (aip == 0.0) continue;
                             const double* grow = G + static_cast<int64_t>(i) * n;
                             double* drow = dB + static_cast<int64_t>(p) * n;
                             for (int j = 0; j < n; ++j) drow[j] += aip * grow[j];
                           }
                       }
                     });
}

Tensor scale(const Tensor& a, double alpha) {
  std::vector<double> out(a.data().size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * alpha;
  auto pa = a.impl();
  return make_result(a.shape(), std::move(out), OpKind::Scale, {pa},
                     [pa, alpha](TensorImpl& self) {
                       for (size_t i = 0; i < self.grad.size(); ++i)
                         accum(*pa, i, self.grad[i] * alpha);
                     });
}

Tensor transpose(const Tensor& a) {
  check(a.shape().size() == 2,
        "transpose: expects a 2-D tensor, got " + shape_str(a.shape()));
  const int r = a.shape()[0], c = a.shape()[1];
  std::vector<double> out(a.data().size());
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j)
      out[static_cast<int64_t>(j) * r + i] = a.data()[static_cast<int64_t>(i) * c + j];
  auto pa = a.impl();
  return make_result({c, r}, std::move(out), OpKind::Transpose, {pa},
                     [pa, r, c](TensorImpl& self) {
                       if (!pa->requires_grad) return;
                       pa->ensure_grad();
                       for (int j = 0; j < c; ++j)
                         for (int i = 0; i < r; ++i)
                           pa->grad[static_cast<int64_t>(i) * c + j] +=
                               self.grad[static_cast<int64_t>(j) * r + i];
                     });
}

Tensor reshape(const Tensor& a, Shape target) {
  check(numel_of(target) == a.numel(),
        "reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(target));
  auto pa = a.impl();
  return make_result(std::move(target), a.data(), OpKind::Reshape, {pa},
                     [pa](TensorImpl& self) {
                       for (size_t i = 0; i < self.grad.size(); ++i)
                         accum(*pa, i, self.grad[i]);
                     });
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
  check(!parts.empty(), "concat: no inputs");
  const int rank = static_cast<int>(parts[0].shape().size());
  const int ax = normalize_axis(axis, rank, "concat");
  Shape out_shape = parts[0].shape();
  int64_t axis_total = 0;
  for (const auto& p : parts) {
    check(static_cast<int>(p.shape().size()) == rank,
          "concat: rank mismatch " + shape_str(parts[0].shape()) + " vs " +
              shape_str(p.shape()));
    for (int d = 0; d < rank; ++d)
      if (d != ax)
        check(p.shape()[d] == out_shape[d],
              "concat: dim " + std::to_string(d) + " mismatch " +
                  shape_str(parts[0].shape()) + " vs " + shape_str(p.shape()));
    axis_total += p.shape()[ax];
  }
  out_shape[ax] = static_cast<int>(axis_total);

  Lanes l = lanes_for(out_shape, ax);
  std::vector<double> out(numel_of(out_shape));
  std::vector<TensorImplPtr> parents;
  std::vector<int> extents;
  int64_t offset = 0;
  for (const auto& p : parts) {
    const int ext = p.shape()[ax];
    const auto& src = p.data();
    for (int64_t o = 0; o < l.outer; ++o)
      for (int64_t x = 0; x < ext; ++x)
        for (int64_t in = 0; in < l.inner; ++in)
          out[(o * l.axis + offset + x) * l.inner + in] =
              src[(o * ext + x) * l.inner + in];
    offset += ext;
    parents.push_back(p.impl());
    extents.push_back(ext);
  }
  auto parents_copy = parents;
  return make_result(out_shape, std::move(out), OpKind::Concat, std::move(parents),
                     [parents_copy, extents, l](TensorImpl& self) {
                       int64_t offset = 0;
                       for (size_t pi = 0; pi < parents_copy.size(); ++pi) {
                         auto& p = *parents_copy[pi];
                         const int ext = extents[pi];
                         if (p.requires_grad) {
                           p.ensure_grad();
                           for (int64_t o = 0; o < l.outer; ++o)
                             for (int64_t x = 0; x < ext; ++x)
                               for (int64_t in = 0; in < l.inner; ++in)
                                 p.grad[(o * ext + x) * l.inner + in] +=
                                     self.grad[(o * l.axis + offset + x) * l.inner + in];
                         }
                         offset += ext;
                       }
                     });
}

Tensor slice(const Tensor& a, int axis, int start, int len) {
  const int rank = static_cast<int>(a.shape().size());
  const int ax = normalize_axis(axis, rank, "slice");
  const int dim = a.shape()[ax];
  check(len > 0 && start >= 0 && start + len <= dim,
        "slice: [" + std::to_string(start) + ", " + std::to_string(start + len) +
            ") out of bounds for axis " + std::to_string(axis) + " of " +
            shape_str(a.shape()));
  Shape out_shape = a.shape();
  out_shape[ax] = len;
  Lanes l = lanes_for(a.shape(), ax);
  std::vector<double> out(numel_of(out_shape));
  const auto& src = a.data();
  for (int64_t o = 0; o < l.outer; ++o)
    for (int64_t x = 0; x < len; ++x)
      for (int64_t in = 0; in < l.inner; ++in)
        out[(o * len + x) * l.inner + in] = src[(o * l.axis + start + x) * l.inner + in];
  auto pa = a.impl();
  return make_result(out_shape, std::move(out), OpKind::Slice, {pa},
                     [pa, l, start, len](TensorImpl& self) {
                       if (!pa->requires_grad) return;
                       pa->ensure_grad();
                       for (int64_t o = 0; o < l.outer; ++o)
                         for (int64_t x = 0; x < len; ++x)
                           for (int64_t in = 0; in < l.inner; ++in)
                             pa->grad[(o * l.axis + start + x) * l.inner + in] +=
                                 self.grad[(o * len + x) * l.inner + in];
                     });
}

Tensor softmax(const Tensor& a, int axis) {
  const int rank = static_cast<int>(a.shape().size());
  const int ax = normalize_axis(axis, rank, "softmax");
  Lanes l = lanes_for(a.shape(), ax);
  std::vector<double> out(a.data().size());
  const auto& src = a.data();
  for (int64_t o = 0; o < l.outer; ++o)
    for (int64_t in = 0; in < l.inner; ++in) {
      double mx = -1e300;
      for (int64_t x = 0; x < l.axis; ++x)
        mx = std::max(mx, src[(o * l.axis + x) * l.inner + in]);
      double denom = 0.0;
      for (int64_t x = 0; x < l.axis; ++x) {
        double e = std::exp(src[(o * l.axis + x) * l.inner + in] - mx);
        out[(o * l.axis + x) * l.inner + in] = e;
        denom += e;
      }
      for (int64_t x = 0; x < l.axis; ++x) out[(o * l.axis + x) * l.inner + in] /= denom;
    }
  auto pa = a.impl();
  return make_result(a.shape(), std::move(out), OpKind::Softmax, {pa},
                     [pa, l](TensorImpl& self) {
                       if (!pa->requires_grad) return;
                       pa->ensure_grad();
                       const auto& p = self.data;
                       const auto& g = self.grad;
                       for (int64_t o = 0; o < l.outer; ++o)
                         for (int64_t in = 0; in < l.inner; ++in) {
                           double dot = 0.0;
                           for (int64_t x = 0; x < l.axis; ++x) {
                             int64_t idx = (o * l.axis + x) * l.inner + in;
                             dot += g[idx] * p[idx];
                           }
                           for (int64_t x = 0; x < l.axis; ++x) {
                             int64_t idx = (o * l.axis + x) * l.inner + in;
                             pa->grad[idx] += p[idx] * (g[idx] - dot);
                           }
                         }
                     });
}

Tensor layer_norm(const Tensor& a, int axis, double eps) {
  const int rank = static_cast<int>(a.shape().size());
  const int ax = normalize_axis(axis, rank, "layer_norm");
  Lanes l = lanes_for(a.shape(), ax);
  std::vector<double> out(a.data().size());
  std::vector<double> invstd(static_cast<size_t>(l.outer * l.inner));
  const auto& src = a.data();
  for (int64_t o = 0; o < l.outer; ++o)
    for (int64_t in = 0; in < l.inner; ++in) {
      double mu = 0.0;
      for (int64_t x = 0; x < l.axis; ++x) mu += src[(o * l.axis + x) * l.inner + in];
      mu /= static_cast<double>(l.axis);
      double var = 0.0;
      for (int64_t x = 0; x < l.axis; ++x) {
        double d = src[(o * l.axis + x) * l.inner + in] - mu;
        var += d * d;
      }
      var /= static_cast<double>(l.axis);
      double is = 1.0 / std::sqrt(var + eps);
      invstd[o * l.inner + in] = is;
      for (int64_t x = 0; x < l.axis; ++x) {
        int64_t idx = (o * l.axis + x) * l.inner + in;
        out[idx] = (src[idx] - mu) * is;
      }
    }
  auto pa = a.impl();
  return make_result(a.shape(), std::move(out), OpKind::LayerNorm, {pa},
                     [pa, l, invstd](TensorImpl& self) {
                       if (!pa->requires_grad) return;
                       pa->ensure_grad();
                       const auto& y = self.data;  // normalized values
                       const auto& g = self.grad;
                       const double n = static_cast<double>(l.axis);
                       for (int64_t o = 0; o < l.outer; ++o)
                         for (int64_t in = 0; in < l.inner; ++in) {
                           double gsum = 0.0, gysum = 0.0;
                           for (int64_t x = 0; x < l.axis; ++x) {
                             int64_t idx = (o * l.axis + x) * l.inner + in;
                             gsum += g[idx];
                             gysum += g[idx] * y[idx];
                           }
                           const double is = invstd[o * l.inner + in];
                           for (int64_t x = 0; x < l.axis; ++x) {
                             int64_t idx = (o * l.axis + x) * l.inner + in;
                             pa->grad[idx] +=
                                 is / n * (n * g[idx] - gsum - y[idx] * gysum);
                           }
                         }
                     });
}

Tensor sigmoid(const Tensor& a) {
  std::vector<double> out(a.data().size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-a.data()[i]));
  auto pa = a.impl();
  return make_result(a.shape(), std::move(out), OpKind::Sigmoid, {pa},
                     [pa](TensorImpl& self) {
                       for (size_t i = 0; i < self.grad.size(); ++i) {
                         double s = self.data[i];
                         accum(*pa, i, self.grad[i] * s * (1.0 - s));
                       }
                     });
}

namespace {
// gelu tanh approximation constants
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;
}  // namespace

Tensor gelu(const Tensor& a) {
  std::vector<double> out(a.data().size());
  for (size_t i = 0; i < out.size(); ++i) {
    double x = a.data()[i];
    out[i] = 0.5 * x * (1.0 + std::tanh(kGeluC * (x + kGeluA * x * x * x)));
  }
  auto pa = a.impl();
  return make_result(a.shape(), std::move(out), OpKind::Gelu, {pa},
                     [pa](TensorImpl& self) {
                       if (!pa->requires_grad) return;
                       pa->ensure_grad();
                       for (size_t i = 0; i < self.grad.size(); ++i) {
                         double x = pa->data[i];
                         double u = kGeluC * (x + kGeluA * x * x * x);
                         double t = std::tanh(u);
                         double sech2 = 1.0 - t * t;
                         double d = 0.5 * (1.0 + t) +
                                    0.5 * x * sech2 * kGeluC * (1.0 + 3.0 * kGeluA * x * x);
                         pa->grad[i] += self.grad[i] * d;
                       }
                     });
}

Tensor embedding_lookup(const Tensor& table, const std::vector<int>& indices) {
  check(table.shape().size() == 2,
        "embedding_lookup: table must be 2-D, got " + shape_str(table.shape()));
  check(!indices.empty(), "embedding_lookup: empty index list");
  const int vocab = table.shape()[0], dim = table.shape()[1];
  for (int idx : indices)
    check(idx >= 0 && idx < vocab, "embedding_lookup: index " + std::to_string(idx) +
                                       " out of range for table " + shape_str(table.shape()));
  std::vector<double> out(indices.size() * static_cast<size_t>(dim));
  for (size_t r = 0; r < indices.size(); ++r)
    std::copy_n(table.data().begin() + static_cast<int64_t>(indices[r]) * dim, dim,
                out.begin() + static_cast<int64_t>(r) * dim);
  auto pt = table.impl();
  return make_result({static_cast<int>(indices.size()), dim}, std::move(out),
                     OpKind::EmbeddingLookup, {pt},
                     [pt, indices, dim](TensorImpl& self) {
                       if (!pt->requires_grad) return;
                       pt->ensure_grad();
                       for (size_t r = 0; r < indices.size(); ++r)
                         for (int c = 0; c < dim; ++c)
                           pt->grad[static_cast<int64_t>(indices[r]) * dim + c] +=
                               self.grad[static_cast<int64_t>(r) * dim + c];
                     });
}

namespace {

Tensor full_reduce(const Tensor& a, OpKind kind) {
  double total = 0.0;
  for (double v : a.data()) total += v;
  const double n = static_cast<double>(a.numel());
  const double value = kind == OpKind::Mean ? total / n : total;
  auto pa = a.impl();
  return make_result({1}, {value}, kind, {pa}, [pa, kind, n](TensorImpl& self) {
    const double w = kind == OpKind::Mean ? self.grad[0] / n : self.grad[0];
    for (size_t i = 0; i < pa->data.size(); ++i) accum(*pa, i, w);
  });
}

}  // namespace

Tensor mean(const Tensor& a) { return full_reduce(a, OpKind::Mean); }
Tensor sum(const Tensor& a) { return full_reduce(a, OpKind::Sum); }

Tensor mse_loss(const Tensor& pred, const Tensor& target) {
  check(pred.shape() == target.shape(), "mse_loss: shape mismatch " +
                                            shape_str(pred.shape()) + " vs " +
                                            shape_str(target.shape()));
  const auto& p = pred.data();
  const auto& t = target.data();
  double total = 0.0;
  for (size_t i = 0; i < p.size(); ++i) {
    double d = p[i] - t[i];
    total += d * d;
  }
  const double n = static_cast<double>(p.size());
  auto pp = pred.impl(), pt = target.impl();
  return make_result({1}, {total / n}, OpKind::MseLoss, {pp, pt},
                     [pp, pt, n](TensorImpl& self) {
                       const double w = 2.0 * self.grad[0] / n;
                       for (size_t i = 0; i < pp->data.size(); ++i) {
                         double d = pp->data[i] - pt->data[i];
                         accum(*pp, i, w * d);
                         accum(*pt, i, -w * d);
                       }
                     });
}

Tensor broadcast_add(const Tensor& a, const Tensor& b) {
  const Shape& as = a.shape();
  Shape bs = b.shape();
  check(bs.size() <= as.size(), "broadcast_add: " + shape_str(bs) +
                                    " has higher rank than " + shape_str(as));
  while (bs.size() < as.size()) bs.insert(bs.begin(), 1);
  for (size_t d = 0; d < as.size(); ++d)
    check(bs[d] == as[d] || bs[d] == 1,
          "broadcast_add: cannot broadcast " + shape_str(b.shape()) + " onto " +
              shape_str(as));

  const int rank = static_cast<int>(as.size());
  std::vector<int64_t> astride(rank), bstride(rank);
  int64_t sa = 1, sb = 1;
  for (int d = rank - 1; d >= 0; --d) {
    astride[d] = sa;
    sa *= as[d];
    bstride[d] = bs[d] == 1 ? 0 : sb;
    sb *= bs[d];
  }
  std::vector<double> out(a.data().size());
  const auto& av = a.data();
  const auto& bv = b.data();
  std::vector<int> idx(rank, 0);
  int64_t bofs = 0;
  for (int64_t i = 0; i < a.numel(); ++i) {
    out[i] = av[i] + bv[bofs];
    // odometer increment tracking b's offset
    for (int d = rank - 1; d >= 0; --d) {
      ++idx[d];
      bofs += bstride[d];
      if (idx[d] < as[d]) break;
      bofs -= bstride[d] * as[d];
      idx[d] = 0;
    }
  }
  auto pa = a.impl(), pb = b.impl();
  return make_result(as, std::move(out), OpKind::BroadcastAdd, {pa, pb},
                     [pa, pb, as, bstride, rank](TensorImpl& self) {
                       if (pa->requires_grad) {
                         pa->ensure_grad();
                         for (size_t i = 0; i < self.grad.size(); ++i)
                           pa->grad[i] += self.grad[i];
                       }
                       if (pb->requires_grad) {
                         pb->ensure_grad();
                         std::vector<int> idx(rank, 0);
                         int64_t bofs = 0;
                         for (int64_t i = 0; i < self.numel(); ++i) {
                           pb->grad[bofs] += self.grad[i];
                           for (int d = rank - 1; d >= 0; --d) {
                             ++idx[d];
                             bofs += bstride[d];
                             if (idx[d] < as[d]) break;
                             bofs -= bstride[d] * as[d];
                             idx[d] = 0;
                           }
                         }
                       }
                     });
}

// ---- dynamic dispatch ---------------------------------------------------

double OpAttrs::get_scalar(const std::string& key, const std::string& op) const {
  auto it = scalars.find(key);
  if (it == scalars.end())
    throw std::runtime_error(op + ": missing attribute '" + key + "'");
  return it->second;
}

double OpAttrs::get_scalar_or(const std::string& key, double fallback) const {
  auto it = scalars.find(key);
  return it == scalars.end() ? fallback : it->second;
}

const std::vector<int>& OpAttrs::get_ints(const std::string& key, const std::string& op) const {
  auto it = int_lists.find(key);
  if (it == int_lists.end())
    throw std::runtime_error(op + ": missing attribute '" + key + "'");
  return it->second;
}

Tensor apply_op(const std::string& kind, const std::vector<Tensor>& inputs, const OpAttrs& attrs) {
  auto need = [&](size_t n) {
    check(inputs.size() == n, kind + ": expects " + std::to_string(n) + " inputs, got " +
                                  std::to_string(inputs.size()));
  };
  if (kind == "matmul") { need(2); return matmul(inputs[0], inputs[1]); }
  if (kind == "add") { need(2); return add(inputs[0], inputs[1]); }
  if (kind == "mul") { need(2); return mul(inputs[0], inputs[1]); }
  if (kind == "sub") { need(2); return sub(inputs[0], inputs[1]); }
  if (kind == "scale") { need(1); return scale(inputs[0], attrs.get_scalar("alpha", kind)); }
  if (kind == "transpose") { need(1); return transpose(inputs[0]); }
  if (kind == "reshape") {
    need(1);
    const auto& dims = attrs.get_ints("shape", kind);
    return reshape(inputs[0], Shape(dims.begin(), dims.end()));
  }
  if (kind == "concat") {
    check(!inputs.empty(), "concat: no inputs");
    return concat(inputs, static_cast<int>(attrs.get_scalar("axis", kind)));
  }
  if (kind == "slice") {
    need(1);
    return slice(inputs[0], static_cast<int>(attrs.get_scalar("axis", kind)),
                 static_cast<int>(attrs.get_scalar("start", kind)),
                 static_cast<int>(attrs.get_scalar("len", kind)));
  }
  if (kind == "softmax") { need(1); return softmax(inputs[0], static_cast<int>(attrs.get_scalar("axis", kind))); }
  if (kind == "layer_norm") {
    need(1);
    return layer_norm(inputs[0], static_cast<int>(attrs.get_scalar("axis", kind)),
                      attrs.get_scalar_or("eps", 1e-5));
  }
  if (kind == "sigmoid") { need(1); return sigmoid(inputs[0]); }
  if (kind == "gelu") { need(1); return gelu(inputs[0]); }
  if (kind == "embedding_lookup") { need(1); return embedding_lookup(inputs[0], attrs.get_ints("indices", kind)); }
  if (kind == "mean") { need(1); return mean(inputs[0]); }
  if (kind == "sum") { need(1); return sum(inputs[0]); }
  if (kind == "mse_loss") { need(2); return mse_loss(inputs[0], inputs[1]); }
  if (kind == "broadcast_add") { need(2); return broadcast_add(inputs[0], inputs[1]); }
  throw std::runtime_error("apply_op: unknown op kind '" + kind + "'");
}

double grad_check(const std::function<Tensor(const Tensor&)>& fn, Tensor input, double h) {
  check(input.defined(), "grad_check: empty input");
  input.set_requires_grad(true);
  input.zero_grad();
  Tensor loss = fn(input);
  check(loss.numel() == 1,
        "grad_check: fn must return a scalar, got " + shape_str(loss.shape()));
  backward(loss);
  check(!input.grad().empty(), "grad_check: backward did not reach the input");
  std::vector<double> analytic = input.grad();

  double worst = 0.0;
  auto& x = input.data();
  for (size_t i = 0; i < x.size(); ++i) {
    const double saved = x[i];
    x[i] = saved + h;
    const double fp = fn(input).item();
    x[i] = saved - h;
    const double fm = fn(input).item();
    x[i] = saved;
    const double numeric = (fp - fm) / (2.0 * h);
    const double rel = std::abs(analytic[i] - numeric) /
                       std::max(std::abs(analytic[i]), 1e-6);
    worst = std::max(worst, rel);
  }
  return worst;
}

}  // namespace v2m
