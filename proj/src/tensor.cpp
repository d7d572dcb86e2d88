// Copyright 2026  The HVector Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "hvector/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

namespace hvector {

namespace internal {

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // lazily allocated, zero-filled
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;
  bool requires_grad = false;  // trainable leaf
  bool needs_grad = false;     // some requires_grad leaf is reachable
  bool backward_consumed = false;
};

inline double* GradBuf(Node& n) {
  if (n.grad.empty()) n.grad.assign(n.value.size(), 0.0);
  return n.grad.data();
}

}  // namespace internal

using internal::GradBuf;
using internal::Node;

std::string ShapeToString(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ')';
  return os.str();
}

std::size_t NumElements(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

namespace {

std::shared_ptr<Node> MakeLeaf(Shape shape, std::vector<double> values,
                               bool requires_grad) {
  if (shape.empty()) throw ShapeError("tensor shape must not be empty");
  for (std::size_t d : shape) {
    if (d == 0) throw ShapeError("tensor dimensions must be positive");
  }
  if (NumElements(shape) != values.size()) {
    throw ShapeError("value count " + std::to_string(values.size()) +
                     " does not match shape " + ShapeToString(shape));
  }
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value = std::move(values);
  n->requires_grad = requires_grad;
  n->needs_grad = requires_grad;
  return n;
}

std::shared_ptr<Node> MakeOp(Shape shape, std::vector<double> values,
                             std::vector<std::shared_ptr<Node>> inputs,
                             std::function<void(Node&)> backward) {
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value = std::move(values);
  n->inputs = std::move(inputs);
  for (const auto& in : n->inputs) {
    if (in->needs_grad) {
      n->needs_grad = true;
      break;
    }
  }
  if (n->needs_grad) n->backward = std::move(backward);
  return n;
}

void Check2d(const Tensor& t, const char* what) {
  if (t.shape().size() != 2) {
    throw ShapeError(std::string(what) + " requires a 2-D tensor, got " +
                     ShapeToString(t.shape()));
  }
}

void CheckAxis2d(const Tensor& t, int axis, const char* what) {
  Check2d(t, what);
  if (axis != 0 && axis != 1) {
    throw ShapeError(std::string(what) + ": axis " + std::to_string(axis) +
                     " invalid for shape " + ShapeToString(t.shape()));
  }
}

}  // namespace

Tensor::Tensor() = default;

Tensor Tensor::Constant(Shape shape, std::vector<double> values) {
  return Tensor(MakeLeaf(std::move(shape), std::move(values), false));
}

Tensor Tensor::Parameter(Shape shape, std::vector<double> values) {
  return Tensor(MakeLeaf(std::move(shape), std::move(values), true));
}

Tensor Tensor::Zeros(Shape shape, bool requires_grad) {
  std::vector<double> v(NumElements(shape), 0.0);
  return Tensor(MakeLeaf(std::move(shape), std::move(v), requires_grad));
}

Tensor Tensor::Scalar(double value) { return Constant({1, 1}, {value}); }

const Shape& Tensor::shape() const { return node_->shape; }
std::size_t Tensor::size() const { return node_->value.size(); }

std::size_t Tensor::rows() const {
  Check2d(*this, "rows()");
  return node_->shape[0];
}

std::size_t Tensor::cols() const {
  Check2d(*this, "cols()");
  return node_->shape[1];
}

const std::vector<double>& Tensor::values() const { return node_->value; }

std::vector<double>& Tensor::mutable_values() {
  if (!node_->inputs.empty()) {
    throw std::logic_error("mutable_values() is only valid on leaf tensors");
  }
  return node_->value;
}

bool Tensor::requires_grad() const { return node_->requires_grad; }
bool Tensor::has_grad() const { return !node_->grad.empty(); }

const std::vector<double>& Tensor::grad() const {
  if (node_->grad.empty()) {
    throw std::logic_error("tensor has no gradient; call Backward() first");
  }
  return node_->grad;
}

void Tensor::ZeroGrad() { node_->grad.assign(node_->value.size(), 0.0); }

double Tensor::item() const {
  if (size() != 1) {
    throw ShapeError("item() requires a single-element tensor, got " +
                     ShapeToString(shape()));
  }
  return node_->value[0];
}

double Tensor::at(std::size_t r, std::size_t c) const {
  Check2d(*this, "at()");
  return node_->value[r * node_->shape[1] + c];
}

void Tensor::Backward() const {
  Node* root = node_.get();
  if (root->value.size() != 1) {
    throw ShapeError("Backward() requires a scalar loss, got " +
                     ShapeToString(root->shape));
  }
  if (root->backward_consumed) {
    throw std::logic_error("Backward() already called on this graph");
  }
  root->backward_consumed = true;
  if (!root->needs_grad) return;  // nothing tracked below

  // Iterative post-order DFS; reverse gives topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(root, 0);
  visited.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node* in = node->inputs[next++].get();
      if (in->needs_grad && visited.insert(in).second) {
        stack.emplace_back(in, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  GradBuf(*root)[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (node->backward) node->backward(*node);
  }
}

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

Tensor MatMul(const Tensor& a, const Tensor& b) {
  Check2d(a, "MatMul");
  Check2d(b, "MatMul");
  const std::size_t m = a.shape()[0], k = a.shape()[1];
  const std::size_t k2 = b.shape()[0], n = b.shape()[1];
  if (k != k2) {
    throw ShapeError("MatMul inner dimensions disagree: " +
                     ShapeToString(a.shape()) + " vs " + ShapeToString(b.shape()));
  }
  const double* pa = a.values().data();
  const double* pb = b.values().data();
  std::vector<double> out(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    double* ci = out.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = pa[i * k + p];
      if (aip == 0.0) continue;
      const double* bp = pb + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += aip * bp[j];
    }
  }
  auto node = MakeOp(
      {m, n}, std::move(out), {a.node(), b.node()}, [m, k, n](Node& nd) {
        Node* na = nd.inputs[0].get();
        Node* nb = nd.inputs[1].get();
        const double* g = nd.grad.data();
        if (na->needs_grad) {
          double* ga = GradBuf(*na);
          const double* pb = nb->value.data();
          for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t p = 0; p < k; ++p) {
              const double* gi = g + i * n;
              const double* bp = pb + p * n;
              double acc = 0.0;
              for (std::size_t j = 0; j < n; ++j) acc += gi[j] * bp[j];
              ga[i * k + p] += acc;
            }
          }
        }
        if (nb->needs_grad) {
          double* gb = GradBuf(*nb);
          const double* pa = na->value.data();
          for (std::size_t i = 0; i < m; ++i) {
            const double* gi = g + i * n;
            for (std::size_t p = 0; p < k; ++p) {
              const double aip = pa[i * k + p];
              if (aip == 0.0) continue;
              double* gbp = gb + p * n;
              for (std::size_t j = 0; j < n; ++j) gbp[j] += aip * gi[j];
            }
          }
        }
      });
  return Tensor(node);
}

namespace {

void CheckSameShape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(what) + " requires equal shapes, got " +
                     ShapeToString(a.shape()) + " vs " + ShapeToString(b.shape()));
  }
}

}  // namespace

Tensor Add(const Tensor& a, const Tensor& b) {
  CheckSameShape(a, b, "Add");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] + b.values()[i];
  return Tensor(MakeOp(a.shape(), std::move(out), {a.node(), b.node()}, [](Node& nd) {
    for (int s = 0; s < 2; ++s) {
      Node* in = nd.inputs[s].get();
      if (!in->needs_grad) continue;
      double* g = GradBuf(*in);
      for (std::size_t i = 0; i < nd.grad.size(); ++i) g[i] += nd.grad[i];
    }
  }));
}

Tensor Sub(const Tensor& a, const Tensor& b) {
  CheckSameShape(a, b, "Sub");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] - b.values()[i];
  return Tensor(MakeOp(a.shape(), std::move(out), {a.node(), b.node()}, [](Node& nd) {
    Node* na = nd.inputs[0].get();
    Node* nb = nd.inputs[1].get();
    if (na->needs_grad) {
      double* g = GradBuf(*na);
      for (std::size_t i = 0; i < nd.grad.size(); ++i) g[i] += nd.grad[i];
    }
    if (nb->needs_grad) {
      double* g = GradBuf(*nb);
      for (std::size_t i = 0; i < nd.grad.size(); ++i) g[i] -= nd.grad[i];
    }
  }));
}

Tensor Mul(const Tensor& a, const Tensor& b) {
  CheckSameShape(a, b, "Mul");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * b.values()[i];
  return Tensor(MakeOp(a.shape(), std::move(out), {a.node(), b.node()}, [](Node& nd) {
    Node* na = nd.inputs[0].get();
    Node* nb = nd.inputs[1].get();
    if (na->needs_grad) {
      double* g = GradBuf(*na);
      for (std::size_t i = 0; i < nd.grad.size(); ++i)
        g[i] += nd.grad[i] * nb->value[i];
    }
    if (nb->needs_grad) {
      double* g = GradBuf(*nb);
      for (std::size_t i = 0; i < nd.grad.size(); ++i)
        g[i] += nd.grad[i] * na->value[i];
    }
  }));
}

namespace {

Tensor UnaryOp(const Tensor& a, const std::function<double(double)>& f,
               // dy/dx given (x, y)
               std::function<double(double, double)> df) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(a.values()[i]);
  return Tensor(MakeOp(a.shape(), std::move(out), {a.node()},
                       [df = std::move(df)](Node& nd) {
                         Node* in = nd.inputs[0].get();
                         if (!in->needs_grad) return;
                         double* g = GradBuf(*in);
                         for (std::size_t i = 0; i < nd.grad.size(); ++i)
                           g[i] += nd.grad[i] * df(in->value[i], nd.value[i]);
                       }));
}

}  // namespace

Tensor AddScalar(const Tensor& a, double s) {
  return UnaryOp(a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Tensor MulScalar(const Tensor& a, double s) {
  return UnaryOp(a, [s](double x) { return x * s; }, [s](double, double) { return s; });
}

Tensor SubFromScalar(double s, const Tensor& a) {
  return UnaryOp(a, [s](double x) { return s - x; }, [](double, double) { return -1.0; });
}

Tensor Relu(const Tensor& a) {
  return UnaryOp(a, [](double x) { return x > 0.0 ? x : 0.0; },
                 [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor Sigmoid(const Tensor& a) {
  return UnaryOp(a,
                 [](double x) {
                   // stable in both tails
                   if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
                   const double e = std::exp(x);
                   return e / (1.0 + e);
                 },
                 [](double, double y) { return y * (1.0 - y); });
}

Tensor Tanh(const Tensor& a) {
  return UnaryOp(a, [](double x) { return std::tanh(x); },
                 [](double, double y) { return 1.0 - y * y; });
}

Tensor Exp(const Tensor& a) {
  return UnaryOp(a, [](double x) { return std::exp(x); },
                 [](double, double y) { return y; });
}

Tensor Log(const Tensor& a) {
  for (double v : a.values()) {
    if (!(v > 0.0)) {
      throw std::domain_error("Log of non-positive value " + std::to_string(v));
    }
  }
  return UnaryOp(a, [](double x) { return std::log(x); },
                 [](double x, double) { return 1.0 / x; });
}

Tensor Clamp(const Tensor& a, double lo, double hi) {
  if (!(lo <= hi)) throw std::invalid_argument("Clamp bounds out of order");
  return UnaryOp(a, [lo, hi](double x) { return std::min(std::max(x, lo), hi); },
                 [lo, hi](double x, double) {
                   return (x > lo && x < hi) ? 1.0 : 0.0;
                 });
}

Tensor Softmax(const Tensor& a, int axis) {
  CheckAxis2d(a, axis, "Softmax");
  const std::size_t rows = a.shape()[0], cols = a.shape()[1];
  const std::size_t slices = (axis == 1) ? rows : cols;
  const std::size_t len = (axis == 1) ? cols : rows;
  const std::size_t stride = (axis == 1) ? 1 : cols;
  const auto base = [&](std::size_t s) { return (axis == 1) ? s * cols : s; };

  std::vector<double> out(a.size());
  const double* x = a.values().data();
  for (std::size_t s = 0; s < slices; ++s) {
    const std::size_t b = base(s);
    double mx = x[b];
    for (std::size_t i = 1; i < len; ++i) mx = std::max(mx, x[b + i * stride]);
    double denom = 0.0;
    for (std::size_t i = 0; i < len; ++i) {
      const double e = std::exp(x[b + i * stride] - mx);
      out[b + i * stride] = e;
      denom += e;
    }
    for (std::size_t i = 0; i < len; ++i) out[b + i * stride] /= denom;
  }
  return Tensor(MakeOp(a.shape(), std::move(out), {a.node()},
                       [slices, len, stride, base](Node& nd) {
                         Node* in = nd.inputs[0].get();
                         if (!in->needs_grad) return;
                         double* g = GradBuf(*in);
                         for (std::size_t s = 0; s < slices; ++s) {
                           const std::size_t b = base(s);
                           double dot = 0.0;
                           for (std::size_t i = 0; i < len; ++i) {
                             const std::size_t idx = b + i * stride;
                             dot += nd.grad[idx] * nd.value[idx];
                           }
                           for (std::size_t i = 0; i < len; ++i) {
                             const std::size_t idx = b + i * stride;
                             g[idx] += nd.value[idx] * (nd.grad[idx] - dot);
                           }
                         }
                       }));
}

namespace {

struct AxisView {
  std::size_t slices;  // number of reductions
  std::size_t len;     // elements per reduction
  std::size_t stride;  // distance between reduced elements
  std::size_t base_mul;
};

AxisView ReduceView(const Tensor& a, int axis, const char* what) {
  CheckAxis2d(a, axis, what);
  const std::size_t rows = a.shape()[0], cols = a.shape()[1];
  if (axis == 0) return {cols, rows, cols, 1};  // reduce down columns
  return {rows, cols, 1, cols};                 // reduce along rows
}

Shape ReducedShape(const Tensor& a, int axis) {
  return axis == 0 ? Shape{1, a.shape()[1]} : Shape{a.shape()[0], 1};
}

}  // namespace

Tensor MeanOverAxis(const Tensor& a, int axis) {
  const AxisView v = ReduceView(a, axis, "MeanOverAxis");
  std::vector<double> out(v.slices);
  const double* x = a.values().data();
  for (std::size_t s = 0; s < v.slices; ++s) {
    double acc = 0.0;
    for (std::size_t i = 0; i < v.len; ++i) acc += x[s * v.base_mul + i * v.stride];
    out[s] = acc / static_cast<double>(v.len);
  }
  return Tensor(MakeOp(ReducedShape(a, axis), std::move(out), {a.node()}, [v](Node& nd) {
    Node* in = nd.inputs[0].get();
    if (!in->needs_grad) return;
    double* g = GradBuf(*in);
    const double inv = 1.0 / static_cast<double>(v.len);
    for (std::size_t s = 0; s < v.slices; ++s) {
      const double gs = nd.grad[s] * inv;
      for (std::size_t i = 0; i < v.len; ++i) g[s * v.base_mul + i * v.stride] += gs;
    }
  }));
}

Tensor StdOverAxis(const Tensor& a, int axis) {
  const AxisView v = ReduceView(a, axis, "StdOverAxis");
  std::vector<double> mean(v.slices), out(v.slices);
  const double* x = a.values().data();
  for (std::size_t s = 0; s < v.slices; ++s) {
    double acc = 0.0;
    for (std::size_t i = 0; i < v.len; ++i) acc += x[s * v.base_mul + i * v.stride];
    mean[s] = acc / static_cast<double>(v.len);
    double var = 0.0;
    for (std::size_t i = 0; i < v.len; ++i) {
      const double d = x[s * v.base_mul + i * v.stride] - mean[s];
      var += d * d;
    }
    var /= static_cast<double>(v.len);
    out[s] = std::sqrt(var + kStdEpsilon);
  }
  return Tensor(MakeOp(ReducedShape(a, axis), std::move(out), {a.node()},
                       [v, mean = std::move(mean)](Node& nd) {
                         Node* in = nd.inputs[0].get();
                         if (!in->needs_grad) return;
                         double* g = GradBuf(*in);
                         const double* x = in->value.data();
                         const double n = static_cast<double>(v.len);
                         for (std::size_t s = 0; s < v.slices; ++s) {
                           const double scale = nd.grad[s] / (n * nd.value[s]);
                           for (std::size_t i = 0; i < v.len; ++i) {
                             const std::size_t idx = s * v.base_mul + i * v.stride;
                             g[idx] += scale * (x[idx] - mean[s]);
                           }
                         }
                       }));
}

std::pair<Tensor, Tensor> MeanStdOverAxis(const Tensor& a, int axis) {
  return {MeanOverAxis(a, axis), StdOverAxis(a, axis)};
}

Tensor Concat(const std::vector<Tensor>& parts, int axis) {
  if (parts.empty()) throw ShapeError("Concat of zero tensors");
  const Shape& first = parts[0].shape();
  const std::size_t rank = first.size();
  if (axis < 0 || static_cast<std::size_t>(axis) >= rank) {
    throw ShapeError("Concat axis " + std::to_string(axis) +
                     " invalid for shape " + ShapeToString(first));
  }
  const std::size_t uaxis = static_cast<std::size_t>(axis);
  Shape out_shape = first;
  out_shape[uaxis] = 0;
  for (const Tensor& t : parts) {
    if (t.shape().size() != rank) {
      throw ShapeError("Concat rank mismatch: " + ShapeToString(first) + " vs " +
                       ShapeToString(t.shape()));
    }
    for (std::size_t d = 0; d < rank; ++d) {
      if (d != uaxis && t.shape()[d] != first[d]) {
        throw ShapeError("Concat shapes differ off-axis: " + ShapeToString(first) +
                         " vs " + ShapeToString(t.shape()));
      }
    }
    out_shape[uaxis] += t.shape()[uaxis];
  }

  std::size_t outer = 1;
  for (std::size_t d = 0; d < uaxis; ++d) outer *= first[d];
  std::size_t inner = 1;
  for (std::size_t d = uaxis + 1; d < rank; ++d) inner *= first[d];

  // chunk = contiguous elements each input contributes per outer slice
  std::vector<std::size_t> chunk(parts.size());
  std::size_t total_chunk = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    chunk[p] = parts[p].shape()[uaxis] * inner;
    total_chunk += chunk[p];
  }

  std::vector<double> out(NumElements(out_shape));
  std::vector<std::shared_ptr<Node>> ins;
  ins.reserve(parts.size());
  for (std::size_t p = 0, off = 0; p < parts.size(); off += chunk[p], ++p) {
    ins.push_back(parts[p].node());
    const double* src = parts[p].values().data();
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(src + o * chunk[p], chunk[p], out.data() + o * total_chunk + off);
    }
  }
  return Tensor(MakeOp(std::move(out_shape), std::move(out), std::move(ins),
                       [outer, chunk, total_chunk](Node& nd) {
                         std::size_t off = 0;
                         for (std::size_t p = 0; p < nd.inputs.size(); ++p) {
                           Node* in = nd.inputs[p].get();
                           if (in->needs_grad) {
                             double* g = GradBuf(*in);
                             for (std::size_t o = 0; o < outer; ++o) {
                               const double* src = nd.grad.data() + o * total_chunk + off;
                               double* dst = g + o * chunk[p];
                               for (std::size_t i = 0; i < chunk[p]; ++i) dst[i] += src[i];
                             }
                           }
                           off += chunk[p];
                         }
                       }));
}

Tensor GatherRows(const Tensor& a, std::vector<std::size_t> row_indices) {
  Check2d(a, "GatherRows");
  const std::size_t rows = a.shape()[0], cols = a.shape()[1];
  for (std::size_t r : row_indices) {
    if (r >= rows) {
      throw ShapeError("GatherRows index " + std::to_string(r) +
                       " out of range for " + ShapeToString(a.shape()));
    }
  }
  const std::size_t count = row_indices.size();
  std::vector<double> out(count * cols);
  const double* x = a.values().data();
  for (std::size_t i = 0; i < count; ++i) {
    std::copy_n(x + row_indices[i] * cols, cols, out.data() + i * cols);
  }
  return Tensor(MakeOp({count, cols}, std::move(out), {a.node()},
                       [cols, idx = std::move(row_indices)](Node& nd) {
                         Node* in = nd.inputs[0].get();
                         if (!in->needs_grad) return;
                         double* g = GradBuf(*in);
                         for (std::size_t i = 0; i < idx.size(); ++i) {
                           const double* src = nd.grad.data() + i * cols;
                           double* dst = g + idx[i] * cols;
                           for (std::size_t c = 0; c < cols; ++c) dst[c] += src[c];
                         }
                       }));
}

Tensor SliceRows(const Tensor& a, std::size_t start, std::size_t count) {
  Check2d(a, "SliceRows");
  if (start + count > a.shape()[0]) {
    throw ShapeError("SliceRows [" + std::to_string(start) + ", " +
                     std::to_string(start + count) + ") out of range for " +
                     ShapeToString(a.shape()));
  }
  std::vector<std::size_t> idx(count);
  for (std::size_t i = 0; i < count; ++i) idx[i] = start + i;
  return GatherRows(a, std::move(idx));
}

Tensor TileRows(const Tensor& a, std::size_t n) {
  Check2d(a, "TileRows");
  if (a.shape()[0] != 1) {
    throw ShapeError("TileRows requires a 1xC tensor, got " + ShapeToString(a.shape()));
  }
  const std::size_t cols = a.shape()[1];
  std::vector<double> out(n * cols);
  for (std::size_t r = 0; r < n; ++r) {
    std::copy_n(a.values().data(), cols, out.data() + r * cols);
  }
  return Tensor(MakeOp({n, cols}, std::move(out), {a.node()}, [n, cols](Node& nd) {
    Node* in = nd.inputs[0].get();
    if (!in->needs_grad) return;
    double* g = GradBuf(*in);
    for (std::size_t r = 0; r < n; ++r) {
      const double* src = nd.grad.data() + r * cols;
      for (std::size_t c = 0; c < cols; ++c) g[c] += src[c];
    }
  }));
}

Tensor ScaleRows(const Tensor& x, const Tensor& alpha) {
  Check2d(x, "ScaleRows");
  Check2d(alpha, "ScaleRows");
  const std::size_t rows = x.shape()[0], cols = x.shape()[1];
  if (alpha.shape()[0] != rows || alpha.shape()[1] != 1) {
    throw ShapeError("ScaleRows weights must be " + std::to_string(rows) +
                     "x1, got " + ShapeToString(alpha.shape()));
  }
  std::vector<double> out(rows * cols);
  for (std::size_t r = 0; r < rows; ++r) {
    const double a = alpha.values()[r];
    const double* src = x.values().data() + r * cols;
    double* dst = out.data() + r * cols;
    for (std::size_t c = 0; c < cols; ++c) dst[c] = a * src[c];
  }
  return Tensor(MakeOp({rows, cols}, std::move(out), {x.node(), alpha.node()},
                       [rows, cols](Node& nd) {
                         Node* nx = nd.inputs[0].get();
                         Node* na = nd.inputs[1].get();
                         if (nx->needs_grad) {
                           double* g = GradBuf(*nx);
                           for (std::size_t r = 0; r < rows; ++r) {
                             const double a = na->value[r];
                             const double* src = nd.grad.data() + r * cols;
                             double* dst = g + r * cols;
                             for (std::size_t c = 0; c < cols; ++c) dst[c] += a * src[c];
                           }
                         }
                         if (na->needs_grad) {
                           double* g = GradBuf(*na);
                           for (std::size_t r = 0; r < rows; ++r) {
                             const double* gr = nd.grad.data() + r * cols;
                             const double* xr = nx->value.data() + r * cols;
                             double acc = 0.0;
                             for (std::size_t c = 0; c < cols; ++c) acc += gr[c] * xr[c];
                             g[r] += acc;
                           }
                         }
                       }));
}

Tensor Sum(const Tensor& a) {
  double acc = 0.0;
  for (double v : a.values()) acc += v;
  return Tensor(MakeOp({1, 1}, {acc}, {a.node()}, [](Node& nd) {
    Node* in = nd.inputs[0].get();
    if (!in->needs_grad) return;
    double* g = GradBuf(*in);
    const double gs = nd.grad[0];
    for (std::size_t i = 0; i < in->value.size(); ++i) g[i] += gs;
  }));
}

Tensor Reshape(const Tensor& a, Shape new_shape) {
  if (NumElements(new_shape) != a.size()) {
    throw ShapeError("Reshape from " + ShapeToString(a.shape()) + " to " +
                     ShapeToString(new_shape) + " changes element count");
  }
  return Tensor(MakeOp(std::move(new_shape), a.values(), {a.node()}, [](Node& nd) {
    Node* in = nd.inputs[0].get();
    if (!in->needs_grad) return;
    double* g = GradBuf(*in);
    for (std::size_t i = 0; i < nd.grad.size(); ++i) g[i] += nd.grad[i];
  }));
}

// ---------------------------------------------------------------------------
// Custom ops
// ---------------------------------------------------------------------------

double* CustomGrads::InputGrad(std::size_t i) {
  Node* in = node_->inputs.at(i).get();
  if (!in->needs_grad) return nullptr;
  return GradBuf(*in);
}

std::size_t CustomGrads::InputSize(std::size_t i) const {
  return node_->inputs.at(i)->value.size();
}

Tensor CustomOp(const std::vector<Tensor>& inputs, Shape out_shape,
                std::vector<double> out_values, CustomBackward backward) {
  if (NumElements(out_shape) != out_values.size()) {
    throw ShapeError("CustomOp value count does not match shape " +
                     ShapeToString(out_shape));
  }
  std::vector<std::shared_ptr<Node>> ins;
  ins.reserve(inputs.size());
  for (const Tensor& t : inputs) ins.push_back(t.node());
  return Tensor(MakeOp(std::move(out_shape), std::move(out_values), std::move(ins),
                       [backward = std::move(backward)](Node& nd) {
                         CustomGrads grads(&nd);
                         backward(nd.grad, grads);
                       }));
}

// ---------------------------------------------------------------------------
// Gradient checking
// ---------------------------------------------------------------------------

double GradCheck(const std::function<Tensor(const Tensor&)>& f, Tensor& x,
                 double h) {
  if (!x.requires_grad()) {
    throw std::logic_error("GradCheck requires a tracked (requires_grad) tensor");
  }
  x.ZeroGrad();
  Tensor loss = f(x);
  loss.Backward();
  const std::vector<double> analytic = x.grad();

  std::vector<double>& vals = x.mutable_values();
  double worst = 0.0;
  for (std::size_t i = 0; i < vals.size(); ++i) {
    const double orig = vals[i];
    vals[i] = orig + h;
    const double up = f(x).item();
    vals[i] = orig - h;
    const double down = f(x).item();
    vals[i] = orig;
    const double numeric = (up - down) / (2.0 * h);
    const double err =
        std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(analytic[i]));
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace hvector
