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

#ifndef HVECTOR_TENSOR_HPP_
#define HVECTOR_TENSOR_HPP_

#include <cstddef>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace hvector {

using Shape = std::vector<std::size_t>;

// Thrown on any dimension/shape violation.
struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

std::string ShapeToString(const Shape& shape);
std::size_t NumElements(const Shape& shape);

namespace internal {
struct Node;
}

// Dense double-precision tensor participating in a define-by-run
// reverse-mode graph. Copying a Tensor copies a handle to the same
// graph node; graphs are rebuilt on every forward pass.
class Tensor {
 public:
  Tensor();

  static Tensor Constant(Shape shape, std::vector<double> values);
  static Tensor Parameter(Shape shape, std::vector<double> values);
  static Tensor Zeros(Shape shape, bool requires_grad = false);
  static Tensor Scalar(double value);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t size() const;
  std::size_t rows() const;  // 2-D convenience accessors
  std::size_t cols() const;

  const std::vector<double>& values() const;
  // Leaf-only mutation hook for optimizer updates.
  std::vector<double>& mutable_values();

  bool requires_grad() const;
  bool has_grad() const;
  const std::vector<double>& grad() const;
  void ZeroGrad();

  // Value of a 1x1 tensor.
  double item() const;
  double at(std::size_t r, std::size_t c) const;

  // Releases gradient into every requires_grad leaf reachable from this
  // scalar. A second call on the same node is rejected.
  void Backward() const;

  std::shared_ptr<internal::Node> node() const { return node_; }
  explicit Tensor(std::shared_ptr<internal::Node> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<internal::Node> node_;
};

// ---------------------------------------------------------------------------
// Graph-building operations
// ---------------------------------------------------------------------------

Tensor MatMul(const Tensor& a, const Tensor& b);

Tensor Add(const Tensor& a, const Tensor& b);
Tensor Sub(const Tensor& a, const Tensor& b);
Tensor Mul(const Tensor& a, const Tensor& b);
// Scalar-with-tensor forms (the only broadcasting supported).
Tensor AddScalar(const Tensor& a, double s);
Tensor MulScalar(const Tensor& a, double s);
Tensor SubFromScalar(double s, const Tensor& a);  // s - a

Tensor Relu(const Tensor& a);
Tensor Sigmoid(const Tensor& a);
Tensor Tanh(const Tensor& a);
Tensor Exp(const Tensor& a);
Tensor Log(const Tensor& a);  // domain error on non-positive input

// Numerically stable softmax along `axis` of a 2-D tensor.
Tensor Softmax(const Tensor& a, int axis);

// Population statistics (divide by N). std = sqrt(var + kStdEpsilon) so the
// gradient stays finite at zero variance.
inline constexpr double kStdEpsilon = 1e-10;
Tensor MeanOverAxis(const Tensor& a, int axis);
Tensor StdOverAxis(const Tensor& a, int axis);
std::pair<Tensor, Tensor> MeanStdOverAxis(const Tensor& a, int axis);

Tensor Concat(const std::vector<Tensor>& parts, int axis);

// Rows of a 2-D tensor in the given order; backward scatter-adds.
Tensor GatherRows(const Tensor& a, std::vector<std::size_t> row_indices);
Tensor SliceRows(const Tensor& a, std::size_t start, std::size_t count);
// Repeats a 1xC tensor n times; backward sums over rows.
Tensor TileRows(const Tensor& a, std::size_t n);
// Multiplies row r of x (RxC) by alpha[r] (Rx1).
Tensor ScaleRows(const Tensor& x, const Tensor& alpha);

Tensor Clamp(const Tensor& a, double lo, double hi);
Tensor Sum(const Tensor& a);  // full reduction to 1x1
// Row-major reinterpretation; element count must be unchanged.
Tensor Reshape(const Tensor& a, Shape new_shape);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return Add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return Sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return Mul(a, b); }

// ---------------------------------------------------------------------------
// Custom operations
// ---------------------------------------------------------------------------

// Access to input gradient buffers inside a custom backward rule.
class CustomGrads {
 public:
  explicit CustomGrads(internal::Node* node) : node_(node) {}
  // Accumulation buffer for input i, or nullptr when that input does not
  // need a gradient. The buffer is zero-initialized on first access.
  double* InputGrad(std::size_t i);
  std::size_t InputSize(std::size_t i) const;

 private:
  internal::Node* node_;
};

using CustomBackward =
    std::function<void(const std::vector<double>& grad_out, CustomGrads& grads)>;

// Registers a node with caller-supplied forward value and backward rule.
Tensor CustomOp(const std::vector<Tensor>& inputs, Shape out_shape,
                std::vector<double> out_values, CustomBackward backward);

// ---------------------------------------------------------------------------
// Gradient checking
// ---------------------------------------------------------------------------

// Max over coordinates of |analytic - central difference| / max(1, |analytic|)
// for a scalar-valued function of x.
double GradCheck(const std::function<Tensor(const Tensor&)>& f, Tensor& x,
                 double h = 1e-5);

}  // namespace hvector

#endif  // HVECTOR_TENSOR_HPP_
