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

#ifndef HVECTOR_LAYERS_HPP_
#define HVECTOR_LAYERS_HPP_

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "hvector/rng.hpp"
#include "hvector/tensor.hpp"

namespace hvector {

enum class Mode { kTrain, kEval };
enum class Activation { kNone, kRelu };

using ParamVisitor = std::function<void(const std::string&, Tensor&)>;
using BufferVisitor = std::function<void(const std::string&, std::vector<double>&)>;

// Sequence inputs are stacked by block: a tensor of shape (blocks*steps, F)
// holds `blocks` independent sequences of equal length. blocks == 1 is the
// plain single-sequence case.

struct DenseParams {
  Tensor W;  // in x out
  Tensor b;  // 1 x out
  Activation activation = Activation::kNone;
  void Visit(const std::string& prefix, const ParamVisitor& v);
};

// Per-frame affine; context is exactly the current time step.
struct TdnnLayerParams {
  Tensor W;  // in x out
  Tensor b;  // 1 x out
  void Visit(const std::string& prefix, const ParamVisitor& v);
};

struct GruParams {
  Tensor Wz, Wr, Wh;  // input -> hidden
  Tensor Uz, Ur, Uh;  // hidden -> hidden
  Tensor bz, br, bh;  // 1 x hidden
  void Visit(const std::string& prefix, const ParamVisitor& v);
};

struct AttentionMlpParams {
  Tensor W0;  // E x E
  Tensor b0;  // 1 x E
  Tensor W1;  // E x 1
  void Visit(const std::string& prefix, const ParamVisitor& v);
};

struct BatchNormParams {
  Tensor gamma;  // 1 x F
  Tensor beta;   // 1 x F
  std::vector<double> running_mean;
  std::vector<double> running_var;
  double momentum = 0.9;
  double eps = 1e-5;
  Mode mode = Mode::kTrain;
  void Visit(const std::string& prefix, const ParamVisitor& v);
  void VisitBuffers(const std::string& prefix, const BufferVisitor& v);
};

// Initialization: weights ~ uniform(-s, s), s = sqrt(6/(fan_in+fan_out));
// biases zero.
DenseParams InitDense(std::size_t in, std::size_t out, Activation act, Rng& rng);
TdnnLayerParams InitTdnn(std::size_t in, std::size_t out, Rng& rng);
GruParams InitGru(std::size_t in, std::size_t hidden, Rng& rng);
AttentionMlpParams InitAttention(std::size_t width, Rng& rng);
BatchNormParams InitBatchNorm(std::size_t features);

// ---------------------------------------------------------------------------
// Forward operations
// ---------------------------------------------------------------------------

Tensor DenseForward(const DenseParams& p, const Tensor& x);

// Train mode normalizes each row-block independently and updates running
// stats; eval mode uses running stats only.
Tensor BatchNormForward(BatchNormParams& p, const Tensor& x, std::size_t blocks = 1);

// Affine -> ReLU -> batch norm (bn may be null to skip normalization).
Tensor TdnnForward(const TdnnLayerParams& p, const Tensor& x, BatchNormParams* bn,
                   std::size_t blocks = 1);

// z = sigmoid(x W_z + h U_z + b_z), r likewise,
// hcand = tanh(x W_h + (r*h) U_h + b_h), h' = (1-z)*h + z*hcand,
// zero initial state. Output (rows, hidden).
Tensor GruForward(const GruParams& p, const Tensor& x, std::size_t blocks = 1,
                  bool reverse = false);

// Forward and reversed recurrences concatenated per frame: (rows, 2*hidden).
Tensor BiGruForward(const GruParams& fwd, const GruParams& bwd, const Tensor& x,
                    std::size_t blocks = 1);

// alpha = softmax over each block of relu(h W0 + b0) W1; shape (rows, 1).
Tensor AttentionWeights(const AttentionMlpParams& p, const Tensor& h,
                        std::size_t blocks = 1);

// A_t = alpha_t * h_t; returns concat(mean_t(A), std_t(A)) of shape (1, 2E).
// alpha must sum to one.
Tensor WeightedStatsPool(const Tensor& alpha, const Tensor& h);

// Unweighted mean/std pooling over rows: (1, 2E).
Tensor StatsPool(const Tensor& h);

}  // namespace hvector

#endif  // HVECTOR_LAYERS_HPP_
