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

#include "hvector/layers.hpp"

#include <cmath>
#include <utility>

namespace hvector {

namespace {

Tensor UniformWeights(std::size_t fan_in, std::size_t fan_out, Shape shape, Rng& rng) {
  const double s = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::vector<double> v(NumElements(shape));
  for (double& x : v) x = rng.Uniform(-s, s);
  return Tensor::Parameter(std::move(shape), std::move(v));
}

}  // namespace

void DenseParams::Visit(const std::string& prefix, const ParamVisitor& v) {
  v(prefix + ".W", W);
  v(prefix + ".b", b);
}

void TdnnLayerParams::Visit(const std::string& prefix, const ParamVisitor& v) {
  v(prefix + ".W", W);
  v(prefix + ".b", b);
}

void GruParams::Visit(const std::string& prefix, const ParamVisitor& v) {
  v(prefix + ".Wz", Wz);
  v(prefix + ".Wr", Wr);
  v(prefix + ".Wh", Wh);
  v(prefix + ".Uz", Uz);
  v(prefix + ".Ur", Ur);
  v(prefix + ".Uh", Uh);
  v(prefix + ".bz", bz);
  v(prefix + ".br", br);
  v(prefix + ".bh", bh);
}

void AttentionMlpParams::Visit(const std::string& prefix, const ParamVisitor& v) {
  v(prefix + ".W0", W0);
  v(prefix + ".b0", b0);
  v(prefix + ".W1", W1);
}

void BatchNormParams::Visit(const std::string& prefix, const ParamVisitor& v) {
  v(prefix + ".gamma", gamma);
  v(prefix + ".beta", beta);
}

void BatchNormParams::VisitBuffers(const std::string& prefix, const BufferVisitor& v) {
  v(prefix + ".running_mean", running_mean);
  v(prefix + ".running_var", running_var);
}

DenseParams InitDense(std::size_t in, std::size_t out, Activation act, Rng& rng) {
  DenseParams p;
  p.W = UniformWeights(in, out, {in, out}, rng);
  p.b = Tensor::Zeros({1, out}, true);
  p.activation = act;
  return p;
}

TdnnLayerParams InitTdnn(std::size_t in, std::size_t out, Rng& rng) {
  TdnnLayerParams p;
  p.W = UniformWeights(in, out, {in, out}, rng);
  p.b = Tensor::Zeros({1, out}, true);
  return p;
}

GruParams InitGru(std::size_t in, std::size_t hidden, Rng& rng) {
  GruParams p;
  p.Wz = UniformWeights(in, hidden, {in, hidden}, rng);
  p.Wr = UniformWeights(in, hidden, {in, hidden}, rng);
  p.Wh = UniformWeights(in, hidden, {in, hidden}, rng);
  p.Uz = UniformWeights(hidden, hidden, {hidden, hidden}, rng);
  p.Ur = UniformWeights(hidden, hidden, {hidden, hidden}, rng);
  p.Uh = UniformWeights(hidden, hidden, {hidden, hidden}, rng);
  p.bz = Tensor::Zeros({1, hidden}, true);
  p.br = Tensor::Zeros({1, hidden}, true);
  p.bh = Tensor::Zeros({1, hidden}, true);
  return p;
}

AttentionMlpParams InitAttention(std::size_t width, Rng& rng) {
  AttentionMlpParams p;
  p.W0 = UniformWeights(width, width, {width, width}, rng);
  p.b0 = Tensor::Zeros({1, width}, true);
  p.W1 = UniformWeights(width, 1, {width, 1}, rng);
  return p;
}

BatchNormParams InitBatchNorm(std::size_t features) {
  BatchNormParams p;
  p.gamma = Tensor::Parameter({1, features}, std::vector<double>(features, 1.0));
  p.beta = Tensor::Zeros({1, features}, true);
  p.running_mean.assign(features, 0.0);
  p.running_var.assign(features, 1.0);
  return p;
}

Tensor DenseForward(const DenseParams& p, const Tensor& x) {
  Tensor y = Add(MatMul(x, p.W), TileRows(p.b, x.rows()));
  if (p.activation == Activation::kRelu) y = Relu(y);
  return y;
}

Tensor BatchNormForward(BatchNormParams& p, const Tensor& x, std::size_t blocks) {
  const std::size_t rows = x.rows(), cols = x.cols();
  if (cols != p.gamma.cols()) {
    throw ShapeError("BatchNorm feature width " + std::to_string(p.gamma.cols()) +
                     " does not match input " + ShapeToString(x.shape()));
  }
  if (blocks == 0 || rows % blocks != 0) {
    throw ShapeError("BatchNorm rows not divisible into blocks");
  }
  const std::size_t block_rows = rows / blocks;
  const double* xv = x.values().data();
  const double* gv = p.gamma.values().data();
  const double* bv = p.beta.values().data();

  if (p.mode == Mode::kEval) {
    std::vector<double> inv(cols), out(rows * cols);
    for (std::size_t c = 0; c < cols; ++c) {
      inv[c] = 1.0 / std::sqrt(p.running_var[c] + p.eps);
    }
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < cols; ++c) {
        out[r * cols + c] =
            gv[c] * (xv[r * cols + c] - p.running_mean[c]) * inv[c] + bv[c];
      }
    }
    Tensor gamma = p.gamma;
    auto rm = p.running_mean;
    return CustomOp(
        {x, p.gamma, p.beta}, {rows, cols}, std::move(out),
        [rows, cols, inv = std::move(inv), rm = std::move(rm), x, gamma](
            const std::vector<double>& g, CustomGrads& grads) {
          const double* xv = x.values().data();
          const double* gammav = gamma.values().data();
          double* gx = grads.InputGrad(0);
          double* gg = grads.InputGrad(1);
          double* gb = grads.InputGrad(2);
          for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t c = 0; c < cols; ++c) {
              const std::size_t i = r * cols + c;
              if (gg) gg[c] += g[i] * (xv[i] - rm[c]) * inv[c];
              if (gb) gb[c] += g[i];
              if (gx) gx[i] += g[i] * gammav[c] * inv[c];
            }
          }
        });
  }

  // Train mode: per-block statistics.
  std::vector<double> mu(blocks * cols, 0.0), inv(blocks * cols, 0.0);
  std::vector<double> out(rows * cols);
  const double n = static_cast<double>(block_rows);
  for (std::size_t b = 0; b < blocks; ++b) {
    const double* xb = xv + b * block_rows * cols;
    double* mub = mu.data() + b * cols;
    for (std::size_t r = 0; r < block_rows; ++r) {
      for (std::size_t c = 0; c < cols; ++c) mub[c] += xb[r * cols + c];
    }
    for (std::size_t c = 0; c < cols; ++c) mub[c] /= n;
    double* invb = inv.data() + b * cols;
    for (std::size_t r = 0; r < block_rows; ++r) {
      for (std::size_t c = 0; c < cols; ++c) {
        const double d = xb[r * cols + c] - mub[c];
        invb[c] += d * d;
      }
    }
    for (std::size_t c = 0; c < cols; ++c) {
      invb[c] = 1.0 / std::sqrt(invb[c] / n + p.eps);
    }
    double* ob = out.data() + b * block_rows * cols;
    for (std::size_t r = 0; r < block_rows; ++r) {
      for (std::size_t c = 0; c < cols; ++c) {
        const double xhat = (xb[r * cols + c] - mub[c]) * invb[c];
        ob[r * cols + c] = gv[c] * xhat + bv[c];
      }
    }
  }

  // Running stats: one momentum update per call using block-averaged stats.
  for (std::size_t c = 0; c < cols; ++c) {
    double m = 0.0, var = 0.0;
    for (std::size_t b = 0; b < blocks; ++b) {
      m += mu[b * cols + c];
      const double invv = inv[b * cols + c];
      var += 1.0 / (invv * invv) - p.eps;
    }
    m /= static_cast<double>(blocks);
    var /= static_cast<double>(blocks);
    p.running_mean[c] = p.momentum * p.running_mean[c] + (1.0 - p.momentum) * m;
    p.running_var[c] = p.momentum * p.running_var[c] + (1.0 - p.momentum) * var;
  }

  Tensor gamma = p.gamma;
  return CustomOp(
      {x, p.gamma, p.beta}, {rows, cols}, std::move(out),
      [blocks, block_rows, cols, n, mu = std::move(mu), inv = std::move(inv), x,
       gamma](const std::vector<double>& g, CustomGrads& grads) {
        const double* xv = x.values().data();
        const double* gammav = gamma.values().data();
        double* gx = grads.InputGrad(0);
        double* gg = grads.InputGrad(1);
        double* gb = grads.InputGrad(2);
        std::vector<double> sum_g(cols), sum_gx(cols);
        for (std::size_t b = 0; b < blocks; ++b) {
          const std::size_t base = b * block_rows * cols;
          std::fill(sum_g.begin(), sum_g.end(), 0.0);
          std::fill(sum_gx.begin(), sum_gx.end(), 0.0);
          const double* mub = mu.data() + b * cols;
          const double* invb = inv.data() + b * cols;
          for (std::size_t r = 0; r < block_rows; ++r) {
            for (std::size_t c = 0; c < cols; ++c) {
              const std::size_t i = base + r * cols + c;
              const double xhat = (xv[i] - mub[c]) * invb[c];
              sum_g[c] += g[i];
              sum_gx[c] += g[i] * xhat;
              if (gg) gg[c] += g[i] * xhat;
              if (gb) gb[c] += g[i];
            }
          }
          if (gx) {
            for (std::size_t r = 0; r < block_rows; ++r) {
              for (std::size_t c = 0; c < cols; ++c) {
                const std::size_t i = base + r * cols + c;
                const double xhat = (xv[i] - mub[c]) * invb[c];
                gx[i] += gammav[c] * invb[c] / n *
                         (n * g[i] - sum_g[c] - xhat * sum_gx[c]);
              }
            }
          }
        }
      });
}

Tensor TdnnForward(const TdnnLayerParams& p, const Tensor& x, BatchNormParams* bn,
                   std::size_t blocks) {
  if (x.cols() != p.W.rows()) {
    throw ShapeError("Tdnn input width " + ShapeToString(x.shape()) +
                     " does not match weights " + ShapeToString(p.W.shape()));
  }
  Tensor y = Relu(Add(MatMul(x, p.W), TileRows(p.b, x.rows())));
  if (bn != nullptr) y = BatchNormForward(*bn, y, blocks);
  return y;
}

Tensor GruForward(const GruParams& p, const Tensor& x, std::size_t blocks,
                  bool reverse) {
  const std::size_t rows = x.rows();
  if (blocks == 0 || rows % blocks != 0) {
    throw ShapeError("Gru rows not divisible into blocks");
  }
  const std::size_t steps = rows / blocks;
  const std::size_t hidden = p.Uz.rows();
  if (x.cols() != p.Wz.rows()) {
    throw ShapeError("Gru input width " + ShapeToString(x.shape()) +
                     " does not match weights " + ShapeToString(p.Wz.shape()));
  }

  // Input projections for all steps at once.
  const Tensor xz = MatMul(x, p.Wz);
  const Tensor xr = MatMul(x, p.Wr);
  const Tensor xh = MatMul(x, p.Wh);
  const Tensor bz = TileRows(p.bz, blocks);
  const Tensor br = TileRows(p.br, blocks);
  const Tensor bh = TileRows(p.bh, blocks);

  Tensor h = Tensor::Zeros({blocks, hidden});
  std::vector<Tensor> outputs(steps);
  std::vector<std::size_t> idx(blocks);
  for (std::size_t s = 0; s < steps; ++s) {
    const std::size_t t = reverse ? steps - 1 - s : s;
    for (std::size_t b = 0; b < blocks; ++b) idx[b] = b * steps + t;
    const Tensor z = Sigmoid(Add(Add(GatherRows(xz, idx), MatMul(h, p.Uz)), bz));
    const Tensor r = Sigmoid(Add(Add(GatherRows(xr, idx), MatMul(h, p.Ur)), br));
    const Tensor hc =
        Tanh(Add(Add(GatherRows(xh, idx), MatMul(Mul(r, h), p.Uh)), bh));
    h = Add(Mul(SubFromScalar(1.0, z), h), Mul(z, hc));
    outputs[t] = h;
  }

  // Step-major concat back to block-major row order.
  Tensor step_major = Concat(outputs, 0);
  std::vector<std::size_t> perm(rows);
  for (std::size_t b = 0; b < blocks; ++b) {
    for (std::size_t t = 0; t < steps; ++t) perm[b * steps + t] = t * blocks + b;
  }
  return GatherRows(step_major, std::move(perm));
}

Tensor BiGruForward(const GruParams& fwd, const GruParams& bwd, const Tensor& x,
                    std::size_t blocks) {
  const Tensor hf = GruForward(fwd, x, blocks, /*reverse=*/false);
  const Tensor hb = GruForward(bwd, x, blocks, /*reverse=*/true);
  return Concat({hf, hb}, 1);
}

Tensor AttentionWeights(const AttentionMlpParams& p, const Tensor& h,
                        std::size_t blocks) {
  const std::size_t rows = h.rows();
  if (h.cols() != p.W0.rows()) {
    throw ShapeError("Attention input width " + ShapeToString(h.shape()) +
                     " does not match " + ShapeToString(p.W0.shape()));
  }
  if (blocks == 0 || rows % blocks != 0) {
    throw ShapeError("Attention rows not divisible into blocks");
  }
  const Tensor scores =
      MatMul(Relu(Add(MatMul(h, p.W0), TileRows(p.b0, rows))), p.W1);
  const Tensor grouped = Reshape(scores, {blocks, rows / blocks});
  return Reshape(Softmax(grouped, 1), {rows, 1});
}

Tensor WeightedStatsPool(const Tensor& alpha, const Tensor& h) {
  if (alpha.shape()[0] != h.shape()[0] || alpha.shape()[1] != 1) {
    throw ShapeError("WeightedStatsPool weights " + ShapeToString(alpha.shape()) +
                     " do not match sequence " + ShapeToString(h.shape()));
  }
  double total = 0.0;
  for (double a : alpha.values()) total += a;
  if (std::abs(total - 1.0) > 1e-9) {
    throw std::invalid_argument("WeightedStatsPool weights sum to " +
                                std::to_string(total) + ", expected 1");
  }
  const Tensor weighted = ScaleRows(h, alpha);
  auto [mean, sd] = MeanStdOverAxis(weighted, 0);
  return Concat({mean, sd}, 1);
}

Tensor StatsPool(const Tensor& h) {
  auto [mean, sd] = MeanStdOverAxis(h, 0);
  return Concat({mean, sd}, 1);
}

}  // namespace hvector
