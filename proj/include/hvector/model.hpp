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

#ifndef HVECTOR_MODEL_HPP_
#define HVECTOR_MODEL_HPP_

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "hvector/layers.hpp"
#include "hvector/tensor.hpp"

namespace hvector {

enum class ModelKind { kHVector, kXVector, kAttXVector };

std::string ModelKindName(ModelKind kind);
ModelKind ModelKindFromName(const std::string& name);

enum class WindowMode { kSliding, kStatic };

struct WindowSpec {
  std::size_t length = 20;  // M, frames per segment
  std::size_t step = 10;    // H, frames between segment starts
  WindowMode mode = WindowMode::kSliding;

  void Validate() const;
  // N = floor((T - M) / H) + 1; requires T >= M.
  std::size_t SegmentCount(std::size_t frames) const;
  std::vector<std::size_t> SegmentStarts(std::size_t frames) const;
};

struct ModelConfig {
  ModelKind kind = ModelKind::kHVector;
  std::size_t feature_dim = 20;  // L
  std::size_t frame_tdnn_out = 256;
  std::size_t gru_hidden = 256;  // per direction
  std::vector<std::size_t> segment_tdnn = {512, 512, 1500};
  std::size_t utterance_dense = 512;
  std::size_t speakers = 0;  // K
  WindowSpec window;
  bool batchnorm = true;
  bool use_gru = true;

  // Frame-level encoder output width E.
  std::size_t FrameEncoderWidth() const {
    return use_gru ? 2 * gru_hidden : frame_tdnn_out;
  }
  // Width of the pooled utterance vector feeding the classifier.
  std::size_t PooledWidth() const { return 2 * segment_tdnn.back(); }
  void Validate() const;
};

// Copies of the M-frame windows starting at 0, H, 2H, ...; trailing frames
// that do not fill a window are dropped.
std::vector<Tensor> SegmentFrames(const Tensor& x, const WindowSpec& w);
// Same windows stacked into one (N*M, L) constant.
Tensor StackSegments(const Tensor& x, const WindowSpec& w);

class SpeakerNet {
 public:
  virtual ~SpeakerNet() = default;

  const ModelConfig& config() const { return config_; }

  // Per-speaker scores in (0,1); one row per utterance.
  Tensor ForwardBatch(const std::vector<Tensor>& utterances, Mode mode);
  Tensor Forward(const Tensor& utterance, Mode mode);

  // Pooled utterance embedding of width PooledWidth(), before the classifier.
  virtual Tensor EmbedUtterance(const Tensor& x, Mode mode) = 0;
  // Two dense layers + sigmoid over a batch of pooled embeddings.
  Tensor Classify(const Tensor& pooled_batch);

  // Optional stage-by-stage shape recording (single-utterance forwards).
  using ShapeTrace = std::vector<std::pair<std::string, Shape>>;
  void set_shape_trace(ShapeTrace* trace) { trace_ = trace; }

  virtual void VisitParams(const ParamVisitor& v) = 0;
  virtual void VisitBuffers(const BufferVisitor& v) = 0;

  // Flips all batch-norm layers; not safe concurrently with forwards.
  void SetMode(Mode mode) {
    ApplyMode(mode);
    current_mode_ = mode;
  }
  Mode mode() const { return current_mode_; }

  std::size_t ParameterCount();

  static std::unique_ptr<SpeakerNet> Create(const ModelConfig& config,
                                            std::uint64_t seed);

 protected:
  explicit SpeakerNet(ModelConfig config) : config_(std::move(config)) {}

  virtual void ApplyMode(Mode mode) = 0;

  void Trace(const char* stage, const Shape& shape) {
    if (trace_) trace_->emplace_back(stage, shape);
  }

  ModelConfig config_;
  Mode current_mode_ = Mode::kTrain;
  ShapeTrace* trace_ = nullptr;
  DenseParams utt_dense1_;
  std::optional<BatchNormParams> utt_bn_;
  DenseParams utt_dense2_;
};

class HVectorNet : public SpeakerNet {
 public:
  HVectorNet(const ModelConfig& config, std::uint64_t seed);

  Tensor EmbedUtterance(const Tensor& x, Mode mode) override;
  void VisitParams(const ParamVisitor& v) override;
  void VisitBuffers(const BufferVisitor& v) override;

  const AttentionMlpParams& frame_attention() const { return frame_att_; }

 protected:
  void ApplyMode(Mode mode) override;

 private:
  TdnnLayerParams frame_tdnn_;
  std::optional<BatchNormParams> frame_bn_;
  GruParams gru_fwd_, gru_bwd_;
  std::optional<BatchNormParams> gru_bn_;
  AttentionMlpParams frame_att_;
  std::vector<TdnnLayerParams> seg_tdnn_;
  std::vector<std::optional<BatchNormParams>> seg_bn_;
  AttentionMlpParams seg_att_;
};

class XVectorNet : public SpeakerNet {
 public:
  XVectorNet(const ModelConfig& config, bool attentive, std::uint64_t seed);

  Tensor EmbedUtterance(const Tensor& x, Mode mode) override;
  // Frame encoding pooled with explicit weights instead of the model's own
  // pooling; used by the configuration-equivalence checks.
  Tensor EmbedUtteranceWeighted(const Tensor& x, Mode mode, const Tensor& alpha);
  void VisitParams(const ParamVisitor& v) override;
  void VisitBuffers(const BufferVisitor& v) override;

  bool attentive() const { return attentive_; }

 protected:
  void ApplyMode(Mode mode) override;

 private:
  Tensor EncodeFrames(const Tensor& x, Mode mode);

  bool attentive_;
  std::vector<TdnnLayerParams> tdnn_;
  std::vector<std::optional<BatchNormParams>> bn_;
  std::optional<AttentionMlpParams> att_;
};

}  // namespace hvector

#endif  // HVECTOR_MODEL_HPP_
