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

#include "hvector/model.hpp"

#include <stdexcept>

#include "hvector/rng.hpp"

namespace hvector {

std::string ModelKindName(ModelKind kind) {
  switch (kind) {
    case ModelKind::kHVector:
      return "h_vector";
    case ModelKind::kXVector:
      return "x_vector";
    case ModelKind::kAttXVector:
      return "att_x_vector";
  }
  throw std::logic_error("unreachable model kind");
}

ModelKind ModelKindFromName(const std::string& name) {
  if (name == "h_vector") return ModelKind::kHVector;
  if (name == "x_vector") return ModelKind::kXVector;
  if (name == "att_x_vector") return ModelKind::kAttXVector;
  throw std::invalid_argument("unknown model kind '" + name + "'");
}

void WindowSpec::Validate() const {
  if (length < 1) throw std::invalid_argument("window length must be >= 1");
  if (step < 1) throw std::invalid_argument("window step must be >= 1");
  if (mode == WindowMode::kStatic && step != length) {
    throw std::invalid_argument("static windows require step == length");
  }
}

std::size_t WindowSpec::SegmentCount(std::size_t frames) const {
  Validate();
  if (frames < length) {
    throw ShapeError("utterance of " + std::to_string(frames) +
                     " frames is shorter than window length " +
                     std::to_string(length));
  }
  return (frames - length) / step + 1;
}

std::vector<std::size_t> WindowSpec::SegmentStarts(std::size_t frames) const {
  const std::size_t n = SegmentCount(frames);
  std::vector<std::size_t> starts(n);
  for (std::size_t i = 0; i < n; ++i) starts[i] = i * step;
  return starts;
}

void ModelConfig::Validate() const {
  window.Validate();
  if (speakers < 1) throw std::invalid_argument("speaker count must be >= 1");
  if (feature_dim < 1 || frame_tdnn_out < 1 || gru_hidden < 1 ||
      utterance_dense < 1) {
    throw std::invalid_argument("model dimensions must be positive");
  }
  if (segment_tdnn.empty()) {
    throw std::invalid_argument("segment TDNN stack must not be empty");
  }
  for (std::size_t w : segment_tdnn) {
    if (w < 1) throw std::invalid_argument("model dimensions must be positive");
  }
}

std::vector<Tensor> SegmentFrames(const Tensor& x, const WindowSpec& w) {
  const std::size_t cols = x.cols();
  const auto starts = w.SegmentStarts(x.rows());
  std::vector<Tensor> segments;
  segments.reserve(starts.size());
  for (std::size_t start : starts) {
    const double* src = x.values().data() + start * cols;
    segments.push_back(Tensor::Constant(
        {w.length, cols}, std::vector<double>(src, src + w.length * cols)));
  }
  return segments;
}

Tensor StackSegments(const Tensor& x, const WindowSpec& w) {
  const std::size_t cols = x.cols();
  const auto starts = w.SegmentStarts(x.rows());
  std::vector<double> out;
  out.reserve(starts.size() * w.length * cols);
  for (std::size_t start : starts) {
    const double* src = x.values().data() + start * cols;
    out.insert(out.end(), src, src + w.length * cols);
  }
  return Tensor::Constant({starts.size() * w.length, cols}, std::move(out));
}

// ---------------------------------------------------------------------------
// SpeakerNet
// ---------------------------------------------------------------------------

Tensor SpeakerNet::ForwardBatch(const std::vector<Tensor>& utterances, Mode mode) {
  if (utterances.empty()) {
    throw std::invalid_argument("ForwardBatch needs at least one utterance");
  }
  if (mode != current_mode_) SetMode(mode);
  std::vector<Tensor> pooled;
  pooled.reserve(utterances.size());
  for (const Tensor& x : utterances) pooled.push_back(EmbedUtterance(x, mode));
  Tensor v = pooled.size() == 1 ? pooled[0] : Concat(pooled, 0);
  return Classify(v);
}

Tensor SpeakerNet::Classify(const Tensor& pooled_batch) {
  Tensor d = DenseForward(utt_dense1_, pooled_batch);
  if (utt_bn_) d = BatchNormForward(*utt_bn_, d);
  Trace("utterance_dense1", d.shape());
  Tensor scores = Sigmoid(DenseForward(utt_dense2_, d));
  Trace("utterance_dense2", scores.shape());
  return scores;
}

Tensor SpeakerNet::Forward(const Tensor& utterance, Mode mode) {
  return ForwardBatch({utterance}, mode);
}

std::size_t SpeakerNet::ParameterCount() {
  std::size_t total = 0;
  VisitParams([&](const std::string&, Tensor& t) { total += t.size(); });
  return total;
}

std::unique_ptr<SpeakerNet> SpeakerNet::Create(const ModelConfig& config,
                                               std::uint64_t seed) {
  config.Validate();
  switch (config.kind) {
    case ModelKind::kHVector:
      return std::make_unique<HVectorNet>(config, seed);
    case ModelKind::kXVector:
      return std::make_unique<XVectorNet>(config, false, seed);
    case ModelKind::kAttXVector:
      return std::make_unique<XVectorNet>(config, true, seed);
  }
  throw std::logic_error("unreachable model kind");
}

namespace {

void InitClassifier(const ModelConfig& cfg, Rng& rng, DenseParams& d1,
                    std::optional<BatchNormParams>& bn, DenseParams& d2) {
  d1 = InitDense(cfg.PooledWidth(), cfg.utterance_dense, Activation::kRelu, rng);
  if (cfg.batchnorm) bn = InitBatchNorm(cfg.utterance_dense);
  d2 = InitDense(cfg.utterance_dense, cfg.speakers, Activation::kNone, rng);
}

}  // namespace

// ---------------------------------------------------------------------------
// HVectorNet
// ---------------------------------------------------------------------------

HVectorNet::HVectorNet(const ModelConfig& config, std::uint64_t seed)
    : SpeakerNet(config) {
  Rng rng(seed);
  const std::size_t e = config.FrameEncoderWidth();
  frame_tdnn_ = InitTdnn(config.feature_dim, config.frame_tdnn_out, rng);
  if (config.batchnorm) frame_bn_ = InitBatchNorm(config.frame_tdnn_out);
  if (config.use_gru) {
    gru_fwd_ = InitGru(config.frame_tdnn_out, config.gru_hidden, rng);
    gru_bwd_ = InitGru(config.frame_tdnn_out, config.gru_hidden, rng);
    if (config.batchnorm) gru_bn_ = InitBatchNorm(e);
  }
  frame_att_ = InitAttention(e, rng);
  std::size_t in = 2 * e;
  for (std::size_t width : config.segment_tdnn) {
    seg_tdnn_.push_back(InitTdnn(in, width, rng));
    seg_bn_.push_back(config.batchnorm
                          ? std::optional<BatchNormParams>(InitBatchNorm(width))
                          : std::nullopt);
    in = width;
  }
  seg_att_ = InitAttention(config.segment_tdnn.back(), rng);
  InitClassifier(config, rng, utt_dense1_, utt_bn_, utt_dense2_);
}

Tensor HVectorNet::EmbedUtterance(const Tensor& x, Mode) {
  if (x.cols() != config_.feature_dim) {
    throw ShapeError("utterance width " + ShapeToString(x.shape()) +
                     " does not match feature dim " +
                     std::to_string(config_.feature_dim));
  }
  const WindowSpec& w = config_.window;
  const std::size_t n = w.SegmentCount(x.rows());
  const std::size_t m = w.length;

  // Frame level: all segments stacked, normalized per segment.
  Tensor h = StackSegments(x, w);
  h = TdnnForward(frame_tdnn_, h, frame_bn_ ? &*frame_bn_ : nullptr, n);
  Trace("frame_tdnn", {m, h.cols()});
  if (config_.use_gru) {
    h = BiGruForward(gru_fwd_, gru_bwd_, h, n);
    if (gru_bn_) h = BatchNormForward(*gru_bn_, h, n);
    Trace("frame_bigru", {m, h.cols()});
  }
  // One shared scorer across all segments.
  Tensor alpha = AttentionWeights(frame_att_, h, n);
  Trace("frame_attention", {m, h.cols()});
  std::vector<Tensor> segment_vectors;
  segment_vectors.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    segment_vectors.push_back(WeightedStatsPool(SliceRows(alpha, i * m, m),
                                                SliceRows(h, i * m, m)));
  }
  Trace("frame_stats_pooling", segment_vectors[0].shape());

  // Segment level: current-step TDNNs, attention, pooling over segments.
  Tensor s = segment_vectors.size() == 1 ? segment_vectors[0]
                                         : Concat(segment_vectors, 0);
  for (std::size_t l = 0; l < seg_tdnn_.size(); ++l) {
    s = TdnnForward(seg_tdnn_[l], s, seg_bn_[l] ? &*seg_bn_[l] : nullptr, 1);
    Trace(("segment_tdnn" + std::to_string(l + 1)).c_str(), s.shape());
  }
  Tensor alpha_s = AttentionWeights(seg_att_, s, 1);
  Trace("segment_attention", s.shape());
  Tensor pooled = WeightedStatsPool(alpha_s, s);
  Trace("segment_stats_pooling", pooled.shape());
  return pooled;
}

void HVectorNet::VisitParams(const ParamVisitor& v) {
  frame_tdnn_.Visit("frame_tdnn", v);
  if (frame_bn_) frame_bn_->Visit("frame_bn", v);
  if (config_.use_gru) {
    gru_fwd_.Visit("gru_fwd", v);
    gru_bwd_.Visit("gru_bwd", v);
    if (gru_bn_) gru_bn_->Visit("gru_bn", v);
  }
  frame_att_.Visit("frame_att", v);
  for (std::size_t l = 0; l < seg_tdnn_.size(); ++l) {
    const std::string id = std::to_string(l + 1);
    seg_tdnn_[l].Visit("seg_tdnn" + id, v);
    if (seg_bn_[l]) seg_bn_[l]->Visit("seg_bn" + id, v);
  }
  seg_att_.Visit("seg_att", v);
  utt_dense1_.Visit("utt_dense1", v);
  if (utt_bn_) utt_bn_->Visit("utt_bn", v);
  utt_dense2_.Visit("utt_dense2", v);
}

void HVectorNet::VisitBuffers(const BufferVisitor& v) {
  if (frame_bn_) frame_bn_->VisitBuffers("frame_bn", v);
  if (gru_bn_) gru_bn_->VisitBuffers("gru_bn", v);
  for (std::size_t l = 0; l < seg_bn_.size(); ++l) {
    if (seg_bn_[l]) seg_bn_[l]->VisitBuffers("seg_bn" + std::to_string(l + 1), v);
  }
  if (utt_bn_) utt_bn_->VisitBuffers("utt_bn", v);
}

void HVectorNet::ApplyMode(Mode mode) {
  if (frame_bn_) frame_bn_->mode = mode;
  if (gru_bn_) gru_bn_->mode = mode;
  for (auto& bn : seg_bn_) {
    if (bn) bn->mode = mode;
  }
  if (utt_bn_) utt_bn_->mode = mode;
}

// ---------------------------------------------------------------------------
// XVectorNet
// ---------------------------------------------------------------------------

XVectorNet::XVectorNet(const ModelConfig& config, bool attentive,
                       std::uint64_t seed)
    : SpeakerNet(config), attentive_(attentive) {
  Rng rng(seed);
  std::size_t in = config.feature_dim;
  for (std::size_t width : config.segment_tdnn) {
    tdnn_.push_back(InitTdnn(in, width, rng));
    bn_.push_back(config.batchnorm
                      ? std::optional<BatchNormParams>(InitBatchNorm(width))
                      : std::nullopt);
    in = width;
  }
  if (attentive_) att_ = InitAttention(config.segment_tdnn.back(), rng);
  InitClassifier(config, rng, utt_dense1_, utt_bn_, utt_dense2_);
}

Tensor XVectorNet::EncodeFrames(const Tensor& x, Mode) {
  if (x.cols() != config_.feature_dim) {
    throw ShapeError("utterance width " + ShapeToString(x.shape()) +
                     " does not match feature dim " +
                     std::to_string(config_.feature_dim));
  }
  Tensor h = x;
  for (std::size_t l = 0; l < tdnn_.size(); ++l) {
    h = TdnnForward(tdnn_[l], h, bn_[l] ? &*bn_[l] : nullptr, 1);
  }
  return h;
}

Tensor XVectorNet::EmbedUtterance(const Tensor& x, Mode mode) {
  Tensor h = EncodeFrames(x, mode);
  if (attentive_) {
    return WeightedStatsPool(AttentionWeights(*att_, h, 1), h);
  }
  return StatsPool(h);
}

Tensor XVectorNet::EmbedUtteranceWeighted(const Tensor& x, Mode mode,
                                          const Tensor& alpha) {
  return WeightedStatsPool(alpha, EncodeFrames(x, mode));
}

void XVectorNet::VisitParams(const ParamVisitor& v) {
  for (std::size_t l = 0; l < tdnn_.size(); ++l) {
    const std::string id = std::to_string(l + 1);
    tdnn_[l].Visit("tdnn" + id, v);
    if (bn_[l]) bn_[l]->Visit("bn" + id, v);
  }
  if (att_) att_->Visit("att", v);
  utt_dense1_.Visit("utt_dense1", v);
  if (utt_bn_) utt_bn_->Visit("utt_bn", v);
  utt_dense2_.Visit("utt_dense2", v);
}

void XVectorNet::VisitBuffers(const BufferVisitor& v) {
  for (std::size_t l = 0; l < bn_.size(); ++l) {
    if (bn_[l]) bn_[l]->VisitBuffers("bn" + std::to_string(l + 1), v);
  }
  if (utt_bn_) utt_bn_->VisitBuffers("utt_bn", v);
}

void XVectorNet::ApplyMode(Mode mode) {
  for (auto& bn : bn_) {
    if (bn) bn->mode = mode;
  }
  if (utt_bn_) utt_bn_->mode = mode;
}

}  // namespace hvector
