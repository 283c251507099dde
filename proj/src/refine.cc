// src/refine.cc
//
// Copyright 2026  spkrefine authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//   http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "spkrefine/refine.h"

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>

#include "spkrefine/contrastive.h"

SPKREFINE_NAMESPACE_BEGIN

void ValidateChunkConfig(const ChunkConfig& cfg) {
  if (cfg.chunk_len < 2 || cfg.chunk_len % 2 != 0)
    throw ConfigError("chunk length must be even and >= 2 frames, got " +
                      std::to_string(cfg.chunk_len));
}

int NumChunks(int num_frames, const ChunkConfig& cfg) {
  ValidateChunkConfig(cfg);
  if (num_frames < cfg.chunk_len)
    throw TooShortError(std::to_string(num_frames) + " frames is shorter than one chunk (" +
                        std::to_string(cfg.chunk_len) + " frames)");
  return (num_frames - cfg.chunk_len) / cfg.Hop() + 1;
}

std::vector<Mat> SplitChunks(const Mat& features, const ChunkConfig& cfg) {
  const int k = NumChunks(static_cast<int>(features.cols()), cfg);
  std::vector<Mat> chunks;
  chunks.reserve(k);
  for (int i = 0; i < k; ++i) chunks.emplace_back(features.middleCols(i * cfg.Hop(), cfg.chunk_len));
  return chunks;
}

EncoderEmbedder::EncoderEmbedder(std::shared_ptr<const EncoderWeights> weights)
    : weights_(std::move(weights)) {
  if (!weights_) throw Error("EncoderEmbedder needs weights");
}

EmbeddingSequence ChunkEmbeddings(const FeatureMatrix& features, const ChunkEmbedder& embedder,
                                  const ChunkConfig& cfg) {
  const std::vector<Mat> chunks = SplitChunks(features.data, cfg);
  EmbeddingSequence seq;
  seq.chunk_len = cfg.chunk_len;
  seq.values.resize(embedder.Dim(), static_cast<Eigen::Index>(chunks.size()));
  for (size_t i = 0; i < chunks.size(); ++i)
    seq.values.col(static_cast<Eigen::Index>(i)) = embedder.Embed(chunks[i]).values;
  return seq;
}

EmbeddingSequence ChunkEmbeddings(const FeatureMatrix& features, const EncoderWeights& weights,
                                  const ChunkConfig& cfg) {
  // Non-owning alias: the embedder does not outlive this call.
  EncoderEmbedder embedder(std::shared_ptr<const EncoderWeights>(&weights, [](const EncoderWeights*) {}));
  return ChunkEmbeddings(features, embedder, cfg);
}

Embedding PoolEmbeddings(const EmbeddingSequence& seq) {
  if (seq.values.cols() == 0) throw DimensionError("no chunk embeddings to pool");
  const Eigen::VectorXd mean = seq.values.cast<double>().rowwise().mean();
  const double n = mean.norm();
  if (!(n > 0) || !std::isfinite(n))
    throw NumericError("chunk embeddings cancel out; the pooled embedding is undefined");
  return {(mean / n).cast<Real>(), true};
}

namespace {

void CheckUnit(const Vec& v, const char* what) {
  const double norm = static_cast<double>(v.norm());
  if (!(std::abs(norm - 1.0) <= kUnitNormTolerance))
    throw NumericError(std::string(what) + " is not unit-norm (norm " + std::to_string(norm) + ")");
}

}  // namespace

std::vector<double> SimilarityTrack(const Embedding& reference, const EmbeddingSequence& seq) {
  if (reference.values.size() != seq.values.rows())
    throw DimensionError("reference embedding has dimension " + std::to_string(reference.Dim()) +
                         ", chunk embeddings have " + std::to_string(seq.values.rows()));
  CheckUnit(reference.values, "reference embedding");
  std::vector<double> out(static_cast<size_t>(seq.values.cols()));
  for (Eigen::Index k = 0; k < seq.values.cols(); ++k) {
    CheckUnit(seq.values.col(k), "chunk embedding");
    out[k] = static_cast<double>(reference.values.dot(seq.values.col(k)));
  }
  return out;
}

double DefaultAlpha(EmbedderMode mode) { return mode == EmbedderMode::kOracle ? 2.0 : 6.0; }

RefinementConfig DefaultRefinementConfig(EmbedderMode mode) {
  RefinementConfig cfg;
  cfg.mode = mode;
  cfg.alpha = DefaultAlpha(mode);
  return cfg;
}

void ValidateRefinementConfig(const RefinementConfig& cfg) {
  if (!(cfg.alpha > 0) || !std::isfinite(cfg.alpha))
    throw ConfigError("scaling factor alpha must be positive, got " + std::to_string(cfg.alpha));
  if (!std::isfinite(cfg.beta)) throw ConfigError("sigmoid offset beta must be finite");
}

double ScaleClip(double value, double alpha) {
  if (!(alpha > 0)) throw ConfigError("scaling factor alpha must be positive");
  return std::min(1.0, std::max(0.0, alpha * value));
}

std::vector<double> ScaleClip(std::span<const double> values, double alpha) {
  std::vector<double> out;
  out.reserve(values.size());
  for (double v : values) out.push_back(ScaleClip(v, alpha));
  return out;
}

double Activate(double value, const RefinementConfig& cfg) {
  if (cfg.activation == Activation::kSigmoid)
    return 1.0 / (1.0 + std::exp(-(cfg.alpha * value + cfg.beta)));
  return ScaleClip(value, cfg.alpha);
}

int64_t StepChunkIndex(int64_t frame, const ChunkConfig& cfg) {
  if (frame < cfg.chunk_len) return 0;
  return (frame - cfg.chunk_len) / cfg.Hop() + 1;
}

namespace {

double ChunkCenter(int64_t k, const ChunkConfig& cfg) {
  return static_cast<double>(k * cfg.Hop()) + 0.5 * (cfg.chunk_len - 1);
}

}  // namespace

int64_t RequiredChunk(int64_t frame, const ChunkConfig& cfg, Upsampling mode) {
  if (mode == Upsampling::kStepHold) return StepChunkIndex(frame, cfg);
  const double c0 = ChunkCenter(0, cfg);
  if (frame <= c0) return 0;
  return static_cast<int64_t>(std::floor((frame - c0) / cfg.Hop())) + 1;
}

double FrameValue(int64_t frame, std::span<const double> values, const ChunkConfig& cfg,
                  Upsampling mode) {
  if (values.empty()) throw DimensionError("no chunk values to upsample");
  const auto k_count = static_cast<int64_t>(values.size());
  if (mode == Upsampling::kStepHold)
    return values[std::min(StepChunkIndex(frame, cfg), k_count - 1)];
  const double c0 = ChunkCenter(0, cfg);
  if (frame <= c0) return values.front();
  const auto k = static_cast<int64_t>(std::floor((frame - c0) / cfg.Hop()));
  if (k >= k_count - 1) return values.back();
  const double frac = (frame - ChunkCenter(k, cfg)) / cfg.Hop();
  return values[k] + frac * (values[k + 1] - values[k]);
}

std::vector<double> UpsamplePad(std::span<const double> chunk_values, int num_frames,
                                const ChunkConfig& cfg, Upsampling mode) {
  ValidateChunkConfig(cfg);
  if (chunk_values.empty()) throw DimensionError("UpsamplePad needs at least one chunk value");
  std::vector<double> out(static_cast<size_t>(std::max(num_frames, 0)));
  for (int t = 0; t < num_frames; ++t) out[t] = FrameValue(t, chunk_values, cfg, mode);
  return out;
}

ConditioningSequence AssembleConditioning(const Embedding& reference, std::span<const double> track) {
  const Eigen::Index d = reference.values.size();
  if (d == 0) throw DimensionError("empty reference embedding");
  ConditioningSequence out;
  out.values.resize(d + 1, static_cast<Eigen::Index>(track.size()));
  for (size_t t = 0; t < track.size(); ++t) {
    out.values.col(static_cast<Eigen::Index>(t)).head(d) = reference.values;
    out.values(d, static_cast<Eigen::Index>(t)) = static_cast<Real>(track[t]);
  }
  return out;
}

RefinementResult RefineOffline(const FeatureMatrix& features, const Embedding& reference,
                               const ChunkEmbedder& embedder, const ChunkConfig& chunk_cfg,
                               const RefinementConfig& refine_cfg) {
  ValidateRefinementConfig(refine_cfg);
  RefinementResult r;
  r.chunk_raw = SimilarityTrack(reference, ChunkEmbeddings(features, embedder, chunk_cfg));
  for (double v : r.chunk_raw) r.chunk_scaled.push_back(Activate(v, refine_cfg));
  const int t = features.NumFrames();
  r.frame_raw = UpsamplePad(r.chunk_raw, t, chunk_cfg, refine_cfg.upsampling);
  r.frame_scaled = UpsamplePad(r.chunk_scaled, t, chunk_cfg, refine_cfg.upsampling);
  r.conditioning = AssembleConditioning(reference, r.frame_scaled);
  return r;
}

RefinementResult RefineOffline(const Waveform& wave, const FeatureConfig& feature_cfg,
                               const Embedding& reference, const ChunkEmbedder& embedder,
                               const ChunkConfig& chunk_cfg, const RefinementConfig& refine_cfg) {
  return RefineOffline(ComputeFeatures(wave, feature_cfg), reference, embedder, chunk_cfg,
                       refine_cfg);
}

RefinementStream::RefinementStream(const FeatureConfig& feature_cfg, const ChunkConfig& chunk_cfg,
                                   const RefinementConfig& refine_cfg, Embedding reference,
                                   std::shared_ptr<const ChunkEmbedder> embedder)
    : chunk_cfg_(chunk_cfg),
      refine_cfg_(refine_cfg),
      reference_(std::move(reference)),
      embedder_(std::move(embedder)) {
  ValidateChunkConfig(chunk_cfg_);
  ValidateRefinementConfig(refine_cfg_);
  if (!embedder_) throw Error("RefinementStream needs an embedder");
  if (reference_.values.size() != embedder_->Dim())
    throw DimensionError("reference embedding dimension does not match the embedder");
  CheckUnit(reference_.values, "reference embedding");
  extractor_.emplace(feature_cfg);
}

void RefinementStream::AcceptWaveform(std::span<const float> samples) {
  if (saw_features_) throw Error("stream already fed with feature columns");
  if (finished_) throw Error("AcceptWaveform after InputFinished");
  saw_audio_ = true;
  extractor_->AcceptWaveform(samples);
  const Mat cols = extractor_->PopReady();
  for (Eigen::Index j = 0; j < cols.cols(); ++j) frames_.push_back(cols.col(j));
  num_frames_ += cols.cols();
  EmbedReadyChunks();
}

void RefinementStream::AcceptFeatures(const Mat& columns) {
  if (saw_audio_) throw Error("stream already fed with audio");
  if (finished_) throw Error("AcceptFeatures after InputFinished");
  saw_features_ = true;
  for (Eigen::Index j = 0; j < columns.cols(); ++j) frames_.push_back(columns.col(j));
  num_frames_ += columns.cols();
  EmbedReadyChunks();
}

void RefinementStream::InputFinished() {
  if (finished_) return;
  if (!saw_features_) {
    extractor_->InputFinished();
    const Mat cols = extractor_->PopReady();
    for (Eigen::Index j = 0; j < cols.cols(); ++j) frames_.push_back(cols.col(j));
    num_frames_ += cols.cols();
    EmbedReadyChunks();
  }
  finished_ = true;
  if (chunk_raw_.empty())
    throw TooShortError("stream ended after " + std::to_string(num_frames_) +
                        " frames, shorter than one chunk (" + std::to_string(chunk_cfg_.chunk_len) +
                        " frames)");
}

void RefinementStream::EmbedReadyChunks() {
  const int len = chunk_cfg_.chunk_len, hop = chunk_cfg_.Hop();
  while (true) {
    const int64_t start = NumChunks() * hop;
    if (start + len > num_frames_) break;
    Mat chunk(frames_.front().size(), len);
    for (int j = 0; j < len; ++j) chunk.col(j) = frames_[start - frame_base_ + j];
    const double raw = SimilarityTrack(reference_, {embedder_->Embed(chunk).values, len}).front();
    chunk_raw_.push_back(raw);
    chunk_scaled_.push_back(Activate(raw, refine_cfg_));
    // The next window starts one hop later; earlier columns are never needed.
    const int64_t keep_from = start + hop;
    while (frame_base_ < keep_from && !frames_.empty()) {
      frames_.pop_front();
      ++frame_base_;
    }
  }
}

RefinedFrames RefinementStream::Pop() {
  RefinedFrames out;
  out.first_frame = num_emitted_;
  const int64_t k = NumChunks();
  int64_t end = num_emitted_;
  if (k > 0) {
    while (end < num_frames_ &&
           (finished_ || RequiredChunk(end, chunk_cfg_, refine_cfg_.upsampling) < k))
      ++end;
  }
  for (int64_t t = num_emitted_; t < end; ++t) {
    out.raw.push_back(FrameValue(t, chunk_raw_, chunk_cfg_, refine_cfg_.upsampling));
    out.scaled.push_back(FrameValue(t, chunk_scaled_, chunk_cfg_, refine_cfg_.upsampling));
  }
  out.conditioning = AssembleConditioning(reference_, out.scaled).values;
  num_emitted_ = end;
  return out;
}

SPKREFINE_NAMESPACE_END
