// include/spkrefine/refine.h
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

#ifndef SPKREFINE_REFINE_H_
#define SPKREFINE_REFINE_H_

#include <deque>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "spkrefine/base.h"
#include "spkrefine/encoder.h"
#include "spkrefine/features.h"

SPKREFINE_NAMESPACE_BEGIN

// Chunks of chunk_len frames taken every chunk_len / 2 frames.
struct ChunkConfig {
  int chunk_len = 100;  // 1 s at a 10 ms hop

  int Hop() const { return chunk_len / 2; }
};

// chunk_len must be even and >= 2.
void ValidateChunkConfig(const ChunkConfig& cfg);

// floor((T - T') / (T'/2)) + 1, i.e. 2 T / T' - 1 when T' divides T.
// Throws TooShortError when T < T'.
int NumChunks(int num_frames, const ChunkConfig& cfg);

// Copies of the chunk windows, in order.
std::vector<Mat> SplitChunks(const Mat& features, const ChunkConfig& cfg);

// Anything that maps a chunk of features to a unit-norm embedding. Embed must
// be safe to call concurrently.
class ChunkEmbedder {
 public:
  virtual ~ChunkEmbedder() = default;
  virtual int Dim() const = 0;
  virtual Embedding Embed(const Mat& chunk) const = 0;
};

// The tiny encoder in inference mode.
class EncoderEmbedder : public ChunkEmbedder {
 public:
  explicit EncoderEmbedder(std::shared_ptr<const EncoderWeights> weights);
  int Dim() const override { return weights_->config.embed_dim; }
  Embedding Embed(const Mat& chunk) const override { return Forward(chunk, *weights_); }
  const EncoderWeights& Weights() const { return *weights_; }

 private:
  std::shared_ptr<const EncoderWeights> weights_;
};

// d x K, one unit-norm column per chunk.
struct EmbeddingSequence {
  Mat values;
  int chunk_len = 0;

  int NumChunks() const { return static_cast<int>(values.cols()); }
};

EmbeddingSequence ChunkEmbeddings(const FeatureMatrix& features, const ChunkEmbedder& embedder,
                                  const ChunkConfig& cfg);
EmbeddingSequence ChunkEmbeddings(const FeatureMatrix& features, const EncoderWeights& weights,
                                  const ChunkConfig& cfg);

// Utterance embedding: the renormalized mean of the chunk embeddings.
Embedding PoolEmbeddings(const EmbeddingSequence& seq);

// Cosine between the reference and each chunk embedding.
std::vector<double> SimilarityTrack(const Embedding& reference, const EmbeddingSequence& seq);

enum class EmbedderMode { kLight, kOracle };
enum class Activation { kScaleClip, kSigmoid };
enum class Upsampling { kStepHold, kLinear };

struct RefinementConfig {
  double alpha = 6.0;
  // Offset of the sigmoid activation; unused by scale-and-clip.
  double beta = 0.0;
  EmbedderMode mode = EmbedderMode::kLight;
  Activation activation = Activation::kScaleClip;
  Upsampling upsampling = Upsampling::kStepHold;
};

// 6 for the tiny encoder, 2 when the reference-space embedder is used.
double DefaultAlpha(EmbedderMode mode);
RefinementConfig DefaultRefinementConfig(EmbedderMode mode);

// alpha must be positive and finite.
void ValidateRefinementConfig(const RefinementConfig& cfg);

// min(1, max(0, alpha * v)). Throws ConfigError for alpha <= 0.
double ScaleClip(double value, double alpha);
std::vector<double> ScaleClip(std::span<const double> values, double alpha);

// ScaleClip or sigmoid(alpha * v + beta), per cfg.activation.
double Activate(double value, const RefinementConfig& cfg);

// Index of the chunk whose value frame t takes under step-hold: the first
// window that contains it. Frames past the last window use the last chunk.
int64_t StepChunkIndex(int64_t frame, const ChunkConfig& cfg);

// Per-frame value for frame t given the first `values.size()` chunk values.
double FrameValue(int64_t frame, std::span<const double> values, const ChunkConfig& cfg,
                  Upsampling mode);

// Chunk index that must exist before frame t's value is final.
int64_t RequiredChunk(int64_t frame, const ChunkConfig& cfg, Upsampling mode);

// Expands K chunk values to T frames. Step-hold: frames [0, T') take chunk 0,
// then chunk k covers [T' + (k-1) T'/2, T' + k T'/2), trailing frames repeat
// the last value. Linear: interpolation between chunk centres, edges held.
std::vector<double> UpsamplePad(std::span<const double> chunk_values, int num_frames,
                                const ChunkConfig& cfg, Upsampling mode = Upsampling::kStepHold);

// (d + 1) x T: the reference repeated over time with the track as last row.
struct ConditioningSequence {
  Mat values;

  int NumFrames() const { return static_cast<int>(values.cols()); }
};

ConditioningSequence AssembleConditioning(const Embedding& reference, std::span<const double> track);

struct RefinementResult {
  std::vector<double> chunk_raw;
  std::vector<double> chunk_scaled;
  std::vector<double> frame_raw;
  std::vector<double> frame_scaled;
  ConditioningSequence conditioning;
};

RefinementResult RefineOffline(const FeatureMatrix& features, const Embedding& reference,
                               const ChunkEmbedder& embedder, const ChunkConfig& chunk_cfg,
                               const RefinementConfig& refine_cfg);
RefinementResult RefineOffline(const Waveform& wave, const FeatureConfig& feature_cfg,
                               const Embedding& reference, const ChunkEmbedder& embedder,
                               const ChunkConfig& chunk_cfg, const RefinementConfig& refine_cfg);

// Frames finalized by one RefinementStream::Pop call.
struct RefinedFrames {
  int64_t first_frame = 0;
  std::vector<double> raw;
  std::vector<double> scaled;
  Mat conditioning;  // (d + 1) x n

  size_t size() const { return raw.size(); }
};

// Incremental refinement of one stream. Feed either audio or feature columns
// (not both), call InputFinished at the end, and Pop whenever convenient.
// Under step-hold a frame is final once the first chunk covering it has been
// embedded, so the algorithmic latency is at most chunk_len frames. The
// concatenated output equals RefineOffline on the same input bit for bit.
//
// One instance serves one stream and is not thread-safe; distinct instances
// may share an embedder.
class RefinementStream {
 public:
  RefinementStream(const FeatureConfig& feature_cfg, const ChunkConfig& chunk_cfg,
                   const RefinementConfig& refine_cfg, Embedding reference,
                   std::shared_ptr<const ChunkEmbedder> embedder);

  void AcceptWaveform(std::span<const float> samples);
  void AcceptFeatures(const Mat& columns);
  // Throws TooShortError if the stream ended before one chunk completed.
  void InputFinished();

  RefinedFrames Pop();

  int64_t NumChunks() const { return static_cast<int64_t>(chunk_raw_.size()); }
  int64_t NumFramesEmitted() const { return num_emitted_; }

 private:
  void EmbedReadyChunks();

  ChunkConfig chunk_cfg_;
  RefinementConfig refine_cfg_;
  Embedding reference_;
  std::shared_ptr<const ChunkEmbedder> embedder_;
  std::optional<StreamingFeatureExtractor> extractor_;
  bool saw_audio_ = false;
  bool saw_features_ = false;
  bool finished_ = false;

  std::deque<Vec> frames_;  // feature columns from frame_base_ onwards
  int64_t frame_base_ = 0;
  int64_t num_frames_ = 0;
  std::vector<double> chunk_raw_;
  std::vector<double> chunk_scaled_;
  int64_t num_emitted_ = 0;
};

SPKREFINE_NAMESPACE_END

#endif  // SPKREFINE_REFINE_H_
