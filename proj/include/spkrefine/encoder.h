// include/spkrefine/encoder.h
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

#ifndef SPKREFINE_ENCODER_H_
#define SPKREFINE_ENCODER_H_

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "spkrefine/base.h"
#include "spkrefine/layers.h"

SPKREFINE_NAMESPACE_BEGIN

// Tiny speaker encoder:
//
//   features (in_dim x T')
//     -> 3 x [separable conv1d -> batchnorm -> PReLU -> squeeze-excitation]
//     -> statistics pooling (mean ++ std)        : 2 * channels[2]
//     -> affine -> batchnorm                     : embed_dim
//     -> L2 normalization
//
// `channels` are the block output widths, so the default topology is
// 80 -> 80 -> 128 -> 192. Convolutions carry no bias (the batchnorm shift
// absorbs it), stride and dilation are 1.
struct EncoderConfig {
  int in_dim = 80;
  std::array<int, 3> channels{80, 128, 192};
  std::array<int, 3> kernels{3, 5, 7};
  std::array<int, 3> se_bottleneck{20, 32, 48};
  int pooled_dim = 384;
  int embed_dim = 192;

  bool operator==(const EncoderConfig&) const = default;
};

// Learnable parameters of the default configuration under the shape ledger
// below (see ParamCount).
constexpr int64_t kDefaultParamCount = 148580;

void ValidateEncoderConfig(const EncoderConfig& cfg);

// Learnable parameter count; batchnorm running statistics are excluded.
//   block b (ch_in -> ch_out, kernel k, bottleneck r):
//     depthwise ch_in*k + pointwise ch_in*ch_out + bn 2*ch_out + prelu ch_out
//     + se (r*ch_out + r) + (ch_out*r + ch_out)
//   projection: pooled*embed + embed + bn 2*embed
int64_t ParamCount(const EncoderConfig& cfg);

struct BlockWeights {
  Mat depthwise;  // ch_in x k
  Mat pointwise;  // ch_in x ch_out
  Vec bn_scale, bn_shift;
  Vec bn_mean, bn_var;  // running statistics
  Vec prelu;            // per-channel slope
  Mat se_w1;            // bottleneck x ch_out
  Vec se_b1;
  Mat se_w2;  // ch_out x bottleneck
  Vec se_b2;
};

struct ProjectionWeights {
  Mat weight;  // embed x pooled
  Vec bias;
  Vec bn_scale, bn_shift;
  Vec bn_mean, bn_var;
};

struct EncoderWeights {
  EncoderConfig config;
  std::vector<BlockWeights> blocks;
  ProjectionWeights proj;
};

// Gradients share the weight layout; running-stat slots stay zero.
using EncoderGradients = EncoderWeights;

// Non-owning view of one tensor inside EncoderWeights. `shape` is the
// logical shape (rank 1 for vectors, rank 2 for matrices); `data` is Eigen's
// column-major storage.
template <typename T>
struct BasicTensorRef {
  std::string name;
  T* data;
  std::vector<int64_t> shape;
  bool learnable;

  int64_t size() const {
    int64_t n = 1;
    for (int64_t d : shape) n *= d;
    return n;
  }
};
using TensorRef = BasicTensorRef<Real>;
using ConstTensorRef = BasicTensorRef<const Real>;

// Every tensor in a fixed order (the on-disk order).
std::vector<TensorRef> ListTensors(EncoderWeights& w);
std::vector<ConstTensorRef> ListTensors(const EncoderWeights& w);

// Allocates every tensor with its ledger shape, zero-filled, with running
// variances set to one.
EncoderWeights ZeroWeights(const EncoderConfig& cfg);

// Random initialization: uniform(+-1/sqrt(fan_in)) for convolutions, SE and
// projection; batchnorm scale 1, shift 0; PReLU slope 0.25.
EncoderWeights InitEncoderWeights(const EncoderConfig& cfg, uint64_t seed);

// Checks tensor shapes against the config, finiteness, and var > 0.
void ValidateWeights(const EncoderWeights& w);

struct Embedding {
  Vec values;
  bool normalized = false;

  int Dim() const { return static_cast<int>(values.size()); }
};

enum class BatchNormMode {
  kRunning,  // inference: running statistics
  kBatch,    // training: statistics of the current batch
};

struct BlockCache {
  std::vector<Mat> input;
  std::vector<Mat> conv_out;
  BatchNormCache bn;
  std::vector<Mat> bn_out;
  std::vector<Mat> act;
  std::vector<SqueezeExciteCache> se;
};

// Activations retained by ForwardBatch for Backward.
struct ForwardCache {
  bool valid = false;
  BatchNormMode mode = BatchNormMode::kRunning;
  std::vector<BlockCache> blocks;
  std::vector<Mat> last_block_out;
  Mat pooled;    // pooled_dim x B
  Mat proj_out;  // embed x B, before the batchnorm
  BatchNormCache proj_bn;
  Mat bn_out;  // embed x B
  Vec norms;
  Mat embeddings;  // embed x B, unit columns
};

// Embeds one chunk (in_dim x T', T' >= 2) with running batchnorm statistics.
// A non-finite activation raises NumericError naming the layer.
Embedding Forward(const Mat& chunk, const EncoderWeights& w);

// Embeds a batch of chunks; returns embed x B unit columns. In kBatch mode
// the statistics pool over all chunks (B * T' columns for the blocks, B
// columns for the projection). Running statistics are never modified here;
// see UpdateRunningStats.
Mat ForwardBatch(const std::vector<Mat>& chunks, const EncoderWeights& w,
                 BatchNormMode mode, ForwardCache* cache = nullptr);

// Reverse-mode gradients of sum(d_embeddings .* embeddings) with respect to
// every learnable tensor and, when input_grads is non-null, every chunk.
// Throws Error if the cache was not filled by ForwardBatch.
EncoderGradients Backward(const ForwardCache& cache, const EncoderWeights& w,
                          const Mat& d_embeddings,
                          std::vector<Mat>* input_grads = nullptr);

// running = (1 - momentum) * running + momentum * batch, with the unbiased
// batch variance. Only meaningful for a kBatch cache.
void UpdateRunningStats(const ForwardCache& cache, Real momentum,
                        EncoderWeights* w);

SPKREFINE_NAMESPACE_END

#endif  // SPKREFINE_ENCODER_H_
