// include/spkrefine/layers.h
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

#ifndef SPKREFINE_LAYERS_H_
#define SPKREFINE_LAYERS_H_

#include <vector>

#include "spkrefine/base.h"

SPKREFINE_NAMESPACE_BEGIN

// Operator-level forward/backward pairs used by the tiny encoder. All
// activations are channels x frames. Backward functions take the upstream
// gradient `dy` and *overwrite* their gradient outputs.

constexpr Real kBatchNormEps = static_cast<Real>(1e-5);
constexpr Real kStatsPoolEps = static_cast<Real>(1e-8);

// Per-channel cross-correlation with an odd-length kernel and zero padding:
//   y[c, t] = sum_j kernel[c, j] * x[c, t + j - k/2].
Mat DepthwiseConv1d(const Mat& x, const Mat& kernel);
void DepthwiseConv1dBackward(const Mat& x, const Mat& kernel, const Mat& dy,
                             Mat* dx, Mat* dkernel);

// Depthwise conv followed by a 1x1 channel mix; pointwise is ch_in x ch_out.
Mat SeparableConv1d(const Mat& x, const Mat& depthwise, const Mat& pointwise);
void SeparableConv1dBackward(const Mat& x, const Mat& depthwise,
                             const Mat& pointwise, const Mat& dy, Mat* dx,
                             Mat* ddepthwise, Mat* dpointwise);

// Batch normalization over every column of every matrix in the batch.
struct BatchNormCache {
  std::vector<Mat> normalized;
  Vec inv_std;
  Vec mean;
  Vec var;  // biased batch variance
};

std::vector<Mat> BatchNormTrain(const std::vector<Mat>& x, const Vec& scale,
                                const Vec& shift, BatchNormCache* cache = nullptr);
void BatchNormTrainBackward(const BatchNormCache& cache, const Vec& scale,
                            const std::vector<Mat>& dy, std::vector<Mat>* dx,
                            Vec* dscale, Vec* dshift);

Mat BatchNormInference(const Mat& x, const Vec& scale, const Vec& shift,
                       const Vec& running_mean, const Vec& running_var);
void BatchNormInferenceBackward(const Mat& x, const Vec& scale,
                                const Vec& running_mean, const Vec& running_var,
                                const Mat& dy, Mat* dx, Vec* dscale, Vec* dshift);

// Per-channel PReLU.
Mat PRelu(const Mat& x, const Vec& slope);
void PReluBackward(const Mat& x, const Vec& slope, const Mat& dy, Mat* dx,
                   Vec* dslope);

// Squeeze-excitation: gate = sigmoid(w2 relu(w1 mean_t(x) + b1) + b2),
// output = x scaled per channel by gate.
struct SqueezeExciteCache {
  Vec squeeze;
  Vec hidden_pre;
  Vec gate;
};

Mat SqueezeExcite(const Mat& x, const Mat& w1, const Vec& b1, const Mat& w2,
                  const Vec& b2, SqueezeExciteCache* cache = nullptr);
void SqueezeExciteBackward(const Mat& x, const Mat& w1, const Mat& w2,
                           const SqueezeExciteCache& cache, const Mat& dy,
                           Mat* dx, Mat* dw1, Vec* db1, Mat* dw2, Vec* db2);

// [mean over time; sqrt(population variance + eps)], length 2 * channels.
// Throws TooShortError for fewer than two frames.
Vec StatsPooling(const Mat& x);
void StatsPoolingBackward(const Mat& x, const Vec& pooled, const Vec& dy, Mat* dx);

// Column-wise x / ||x||.
Mat L2NormalizeColumns(const Mat& x, Vec* norms = nullptr);
void L2NormalizeColumnsBackward(const Mat& normalized, const Vec& norms,
                                const Mat& dy, Mat* dx);

SPKREFINE_NAMESPACE_END

#endif  // SPKREFINE_LAYERS_H_
