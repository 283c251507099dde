// src/layers.cc
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

#include "spkrefine/layers.h"

#include <cmath>
#include <string>

SPKREFINE_NAMESPACE_BEGIN

Mat DepthwiseConv1d(const Mat& x, const Mat& kernel) {
  const Eigen::Index c = x.rows(), t_len = x.cols(), k = kernel.cols();
  if (kernel.rows() != c)
    throw DimensionError("depthwise kernel has " + std::to_string(kernel.rows()) +
                         " rows for " + std::to_string(c) + " channels");
  if (k % 2 == 0) throw DimensionError("depthwise kernel size must be odd");
  const Eigen::Index pad = k / 2;
  Mat y = Mat::Zero(c, t_len);
  for (Eigen::Index j = 0; j < k; ++j) {
    const Eigen::Index shift = j - pad;
    // y[:, t] += kernel[:, j] * x[:, t + shift] over the valid t range.
    const Eigen::Index t0 = std::max<Eigen::Index>(0, -shift);
    const Eigen::Index t1 = std::min<Eigen::Index>(t_len, t_len - shift);
    if (t1 <= t0) continue;
    y.middleCols(t0, t1 - t0).array() +=
        x.middleCols(t0 + shift, t1 - t0).array().colwise() * kernel.col(j).array();
  }
  return y;
}

void DepthwiseConv1dBackward(const Mat& x, const Mat& kernel, const Mat& dy,
                             Mat* dx, Mat* dkernel) {
  const Eigen::Index c = x.rows(), t_len = x.cols(), k = kernel.cols();
  const Eigen::Index pad = k / 2;
  *dx = Mat::Zero(c, t_len);
  *dkernel = Mat::Zero(c, k);
  for (Eigen::Index j = 0; j < k; ++j) {
    const Eigen::Index shift = j - pad;
    const Eigen::Index t0 = std::max<Eigen::Index>(0, -shift);
    const Eigen::Index t1 = std::min<Eigen::Index>(t_len, t_len - shift);
    if (t1 <= t0) continue;
    const auto g = dy.middleCols(t0, t1 - t0).array();
    const auto xs = x.middleCols(t0 + shift, t1 - t0).array();
    dkernel->col(j) = (g * xs).rowwise().sum().matrix();
    dx->middleCols(t0 + shift, t1 - t0).array() += g.colwise() * kernel.col(j).array();
  }
}

Mat SeparableConv1d(const Mat& x, const Mat& depthwise, const Mat& pointwise) {
  if (pointwise.rows() != x.rows())
    throw DimensionError("pointwise kernel expects " + std::to_string(pointwise.rows()) +
                         " input channels, got " + std::to_string(x.rows()));
  return pointwise.transpose() * DepthwiseConv1d(x, depthwise);
}

void SeparableConv1dBackward(const Mat& x, const Mat& depthwise,
                             const Mat& pointwise, const Mat& dy, Mat* dx,
                             Mat* ddepthwise, Mat* dpointwise) {
  Mat u = DepthwiseConv1d(x, depthwise);
  *dpointwise = u * dy.transpose();
  Mat du = pointwise * dy;
  DepthwiseConv1dBackward(x, depthwise, du, dx, ddepthwise);
}

std::vector<Mat> BatchNormTrain(const std::vector<Mat>& x, const Vec& scale,
                                const Vec& shift, BatchNormCache* cache) {
  if (x.empty()) throw DimensionError("BatchNormTrain on an empty batch");
  const Eigen::Index c = x.front().rows();
  Eigen::Index count = 0;
  Vec sum = Vec::Zero(c);
  for (const Mat& m : x) {
    if (m.rows() != c) throw DimensionError("BatchNormTrain: ragged channel count");
    sum += m.rowwise().sum();
    count += m.cols();
  }
  if (count < 2) throw DimensionError("BatchNormTrain needs at least two columns");
  const Vec mean = sum / static_cast<Real>(count);
  Vec sq = Vec::Zero(c);
  for (const Mat& m : x) sq += (m.colwise() - mean).array().square().rowwise().sum().matrix();
  const Vec var = sq / static_cast<Real>(count);
  const Vec inv_std = (var.array() + kBatchNormEps).rsqrt().matrix();

  if (cache) cache->normalized.clear();
  std::vector<Mat> out;
  out.reserve(x.size());
  for (const Mat& m : x) {
    Mat xhat = (m.colwise() - mean).array().colwise() * inv_std.array();
    out.push_back(((xhat.array().colwise() * scale.array()).colwise() + shift.array()).matrix());
    if (cache) cache->normalized.push_back(std::move(xhat));
  }
  if (cache) {
    cache->inv_std = inv_std;
    cache->mean = mean;
    cache->var = var;
  }
  return out;
}

void BatchNormTrainBackward(const BatchNormCache& cache, const Vec& scale,
                            const std::vector<Mat>& dy, std::vector<Mat>* dx,
                            Vec* dscale, Vec* dshift) {
  const Eigen::Index c = scale.size();
  Vec sum_dy = Vec::Zero(c), sum_dy_xhat = Vec::Zero(c);
  Eigen::Index count = 0;
  for (size_t i = 0; i < dy.size(); ++i) {
    sum_dy += dy[i].rowwise().sum();
    sum_dy_xhat += (dy[i].array() * cache.normalized[i].array()).rowwise().sum().matrix();
    count += dy[i].cols();
  }
  *dscale = sum_dy_xhat;
  *dshift = sum_dy;
  const Real n = static_cast<Real>(count);
  const Vec coeff = (scale.array() * cache.inv_std.array() / n).matrix();
  dx->clear();
  dx->reserve(dy.size());
  for (size_t i = 0; i < dy.size(); ++i) {
    Mat g = (n * dy[i]).colwise() - sum_dy;
    g -= (cache.normalized[i].array().colwise() * sum_dy_xhat.array()).matrix();
    dx->push_back((g.array().colwise() * coeff.array()).matrix());
  }
}

Mat BatchNormInference(const Mat& x, const Vec& scale, const Vec& shift,
                       const Vec& running_mean, const Vec& running_var) {
  const Vec gain = (scale.array() * (running_var.array() + kBatchNormEps).rsqrt()).matrix();
  return ((x.colwise() - running_mean).array().colwise() * gain.array()).colwise() +
         shift.array();
}

void BatchNormInferenceBackward(const Mat& x, const Vec& scale,
                                const Vec& running_mean, const Vec& running_var,
                                const Mat& dy, Mat* dx, Vec* dscale, Vec* dshift) {
  const Vec inv_std = (running_var.array() + kBatchNormEps).rsqrt().matrix();
  const Mat xhat = (x.colwise() - running_mean).array().colwise() * inv_std.array();
  *dscale = (dy.array() * xhat.array()).rowwise().sum().matrix();
  *dshift = dy.rowwise().sum();
  *dx = dy.array().colwise() * (scale.array() * inv_std.array());
}

Mat PRelu(const Mat& x, const Vec& slope) {
  Mat y = x;
  for (Eigen::Index t = 0; t < x.cols(); ++t)
    for (Eigen::Index c = 0; c < x.rows(); ++c)
      if (x(c, t) < 0) y(c, t) = slope(c) * x(c, t);
  return y;
}

void PReluBackward(const Mat& x, const Vec& slope, const Mat& dy, Mat* dx,
                   Vec* dslope) {
  *dx = dy;
  *dslope = Vec::Zero(slope.size());
  for (Eigen::Index t = 0; t < x.cols(); ++t)
    for (Eigen::Index c = 0; c < x.rows(); ++c)
      if (x(c, t) < 0) {
        (*dx)(c, t) = slope(c) * dy(c, t);
        (*dslope)(c) += dy(c, t) * x(c, t);
      }
}

Mat SqueezeExcite(const Mat& x, const Mat& w1, const Vec& b1, const Mat& w2,
                  const Vec& b2, SqueezeExciteCache* cache) {
  if (w1.cols() != x.rows() || w2.rows() != x.rows() || w2.cols() != w1.rows())
    throw DimensionError("squeeze-excitation weights do not match " +
                         std::to_string(x.rows()) + " channels");
  Vec squeeze = x.rowwise().mean();
  Vec hidden_pre = w1 * squeeze + b1;
  Vec hidden = hidden_pre.cwiseMax(Real(0));
  Vec gate = (-(w2 * hidden + b2).array()).exp().matrix();
  gate = (Real(1) / (Real(1) + gate.array())).matrix();
  Mat y = x.array().colwise() * gate.array();
  if (cache != nullptr) {
    cache->squeeze = std::move(squeeze);
    cache->hidden_pre = std::move(hidden_pre);
    cache->gate = std::move(gate);
  }
  return y;
}

void SqueezeExciteBackward(const Mat& x, const Mat& w1, const Mat& w2,
                           const SqueezeExciteCache& cache, const Mat& dy,
                           Mat* dx, Mat* dw1, Vec* db1, Mat* dw2, Vec* db2) {
  const Vec& g = cache.gate;
  const Vec dgate = (dy.array() * x.array()).rowwise().sum().matrix();
  const Vec dgate_pre = (dgate.array() * g.array() * (Real(1) - g.array())).matrix();
  const Vec hidden = cache.hidden_pre.cwiseMax(Real(0));
  *dw2 = dgate_pre * hidden.transpose();
  *db2 = dgate_pre;
  Vec dhidden = w2.transpose() * dgate_pre;
  for (Eigen::Index i = 0; i < dhidden.size(); ++i)
    if (cache.hidden_pre(i) <= 0) dhidden(i) = 0;
  *dw1 = dhidden * cache.squeeze.transpose();
  *db1 = dhidden;
  const Vec dsqueeze = w1.transpose() * dhidden;
  *dx = dy.array().colwise() * g.array();
  dx->colwise() += dsqueeze / static_cast<Real>(x.cols());
}

Vec StatsPooling(const Mat& x) {
  if (x.cols() < 2)
    throw TooShortError("statistics pooling needs at least two frames, got " +
                        std::to_string(x.cols()));
  const Eigen::Index c = x.rows();
  Vec out(2 * c);
  const Vec mean = x.rowwise().mean();
  const Vec var = (x.colwise() - mean).array().square().rowwise().mean().matrix();
  out.head(c) = mean;
  out.tail(c) = (var.array() + kStatsPoolEps).sqrt().matrix();
  return out;
}

void StatsPoolingBackward(const Mat& x, const Vec& pooled, const Vec& dy, Mat* dx) {
  const Eigen::Index c = x.rows();
  const Real n = static_cast<Real>(x.cols());
  const Vec mean = pooled.head(c);
  const Vec coeff = (dy.tail(c).array() / (n * pooled.tail(c).array())).matrix();
  *dx = (x.colwise() - mean).array().colwise() * coeff.array();
  dx->colwise() += dy.head(c) / n;
}

Mat L2NormalizeColumns(const Mat& x, Vec* norms) {
  Vec n(x.cols());
  Mat y = x;
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    n(j) = x.col(j).norm();
    if (!(n(j) > 0)) throw NumericError("cannot L2-normalize a zero vector");
    y.col(j) /= n(j);
  }
  if (norms != nullptr) *norms = std::move(n);
  return y;
}

void L2NormalizeColumnsBackward(const Mat& normalized, const Vec& norms,
                                const Mat& dy, Mat* dx) {
  dx->resize(dy.rows(), dy.cols());
  for (Eigen::Index j = 0; j < dy.cols(); ++j) {
    const auto e = normalized.col(j);
    dx->col(j) = (dy.col(j) - e * e.dot(dy.col(j))) / norms(j);
  }
}

SPKREFINE_NAMESPACE_END
