// src/encoder.cc
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

#include "spkrefine/encoder.h"

#include <cmath>
#include <random>
#include <utility>

SPKREFINE_NAMESPACE_BEGIN

void ValidateEncoderConfig(const EncoderConfig& cfg) {
  if (cfg.in_dim < 1) throw ConfigError("encoder.in_dim must be positive");
  if (cfg.embed_dim < 1) throw ConfigError("encoder.embed_dim must be positive");
  for (int b = 0; b < 3; ++b) {
    if (cfg.channels[b] < 1 || cfg.se_bottleneck[b] < 1)
      throw ConfigError("encoder channels and SE widths must be positive");
    if (cfg.kernels[b] < 1 || cfg.kernels[b] % 2 == 0)
      throw ConfigError("encoder kernels must be odd and positive");
  }
  if (cfg.pooled_dim != 2 * cfg.channels[2])
    throw ConfigError("encoder.pooled_dim must be twice the last block width (" +
                      std::to_string(2 * cfg.channels[2]) + ")");
}

int64_t ParamCount(const EncoderConfig& cfg) {
  ValidateEncoderConfig(cfg);
  int64_t total = 0;
  int64_t ch_in = cfg.in_dim;
  for (int b = 0; b < 3; ++b) {
    const int64_t ch_out = cfg.channels[b], k = cfg.kernels[b], r = cfg.se_bottleneck[b];
    total += ch_in * k + ch_in * ch_out + 2 * ch_out + ch_out;
    total += (r * ch_out + r) + (ch_out * r + ch_out);
    ch_in = ch_out;
  }
  const int64_t e = cfg.embed_dim;
  total += cfg.pooled_dim * e + e + 2 * e;
  return total;
}

namespace {

template <typename W, typename T>
std::vector<BasicTensorRef<T>> ListTensorsImpl(W& w) {
  std::vector<BasicTensorRef<T>> out;
  auto add_mat = [&](const std::string& name, auto& m, bool learnable) {
    out.push_back({name, m.data(), {m.rows(), m.cols()}, learnable});
  };
  auto add_vec = [&](const std::string& name, auto& v, bool learnable) {
    out.push_back({name, v.data(), {v.size()}, learnable});
  };
  for (size_t b = 0; b < w.blocks.size(); ++b) {
    auto& blk = w.blocks[b];
    const std::string p = "block" + std::to_string(b) + ".";
    add_mat(p + "depthwise", blk.depthwise, true);
    add_mat(p + "pointwise", blk.pointwise, true);
    add_vec(p + "bn.scale", blk.bn_scale, true);
    add_vec(p + "bn.shift", blk.bn_shift, true);
    add_vec(p + "bn.running_mean", blk.bn_mean, false);
    add_vec(p + "bn.running_var", blk.bn_var, false);
    add_vec(p + "prelu", blk.prelu, true);
    add_mat(p + "se.w1", blk.se_w1, true);
    add_vec(p + "se.b1", blk.se_b1, true);
    add_mat(p + "se.w2", blk.se_w2, true);
    add_vec(p + "se.b2", blk.se_b2, true);
  }
  add_mat("proj.weight", w.proj.weight, true);
  add_vec("proj.bias", w.proj.bias, true);
  add_vec("proj.bn.scale", w.proj.bn_scale, true);
  add_vec("proj.bn.shift", w.proj.bn_shift, true);
  add_vec("proj.bn.running_mean", w.proj.bn_mean, false);
  add_vec("proj.bn.running_var", w.proj.bn_var, false);
  return out;
}

void CheckFinite(const Mat& m, const std::string& layer) {
  if (!m.allFinite()) throw NumericError("non-finite activation after " + layer);
}

void CheckFinite(const std::vector<Mat>& ms, const std::string& layer) {
  for (const Mat& m : ms) CheckFinite(m, layer);
}

}  // namespace

std::vector<TensorRef> ListTensors(EncoderWeights& w) {
  return ListTensorsImpl<EncoderWeights, Real>(w);
}

std::vector<ConstTensorRef> ListTensors(const EncoderWeights& w) {
  return ListTensorsImpl<const EncoderWeights, const Real>(w);
}

EncoderWeights ZeroWeights(const EncoderConfig& cfg) {
  ValidateEncoderConfig(cfg);
  EncoderWeights w;
  w.config = cfg;
  int ch_in = cfg.in_dim;
  for (int b = 0; b < 3; ++b) {
    const int ch_out = cfg.channels[b], r = cfg.se_bottleneck[b];
    BlockWeights blk;
    blk.depthwise = Mat::Zero(ch_in, cfg.kernels[b]);
    blk.pointwise = Mat::Zero(ch_in, ch_out);
    blk.bn_scale = Vec::Zero(ch_out);
    blk.bn_shift = Vec::Zero(ch_out);
    blk.bn_mean = Vec::Zero(ch_out);
    blk.bn_var = Vec::Ones(ch_out);
    blk.prelu = Vec::Zero(ch_out);
    blk.se_w1 = Mat::Zero(r, ch_out);
    blk.se_b1 = Vec::Zero(r);
    blk.se_w2 = Mat::Zero(ch_out, r);
    blk.se_b2 = Vec::Zero(ch_out);
    w.blocks.push_back(std::move(blk));
    ch_in = ch_out;
  }
  w.proj.weight = Mat::Zero(cfg.embed_dim, cfg.pooled_dim);
  w.proj.bias = Vec::Zero(cfg.embed_dim);
  w.proj.bn_scale = Vec::Zero(cfg.embed_dim);
  w.proj.bn_shift = Vec::Zero(cfg.embed_dim);
  w.proj.bn_mean = Vec::Zero(cfg.embed_dim);
  w.proj.bn_var = Vec::Ones(cfg.embed_dim);
  return w;
}

EncoderWeights InitEncoderWeights(const EncoderConfig& cfg, uint64_t seed) {
  EncoderWeights w = ZeroWeights(cfg);
  std::mt19937_64 rng(seed);
  auto fill = [&rng](auto& m, double fan_in) {
    std::uniform_real_distribution<double> dist(-1.0 / std::sqrt(fan_in),
                                                1.0 / std::sqrt(fan_in));
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<Real>(dist(rng));
  };
  for (auto& blk : w.blocks) {
    fill(blk.depthwise, static_cast<double>(blk.depthwise.cols()));
    fill(blk.pointwise, static_cast<double>(blk.pointwise.rows()));
    blk.bn_scale.setOnes();
    blk.prelu.setConstant(static_cast<Real>(0.25));
    fill(blk.se_w1, static_cast<double>(blk.se_w1.cols()));
    fill(blk.se_w2, static_cast<double>(blk.se_w2.cols()));
  }
  fill(w.proj.weight, static_cast<double>(cfg.pooled_dim));
  w.proj.bn_scale.setOnes();
  return w;
}

void ValidateWeights(const EncoderWeights& w) {
  ValidateEncoderConfig(w.config);
  const EncoderWeights ref = ZeroWeights(w.config);
  const auto expected = ListTensors(ref);
  const auto actual = ListTensors(w);
  if (expected.size() != actual.size())
    throw ShapeError("weights hold " + std::to_string(actual.size()) +
                     " tensors, config implies " + std::to_string(expected.size()));
  for (size_t i = 0; i < actual.size(); ++i) {
    if (actual[i].shape != expected[i].shape)
      throw ShapeError("tensor " + actual[i].name + " has the wrong shape");
    for (int64_t j = 0; j < actual[i].size(); ++j)
      if (!std::isfinite(actual[i].data[j]))
        throw NumericError("tensor " + actual[i].name + " holds a non-finite value");
  }
  auto check_var = [](const Vec& v, const std::string& name) {
    if ((v.array() <= 0).any()) throw NumericError(name + " has a non-positive variance");
  };
  for (size_t b = 0; b < w.blocks.size(); ++b)
    check_var(w.blocks[b].bn_var, "block" + std::to_string(b) + ".bn.running_var");
  check_var(w.proj.bn_var, "proj.bn.running_var");
}

Mat ForwardBatch(const std::vector<Mat>& chunks, const EncoderWeights& w,
                 BatchNormMode mode, ForwardCache* cache) {
  const EncoderConfig& cfg = w.config;
  if (chunks.empty()) throw DimensionError("ForwardBatch on an empty batch");
  for (const Mat& c : chunks) {
    if (c.rows() != cfg.in_dim)
      throw DimensionError("chunk has " + std::to_string(c.rows()) + " rows, encoder expects " +
                           std::to_string(cfg.in_dim));
    if (c.cols() < 2)
      throw TooShortError("chunk needs at least two frames, got " + std::to_string(c.cols()));
    CheckFinite(c, "input features");
  }
  if (mode == BatchNormMode::kBatch && chunks.size() < 2)
    throw DimensionError("batch-statistics mode needs at least two chunks");

  ForwardCache local;
  ForwardCache& fc = cache != nullptr ? *cache : local;
  fc = ForwardCache{};
  fc.mode = mode;
  fc.blocks.resize(w.blocks.size());
  const size_t n = chunks.size();

  std::vector<Mat> x = chunks;
  for (size_t b = 0; b < w.blocks.size(); ++b) {
    const BlockWeights& blk = w.blocks[b];
    BlockCache& bc = fc.blocks[b];
    const std::string name = "block" + std::to_string(b);
    bc.conv_out.resize(n);
    for (size_t i = 0; i < n; ++i)
      bc.conv_out[i] = SeparableConv1d(x[i], blk.depthwise, blk.pointwise);
    CheckFinite(bc.conv_out, name + " separable conv");
    if (mode == BatchNormMode::kBatch) {
      bc.bn_out = BatchNormTrain(bc.conv_out, blk.bn_scale, blk.bn_shift, &bc.bn);
    } else {
      bc.bn_out.resize(n);
      for (size_t i = 0; i < n; ++i)
        bc.bn_out[i] = BatchNormInference(bc.conv_out[i], blk.bn_scale, blk.bn_shift,
                                          blk.bn_mean, blk.bn_var);
    }
    CheckFinite(bc.bn_out, name + " batchnorm");
    bc.act.resize(n);
    bc.se.resize(n);
    std::vector<Mat> y(n);
    for (size_t i = 0; i < n; ++i) {
      bc.act[i] = PRelu(bc.bn_out[i], blk.prelu);
      y[i] = SqueezeExcite(bc.act[i], blk.se_w1, blk.se_b1, blk.se_w2, blk.se_b2, &bc.se[i]);
    }
    CheckFinite(y, name + " squeeze-excitation");
    bc.input = std::move(x);
    x = std::move(y);
  }
  fc.last_block_out = std::move(x);

  fc.pooled.resize(cfg.pooled_dim, static_cast<Eigen::Index>(n));
  for (size_t i = 0; i < n; ++i)
    fc.pooled.col(static_cast<Eigen::Index>(i)) = StatsPooling(fc.last_block_out[i]);
  CheckFinite(fc.pooled, "statistics pooling");

  // Column by column, so a chunk's embedding does not depend on the batch.
  fc.proj_out.resize(cfg.embed_dim, static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < fc.pooled.cols(); ++i)
    fc.proj_out.col(i) = w.proj.weight * fc.pooled.col(i) + w.proj.bias;
  CheckFinite(fc.proj_out, "projection");
  if (mode == BatchNormMode::kBatch) {
    fc.bn_out = BatchNormTrain({fc.proj_out}, w.proj.bn_scale, w.proj.bn_shift, &fc.proj_bn)[0];
  } else {
    fc.bn_out = BatchNormInference(fc.proj_out, w.proj.bn_scale, w.proj.bn_shift,
                                   w.proj.bn_mean, w.proj.bn_var);
  }
  CheckFinite(fc.bn_out, "projection batchnorm");
  fc.embeddings = L2NormalizeColumns(fc.bn_out, &fc.norms);
  CheckFinite(fc.embeddings, "L2 normalization");
  fc.valid = true;
  return fc.embeddings;
}

Embedding Forward(const Mat& chunk, const EncoderWeights& w) {
  Embedding e;
  e.values = ForwardBatch({chunk}, w, BatchNormMode::kRunning).col(0);
  e.normalized = true;
  return e;
}

EncoderGradients Backward(const ForwardCache& cache, const EncoderWeights& w,
                          const Mat& d_embeddings, std::vector<Mat>* input_grads) {
  if (!cache.valid) throw Error("Backward called without a forward cache");
  if (d_embeddings.rows() != cache.embeddings.rows() ||
      d_embeddings.cols() != cache.embeddings.cols())
    throw DimensionError("upstream gradient shape does not match the embeddings");
  EncoderGradients g = ZeroWeights(w.config);
  for (auto& blk : g.blocks) blk.bn_var.setZero();
  g.proj.bn_var.setZero();
  const size_t n = static_cast<size_t>(cache.embeddings.cols());
  const bool batch = cache.mode == BatchNormMode::kBatch;

  Mat d_bn_out;
  L2NormalizeColumnsBackward(cache.embeddings, cache.norms, d_embeddings, &d_bn_out);
  Mat d_proj_out;
  if (batch) {
    std::vector<Mat> dx;
    BatchNormTrainBackward(cache.proj_bn, w.proj.bn_scale, {d_bn_out}, &dx,
                           &g.proj.bn_scale, &g.proj.bn_shift);
    d_proj_out = std::move(dx[0]);
  } else {
    BatchNormInferenceBackward(cache.proj_out, w.proj.bn_scale, w.proj.bn_mean, w.proj.bn_var,
                               d_bn_out, &d_proj_out, &g.proj.bn_scale, &g.proj.bn_shift);
  }
  g.proj.weight = d_proj_out * cache.pooled.transpose();
  g.proj.bias = d_proj_out.rowwise().sum();
  const Mat d_pooled = w.proj.weight.transpose() * d_proj_out;

  std::vector<Mat> dx(n);
  for (size_t i = 0; i < n; ++i)
    StatsPoolingBackward(cache.last_block_out[i], cache.pooled.col(static_cast<Eigen::Index>(i)),
                         d_pooled.col(static_cast<Eigen::Index>(i)), &dx[i]);

  for (size_t b = w.blocks.size(); b-- > 0;) {
    const BlockWeights& blk = w.blocks[b];
    const BlockCache& bc = cache.blocks[b];
    BlockWeights& gb = g.blocks[b];
    std::vector<Mat> d_bn(n);
    Mat d_act, dw1, dw2, d_in, d_dw, d_pw;
    Vec db1, db2, dslope, dscale, dshift;
    for (size_t i = 0; i < n; ++i) {
      SqueezeExciteBackward(bc.act[i], blk.se_w1, blk.se_w2, bc.se[i], dx[i], &d_act, &dw1,
                            &db1, &dw2, &db2);
      gb.se_w1 += dw1;
      gb.se_b1 += db1;
      gb.se_w2 += dw2;
      gb.se_b2 += db2;
      PReluBackward(bc.bn_out[i], blk.prelu, d_act, &d_bn[i], &dslope);
      gb.prelu += dslope;
    }
    std::vector<Mat> d_conv(n);
    if (batch) {
      BatchNormTrainBackward(bc.bn, blk.bn_scale, d_bn, &d_conv, &gb.bn_scale, &gb.bn_shift);
    } else {
      for (size_t i = 0; i < n; ++i) {
        BatchNormInferenceBackward(bc.conv_out[i], blk.bn_scale, blk.bn_mean, blk.bn_var,
                                   d_bn[i], &d_conv[i], &dscale, &dshift);
        gb.bn_scale += dscale;
        gb.bn_shift += dshift;
      }
    }
    for (size_t i = 0; i < n; ++i) {
      SeparableConv1dBackward(bc.input[i], blk.depthwise, blk.pointwise, d_conv[i], &d_in,
                              &d_dw, &d_pw);
      gb.depthwise += d_dw;
      gb.pointwise += d_pw;
      dx[i] = std::move(d_in);
    }
  }
  if (input_grads != nullptr) *input_grads = std::move(dx);
  return g;
}

void UpdateRunningStats(const ForwardCache& cache, Real momentum, EncoderWeights* w) {
  if (!cache.valid || cache.mode != BatchNormMode::kBatch)
    throw Error("UpdateRunningStats needs a batch-statistics forward cache");
  auto update = [momentum](const BatchNormCache& bn, Vec* mean, Vec* var) {
    Eigen::Index count = 0;
    for (const Mat& m : bn.normalized) count += m.cols();
    const Real unbias = static_cast<Real>(count) / static_cast<Real>(count - 1);
    *mean = (Real(1) - momentum) * *mean + momentum * bn.mean;
    *var = (Real(1) - momentum) * *var + momentum * unbias * bn.var;
  };
  for (size_t b = 0; b < w->blocks.size(); ++b)
    update(cache.blocks[b].bn, &w->blocks[b].bn_mean, &w->blocks[b].bn_var);
  update(cache.proj_bn, &w->proj.bn_mean, &w->proj.bn_var);
}

SPKREFINE_NAMESPACE_END
