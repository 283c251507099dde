// src/config.cc
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

#include "spkrefine/config.h"

#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <type_traits>

#include <fmt/format.h>

SPKREFINE_NAMESPACE_BEGIN

namespace {

std::string Trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T ParseNumber(const std::string& key, const std::string& text) {
  const std::string v = Trim(text);
  T out{};
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size() || v.empty())
    throw ConfigError(fmt::format("{}: cannot parse '{}'", key, v));
  return out;
}

bool ParseBool(const std::string& key, const std::string& text) {
  const std::string v = Trim(text);
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError(fmt::format("{}: expected a boolean, got '{}'", key, v));
}

std::array<int, 3> ParseTriple(const std::string& key, const std::string& text) {
  std::array<int, 3> out{};
  std::stringstream ss(text);
  std::string item;
  size_t n = 0;
  while (std::getline(ss, item, ',')) {
    if (n == 3) throw ConfigError(key + ": expected exactly 3 values");
    out[n++] = ParseNumber<int>(key, item);
  }
  if (n != 3) throw ConfigError(key + ": expected exactly 3 values");
  return out;
}

using Setter = std::function<void(PipelineConfig&, const std::string&, const std::string&)>;

#define SPK_NUM(field) \
  [](PipelineConfig& c, const std::string& k, const std::string& v) { \
    c.field = ParseNumber<std::remove_reference_t<decltype(c.field)>>(k, v); \
  }
#define SPK_BOOL(field) \
  [](PipelineConfig& c, const std::string& k, const std::string& v) { c.field = ParseBool(k, v); }
#define SPK_TRIPLE(field) \
  [](PipelineConfig& c, const std::string& k, const std::string& v) { c.field = ParseTriple(k, v); }

const std::map<std::string, Setter>& Setters() {
  static const std::map<std::string, Setter> setters = {
      {"seed", [](PipelineConfig& c, const std::string& k, const std::string& v) {
         c.seed = ParseNumber<uint64_t>(k, v);
         c.train.seed = c.seed;
       }},
      {"feature.n_mfcc", SPK_NUM(feature.n_mfcc)},
      {"feature.n_mels", SPK_NUM(feature.n_mels)},
      {"feature.frame_len_ms", SPK_NUM(feature.frame_len_ms)},
      {"feature.hop_ms", SPK_NUM(feature.hop_ms)},
      {"feature.fft_size", SPK_NUM(feature.fft_size)},
      {"feature.delta_window", SPK_NUM(feature.delta_window)},
      {"feature.low_freq", SPK_NUM(feature.low_freq)},
      {"feature.high_freq", SPK_NUM(feature.high_freq)},
      {"feature.log_floor", SPK_NUM(feature.log_floor)},
      {"feature.cmn", SPK_BOOL(feature.cmn)},
      {"encoder.in_dim", SPK_NUM(encoder.in_dim)},
      {"encoder.channels", SPK_TRIPLE(encoder.channels)},
      {"encoder.kernels", SPK_TRIPLE(encoder.kernels)},
      {"encoder.se_bottleneck", SPK_TRIPLE(encoder.se_bottleneck)},
      {"encoder.pooled_dim", SPK_NUM(encoder.pooled_dim)},
      {"encoder.embed_dim", SPK_NUM(encoder.embed_dim)},
      {"chunk.length_ms", SPK_NUM(chunk_ms)},
      {"refine.alpha", SPK_NUM(refine.alpha)},
      {"refine.beta", SPK_NUM(refine.beta)},
      {"refine.mode", [](PipelineConfig& c, const std::string& k, const std::string& v) {
         const std::string m = Trim(v);
         if (m == "light") c.refine.mode = EmbedderMode::kLight;
         else if (m == "oracle") c.refine.mode = EmbedderMode::kOracle;
         else throw ConfigError(fmt::format("{}: expected light or oracle, got '{}'", k, m));
       }},
      {"refine.activation", [](PipelineConfig& c, const std::string& k, const std::string& v) {
         const std::string m = Trim(v);
         if (m == "scale_clip") c.refine.activation = Activation::kScaleClip;
         else if (m == "sigmoid") c.refine.activation = Activation::kSigmoid;
         else throw ConfigError(fmt::format("{}: expected scale_clip or sigmoid, got '{}'", k, m));
       }},
      {"refine.upsampling", [](PipelineConfig& c, const std::string& k, const std::string& v) {
         const std::string m = Trim(v);
         if (m == "step") c.refine.upsampling = Upsampling::kStepHold;
         else if (m == "linear") c.refine.upsampling = Upsampling::kLinear;
         else throw ConfigError(fmt::format("{}: expected step or linear, got '{}'", k, m));
       }},
      {"train.batch_size", SPK_NUM(train.batch_size)},
      {"train.excerpt_frames", SPK_NUM(train.excerpt_frames)},
      {"train.epochs", SPK_NUM(train.epochs)},
      {"train.batches_per_epoch", SPK_NUM(train.batches_per_epoch)},
      {"train.learning_rate", SPK_NUM(train.learning_rate)},
      {"train.beta1", SPK_NUM(train.beta1)},
      {"train.beta2", SPK_NUM(train.beta2)},
      {"train.adam_eps", SPK_NUM(train.adam_eps)},
      {"train.bn_momentum", SPK_NUM(train.bn_momentum)},
      {"train.num_speakers", SPK_NUM(train.num_speakers)},
      {"train.template_rank", SPK_NUM(train.template_rank)},
      {"train.template_scale", SPK_NUM(train.template_scale)},
      {"train.min_template_distance", SPK_NUM(train.min_template_distance)},
      {"train.noise_level", SPK_NUM(train.noise_level)},
      {"train.pitch_jitter", SPK_NUM(train.pitch_jitter)},
      {"train.val_fraction", SPK_NUM(train.val_fraction)},
      {"train.teacher_seed", SPK_NUM(train.teacher_seed)},
      {"train.eval_draws", SPK_NUM(train.eval_draws)},
      {"train.prefetch", SPK_BOOL(train.prefetch)},
  };
  return setters;
}

#undef SPK_NUM
#undef SPK_BOOL
#undef SPK_TRIPLE

// Derived fields that follow the other sections.
void SyncDerived(PipelineConfig* cfg) {
  cfg->train.feature_dim = cfg->encoder.in_dim;
  cfg->train.teacher_dim = cfg->encoder.embed_dim;
  const double frames = cfg->chunk_ms / cfg->feature.hop_ms;
  if (std::isfinite(frames)) cfg->train.chunk_len = static_cast<int>(std::lround(frames));
}

}  // namespace

ChunkConfig PipelineConfig::Chunk() const {
  return ChunkConfig{static_cast<int>(std::lround(chunk_ms / feature.hop_ms))};
}

PipelineConfig DefaultPipelineConfig() {
  PipelineConfig cfg;
  cfg.refine = DefaultRefinementConfig(EmbedderMode::kLight);
  cfg.train.seed = cfg.seed;
  SyncDerived(&cfg);
  return cfg;
}

void SetConfigValue(PipelineConfig* cfg, const std::string& key, const std::string& value) {
  const auto it = Setters().find(key);
  if (it == Setters().end()) throw ConfigError("unknown config key '" + key + "'");
  it->second(*cfg, key, value);
  SyncDerived(cfg);
}

PipelineConfig ParsePipelineConfig(const std::string& text) {
  PipelineConfig cfg = DefaultPipelineConfig();
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  bool alpha_given = false;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = Trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(fmt::format("line {}: expected 'key = value'", lineno));
    const std::string key = Trim(line.substr(0, eq));
    try {
      SetConfigValue(&cfg, key, line.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError(fmt::format("line {}: {}", lineno, e.what()));
    }
    alpha_given = alpha_given || key == "refine.alpha";
  }
  if (!alpha_given) cfg.refine.alpha = DefaultAlpha(cfg.refine.mode);
  ValidatePipelineConfig(cfg);
  return cfg;
}

PipelineConfig LoadPipelineConfig(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ParsePipelineConfig(ss.str());
}

void ValidatePipelineConfig(const PipelineConfig& cfg) {
  ValidateFeatureConfig(cfg.feature);
  ValidateEncoderConfig(cfg.encoder);
  ValidateRefinementConfig(cfg.refine);
  if (cfg.feature.FeatureDim() != cfg.encoder.in_dim)
    throw ConfigError(fmt::format("front-end produces {} rows but the encoder expects {}",
                                  cfg.feature.FeatureDim(), cfg.encoder.in_dim));
  const double frames = cfg.chunk_ms / cfg.feature.hop_ms;
  if (!(frames > 0) || std::abs(frames - std::round(frames)) > 1e-9)
    throw ConfigError(fmt::format("chunk length {} ms is not a whole number of {} ms hops",
                                  cfg.chunk_ms, cfg.feature.hop_ms));
  ValidateChunkConfig(cfg.Chunk());
  if (cfg.train.chunk_len != cfg.Chunk().chunk_len || cfg.train.feature_dim != cfg.encoder.in_dim ||
      cfg.train.teacher_dim != cfg.encoder.embed_dim)
    throw ConfigError("training section disagrees with the feature, encoder or chunk sections");
  ValidateTrainConfig(cfg.train);
}

SPKREFINE_NAMESPACE_END
