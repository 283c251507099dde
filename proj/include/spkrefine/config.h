// include/spkrefine/config.h
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

#ifndef SPKREFINE_CONFIG_H_
#define SPKREFINE_CONFIG_H_

#include <string>

#include "spkrefine/base.h"
#include "spkrefine/encoder.h"
#include "spkrefine/features.h"
#include "spkrefine/refine.h"
#include "spkrefine/trainer.h"

SPKREFINE_NAMESPACE_BEGIN

// Everything a CLI run needs. Config files are flat `section.key = value`
// lines; `#` starts a comment, blank lines are ignored, and list values are
// comma separated. Example:
//
//   seed = 7
//   feature.n_mfcc = 27
//   encoder.channels = 80, 128, 192
//   chunk.length_ms = 1000
//   refine.mode = light        # light | oracle
//   train.epochs = 30
struct PipelineConfig {
  FeatureConfig feature;
  EncoderConfig encoder;
  double chunk_ms = 1000.0;
  RefinementConfig refine;
  TrainConfig train;
  uint64_t seed = 1234;

  // Chunk length in frames at the configured hop.
  ChunkConfig Chunk() const;
};

PipelineConfig DefaultPipelineConfig();

// Applies one key. Throws ConfigError for unknown keys or malformed values.
// Setting refine.mode also resets refine.alpha to that mode's default unless
// refine.alpha was given explicitly.
void SetConfigValue(PipelineConfig* cfg, const std::string& key, const std::string& value);

// Parses config text on top of the defaults, then validates.
PipelineConfig ParsePipelineConfig(const std::string& text);
PipelineConfig LoadPipelineConfig(const std::string& path);

// Per-section checks plus cross-field consistency: the feature dimension
// must equal the encoder input, the chunk length must be a whole, even number
// of frames, and the trainer must agree with both.
void ValidatePipelineConfig(const PipelineConfig& cfg);

SPKREFINE_NAMESPACE_END

#endif  // SPKREFINE_CONFIG_H_
