// tests/config_test.cc
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

#include <doctest.h>

#include <fstream>

#include "spkrefine/config.h"
#include "test_util.h"

using namespace spkrefine;

TEST_CASE("defaults") {
  const PipelineConfig c = DefaultPipelineConfig();
  CHECK_NOTHROW(ValidatePipelineConfig(c));
  CHECK(c.Chunk().chunk_len == 100);
  CHECK(c.refine.alpha == 6);
  CHECK(c.train.feature_dim == 80);
  CHECK(c.train.teacher_dim == 192);
  CHECK(c.train.seed == c.seed);
  CHECK(ParamCount(c.encoder) == kDefaultParamCount);
}

TEST_CASE("parsing") {
  const PipelineConfig c = ParsePipelineConfig(R"(
# comment line
seed = 7
feature.cmn = true       # trailing comment
encoder.channels = 80, 96, 192
encoder.pooled_dim = 384
chunk.length_ms = 500
refine.activation = sigmoid
refine.beta = -1.5
refine.upsampling = linear
train.epochs = 4
)");
  CHECK(c.seed == 7);
  CHECK(c.train.seed == 7);
  CHECK(c.feature.cmn);
  CHECK(c.encoder.channels[1] == 96);
  CHECK(c.Chunk().chunk_len == 50);
  CHECK(c.train.chunk_len == 50);
  CHECK(c.refine.activation == Activation::kSigmoid);
  CHECK(c.refine.beta == -1.5);
  CHECK(c.refine.upsampling == Upsampling::kLinear);
  CHECK(c.train.epochs == 4);
}

TEST_CASE("alpha follows the mode unless given") {
  CHECK(ParsePipelineConfig("refine.mode = oracle\n").refine.alpha == 2);
  CHECK(ParsePipelineConfig("refine.mode = light\n").refine.alpha == 6);
  CHECK(ParsePipelineConfig("refine.alpha = 3\nrefine.mode = oracle\n").refine.alpha == 3);
  CHECK(ParsePipelineConfig("refine.mode = oracle\nrefine.alpha = 4.5\n").refine.alpha == 4.5);
}

TEST_CASE("errors") {
  CHECK_THROWS_AS(ParsePipelineConfig("nope.key = 1\n"), ConfigError);
  CHECK_THROWS_AS(ParsePipelineConfig("train.epochs 3\n"), ConfigError);
  CHECK_THROWS_AS(ParsePipelineConfig("train.epochs = three\n"), ConfigError);
  CHECK_THROWS_AS(ParsePipelineConfig("encoder.kernels = 3, 5\n"), ConfigError);
  CHECK_THROWS_AS(ParsePipelineConfig("refine.mode = heavy\n"), ConfigError);
  CHECK_THROWS_AS(ParsePipelineConfig("refine.alpha = 0\n"), ConfigError);
  CHECK_THROWS_AS(ParsePipelineConfig("feature.cmn = maybe\n"), ConfigError);
  try {
    ParsePipelineConfig("seed = 1\n\nbogus = 2\n");
    FAIL("expected a ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }

  // Cross-field consistency.
  CHECK_THROWS_AS(ParsePipelineConfig("feature.n_mfcc = 20\n"), ConfigError);
  CHECK_THROWS_AS(ParsePipelineConfig("chunk.length_ms = 1005\n"), ConfigError);
  CHECK_THROWS_AS(ParsePipelineConfig("chunk.length_ms = 1010\n"), ConfigError);  // 101 frames
  CHECK_THROWS_AS(ParsePipelineConfig("train.excerpt_frames = 50\n"), ConfigError);

  CHECK_NOTHROW(ParsePipelineConfig("feature.n_mfcc = 20\nencoder.in_dim = 59\n"));
  CHECK_THROWS_AS(LoadPipelineConfig("/nonexistent/spkrefine.cfg"), IoError);
}

TEST_CASE("loading from a file") {
  spkrefine::testing::TempDir dir("cfg");
  std::ofstream(dir.File("a.cfg")) << "train.epochs = 2\nrefine.mode = oracle\n";
  const PipelineConfig c = LoadPipelineConfig(dir.File("a.cfg"));
  CHECK(c.train.epochs == 2);
  CHECK(c.refine.mode == EmbedderMode::kOracle);
}
