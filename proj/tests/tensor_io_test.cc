// tests/tensor_io_test.cc
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

#include <cstring>
#include <fstream>
#include <random>

#include "spkrefine/tensor_io.h"
#include "test_util.h"

using namespace spkrefine;
using spkrefine::testing::TempDir;

namespace {

std::string Slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void Dump(const std::string& path, const std::string& bytes) {
  std::ofstream(path, std::ios::binary) << bytes;
}

template <typename T>
void Poke(std::string* bytes, size_t offset, T value) {
  std::memcpy(bytes->data() + offset, &value, sizeof(T));
}

bool SameWeights(const EncoderWeights& a, const EncoderWeights& b) {
  const auto ta = ListTensors(a), tb = ListTensors(b);
  if (ta.size() != tb.size() || !(a.config == b.config)) return false;
  for (size_t i = 0; i < ta.size(); ++i) {
    if (ta[i].shape != tb[i].shape) return false;
    if (std::memcmp(ta[i].data, tb[i].data, sizeof(Real) * ta[i].size()) != 0) return false;
  }
  return true;
}

// Header layout: magic, version, kind, n_config, 12 config ints, n_tensors,
// then the first table entry {u16 len, "block0.depthwise", u32 rank, 2 x u64}.
constexpr size_t kVersionOffset = 4;
constexpr size_t kFirstDimOffset = 4 + 4 + 4 + 4 + 48 + 4 + 2 + 16 + 4;

}  // namespace

TEST_CASE("weights round-trip bit-exactly") {
  TempDir dir("tio");
  const EncoderWeights w = InitEncoderWeights(EncoderConfig{}, 17);
  SaveWeights(w, dir.File("w.spkt"));
  CHECK(SameWeights(LoadWeights(dir.File("w.spkt")), w));
  CHECK(SameWeights(LoadWeights(dir.File("w.spkt"), EncoderConfig{}), w));

  SaveWeights(LoadWeights(dir.File("w.spkt")), dir.File("w2.spkt"));
  CHECK(Slurp(dir.File("w.spkt")) == Slurp(dir.File("w2.spkt")));
}

TEST_CASE("weight file failure classes") {
  TempDir dir("tio_err");
  const std::string good_path = dir.File("w.spkt");
  SaveWeights(InitEncoderWeights(EncoderConfig{}, 1), good_path);
  const std::string good = Slurp(good_path);

  SUBCASE("missing file") { CHECK_THROWS_AS(LoadWeights(dir.File("nope.spkt")), IoError); }
  SUBCASE("corrupted magic") {
    std::string b = good;
    b[0] = 'X';
    Dump(dir.File("bad"), b);
    CHECK_THROWS_AS(LoadWeights(dir.File("bad")), FormatError);
  }
  SUBCASE("version mismatch") {
    std::string b = good;
    Poke<uint32_t>(&b, kVersionOffset, 2);
    Dump(dir.File("bad"), b);
    CHECK_THROWS_AS(LoadWeights(dir.File("bad")), VersionError);
  }
  SUBCASE("truncated payload") {
    Dump(dir.File("bad"), good.substr(0, good.size() - 100));
    CHECK_THROWS_AS(LoadWeights(dir.File("bad")), TruncatedError);
  }
  SUBCASE("truncated header") {
    Dump(dir.File("bad"), good.substr(0, 30));
    CHECK_THROWS_AS(LoadWeights(dir.File("bad")), TruncatedError);
  }
  SUBCASE("shape table disagrees with the config") {
    std::string b = good;
    Poke<uint64_t>(&b, kFirstDimOffset, 40);
    Poke<uint64_t>(&b, kFirstDimOffset + 8, 6);
    Dump(dir.File("bad"), b);
    CHECK_THROWS_AS(LoadWeights(dir.File("bad")), ShapeError);
  }
  SUBCASE("different config") {
    EncoderConfig other;
    other.embed_dim = 128;
    CHECK_THROWS_AS(LoadWeights(good_path, other), ConfigMismatchError);
  }
  SUBCASE("bundle is not a weight file") {
    SaveTensorBundle({ToNamedTensor("x", Mat::Ones(2, 3))}, dir.File("bundle"));
    CHECK_THROWS_AS(LoadWeights(dir.File("bundle")), FormatError);
  }
  SUBCASE("embedding file is foreign") {
    SaveEmbedding({Vec::Ones(4), false}, dir.File("e"));
    CHECK_THROWS_AS(LoadWeights(dir.File("e")), FormatError);
  }
}

TEST_CASE("tensor bundles keep row-major order") {
  TempDir dir("bundle");
  Mat m(2, 3);
  m << 1, 2, 3, 4, 5, 6;
  const NamedTensor t = ToNamedTensor("m", m);
  CHECK(t.values == std::vector<float>{1, 2, 3, 4, 5, 6});
  SaveTensorBundle({t, ToNamedTensor("v", Vec::Constant(3, 0.5f))}, dir.File("b"));
  const auto back = LoadTensorBundle(dir.File("b"));
  REQUIRE(back.size() == 2);
  CHECK(back[0].name == "m");
  CHECK(ToMatrix(back[0]) == m);
  CHECK(back[1].shape == std::vector<int64_t>{3, 1});
}

TEST_CASE("embedding files") {
  TempDir dir("emb");
  std::mt19937_64 rng(3);
  const Embedding e{spkrefine::testing::RandomUnit(192, rng), true};
  SaveEmbedding(e, dir.File("e"));
  const Embedding back = LoadEmbedding(dir.File("e"));
  CHECK(back.normalized);
  CHECK(back.values == e.values);
  CHECK(IsEmbeddingFile(dir.File("e")));
  CHECK(Slurp(dir.File("e")).size() == 4 + 4 + 4 + 1 + 4 * 192);

  std::string b = Slurp(dir.File("e"));
  SUBCASE("magic") {
    b[1] = 'Q';
    Dump(dir.File("bad"), b);
    CHECK_THROWS_AS(LoadEmbedding(dir.File("bad")), FormatError);
    CHECK_FALSE(IsEmbeddingFile(dir.File("bad")));
  }
  SUBCASE("version") {
    Poke<uint32_t>(&b, 4, 9);
    Dump(dir.File("bad"), b);
    CHECK_THROWS_AS(LoadEmbedding(dir.File("bad")), VersionError);
  }
  SUBCASE("truncated") {
    Dump(dir.File("bad"), b.substr(0, b.size() - 1));
    CHECK_THROWS_AS(LoadEmbedding(dir.File("bad")), TruncatedError);
  }
  SUBCASE("dimension disagrees with payload") {
    Poke<uint32_t>(&b, 8, 191);
    Dump(dir.File("bad"), b);
    CHECK_THROWS_AS(LoadEmbedding(dir.File("bad")), ShapeError);
  }
}
