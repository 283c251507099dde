// include/spkrefine/tensor_io.h
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

#ifndef SPKREFINE_TENSOR_IO_H_
#define SPKREFINE_TENSOR_IO_H_

#include <cstdint>
#include <string>
#include <vector>

#include "spkrefine/base.h"
#include "spkrefine/encoder.h"

SPKREFINE_NAMESPACE_BEGIN

// Tensor container, all integers little-endian:
//
//   char[4]  magic "SPKT"
//   u32      version (kTensorFileVersion)
//   u32      kind (TensorFileKind)
//   u32      n_config, then n_config x i32 config echo
//   u32      n_tensors
//   n_tensors x { u16 name_len, name bytes, u32 rank, rank x u64 dims }
//   payloads: float32 little-endian, row-major, in table order
//
// Encoder weights store the 12-field EncoderConfig as the config echo
// (in_dim, channels[3], kernels[3], se_bottleneck[3], pooled_dim, embed_dim);
// other bundles carry no echo.
constexpr char kTensorFileMagic[4] = {'S', 'P', 'K', 'T'};
constexpr uint32_t kTensorFileVersion = 1;

enum class TensorFileKind : uint32_t {
  kEncoderWeights = 1,
  kTensorBundle = 2,
};

struct NamedTensor {
  std::string name;
  std::vector<int64_t> shape;  // rank 1 or 2
  std::vector<float> values;   // row-major
};

void SaveWeights(const EncoderWeights& w, const std::string& path);

// Loads and validates weights. Failure classes: IoError (missing file),
// FormatError (bad magic or kind), VersionError, TruncatedError, ShapeError
// (table disagrees with the config echo).
EncoderWeights LoadWeights(const std::string& path);

// As above, and additionally throws ConfigMismatchError when the file was
// written for a different configuration than `expected`.
EncoderWeights LoadWeights(const std::string& path, const EncoderConfig& expected);

void SaveTensorBundle(const std::vector<NamedTensor>& tensors, const std::string& path);
std::vector<NamedTensor> LoadTensorBundle(const std::string& path);

// Copies a matrix into a row-major NamedTensor and back.
NamedTensor ToNamedTensor(const std::string& name, const Mat& m);
Mat ToMatrix(const NamedTensor& t);

// Embedding file, little-endian:
//   char[4] magic "SPKE", u32 version (1), u32 dim, u8 normalized,
//   dim x float32 payload
constexpr char kEmbeddingFileMagic[4] = {'S', 'P', 'K', 'E'};
constexpr uint32_t kEmbeddingFileVersion = 1;

void SaveEmbedding(const Embedding& e, const std::string& path);
Embedding LoadEmbedding(const std::string& path);

// True if the file starts with the embedding magic.
bool IsEmbeddingFile(const std::string& path);

SPKREFINE_NAMESPACE_END

#endif  // SPKREFINE_TENSOR_IO_H_
