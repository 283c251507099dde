// src/tensor_io.cc
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

#include "spkrefine/tensor_io.h"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

SPKREFINE_NAMESPACE_BEGIN

namespace {

class ByteWriter {
 public:
  void Bytes(const void* p, size_t n) {
    buf_.append(static_cast<const char*>(p), n);
  }
  template <typename T>
  void Uint(T v) {
    for (size_t i = 0; i < sizeof(T); ++i)
      buf_.push_back(static_cast<char>((static_cast<uint64_t>(v) >> (8 * i)) & 0xff));
  }
  void F32(float v) { Uint(std::bit_cast<uint32_t>(v)); }
  void WriteTo(const std::string& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open " + path + " for writing");
    os.write(buf_.data(), static_cast<std::streamsize>(buf_.size()));
    if (!os) throw IoError("write failed for " + path);
  }

 private:
  std::string buf_;
};

class ByteReader {
 public:
  explicit ByteReader(const std::string& path) : path_(path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open " + path);
    buf_.assign(std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>());
  }
  void Bytes(void* out, size_t n) {
    Need(n);
    std::memcpy(out, buf_.data() + pos_, n);
    pos_ += n;
  }
  template <typename T>
  T Uint() {
    Need(sizeof(T));
    uint64_t v = 0;
    for (size_t i = 0; i < sizeof(T); ++i)
      v |= static_cast<uint64_t>(static_cast<unsigned char>(buf_[pos_ + i])) << (8 * i);
    pos_ += sizeof(T);
    return static_cast<T>(v);
  }
  float F32() { return std::bit_cast<float>(Uint<uint32_t>()); }
  size_t Remaining() const { return buf_.size() - pos_; }
  const std::string& Path() const { return path_; }

 private:
  void Need(size_t n) const {
    if (buf_.size() - pos_ < n)
      throw TruncatedError(path_ + ": file truncated at byte " + std::to_string(pos_));
  }
  std::string path_;
  std::string buf_;
  size_t pos_ = 0;
};

std::vector<int32_t> ConfigEcho(const EncoderConfig& c) {
  std::vector<int32_t> v{c.in_dim};
  for (int x : c.channels) v.push_back(x);
  for (int x : c.kernels) v.push_back(x);
  for (int x : c.se_bottleneck) v.push_back(x);
  v.push_back(c.pooled_dim);
  v.push_back(c.embed_dim);
  return v;
}

EncoderConfig ConfigFromEcho(const std::vector<int32_t>& v, const std::string& path) {
  if (v.size() != 12)
    throw FormatError(path + ": weight file carries " + std::to_string(v.size()) +
                      " config fields, expected 12");
  EncoderConfig c;
  c.in_dim = v[0];
  for (int b = 0; b < 3; ++b) {
    c.channels[b] = v[1 + b];
    c.kernels[b] = v[4 + b];
    c.se_bottleneck[b] = v[7 + b];
  }
  c.pooled_dim = v[10];
  c.embed_dim = v[11];
  return c;
}

struct ContainerHeader {
  TensorFileKind kind;
  std::vector<int32_t> config;
  std::vector<NamedTensor> tensors;  // values filled by ReadContainer
};

void WriteContainer(TensorFileKind kind, const std::vector<int32_t>& config,
                    const std::vector<NamedTensor>& tensors, const std::string& path) {
  ByteWriter w;
  w.Bytes(kTensorFileMagic, 4);
  w.Uint<uint32_t>(kTensorFileVersion);
  w.Uint<uint32_t>(static_cast<uint32_t>(kind));
  w.Uint<uint32_t>(static_cast<uint32_t>(config.size()));
  for (int32_t v : config) w.Uint<uint32_t>(static_cast<uint32_t>(v));
  w.Uint<uint32_t>(static_cast<uint32_t>(tensors.size()));
  for (const NamedTensor& t : tensors) {
    w.Uint<uint16_t>(static_cast<uint16_t>(t.name.size()));
    w.Bytes(t.name.data(), t.name.size());
    w.Uint<uint32_t>(static_cast<uint32_t>(t.shape.size()));
    for (int64_t d : t.shape) w.Uint<uint64_t>(static_cast<uint64_t>(d));
  }
  for (const NamedTensor& t : tensors)
    for (float v : t.values) w.F32(v);
  w.WriteTo(path);
}

ContainerHeader ReadContainer(const std::string& path) {
  ByteReader r(path);
  char magic[4];
  if (r.Remaining() < 4 || (r.Bytes(magic, 4), std::memcmp(magic, kTensorFileMagic, 4) != 0))
    throw FormatError(path + ": not a spkrefine tensor file (bad magic)");
  const auto version = r.Uint<uint32_t>();
  if (version != kTensorFileVersion)
    throw VersionError(path + ": tensor file version " + std::to_string(version) +
                       ", this build reads version " + std::to_string(kTensorFileVersion));
  ContainerHeader h;
  const auto kind = r.Uint<uint32_t>();
  if (kind != static_cast<uint32_t>(TensorFileKind::kEncoderWeights) &&
      kind != static_cast<uint32_t>(TensorFileKind::kTensorBundle))
    throw FormatError(path + ": unknown tensor file kind " + std::to_string(kind));
  h.kind = static_cast<TensorFileKind>(kind);
  const auto n_config = r.Uint<uint32_t>();
  if (n_config > 64) throw FormatError(path + ": implausible config length");
  for (uint32_t i = 0; i < n_config; ++i) h.config.push_back(static_cast<int32_t>(r.Uint<uint32_t>()));
  const auto n_tensors = r.Uint<uint32_t>();
  if (n_tensors > 4096) throw FormatError(path + ": implausible tensor count");
  uint64_t total = 0;
  for (uint32_t i = 0; i < n_tensors; ++i) {
    NamedTensor t;
    t.name.resize(r.Uint<uint16_t>());
    r.Bytes(t.name.data(), t.name.size());
    const auto rank = r.Uint<uint32_t>();
    if (rank < 1 || rank > 2)
      throw ShapeError(path + ": tensor " + t.name + " has unsupported rank " + std::to_string(rank));
    uint64_t n = 1;
    for (uint32_t d = 0; d < rank; ++d) {
      const auto dim = r.Uint<uint64_t>();
      if (dim > (uint64_t{1} << 32)) throw ShapeError(path + ": tensor " + t.name + " is too large");
      t.shape.push_back(static_cast<int64_t>(dim));
      n *= dim;
    }
    total += n;
    h.tensors.push_back(std::move(t));
  }
  if (r.Remaining() < total * 4)
    throw TruncatedError(path + ": payload truncated (" + std::to_string(r.Remaining()) +
                         " bytes, need " + std::to_string(total * 4) + ")");
  if (r.Remaining() > total * 4) throw FormatError(path + ": trailing bytes after payload");
  for (NamedTensor& t : h.tensors) {
    int64_t n = 1;
    for (int64_t d : t.shape) n *= d;
    t.values.resize(static_cast<size_t>(n));
    for (float& v : t.values) v = r.F32();
  }
  return h;
}

// Row-major float32 copy of a column-major tensor view.
std::vector<float> ToRowMajor(const ConstTensorRef& t) {
  std::vector<float> out(static_cast<size_t>(t.size()));
  if (t.shape.size() == 1) {
    for (int64_t i = 0; i < t.size(); ++i) out[i] = static_cast<float>(t.data[i]);
  } else {
    const int64_t rows = t.shape[0], cols = t.shape[1];
    for (int64_t r = 0; r < rows; ++r)
      for (int64_t c = 0; c < cols; ++c) out[r * cols + c] = static_cast<float>(t.data[c * rows + r]);
  }
  return out;
}

void FromRowMajor(const std::vector<float>& values, const TensorRef& t) {
  if (t.shape.size() == 1) {
    for (int64_t i = 0; i < t.size(); ++i) t.data[i] = static_cast<Real>(values[i]);
  } else {
    const int64_t rows = t.shape[0], cols = t.shape[1];
    for (int64_t r = 0; r < rows; ++r)
      for (int64_t c = 0; c < cols; ++c) t.data[c * rows + r] = static_cast<Real>(values[r * cols + c]);
  }
}

}  // namespace

void SaveWeights(const EncoderWeights& w, const std::string& path) {
  ValidateWeights(w);
  std::vector<NamedTensor> tensors;
  for (const ConstTensorRef& t : ListTensors(w)) tensors.push_back({t.name, t.shape, ToRowMajor(t)});
  WriteContainer(TensorFileKind::kEncoderWeights, ConfigEcho(w.config), tensors, path);
}

EncoderWeights LoadWeights(const std::string& path) {
  ContainerHeader h = ReadContainer(path);
  if (h.kind != TensorFileKind::kEncoderWeights)
    throw FormatError(path + ": tensor file does not hold encoder weights");
  EncoderConfig cfg = ConfigFromEcho(h.config, path);
  try {
    ValidateEncoderConfig(cfg);
  } catch (const ConfigError& e) {
    throw FormatError(path + ": invalid config echo: " + e.what());
  }
  EncoderWeights w = ZeroWeights(cfg);
  auto refs = ListTensors(w);
  if (refs.size() != h.tensors.size())
    throw ShapeError(path + ": " + std::to_string(h.tensors.size()) + " tensors, config implies " +
                     std::to_string(refs.size()));
  for (size_t i = 0; i < refs.size(); ++i) {
    if (refs[i].name != h.tensors[i].name || refs[i].shape != h.tensors[i].shape)
      throw ShapeError(path + ": tensor " + h.tensors[i].name +
                       " does not match the shape ledger of its config (expected " + refs[i].name +
                       ")");
    FromRowMajor(h.tensors[i].values, refs[i]);
  }
  ValidateWeights(w);
  return w;
}

EncoderWeights LoadWeights(const std::string& path, const EncoderConfig& expected) {
  EncoderWeights w = LoadWeights(path);
  if (!(w.config == expected))
    throw ConfigMismatchError(path + ": weights were saved for a different encoder config");
  return w;
}

NamedTensor ToNamedTensor(const std::string& name, const Mat& m) {
  ConstTensorRef ref{name, m.data(), {m.rows(), m.cols()}, false};
  return {name, ref.shape, ToRowMajor(ref)};
}

Mat ToMatrix(const NamedTensor& t) {
  const int64_t rows = t.shape.at(0);
  const int64_t cols = t.shape.size() > 1 ? t.shape[1] : 1;
  Mat m(rows, cols);
  TensorRef ref{t.name, m.data(), {rows, cols}, false};
  FromRowMajor(t.values, ref);
  return m;
}

void SaveTensorBundle(const std::vector<NamedTensor>& tensors, const std::string& path) {
  for (const NamedTensor& t : tensors) {
    int64_t n = 1;
    for (int64_t d : t.shape) n *= d;
    if (t.shape.empty() || t.shape.size() > 2 || n != static_cast<int64_t>(t.values.size()))
      throw DimensionError("tensor " + t.name + ": shape does not match its values");
  }
  WriteContainer(TensorFileKind::kTensorBundle, {}, tensors, path);
}

std::vector<NamedTensor> LoadTensorBundle(const std::string& path) {
  ContainerHeader h = ReadContainer(path);
  if (h.kind != TensorFileKind::kTensorBundle)
    throw FormatError(path + ": tensor file is not a plain tensor bundle");
  return std::move(h.tensors);
}

void SaveEmbedding(const Embedding& e, const std::string& path) {
  ByteWriter w;
  w.Bytes(kEmbeddingFileMagic, 4);
  w.Uint<uint32_t>(kEmbeddingFileVersion);
  w.Uint<uint32_t>(static_cast<uint32_t>(e.values.size()));
  w.Uint<uint8_t>(e.normalized ? 1 : 0);
  for (Eigen::Index i = 0; i < e.values.size(); ++i) w.F32(static_cast<float>(e.values(i)));
  w.WriteTo(path);
}

Embedding LoadEmbedding(const std::string& path) {
  ByteReader r(path);
  char magic[4];
  if (r.Remaining() < 4 || (r.Bytes(magic, 4), std::memcmp(magic, kEmbeddingFileMagic, 4) != 0))
    throw FormatError(path + ": not a spkrefine embedding file (bad magic)");
  const auto version = r.Uint<uint32_t>();
  if (version != kEmbeddingFileVersion)
    throw VersionError(path + ": embedding file version " + std::to_string(version));
  const auto dim = r.Uint<uint32_t>();
  const auto flag = r.Uint<uint8_t>();
  if (flag > 1) throw FormatError(path + ": bad normalized flag");
  if (r.Remaining() < 4ull * dim)
    throw TruncatedError(path + ": embedding payload truncated");
  if (r.Remaining() > 4ull * dim) throw ShapeError(path + ": payload longer than 4 * dim bytes");
  Embedding e;
  e.normalized = flag == 1;
  e.values.resize(dim);
  for (uint32_t i = 0; i < dim; ++i) e.values(i) = static_cast<Real>(r.F32());
  return e;
}

bool IsEmbeddingFile(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  char magic[4];
  return is.read(magic, 4) && std::memcmp(magic, kEmbeddingFileMagic, 4) == 0;
}

SPKREFINE_NAMESPACE_END
