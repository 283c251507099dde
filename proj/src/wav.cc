// src/wav.cc
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

#include "spkrefine/wav.h"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

SPKREFINE_NAMESPACE_BEGIN

namespace {

uint32_t ReadU32(const unsigned char* p) {
  return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
         (static_cast<uint32_t>(p[2]) << 16) |
         (static_cast<uint32_t>(p[3]) << 24);
}

uint16_t ReadU16(const unsigned char* p) {
  return static_cast<uint16_t>(p[0] | (p[1] << 8));
}

void PutU32(std::string* out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out->push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void PutU16(std::string* out, uint16_t v) {
  out->push_back(static_cast<char>(v & 0xff));
  out->push_back(static_cast<char>((v >> 8) & 0xff));
}

}  // namespace

Waveform ReadWav(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open wav file " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(is)),
                                   std::istreambuf_iterator<char>());
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw FormatError(path + ": not a RIFF/WAVE file");
  }

  bool have_fmt = false;
  size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* chunk = bytes.data() + pos;
    uint32_t size = ReadU32(chunk + 4);
    size_t body = pos + 8;
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (size < 16 || body + 16 > bytes.size())
        throw FormatError(path + ": truncated fmt chunk");
      uint16_t format = ReadU16(bytes.data() + body);
      uint16_t channels = ReadU16(bytes.data() + body + 2);
      uint32_t rate = ReadU32(bytes.data() + body + 4);
      uint16_t bits = ReadU16(bytes.data() + body + 14);
      if (format != 1)
        throw FormatError(path + ": only PCM wav is supported (format tag " +
                          std::to_string(format) + ")");
      if (channels != 1)
        throw FormatError(path + ": expected mono audio, got " +
                          std::to_string(channels) + " channels");
      if (rate != kSampleRate)
        throw FormatError(path + ": expected 16000 Hz, got " +
                          std::to_string(rate) + " Hz");
      if (bits != 16)
        throw FormatError(path + ": expected 16-bit samples, got " +
                          std::to_string(bits) + "-bit");
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      if (!have_fmt) throw FormatError(path + ": data chunk before fmt chunk");
      size_t n_bytes = std::min<size_t>(size, bytes.size() - body);
      if (n_bytes != size)
        throw FormatError(path + ": truncated data chunk");
      Waveform wave;
      wave.samples.resize(n_bytes / 2);
      for (size_t i = 0; i < wave.samples.size(); ++i) {
        auto v = static_cast<int16_t>(ReadU16(bytes.data() + body + 2 * i));
        wave.samples[i] = static_cast<float>(v) / 32768.0f;
      }
      if (wave.samples.empty()) throw FormatError(path + ": empty data chunk");
      return wave;
    }
    pos = body + size + (size & 1);
  }
  throw FormatError(path + ": no data chunk");
}

void WriteWav(const std::string& path, const Waveform& wave) {
  if (wave.sample_rate != kSampleRate)
    throw ConfigError("WriteWav: sample rate must be 16000");
  uint32_t data_bytes = static_cast<uint32_t>(wave.samples.size() * 2);
  std::string out;
  out.reserve(44 + data_bytes);
  out += "RIFF";
  PutU32(&out, 36 + data_bytes);
  out += "WAVEfmt ";
  PutU32(&out, 16);
  PutU16(&out, 1);
  PutU16(&out, 1);
  PutU32(&out, kSampleRate);
  PutU32(&out, kSampleRate * 2);
  PutU16(&out, 2);
  PutU16(&out, 16);
  out += "data";
  PutU32(&out, data_bytes);
  for (float s : wave.samples) {
    float c = std::clamp(s, -1.0f, 1.0f);
    auto v = static_cast<int16_t>(std::lrint(std::min(c * 32768.0f, 32767.0f)));
    PutU16(&out, static_cast<uint16_t>(v));
  }
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write wav file " + path);
  os.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!os) throw IoError("write failed for " + path);
}

SPKREFINE_NAMESPACE_END
