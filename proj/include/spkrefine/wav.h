// include/spkrefine/wav.h
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

#ifndef SPKREFINE_WAV_H_
#define SPKREFINE_WAV_H_

#include <string>
#include <vector>

#include "spkrefine/base.h"

SPKREFINE_NAMESPACE_BEGIN

// Mono audio with samples in [-1, 1].
struct Waveform {
  std::vector<float> samples;
  int sample_rate = kSampleRate;
};

// Reads a RIFF/WAVE file. Only mono 16 kHz 16-bit signed PCM is accepted;
// anything else raises FormatError naming the offending field.
Waveform ReadWav(const std::string& path);

// Writes mono 16-bit PCM; samples are clipped to [-1, 1] before quantization.
void WriteWav(const std::string& path, const Waveform& wave);

SPKREFINE_NAMESPACE_END

#endif  // SPKREFINE_WAV_H_
