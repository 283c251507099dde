// tests/features_test.cc
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

#include <cmath>
#include <complex>
#include <fstream>
#include <numbers>
#include <random>

#include "spkrefine/features.h"
#include "spkrefine/wav.h"
#include "test_util.h"

using namespace spkrefine;
using spkrefine::testing::TempDir;

namespace {

Waveform Noise(size_t n, uint64_t seed, double amp = 0.3) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-amp, amp);
  Waveform w;
  w.samples.resize(n);
  for (auto& s : w.samples) s = static_cast<float>(u(rng));
  return w;
}

Waveform Tone(double hz, size_t n, double amp = 0.5) {
  Waveform w;
  w.samples.resize(n);
  for (size_t i = 0; i < n; ++i)
    w.samples[i] = static_cast<float>(amp * std::sin(2 * std::numbers::pi * hz * i / kSampleRate));
  return w;
}

// |X_k|^2 by the defining sum, frame zero-padded to n_fft.
Eigen::VectorXd DirectPowerSpectrum(const Vec& frame, int n_fft) {
  Eigen::VectorXd p(n_fft / 2 + 1);
  for (int k = 0; k <= n_fft / 2; ++k) {
    std::complex<double> acc = 0;
    for (Eigen::Index n = 0; n < frame.size(); ++n)
      acc += static_cast<double>(frame(n)) *
             std::polar(1.0, -2 * std::numbers::pi * k * static_cast<double>(n) / n_fft);
    p(k) = std::norm(acc);
  }
  return p;
}

// Orthonormal DCT-II by the defining sum.
Eigen::VectorXd DirectDct(const Eigen::VectorXd& x, int n_out) {
  const auto m = static_cast<double>(x.size());
  Eigen::VectorXd y(n_out);
  for (int k = 0; k < n_out; ++k) {
    double acc = 0;
    for (Eigen::Index j = 0; j < x.size(); ++j)
      acc += x(j) * std::cos(std::numbers::pi * k * (j + 0.5) / m);
    y(k) = acc * std::sqrt((k == 0 ? 1.0 : 2.0) / m);
  }
  return y;
}

}  // namespace

TEST_CASE("framing counts and boundaries") {
  FeatureConfig cfg;
  CHECK(FrameAndWindow(Noise(16000, 1), cfg).cols() == 98);
  CHECK(FrameAndWindow(Noise(400, 2), cfg).cols() == 1);
  CHECK_THROWS_AS(FrameAndWindow(Noise(399, 3), cfg), TooShortError);

  Waveform zeros;
  zeros.samples.assign(3200, 0.0f);
  CHECK(FrameAndWindow(zeros, cfg).isZero(0));
}

TEST_CASE("periodic hann window") {
  const auto w = HannWindow(400);
  CHECK(w[0] == 0.0);
  CHECK(w[200] == doctest::Approx(1.0));
  CHECK(w[100] == doctest::Approx(w[300]));
}

TEST_CASE("power spectrum matches the direct DFT") {
  FeatureConfig cfg;
  MfccComputer mfcc(cfg);
  const Mat frames = FrameAndWindow(Noise(400, 7), cfg);
  const Eigen::VectorXd fast = mfcc.PowerSpectrum(frames.col(0));
  const Eigen::VectorXd direct = DirectPowerSpectrum(frames.col(0), cfg.fft_size);
  CHECK(spkrefine::testing::RelError(fast, direct) < 1e-9);
}

TEST_CASE("1 kHz tone peaks in the filter centred nearest 1 kHz") {
  FeatureConfig cfg;
  MfccComputer mfcc(cfg);
  const Mat frames = FrameAndWindow(Tone(1000.0, 400), cfg);
  const Eigen::VectorXd direct = mfcc.Banks().Weights() * DirectPowerSpectrum(frames.col(0), cfg.fft_size);
  Eigen::Index peak_direct, peak_fast;
  direct.maxCoeff(&peak_direct);
  mfcc.MelEnergies(frames.col(0)).maxCoeff(&peak_fast);

  const auto& centers = mfcc.Banks().CenterFrequencies();
  size_t nearest = 0;
  for (size_t m = 1; m < centers.size(); ++m)
    if (std::abs(centers[m] - 1000.0) < std::abs(centers[nearest] - 1000.0)) nearest = m;
  CHECK(peak_fast == peak_direct);
  CHECK(static_cast<size_t>(peak_fast) == nearest);
}

TEST_CASE("dct matches the defining sum") {
  FeatureConfig cfg;
  MfccComputer mfcc(cfg);
  std::mt19937_64 rng(3);
  const Eigen::VectorXd x = spkrefine::testing::RandomVec(cfg.n_mels, rng).cast<double>();
  CHECK(spkrefine::testing::RelError(Eigen::VectorXd(mfcc.DctMatrix() * x),
                                     DirectDct(x, cfg.n_mfcc)) < 1e-12);

  // A flat log spectrum only excites C0.
  const Eigen::VectorXd flat = DirectDct(Eigen::VectorXd::Constant(cfg.n_mels, 4.0), cfg.n_mfcc);
  CHECK(std::abs(flat(0)) > 1.0);
  CHECK(flat.tail(cfg.n_mfcc - 1).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("white noise frame: C0 has the largest magnitude") {
  FeatureConfig cfg;
  MfccComputer mfcc(cfg);
  const Mat frames = FrameAndWindow(Noise(400, 11, 0.5), cfg);
  const Vec c = mfcc.Compute(frames.col(0));
  const Eigen::VectorXd log_mel = mfcc.MelEnergies(frames.col(0)).array().max(cfg.log_floor).log();
  CHECK(spkrefine::testing::RelError(c, DirectDct(log_mel, cfg.n_mfcc)) < 1e-6);
  for (int k = 1; k < cfg.n_mfcc; ++k) CHECK(std::abs(c(0)) > std::abs(c(k)));
}

TEST_CASE("silence gives time-constant coefficients") {
  FeatureConfig cfg;
  Waveform zeros;
  zeros.samples.assign(8000, 0.0f);
  const Mat m = ComputeMfcc(FrameAndWindow(zeros, cfg), cfg);
  for (Eigen::Index t = 1; t < m.cols(); ++t) CHECK(m.col(t) == m.col(0));
  CHECK(m.allFinite());
}

TEST_CASE("deltas") {
  SUBCASE("constant input gives exact zeros") {
    Mat m = Mat::Constant(4, 9, 2.5);
    auto [d, d2] = ComputeDeltas(m, 2);
    CHECK(d.isZero(0));
    CHECK(d2.isZero(0));
  }
  SUBCASE("linear ramp") {
    Mat m(3, 20);
    for (int t = 0; t < 20; ++t) m.col(t).setConstant(static_cast<Real>(t));
    auto [d, d2] = ComputeDeltas(m, 2);
    for (int t = 2; t < 18; ++t) CHECK(d.col(t).isApproxToConstant(1, 1e-6));
    for (int t = 4; t < 16; ++t) CHECK(d2.col(t).cwiseAbs().maxCoeff() < 1e-6);
  }
  SUBCASE("random 3x5 against the regression formula") {
    std::mt19937_64 rng(5);
    const Mat m = spkrefine::testing::RandomMat(3, 5, rng);
    auto [d, d2] = ComputeDeltas(m, 2);
    auto oracle = [](const Mat& x) {
      Eigen::MatrixXd out(x.rows(), x.cols());
      const int last = static_cast<int>(x.cols()) - 1;
      for (Eigen::Index c = 0; c < x.rows(); ++c)
        for (int t = 0; t <= last; ++t) {
          double num = 0;
          for (int n = 1; n <= 2; ++n)
            num += n * (x(c, std::min(t + n, last)) - x(c, std::max(t - n, 0)));
          out(c, t) = num / 10.0;
        }
      return out;
    };
    const Eigen::MatrixXd d_ref = oracle(m);
    CHECK(spkrefine::testing::RelError(d, d_ref) < 1e-6);
    CHECK(spkrefine::testing::RelError(d2, oracle(d_ref.cast<Real>())) < 1e-6);
  }
}

TEST_CASE("feature assembly") {
  std::mt19937_64 rng(9);
  SUBCASE("27 coefficients give 80 rows") {
    const Mat m = spkrefine::testing::RandomMat(27, 6, rng);
    CHECK(AssembleFeatures(m, m, m).Dim() == 80);
  }
  SUBCASE("2 coefficients give 5 rows") {
    const Mat m = spkrefine::testing::RandomMat(2, 6, rng);
    CHECK(AssembleFeatures(m, m, m).Dim() == 5);
  }
  SUBCASE("C0 is excluded from the static block") {
    Mat m = spkrefine::testing::RandomMat(27, 6, rng);
    m.row(0).setConstant(12345);
    const Mat d = Mat::Zero(27, 6);
    const FeatureMatrix f = AssembleFeatures(m, d, d);
    CHECK((f.data.array() == 12345).count() == 0);
    CHECK(f.data.topRows(26) == m.bottomRows(26));
  }
  SUBCASE("shape mismatch fails") {
    const Mat m = spkrefine::testing::RandomMat(27, 6, rng);
    const Mat bad = spkrefine::testing::RandomMat(26, 6, rng);
    const Mat short_t = spkrefine::testing::RandomMat(27, 5, rng);
    CHECK_THROWS_AS(AssembleFeatures(m, bad, m), DimensionError);
    CHECK_THROWS_AS(AssembleFeatures(m, m, short_t), DimensionError);
  }
}

TEST_CASE("ComputeFeatures is deterministic and finite") {
  FeatureConfig cfg;
  const Waveform w = Noise(24000, 21);
  const FeatureMatrix a = ComputeFeatures(w, cfg);
  const FeatureMatrix b = ComputeFeatures(w, cfg);
  CHECK(a.Dim() == 80);
  CHECK(a.NumFrames() == 148);
  CHECK(a.data == b.data);
  CHECK(a.data.allFinite());
}

TEST_CASE("cmn removes the static mean") {
  FeatureConfig cfg;
  cfg.cmn = true;
  const FeatureMatrix f = ComputeFeatures(Noise(16000, 4), cfg);
  CHECK(f.data.topRows(26).rowwise().mean().cwiseAbs().maxCoeff() < 1e-4);
  CHECK_THROWS_AS(StreamingFeatureExtractor{cfg}, ConfigError);
}

TEST_CASE("streaming extraction is bit-identical to offline") {
  FeatureConfig cfg;
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 6; ++trial) {
    const size_t n = 400 + rng() % 40000;
    const Waveform w = Noise(n, 100 + trial);
    const FeatureMatrix offline = ComputeFeatures(w, cfg);

    StreamingFeatureExtractor s(cfg);
    Mat got(cfg.FeatureDim(), 0);
    auto append = [&](const Mat& cols) {
      got.conservativeResize(Eigen::NoChange, got.cols() + cols.cols());
      got.rightCols(cols.cols()) = cols;
    };
    size_t pos = 0;
    while (pos < n) {
      const size_t block = std::min<size_t>(1 + rng() % 1000, n - pos);
      s.AcceptWaveform(std::span<const float>(w.samples).subspan(pos, block));
      pos += block;
      append(s.PopReady());
    }
    s.InputFinished();
    append(s.PopReady());
    REQUIRE(got.cols() == offline.NumFrames());
    CHECK(got == offline.data);
  }
}

TEST_CASE("config validation") {
  FeatureConfig cfg;
  cfg.n_mfcc = 1;
  CHECK_THROWS_AS(ValidateFeatureConfig(cfg), ConfigError);
  cfg = FeatureConfig{};
  cfg.hop_ms = 30;
  CHECK_THROWS_AS(ValidateFeatureConfig(cfg), ConfigError);
  cfg = FeatureConfig{};
  cfg.fft_size = 256;
  CHECK_THROWS_AS(ValidateFeatureConfig(cfg), ConfigError);
}

TEST_CASE("wav round trip and rejection") {
  TempDir dir("wav");
  Waveform w;
  for (int i = -200; i < 200; ++i) w.samples.push_back(static_cast<float>(i * 37) / 32768.0f);
  WriteWav(dir.File("a.wav"), w);
  CHECK(ReadWav(dir.File("a.wav")).samples == w.samples);

  CHECK_THROWS_AS(ReadWav(dir.File("missing.wav")), IoError);

  auto patch = [&](const std::string& name, size_t offset, std::initializer_list<unsigned char> b) {
    std::ifstream in(dir.File("a.wav"), std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    size_t i = offset;
    for (unsigned char c : b) bytes[i++] = static_cast<char>(c);
    std::ofstream(dir.File(name), std::ios::binary) << bytes;
    return dir.File(name);
  };
  CHECK_THROWS_AS(ReadWav(patch("stereo.wav", 22, {2, 0})), FormatError);
  CHECK_THROWS_AS(ReadWav(patch("8k.wav", 24, {0x40, 0x1f, 0, 0})), FormatError);
  CHECK_THROWS_AS(ReadWav(patch("8bit.wav", 34, {8, 0})), FormatError);
  CHECK_THROWS_AS(ReadWav(patch("float.wav", 20, {3, 0})), FormatError);
  CHECK_THROWS_AS(ReadWav(patch("riff.wav", 0, {'X'})), FormatError);

  {
    std::ifstream in(dir.File("a.wav"), std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    std::ofstream(dir.File("cut.wav"), std::ios::binary) << bytes.substr(0, bytes.size() - 10);
  }
  CHECK_THROWS_AS(ReadWav(dir.File("cut.wav")), FormatError);
}
