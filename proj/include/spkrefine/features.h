// include/spkrefine/features.h
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

#ifndef SPKREFINE_FEATURES_H_
#define SPKREFINE_FEATURES_H_

#include <deque>
#include <memory>
#include <span>
#include <utility>
#include <vector>

#include "spkrefine/base.h"
#include "spkrefine/wav.h"

SPKREFINE_NAMESPACE_BEGIN

// MFCC + delta + delta-delta front-end. The static block drops C0 while the
// two delta blocks keep it, giving 3 * n_mfcc - 1 rows (80 for 27 MFCCs).
struct FeatureConfig {
  int n_mfcc = 27;
  int n_mels = 40;
  double frame_len_ms = 25.0;
  double hop_ms = 10.0;
  int fft_size = 512;
  int delta_window = 2;
  double low_freq = 20.0;
  double high_freq = 7600.0;
  double log_floor = 1e-10;
  // Per-utterance mean subtraction on the static MFCCs. Offline only.
  bool cmn = false;

  int FrameLength() const;  // samples
  int FrameShift() const;   // samples
  int FeatureDim() const { return 3 * n_mfcc - 1; }
  double FrameRate() const { return 1000.0 / hop_ms; }
};

// Throws ConfigError on an inconsistent configuration.
void ValidateFeatureConfig(const FeatureConfig& cfg);

struct FeatureMatrix {
  Mat data;  // FeatureDim() rows x T frame columns
  double frame_rate = 100.0;

  int NumFrames() const { return static_cast<int>(data.cols()); }
  int Dim() const { return static_cast<int>(data.rows()); }
};

// Periodic Hann window of length n.
std::vector<double> HannWindow(int n);

// Splits the waveform into 1 + (len - frame_len) / hop windowed frames, one
// per column (frame_len rows). Throws TooShortError if not even one frame
// fits.
Mat FrameAndWindow(const Waveform& wave, const FeatureConfig& cfg);

// Triangular filters on the mel scale, evaluated on the FFT bin grid.
class MelBanks {
 public:
  explicit MelBanks(const FeatureConfig& cfg);

  // n_mels x (fft_size / 2 + 1)
  const Eigen::MatrixXd& Weights() const { return weights_; }
  const std::vector<double>& CenterFrequencies() const { return centers_hz_; }

  static double MelScale(double hz);
  static double InverseMelScale(double mel);

 private:
  Eigen::MatrixXd weights_;
  std::vector<double> centers_hz_;
};

// Per-frame MFCC computation. Holds the FFT plan, filterbank and DCT matrix,
// so instances are not shared across threads; make one per thread.
class MfccComputer {
 public:
  explicit MfccComputer(const FeatureConfig& cfg);
  ~MfccComputer();
  MfccComputer(MfccComputer&&) noexcept;
  MfccComputer& operator=(MfccComputer&&) noexcept;

  // |X_k|^2 for k = 0 .. fft_size/2 of a windowed frame (zero padded).
  Eigen::VectorXd PowerSpectrum(const Eigen::Ref<const Vec>& frame) const;
  // Filterbank energies before the log.
  Eigen::VectorXd MelEnergies(const Eigen::Ref<const Vec>& frame) const;
  // DCT-II (orthonormal) of the floored log mel energies, first n_mfcc terms.
  Vec Compute(const Eigen::Ref<const Vec>& frame) const;

  const MelBanks& Banks() const { return banks_; }
  const Eigen::MatrixXd& DctMatrix() const { return dct_; }

 private:
  struct FftState;
  FeatureConfig cfg_;
  MelBanks banks_;
  Eigen::MatrixXd dct_;  // n_mfcc x n_mels
  std::unique_ptr<FftState> fft_;
};

// n_mfcc x T coefficients for frames produced by FrameAndWindow.
Mat ComputeMfcc(const Mat& frames, const FeatureConfig& cfg);

// Regression deltas with half-width `window` and edge replication:
//   d_t = sum_{n=1..W} n (c_{t+n} - c_{t-n}) / (2 sum_{n=1..W} n^2).
// Returns (delta, delta-delta) where delta-delta is the delta of delta.
std::pair<Mat, Mat> ComputeDeltas(const Mat& mfcc, int window);

// Stacks [mfcc rows 1..C-1; delta; delta2]. Throws DimensionError on any
// shape disagreement.
FeatureMatrix AssembleFeatures(const Mat& mfcc, const Mat& delta,
                               const Mat& delta2, double frame_rate = 100.0);

// Whole-utterance pipeline: framing, MFCC, optional CMN, deltas, assembly.
FeatureMatrix ComputeFeatures(const Waveform& wave, const FeatureConfig& cfg);

// Incremental version of ComputeFeatures. A feature column is released once
// every frame its deltas depend on has arrived (2 * delta_window frames of
// lookahead), or at InputFinished(). The concatenation of everything popped
// is bit-identical to ComputeFeatures on the same samples.
class StreamingFeatureExtractor {
 public:
  explicit StreamingFeatureExtractor(const FeatureConfig& cfg);

  void AcceptWaveform(std::span<const float> samples);
  void InputFinished();
  bool IsFinished() const { return finished_; }

  // Returns the newly finalized columns (FeatureDim() x n, n may be 0).
  Mat PopReady();

  int64_t NumFramesPopped() const { return num_popped_; }
  const FeatureConfig& Config() const { return cfg_; }

 private:
  void ComputeNewFrames();
  const Vec& MfccAt(int64_t t) const { return mfcc_[t - mfcc_base_]; }
  const Vec& DeltaAt(int64_t t) const { return delta_[t - delta_base_]; }

  FeatureConfig cfg_;
  MfccComputer computer_;
  std::vector<double> window_;
  std::vector<float> pending_;  // samples from the next frame start onwards
  std::deque<Vec> mfcc_;
  std::deque<Vec> delta_;
  int64_t mfcc_base_ = 0;
  int64_t delta_base_ = 0;
  int64_t num_mfcc_ = 0;
  int64_t num_delta_ = 0;
  int64_t num_popped_ = 0;
  bool finished_ = false;
};

SPKREFINE_NAMESPACE_END

#endif  // SPKREFINE_FEATURES_H_
