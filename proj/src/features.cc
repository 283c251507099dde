// src/features.cc
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

#include "spkrefine/features.h"

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <string>

#include <unsupported/Eigen/FFT>

SPKREFINE_NAMESPACE_BEGIN

int FeatureConfig::FrameLength() const {
  return static_cast<int>(std::lround(frame_len_ms * kSampleRate / 1000.0));
}

int FeatureConfig::FrameShift() const {
  return static_cast<int>(std::lround(hop_ms * kSampleRate / 1000.0));
}

void ValidateFeatureConfig(const FeatureConfig& cfg) {
  if (cfg.n_mfcc < 2) throw ConfigError("feature.n_mfcc must be >= 2");
  if (cfg.n_mels < cfg.n_mfcc)
    throw ConfigError("feature.n_mels must be >= feature.n_mfcc");
  if (!(cfg.hop_ms > 0) || !(cfg.frame_len_ms > cfg.hop_ms))
    throw ConfigError("need feature.frame_len_ms > feature.hop_ms > 0");
  if (cfg.FrameShift() < 1)
    throw ConfigError("feature.hop_ms is shorter than one sample");
  if (cfg.fft_size < cfg.FrameLength())
    throw ConfigError("feature.fft_size must cover one frame (" +
                      std::to_string(cfg.FrameLength()) + " samples)");
  if (cfg.delta_window < 1) throw ConfigError("feature.delta_window must be >= 1");
  if (!(cfg.low_freq >= 0) || !(cfg.high_freq > cfg.low_freq) ||
      cfg.high_freq > kSampleRate / 2.0)
    throw ConfigError("need 0 <= feature.low_freq < feature.high_freq <= 8000");
  if (!(cfg.log_floor > 0)) throw ConfigError("feature.log_floor must be > 0");
}

std::vector<double> HannWindow(int n) {
  std::vector<double> w(n);
  for (int i = 0; i < n; ++i)
    w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / n);
  return w;
}

namespace {

// Windowed copy of `len` samples starting at `begin`.
Vec WindowFrame(const float* begin, const std::vector<double>& window) {
  Vec frame(static_cast<Eigen::Index>(window.size()));
  for (size_t i = 0; i < window.size(); ++i)
    frame(static_cast<Eigen::Index>(i)) = static_cast<Real>(begin[i] * window[i]);
  return frame;
}

// Delta of column t, reading neighbours through `col` with indices clamped
// to [0, last]. Shared by the offline and streaming paths so both perform
// the same arithmetic.
template <typename ColumnFn>
Vec DeltaColumn(ColumnFn&& col, int64_t t, int64_t last, int window) {
  Real denom = 0;
  for (int n = 1; n <= window; ++n) denom += static_cast<Real>(2 * n * n);
  Vec acc = Vec::Zero(col(t).size());
  for (int n = 1; n <= window; ++n) {
    int64_t ahead = std::min<int64_t>(t + n, last);
    int64_t behind = std::max<int64_t>(t - n, 0);
    acc += static_cast<Real>(n) * (col(ahead) - col(behind));
  }
  return acc / denom;
}

}  // namespace

Mat FrameAndWindow(const Waveform& wave, const FeatureConfig& cfg) {
  ValidateFeatureConfig(cfg);
  const int len = cfg.FrameLength();
  const int hop = cfg.FrameShift();
  const auto n = static_cast<int64_t>(wave.samples.size());
  if (n < len)
    throw TooShortError("waveform has " + std::to_string(n) +
                        " samples, shorter than one frame (" +
                        std::to_string(len) + ")");
  const int64_t n_frames = 1 + (n - len) / hop;
  const std::vector<double> window = HannWindow(len);
  Mat frames(len, n_frames);
  for (int64_t f = 0; f < n_frames; ++f)
    frames.col(f) = WindowFrame(wave.samples.data() + f * hop, window);
  return frames;
}

double MelBanks::MelScale(double hz) { return 1127.0 * std::log(1.0 + hz / 700.0); }

double MelBanks::InverseMelScale(double mel) {
  return 700.0 * (std::exp(mel / 1127.0) - 1.0);
}

MelBanks::MelBanks(const FeatureConfig& cfg) {
  const int n_bins = cfg.fft_size / 2 + 1;
  const double bin_hz = static_cast<double>(kSampleRate) / cfg.fft_size;
  const double mel_low = MelScale(cfg.low_freq);
  const double mel_high = MelScale(cfg.high_freq);
  const double mel_step = (mel_high - mel_low) / (cfg.n_mels + 1);
  weights_ = Eigen::MatrixXd::Zero(cfg.n_mels, n_bins);
  centers_hz_.resize(cfg.n_mels);
  for (int m = 0; m < cfg.n_mels; ++m) {
    const double left = mel_low + m * mel_step;
    const double center = left + mel_step;
    const double right = center + mel_step;
    centers_hz_[m] = InverseMelScale(center);
    for (int k = 0; k < n_bins; ++k) {
      const double mel = MelScale(k * bin_hz);
      if (mel > left && mel <= center)
        weights_(m, k) = (mel - left) / (center - left);
      else if (mel > center && mel < right)
        weights_(m, k) = (right - mel) / (right - center);
    }
  }
}

struct MfccComputer::FftState {
  Eigen::FFT<double> fft;
};

MfccComputer::MfccComputer(const FeatureConfig& cfg)
    : cfg_(cfg), banks_(cfg), fft_(std::make_unique<FftState>()) {
  ValidateFeatureConfig(cfg);
  const int m = cfg.n_mels;
  dct_.resize(cfg.n_mfcc, m);
  for (int k = 0; k < cfg.n_mfcc; ++k) {
    const double scale = std::sqrt((k == 0 ? 1.0 : 2.0) / m);
    for (int j = 0; j < m; ++j)
      dct_(k, j) = scale * std::cos(std::numbers::pi * k * (j + 0.5) / m);
  }
}

MfccComputer::~MfccComputer() = default;
MfccComputer::MfccComputer(MfccComputer&&) noexcept = default;
MfccComputer& MfccComputer::operator=(MfccComputer&&) noexcept = default;

Eigen::VectorXd MfccComputer::PowerSpectrum(const Eigen::Ref<const Vec>& frame) const {
  if (frame.size() > cfg_.fft_size)
    throw DimensionError("frame longer than fft_size");
  std::vector<double> padded(cfg_.fft_size, 0.0);
  for (Eigen::Index i = 0; i < frame.size(); ++i) padded[i] = frame(i);
  std::vector<std::complex<double>> spectrum;
  fft_->fft.fwd(spectrum, padded);
  const int n_bins = cfg_.fft_size / 2 + 1;
  Eigen::VectorXd power(n_bins);
  for (int k = 0; k < n_bins; ++k) power(k) = std::norm(spectrum[k]);
  return power;
}

Eigen::VectorXd MfccComputer::MelEnergies(const Eigen::Ref<const Vec>& frame) const {
  return banks_.Weights() * PowerSpectrum(frame);
}

Vec MfccComputer::Compute(const Eigen::Ref<const Vec>& frame) const {
  Eigen::VectorXd log_mel = MelEnergies(frame).array().max(cfg_.log_floor).log();
  return (dct_ * log_mel).cast<Real>();
}

Mat ComputeMfcc(const Mat& frames, const FeatureConfig& cfg) {
  MfccComputer computer(cfg);
  Mat out(cfg.n_mfcc, frames.cols());
  for (Eigen::Index t = 0; t < frames.cols(); ++t)
    out.col(t) = computer.Compute(frames.col(t));
  return out;
}

std::pair<Mat, Mat> ComputeDeltas(const Mat& mfcc, int window) {
  if (window < 1) throw ConfigError("delta window must be >= 1");
  if (mfcc.cols() < 1) throw DimensionError("ComputeDeltas needs at least one frame");
  const int64_t last = mfcc.cols() - 1;
  Mat delta(mfcc.rows(), mfcc.cols());
  auto mfcc_col = [&](int64_t i) { return mfcc.col(i); };
  for (int64_t t = 0; t <= last; ++t)
    delta.col(t) = DeltaColumn(mfcc_col, t, last, window);
  Mat delta2(mfcc.rows(), mfcc.cols());
  auto delta_col = [&](int64_t i) { return delta.col(i); };
  for (int64_t t = 0; t <= last; ++t)
    delta2.col(t) = DeltaColumn(delta_col, t, last, window);
  return {std::move(delta), std::move(delta2)};
}

FeatureMatrix AssembleFeatures(const Mat& mfcc, const Mat& delta,
                               const Mat& delta2, double frame_rate) {
  const Eigen::Index c = mfcc.rows();
  if (c < 2) throw DimensionError("AssembleFeatures needs at least 2 coefficients");
  if (delta.rows() != c || delta2.rows() != c || delta.cols() != mfcc.cols() ||
      delta2.cols() != mfcc.cols()) {
    throw DimensionError("AssembleFeatures: mfcc/delta/delta2 shapes disagree");
  }
  FeatureMatrix out;
  out.frame_rate = frame_rate;
  out.data.resize(3 * c - 1, mfcc.cols());
  out.data.topRows(c - 1) = mfcc.bottomRows(c - 1);
  out.data.middleRows(c - 1, c) = delta;
  out.data.bottomRows(c) = delta2;
  return out;
}

FeatureMatrix ComputeFeatures(const Waveform& wave, const FeatureConfig& cfg) {
  if (wave.sample_rate != kSampleRate)
    throw ConfigError("expected 16000 Hz audio, got " + std::to_string(wave.sample_rate));
  Mat mfcc = ComputeMfcc(FrameAndWindow(wave, cfg), cfg);
  if (cfg.cmn) mfcc.colwise() -= mfcc.rowwise().mean();
  auto [delta, delta2] = ComputeDeltas(mfcc, cfg.delta_window);
  return AssembleFeatures(mfcc, delta, delta2, cfg.FrameRate());
}

StreamingFeatureExtractor::StreamingFeatureExtractor(const FeatureConfig& cfg)
    : cfg_(cfg), computer_(cfg), window_(HannWindow(cfg.FrameLength())) {
  if (cfg.cmn)
    throw ConfigError("cepstral mean normalization needs the whole utterance; "
                      "disable feature.cmn for streaming");
}

void StreamingFeatureExtractor::AcceptWaveform(std::span<const float> samples) {
  if (finished_) throw Error("AcceptWaveform called after InputFinished");
  pending_.insert(pending_.end(), samples.begin(), samples.end());
  ComputeNewFrames();
}

void StreamingFeatureExtractor::InputFinished() { finished_ = true; }

void StreamingFeatureExtractor::ComputeNewFrames() {
  const auto len = static_cast<size_t>(cfg_.FrameLength());
  const auto hop = static_cast<size_t>(cfg_.FrameShift());
  size_t start = 0;
  while (start + len <= pending_.size()) {
    mfcc_.push_back(computer_.Compute(WindowFrame(pending_.data() + start, window_)));
    ++num_mfcc_;
    start += hop;
  }
  pending_.erase(pending_.begin(),
                 pending_.begin() + static_cast<std::ptrdiff_t>(std::min(start, pending_.size())));
}

Mat StreamingFeatureExtractor::PopReady() {
  const int w = cfg_.delta_window;
  // Before the end of input no clamping at the upper edge may happen, so a
  // column is only computed once its full right context exists.
  const int64_t last = finished_ ? num_mfcc_ - 1 : std::numeric_limits<int64_t>::max();
  auto mfcc_col = [this](int64_t i) -> const Vec& { return MfccAt(i); };
  auto delta_col = [this](int64_t i) -> const Vec& { return DeltaAt(i); };

  while (num_delta_ < num_mfcc_ && (finished_ || num_delta_ + w < num_mfcc_)) {
    delta_.push_back(DeltaColumn(mfcc_col, num_delta_, last, w));
    ++num_delta_;
  }
  int64_t ready_end = num_popped_;
  while (ready_end < num_delta_ && (finished_ || ready_end + w < num_delta_)) ++ready_end;

  const int c = cfg_.n_mfcc;
  Mat out(cfg_.FeatureDim(), ready_end - num_popped_);
  for (int64_t t = num_popped_; t < ready_end; ++t) {
    const Eigen::Index col = t - num_popped_;
    out.col(col).head(c - 1) = MfccAt(t).tail(c - 1);
    out.col(col).segment(c - 1, c) = DeltaAt(t);
    out.col(col).tail(c) = DeltaColumn(delta_col, t, last, w);
  }
  num_popped_ = ready_end;

  // Keep only what future columns can still reference.
  while (mfcc_base_ < num_popped_ - 2 * w - 1 && !mfcc_.empty()) {
    mfcc_.pop_front();
    ++mfcc_base_;
  }
  while (delta_base_ < num_popped_ - w - 1 && !delta_.empty()) {
    delta_.pop_front();
    ++delta_base_;
  }
  return out;
}

SPKREFINE_NAMESPACE_END
