// include/spkrefine/trainer.h
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

#ifndef SPKREFINE_TRAINER_H_
#define SPKREFINE_TRAINER_H_

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "spkrefine/base.h"
#include "spkrefine/contrastive.h"
#include "spkrefine/encoder.h"
#include "spkrefine/features.h"
#include "spkrefine/refine.h"

SPKREFINE_NAMESPACE_BEGIN

// Synthetic corpus and distillation hyperparameters.
struct TrainConfig {
  int batch_size = 8;         // N distinct speakers per minibatch
  int chunk_len = 100;        // T' frames
  int excerpt_frames = 300;   // 3 s excerpts
  int epochs = 30;
  int batches_per_epoch = 0;  // 0: one pass over the training speakers
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double bn_momentum = 0.1;
  uint64_t seed = 1234;

  // Corpus.
  int num_speakers = 32;
  int feature_dim = 80;
  int template_rank = 16;
  double template_scale = 1.0;
  double min_template_distance = 2.0;
  double noise_level = 0.5;
  double pitch_jitter = 0.5;
  double val_fraction = 0.05;

  // Teacher oracle.
  int teacher_dim = 192;
  uint64_t teacher_seed = 99;

  // Clip draws per validation speaker when measuring retrieval accuracy.
  int eval_draws = 4;
  // Generate the next minibatch on a worker thread. Results do not depend on
  // this flag.
  bool prefetch = false;
};

// Throws ConfigError on an invalid combination.
void ValidateTrainConfig(const TrainConfig& cfg);

struct SyntheticSpeaker {
  int id = 0;
  Vec spectral_template;  // feature_dim
  Vec modulation;         // per-channel gain of the slow modulation
  double pitch_jitter = 0;
  double noise_level = 0;
};

// Templates are drawn from a fixed random template_rank-dimensional subspace
// and rejected until every pair is at least min_template_distance apart.
std::vector<SyntheticSpeaker> MakeCorpus(const TrainConfig& cfg);

// Speakers [0, num_train) train, the rest validate. The held-out share is
// max(ceil(val_fraction * n), batch_size) so validation retrieval is over a
// full batch.
int NumValidationSpeakers(const TrainConfig& cfg);

// Frozen stand-in for the large teacher: normalize(P x) with a seeded
// Gaussian P (out_dim x in_dim). As a ChunkEmbedder it embeds the time mean
// of the chunk, which makes it the reference-space embedder of oracle mode.
class TeacherOracle : public ChunkEmbedder {
 public:
  TeacherOracle(int in_dim, int out_dim, uint64_t seed);

  int Dim() const override { return static_cast<int>(projection_.rows()); }
  Embedding Embed(const Mat& chunk) const override;
  Embedding EmbedTemplate(const Vec& spectral_template) const;

  const Mat& Projection() const { return projection_; }

 private:
  Mat projection_;
};

// x[c, t] = template[c] + noise_level * (e[c, t] + jitter * g[c] sin(2 pi t / P + phi))
// with e ~ N(0, 1), P ~ U[20, 80) frames and phi ~ U[0, 2 pi).
FeatureMatrix GenerateClip(const SyntheticSpeaker& speaker, int num_frames, std::mt19937_64& rng);

struct TrainingPair {
  Embedding teacher;
  FeatureMatrix student_features;
};

TrainingPair GeneratePair(const SyntheticSpeaker& speaker, const TeacherOracle& teacher,
                          int num_frames, std::mt19937_64& rng);

// Fraction of rows whose diagonal entry is the strict row maximum.
double RetrievalAccuracy(const Mat& similarity);

// Adam over every learnable encoder tensor plus the log temperature.
class AdamOptimizer {
 public:
  AdamOptimizer(const EncoderWeights& w, double lr, double beta1, double beta2, double eps);

  void Step(const EncoderGradients& grads, double d_log_tau, EncoderWeights* w, Temperature* tau);
  int64_t NumSteps() const { return t_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  int64_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
  double m_tau_ = 0, v_tau_ = 0;
};

struct HistoryRow {
  int epoch = 0;
  double loss = 0;
  double row_loss = 0;
  double col_loss = 0;
  double tau = 0;
  double retrieval_accuracy = 0;
};

struct TrainResult {
  EncoderWeights weights;
  Temperature temperature;
  std::vector<HistoryRow> history;  // row 0 is the untrained model
  std::vector<SyntheticSpeaker> corpus;
  int num_train_speakers = 0;
};

using EpochCallback = std::function<void(const HistoryRow&)>;

// Contrastive distillation on a synthetic corpus. Each step draws N distinct
// training speakers, embeds the chunks of one excerpt per speaker with batch
// statistics, and takes an Adam step on the symmetric loss. The history loss
// is measured on a fixed set of training excerpts with batch statistics, and
// retrieval accuracy on fixed validation excerpts with running statistics.
// Deterministic given cfg.seed. Throws NumericError on a non-finite loss.
TrainResult TrainKd(const TrainConfig& cfg, const EncoderConfig& enc_cfg,
                    const EpochCallback& on_epoch = {});

void SaveHistoryCsv(const std::vector<HistoryRow>& history, const std::string& path);

SPKREFINE_NAMESPACE_END

#endif  // SPKREFINE_TRAINER_H_
