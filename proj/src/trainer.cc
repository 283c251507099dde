// src/trainer.cc
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

#include "spkrefine/trainer.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <future>
#include <numbers>
#include <numeric>

#include <fmt/format.h>

SPKREFINE_NAMESPACE_BEGIN

namespace {

// One generator per (purpose, index).
std::mt19937_64 StreamRng(uint64_t seed, uint64_t tag, uint64_t a, uint64_t b = 0) {
  std::seed_seq seq{static_cast<uint32_t>(seed), static_cast<uint32_t>(seed >> 32),
                    static_cast<uint32_t>(tag), static_cast<uint32_t>(a), static_cast<uint32_t>(b)};
  return std::mt19937_64(seq);
}

constexpr uint64_t kTagTrain = 1, kTagMonitor = 2, kTagEval = 3, kTagInit = 4, kTagCorpus = 5;

}  // namespace

void ValidateTrainConfig(const TrainConfig& cfg) {
  if (cfg.batch_size < 2) throw ConfigError("batch size must be >= 2");
  ValidateChunkConfig(ChunkConfig{cfg.chunk_len});
  if (cfg.excerpt_frames < cfg.chunk_len)
    throw ConfigError("excerpt must hold at least one chunk");
  if (cfg.epochs < 0) throw ConfigError("epochs must be >= 0");
  if (cfg.batches_per_epoch < 0) throw ConfigError("batches_per_epoch must be >= 0");
  if (!(cfg.learning_rate >= 0)) throw ConfigError("learning rate must be >= 0");
  if (!(cfg.beta1 >= 0 && cfg.beta1 < 1 && cfg.beta2 >= 0 && cfg.beta2 < 1))
    throw ConfigError("Adam betas must lie in [0, 1)");
  if (!(cfg.adam_eps > 0)) throw ConfigError("Adam epsilon must be positive");
  if (!(cfg.bn_momentum >= 0 && cfg.bn_momentum <= 1))
    throw ConfigError("batchnorm momentum must lie in [0, 1]");
  if (cfg.feature_dim < 1 || cfg.template_rank < 1 || cfg.template_rank > cfg.feature_dim)
    throw ConfigError("template rank must lie in [1, feature_dim]");
  if (!(cfg.noise_level >= 0) || !(cfg.pitch_jitter >= 0))
    throw ConfigError("noise level and pitch jitter must be >= 0");
  if (!(cfg.val_fraction >= 0 && cfg.val_fraction < 1))
    throw ConfigError("validation fraction must lie in [0, 1)");
  if (cfg.num_speakers < 2 * cfg.batch_size)
    throw ConfigError(fmt::format("{} speakers cannot fill a training and a validation batch of {}",
                                  cfg.num_speakers, cfg.batch_size));
  if (cfg.teacher_dim < 1) throw ConfigError("teacher dimension must be >= 1");
  if (cfg.eval_draws < 1) throw ConfigError("eval_draws must be >= 1");
}

int NumValidationSpeakers(const TrainConfig& cfg) {
  const int by_fraction = static_cast<int>(std::ceil(cfg.val_fraction * cfg.num_speakers));
  return std::min(std::max(by_fraction, cfg.batch_size), cfg.num_speakers - cfg.batch_size);
}

std::vector<SyntheticSpeaker> MakeCorpus(const TrainConfig& cfg) {
  ValidateTrainConfig(cfg);
  auto rng = StreamRng(cfg.seed, kTagCorpus, 0);
  std::normal_distribution<double> normal;

  // Orthonormal basis of the template subspace.
  Eigen::MatrixXd g(cfg.feature_dim, cfg.template_rank);
  for (Eigen::Index i = 0; i < g.size(); ++i) g.data()[i] = normal(rng);
  const Eigen::MatrixXd basis = Eigen::HouseholderQR<Eigen::MatrixXd>(g).householderQ() *
                                Eigen::MatrixXd::Identity(cfg.feature_dim, cfg.template_rank);
  const double coef_scale = cfg.template_scale * std::sqrt(static_cast<double>(cfg.feature_dim) /
                                                           cfg.template_rank);

  std::vector<SyntheticSpeaker> speakers;
  std::vector<Eigen::VectorXd> templates;
  int attempts = 0;
  while (static_cast<int>(speakers.size()) < cfg.num_speakers) {
    if (++attempts > 1000 * cfg.num_speakers)
      throw ConfigError("cannot place the requested speakers at the minimum template distance");
    Eigen::VectorXd z(cfg.template_rank);
    for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = coef_scale * normal(rng);
    const Eigen::VectorXd t = basis * z;
    bool ok = true;
    for (const auto& other : templates) ok = ok && (t - other).norm() >= cfg.min_template_distance;
    if (!ok) continue;
    SyntheticSpeaker s;
    s.id = static_cast<int>(speakers.size());
    s.spectral_template = t.cast<Real>();
    Eigen::VectorXd m(cfg.feature_dim);
    for (Eigen::Index i = 0; i < m.size(); ++i) m[i] = normal(rng);
    s.modulation = m.cast<Real>();
    s.pitch_jitter = cfg.pitch_jitter;
    s.noise_level = cfg.noise_level;
    templates.push_back(t);
    speakers.push_back(std::move(s));
  }
  return speakers;
}

TeacherOracle::TeacherOracle(int in_dim, int out_dim, uint64_t seed) {
  if (in_dim < 1 || out_dim < 1) throw ConfigError("teacher dimensions must be positive");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  projection_.resize(out_dim, in_dim);
  for (Eigen::Index i = 0; i < projection_.size(); ++i)
    projection_.data()[i] = static_cast<Real>(normal(rng));
}

Embedding TeacherOracle::EmbedTemplate(const Vec& spectral_template) const {
  if (spectral_template.size() != projection_.cols())
    throw DimensionError(fmt::format("teacher expects {}-dim input, got {}", projection_.cols(),
                                     spectral_template.size()));
  const Eigen::VectorXd y = projection_.cast<double>() * spectral_template.cast<double>();
  const double n = y.norm();
  if (!(n > 0) || !std::isfinite(n)) throw NumericError("teacher projection has zero norm");
  return {(y / n).cast<Real>(), true};
}

Embedding TeacherOracle::Embed(const Mat& chunk) const {
  return EmbedTemplate(chunk.rowwise().mean());
}

FeatureMatrix GenerateClip(const SyntheticSpeaker& speaker, int num_frames, std::mt19937_64& rng) {
  if (num_frames < 1) throw ConfigError("clip needs at least one frame");
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> period_dist(20.0, 80.0);
  std::uniform_real_distribution<double> phase_dist(0.0, 2 * std::numbers::pi);
  const double period = period_dist(rng);
  const double phase = phase_dist(rng);
  const Eigen::Index dim = speaker.spectral_template.size();
  FeatureMatrix f;
  f.data.resize(dim, num_frames);
  for (int t = 0; t < num_frames; ++t) {
    const double wave = speaker.pitch_jitter * std::sin(2 * std::numbers::pi * t / period + phase);
    for (Eigen::Index c = 0; c < dim; ++c) {
      const double e = normal(rng);
      f.data(c, t) = static_cast<Real>(speaker.spectral_template[c] +
                                       speaker.noise_level * (e + wave * speaker.modulation[c]));
    }
  }
  return f;
}

TrainingPair GeneratePair(const SyntheticSpeaker& speaker, const TeacherOracle& teacher,
                          int num_frames, std::mt19937_64& rng) {
  return {teacher.EmbedTemplate(speaker.spectral_template), GenerateClip(speaker, num_frames, rng)};
}

double RetrievalAccuracy(const Mat& similarity) {
  const Eigen::Index n = similarity.rows();
  if (n == 0 || similarity.cols() != n) throw DimensionError("retrieval needs a square matrix");
  int hits = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    bool strict_max = true;
    for (Eigen::Index j = 0; j < n && strict_max; ++j)
      if (j != i && !(similarity(i, i) > similarity(i, j))) strict_max = false;
    hits += strict_max;
  }
  return static_cast<double>(hits) / static_cast<double>(n);
}

AdamOptimizer::AdamOptimizer(const EncoderWeights& w, double lr, double beta1, double beta2,
                             double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const auto& t : ListTensors(w)) {
    const size_t n = t.learnable ? static_cast<size_t>(t.size()) : 0;
    m_.emplace_back(n, 0.0);
    v_.emplace_back(n, 0.0);
  }
}

void AdamOptimizer::Step(const EncoderGradients& grads, double d_log_tau, EncoderWeights* w,
                         Temperature* tau) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  auto update = [&](double g, double& m, double& v) {
    m = beta1_ * m + (1 - beta1_) * g;
    v = beta2_ * v + (1 - beta2_) * g * g;
    return lr_ * (m / c1) / (std::sqrt(v / c2) + eps_);
  };
  auto params = ListTensors(*w);
  const auto gs = ListTensors(grads);
  if (params.size() != gs.size() || params.size() != m_.size())
    throw DimensionError("gradient layout does not match the optimizer state");
  for (size_t i = 0; i < params.size(); ++i) {
    if (!params[i].learnable) continue;
    for (int64_t j = 0; j < params[i].size(); ++j)
      params[i].data[j] -= static_cast<Real>(update(gs[i].data[j], m_[i][j], v_[i][j]));
  }
  if (tau) tau->log_tau -= update(d_log_tau, m_tau_, v_tau_);
}

namespace {

struct Batch {
  Mat teacher;              // d x N
  std::vector<Mat> chunks;  // N * K, clip-major
  int chunks_per_clip = 0;
};

Batch MakeBatch(const std::vector<SyntheticSpeaker>& corpus, const std::vector<int>& ids,
                const TeacherOracle& teacher, const TrainConfig& cfg, std::mt19937_64& rng) {
  const ChunkConfig chunk_cfg{cfg.chunk_len};
  Batch b;
  b.teacher.resize(teacher.Dim(), static_cast<Eigen::Index>(ids.size()));
  for (size_t i = 0; i < ids.size(); ++i) {
    TrainingPair p = GeneratePair(corpus[ids[i]], teacher, cfg.excerpt_frames, rng);
    b.teacher.col(static_cast<Eigen::Index>(i)) = p.teacher.values;
    auto chunks = SplitChunks(p.student_features.data, chunk_cfg);
    b.chunks_per_clip = static_cast<int>(chunks.size());
    for (auto& c : chunks) b.chunks.push_back(std::move(c));
  }
  return b;
}

std::vector<Mat> SplitPerClip(const Mat& embeddings, int chunks_per_clip) {
  std::vector<Mat> out;
  for (Eigen::Index j = 0; j < embeddings.cols(); j += chunks_per_clip)
    out.push_back(embeddings.middleCols(j, chunks_per_clip));
  return out;
}


}  // namespace

TrainResult TrainKd(const TrainConfig& cfg, const EncoderConfig& enc_cfg,
                    const EpochCallback& on_epoch) {
  ValidateTrainConfig(cfg);
  ValidateEncoderConfig(enc_cfg);
  if (enc_cfg.in_dim != cfg.feature_dim)
    throw ConfigError(fmt::format("encoder input dimension {} does not match feature dimension {}",
                                  enc_cfg.in_dim, cfg.feature_dim));
  if (enc_cfg.embed_dim != cfg.teacher_dim)
    throw ConfigError(fmt::format("student dimension {} does not match teacher dimension {}",
                                  enc_cfg.embed_dim, cfg.teacher_dim));

  TrainResult result;
  result.corpus = MakeCorpus(cfg);
  const int n_val = NumValidationSpeakers(cfg);
  const int n_train = cfg.num_speakers - n_val;
  result.num_train_speakers = n_train;
  const TeacherOracle teacher(cfg.feature_dim, cfg.teacher_dim, cfg.teacher_seed);
  const auto& corpus = result.corpus;

  {
    auto init_rng = StreamRng(cfg.seed, kTagInit, 0);
    result.weights = InitEncoderWeights(enc_cfg, init_rng());
  }
  EncoderWeights& w = result.weights;
  Temperature& tau = result.temperature;
  AdamOptimizer adam(w, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.adam_eps);

  std::vector<Batch> monitor;
  for (int g = 0; g + cfg.batch_size <= n_train; g += cfg.batch_size) {
    std::vector<int> ids(cfg.batch_size);
    std::iota(ids.begin(), ids.end(), g);
    auto rng = StreamRng(cfg.seed, kTagMonitor, static_cast<uint64_t>(g));
    monitor.push_back(MakeBatch(corpus, ids, teacher, cfg, rng));
  }
  std::vector<Batch> eval;
  {
    std::vector<int> ids(n_val);
    std::iota(ids.begin(), ids.end(), n_train);
    for (int d = 0; d < cfg.eval_draws; ++d) {
      auto rng = StreamRng(cfg.seed, kTagEval, static_cast<uint64_t>(d));
      eval.push_back(MakeBatch(corpus, ids, teacher, cfg, rng));
    }
  }

  auto measure = [&](int epoch) {
    HistoryRow row;
    row.epoch = epoch;
    row.tau = tau.Tau();
    for (const Batch& b : monitor) {
      const Mat e = ForwardBatch(b.chunks, w, BatchNormMode::kBatch);
      const ContrastiveLoss l =
          ComputeContrastiveLoss(SimilarityMatrix(b.teacher, SplitPerClip(e, b.chunks_per_clip)),
                                 row.tau);
      row.loss += l.loss / monitor.size();
      row.row_loss += l.row_loss / monitor.size();
      row.col_loss += l.col_loss / monitor.size();
    }
    for (const Batch& b : eval) {
      const Mat e = ForwardBatch(b.chunks, w, BatchNormMode::kRunning);
      row.retrieval_accuracy +=
          RetrievalAccuracy(SimilarityMatrix(b.teacher, SplitPerClip(e, b.chunks_per_clip))) /
          eval.size();
    }
    if (!std::isfinite(row.loss))
      throw NumericError(fmt::format("non-finite monitor loss at epoch {}", epoch));
    result.history.push_back(row);
    if (on_epoch) on_epoch(row);
  };

  const int steps = cfg.batches_per_epoch > 0 ? cfg.batches_per_epoch
                                              : std::max(1, n_train / cfg.batch_size);
  auto make_train_batch = [&](int epoch, int step) {
    auto rng = StreamRng(cfg.seed, kTagTrain, static_cast<uint64_t>(epoch),
                         static_cast<uint64_t>(step));
    std::vector<int> order(n_train);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    order.resize(cfg.batch_size);
    return MakeBatch(corpus, order, teacher, cfg, rng);
  };

  measure(0);
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::future<Batch> next;
    if (cfg.prefetch) next = std::async(std::launch::async, make_train_batch, epoch, 0);
    for (int step = 0; step < steps; ++step) {
      Batch b = cfg.prefetch ? next.get() : make_train_batch(epoch, step);
      if (cfg.prefetch && step + 1 < steps)
        next = std::async(std::launch::async, make_train_batch, epoch, step + 1);

      ForwardCache cache;
      const Mat e = ForwardBatch(b.chunks, w, BatchNormMode::kBatch, &cache);
      const Mat s = SimilarityMatrix(b.teacher, SplitPerClip(e, b.chunks_per_clip));
      const double t = tau.Tau();
      const ContrastiveLoss loss = ComputeContrastiveLoss(s, t);
      if (!std::isfinite(loss.loss))
        throw NumericError(fmt::format("training diverged at epoch {} step {}", epoch, step));
      const ContrastiveGrad g = ContrastiveLossBackward(s, t);
      const std::vector<Mat> d_clips =
          SimilarityMatrixBackward(b.teacher, g.d_similarity, b.chunks_per_clip);
      Mat d_e(e.rows(), e.cols());
      for (size_t j = 0; j < d_clips.size(); ++j)
        d_e.middleCols(static_cast<Eigen::Index>(j) * b.chunks_per_clip, b.chunks_per_clip) =
            d_clips[j];
      const EncoderGradients grads = Backward(cache, w, d_e);
      adam.Step(grads, g.d_log_tau, &w, &tau);
      UpdateRunningStats(cache, static_cast<Real>(cfg.bn_momentum), &w);
    }
    measure(epoch);
  }
  ValidateWeights(w);
  return result;
}

void SaveHistoryCsv(const std::vector<HistoryRow>& history, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << "epoch,loss,row_loss,col_loss,tau,retrieval_accuracy\n";
  for (const HistoryRow& r : history)
    out << fmt::format("{},{:.9g},{:.9g},{:.9g},{:.9g},{:.9g}\n", r.epoch, r.loss, r.row_loss,
                       r.col_loss, r.tau, r.retrieval_accuracy);
  if (!out) throw IoError("failed writing " + path);
}

SPKREFINE_NAMESPACE_END
