// tools/cli.cc
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

#include "cli.h"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "spkrefine/config.h"
#include "spkrefine/encoder.h"
#include "spkrefine/features.h"
#include "spkrefine/refine.h"
#include "spkrefine/sv_eval.h"
#include "spkrefine/tensor_io.h"
#include "spkrefine/trainer.h"
#include "spkrefine/wav.h"

namespace spkrefine::cli {
namespace {

// Log verbosity comes from SPKREFINE_LOG_LEVEL (trace, debug, info, warn,
// error, off); default info.
void SetupLogging() {
  static bool done = false;
  if (done) return;
  done = true;
  auto logger = spdlog::stderr_color_mt("spkrefine");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%H:%M:%S.%e] [%^%l%$] %v");
  spdlog::set_level(spdlog::level::info);
  if (const char* env = std::getenv("SPKREFINE_LOG_LEVEL"))
    spdlog::set_level(spdlog::level::from_str(env));
}

PipelineConfig LoadConfigOrDefault(const std::string& path) {
  return path.empty() ? DefaultPipelineConfig() : LoadPipelineConfig(path);
}

std::shared_ptr<const EncoderWeights> LoadEncoder(const std::string& path,
                                                  const PipelineConfig& cfg) {
  auto w = std::make_shared<EncoderWeights>(LoadWeights(path, cfg.encoder));
  spdlog::debug("loaded {} ({} parameters)", path, ParamCount(w->config));
  return w;
}

Embedding EmbedWav(const std::string& path, const EncoderWeights& w, const PipelineConfig& cfg) {
  const FeatureMatrix f = ComputeFeatures(ReadWav(path), cfg.feature);
  return PoolEmbeddings(ChunkEmbeddings(f, w, cfg.Chunk()));
}

int CmdEmbed(const std::string& wav, const std::string& weights, const std::string& out,
             const std::string& config) {
  const PipelineConfig cfg = LoadConfigOrDefault(config);
  const auto w = LoadEncoder(weights, cfg);
  const Embedding e = EmbedWav(wav, *w, cfg);
  SaveEmbedding(e, out);
  spdlog::info("wrote {}-dim embedding to {}", e.Dim(), out);
  return kExitOk;
}

int CmdTrainKd(const std::string& config, const std::string& out, const std::string& history,
               std::optional<int> epochs) {
  PipelineConfig cfg = LoadConfigOrDefault(config);
  if (epochs) cfg.train.epochs = *epochs;
  ValidatePipelineConfig(cfg);
  spdlog::info("training on {} synthetic speakers ({} held out), {} epochs",
               cfg.train.num_speakers, NumValidationSpeakers(cfg.train), cfg.train.epochs);
  const TrainResult r = TrainKd(cfg.train, cfg.encoder, [](const HistoryRow& row) {
    spdlog::info("epoch {:3d}  loss {:.4f}  tau {:.3f}  val retrieval {:.3f}", row.epoch, row.loss,
                 row.tau, row.retrieval_accuracy);
  });
  SaveWeights(r.weights, out);
  if (!history.empty()) SaveHistoryCsv(r.history, history);
  std::cout << fmt::format("final loss {:.6f} (initial {:.6f}), retrieval accuracy {:.4f}\n",
                           r.history.back().loss, r.history.front().loss,
                           r.history.back().retrieval_accuracy);
  return kExitOk;
}

struct RefineArgs {
  std::string wav, reference, weights, track_csv, conditioning, config, mode;
  std::optional<double> alpha;
  std::optional<double> chunk_ms;
  int block_samples = 160;
};

int CmdRefine(const RefineArgs& a) {
  PipelineConfig cfg = LoadConfigOrDefault(a.config);
  if (!a.mode.empty()) {
    SetConfigValue(&cfg, "refine.mode", a.mode);
    cfg.refine.alpha = DefaultAlpha(cfg.refine.mode);
  }
  if (a.alpha) cfg.refine.alpha = *a.alpha;
  if (a.chunk_ms) SetConfigValue(&cfg, "chunk.length_ms", fmt::format("{}", *a.chunk_ms));
  ValidatePipelineConfig(cfg);
  if (a.block_samples < 1) throw ConfigError("--block must be positive");

  std::shared_ptr<const ChunkEmbedder> embedder;
  if (cfg.refine.mode == EmbedderMode::kOracle) {
    embedder = std::make_shared<TeacherOracle>(cfg.encoder.in_dim, cfg.encoder.embed_dim,
                                               cfg.train.teacher_seed);
  } else {
    if (a.weights.empty()) throw ConfigError("--weights is required in light mode");
    embedder = std::make_shared<EncoderEmbedder>(LoadEncoder(a.weights, cfg));
  }
  Embedding reference = LoadEmbedding(a.reference);
  const Waveform wave = ReadWav(a.wav);
  spdlog::info("refining {} ({:.2f} s), alpha {}, chunk {} frames", a.wav,
               wave.samples.size() / static_cast<double>(kSampleRate), cfg.refine.alpha,
               cfg.Chunk().chunk_len);

  RefinementStream stream(cfg.feature, cfg.Chunk(), cfg.refine, reference, embedder);
  std::ofstream csv;
  if (!a.track_csv.empty()) {
    csv.open(a.track_csv);
    if (!csv) throw IoError("cannot write " + a.track_csv);
    csv << "frame_index,raw_similarity,scaled_clipped\n";
  }
  std::vector<Mat> blocks;
  auto drain = [&] {
    RefinedFrames f = stream.Pop();
    for (size_t i = 0; i < f.size(); ++i)
      if (csv.is_open())
        csv << fmt::format("{},{:.9g},{:.9g}\n", f.first_frame + static_cast<int64_t>(i), f.raw[i],
                           f.scaled[i]);
    if (f.size() > 0) blocks.push_back(std::move(f.conditioning));
  };
  const std::span<const float> samples(wave.samples);
  for (size_t pos = 0; pos < samples.size(); pos += a.block_samples) {
    stream.AcceptWaveform(samples.subspan(pos, std::min<size_t>(a.block_samples, samples.size() - pos)));
    drain();
  }
  stream.InputFinished();
  drain();

  if (!a.conditioning.empty()) {
    Eigen::Index cols = 0;
    for (const Mat& b : blocks) cols += b.cols();
    Mat all(reference.Dim() + 1, cols);
    Eigen::Index at = 0;
    for (const Mat& b : blocks) {
      all.middleCols(at, b.cols()) = b;
      at += b.cols();
    }
    SaveTensorBundle({ToNamedTensor("conditioning", all)}, a.conditioning);
  }
  std::cout << fmt::format("{} frames, {} chunks\n", stream.NumFramesEmitted(), stream.NumChunks());
  return kExitOk;
}

int CmdEvalSv(const std::string& trials_path, const std::string& weights,
              const std::string& config) {
  const PipelineConfig cfg = LoadConfigOrDefault(config);
  std::shared_ptr<const EncoderWeights> w;
  if (!weights.empty()) w = LoadEncoder(weights, cfg);

  std::ifstream in(trials_path);
  if (!in) throw IoError("cannot open trial list " + trials_path);
  const std::filesystem::path base = std::filesystem::path(trials_path).parent_path();
  auto resolve = [&](const std::string& p) {
    const std::filesystem::path fp(p);
    return (fp.is_absolute() ? fp : base / fp).string();
  };
  std::map<std::string, Embedding> cache;
  auto embed = [&](const std::string& path) -> const Embedding& {
    auto it = cache.find(path);
    if (it != cache.end()) return it->second;
    Embedding e;
    if (IsEmbeddingFile(path)) {
      e = LoadEmbedding(path);
    } else {
      if (!w) throw ConfigError("--weights is required to embed " + path);
      e = EmbedWav(path, *w, cfg);
    }
    return cache.emplace(path, std::move(e)).first->second;
  };

  std::vector<double> scores;
  std::vector<bool> labels;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string enroll, test, label;
    if (!std::getline(ls, enroll, '\t') || !std::getline(ls, test, '\t') || !std::getline(ls, label))
      throw FormatError(fmt::format("{}:{}: expected enroll<TAB>test<TAB>label", trials_path, lineno));
    while (!label.empty() && (label.back() == '\r' || label.back() == ' ')) label.pop_back();
    bool target;
    if (label == "1" || label == "target") target = true;
    else if (label == "0" || label == "nontarget") target = false;
    else throw FormatError(fmt::format("{}:{}: bad label '{}'", trials_path, lineno, label));
    const Trial t{embed(resolve(enroll)), embed(resolve(test)), target};
    scores.push_back(ScoreTrials({t}).front());
    labels.push_back(target);
  }
  const EerResult eer = ComputeEer(scores, labels);
  const DcfResult dcf = ComputeMinDcf(scores, labels);
  const auto n_target = std::count(labels.begin(), labels.end(), true);
  std::cout << fmt::format("trials {} (target {}, nontarget {})\n", labels.size(), n_target,
                           static_cast<long>(labels.size()) - n_target);
  std::cout << fmt::format("EER {:.4f}% at threshold {:.6f}\n", 100 * eer.eer, eer.threshold);
  std::cout << fmt::format("minDCF {:.4f} at threshold {:.6f} (p_target 0.01, c_miss 1, c_fa 1)\n",
                           dcf.min_dcf, dcf.threshold);
  return kExitOk;
}

int CmdInspectWeights(const std::string& path) {
  const EncoderWeights w = LoadWeights(path);
  const EncoderConfig& c = w.config;
  std::cout << fmt::format("config in_dim={} channels={},{},{} kernels={},{},{} se={},{},{} "
                           "pooled={} embed={}\n",
                           c.in_dim, c.channels[0], c.channels[1], c.channels[2], c.kernels[0],
                           c.kernels[1], c.kernels[2], c.se_bottleneck[0], c.se_bottleneck[1],
                           c.se_bottleneck[2], c.pooled_dim, c.embed_dim);
  for (const auto& t : ListTensors(w)) {
    std::string shape;
    for (int64_t d : t.shape) shape += (shape.empty() ? "" : " x ") + std::to_string(d);
    std::cout << fmt::format("  {:<24} {:<12} {:>8}{}\n", t.name, shape, t.size(),
                             t.learnable ? "" : "  (buffer)");
  }
  std::cout << fmt::format("parameters {}\n", ParamCount(c));
  return kExitOk;
}

}  // namespace

int Run(const std::vector<std::string>& args) {
  SetupLogging();
  CLI::App app{"Speaker embedding distillation and on-the-fly refinement"};
  app.require_subcommand(1);

  std::string wav, weights, out, config, history, trials;
  std::optional<int> epochs;
  RefineArgs ra;

  auto* embed = app.add_subcommand("embed", "Utterance embedding of a WAV file");
  embed->add_option("--wav", wav, "16 kHz mono 16-bit WAV")->required();
  embed->add_option("--weights", weights, "Encoder weights")->required();
  embed->add_option("--out", out, "Output embedding file")->required();
  embed->add_option("--config", config, "Pipeline config file");

  auto* train = app.add_subcommand("train-kd", "Contrastive distillation on the synthetic corpus");
  train->add_option("--config", config, "Pipeline config file");
  train->add_option("--out", out, "Output weight file")->required();
  train->add_option("--history", history, "Per-epoch CSV");
  train->add_option("--epochs", epochs, "Override train.epochs");

  auto* refine = app.add_subcommand("refine", "Similarity track and conditioning sequence");
  refine->add_option("--wav", ra.wav, "Input mixture")->required();
  refine->add_option("--reference", ra.reference, "Reference embedding file")->required();
  refine->add_option("--weights", ra.weights, "Encoder weights (light mode)");
  refine->add_option("--alpha", ra.alpha, "Scaling factor (default 6 light, 2 oracle)");
  refine->add_option("--chunk-ms", ra.chunk_ms, "Chunk length in ms");
  refine->add_option("--mode", ra.mode, "light or oracle")->check(CLI::IsMember({"light", "oracle"}));
  refine->add_option("--track", ra.track_csv, "Output CSV: frame_index,raw_similarity,scaled_clipped");
  refine->add_option("--conditioning", ra.conditioning, "Output tensor file");
  refine->add_option("--block", ra.block_samples, "Samples per streaming block");
  refine->add_option("--config", ra.config, "Pipeline config file");

  auto* eval = app.add_subcommand("eval-sv", "EER and minDCF over a trial list");
  eval->add_option("--trials", trials, "enroll<TAB>test<TAB>label lines")->required();
  eval->add_option("--weights", weights, "Encoder weights for WAV entries");
  eval->add_option("--config", config, "Pipeline config file");

  auto* inspect = app.add_subcommand("inspect-weights", "Print the tensor ledger");
  inspect->add_option("--weights", weights, "Weight file")->required();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*embed) return CmdEmbed(wav, weights, out, config);
    if (*train) return CmdTrainKd(config, out, history, epochs);
    if (*refine) return CmdRefine(ra);
    if (*eval) return CmdEvalSv(trials, weights, config);
    if (*inspect) return CmdInspectWeights(weights);
  } catch (const ConfigError& e) {
    spdlog::error("{}", e.what());
    return kExitUsage;
  } catch (const IoError& e) {
    spdlog::error("{}", e.what());
    return kExitIo;
  } catch (const FormatError& e) {
    spdlog::error("{}", e.what());
    return kExitFormat;
  } catch (const NumericError& e) {
    spdlog::error("{}", e.what());
    return kExitNumeric;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kExitOther;
  }
  return kExitUsage;
}

}  // namespace spkrefine::cli
