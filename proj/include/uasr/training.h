// Copyright 2026 The uasr Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Joint training of the unified model: every batch runs the shared encoder
// once under a sampled chunk mask and once with full context, combines CTC,
// attention and bridging losses, and takes one Adam step. Also drives the
// bridging-loss ablation.

#ifndef UASR_TRAINING_H_
#define UASR_TRAINING_H_

#include <cstdint>
#include <functional>
#include <map>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "uasr/analysis.h"
#include "uasr/checkpoint.h"
#include "uasr/data.h"
#include "uasr/losses.h"
#include "uasr/masking.h"
#include "uasr/model.h"

namespace uasr {

// peak * min(step / warmup, sqrt(warmup / step)); zero at step 0.
double LrSchedule(int64_t step, double peak, int warmup);

struct TrainConfig {
  int epochs = 30;
  int batch_size = 8;
  double peak_lr = 1e-3;
  int warmup_steps = 500;
  uint64_t seed = 1;
  double ctc_weight = 0.3;  // lambda: CTC share of each branch's ASR loss
  ContrastiveConfig bridge;
  // The streaming branch never samples full context.
  ChunkPolicy chunk_policy = ChunkPolicy::Dynamic(25, 0.0);
  double grad_clip = 5.0;
  AugmentPolicy augment;
  int average_top_k = 3;
  std::string checkpoint_dir;  // empty: keep checkpoints in memory only
  // Validation runs the streaming branch at this fixed chunk.
  int validation_chunk = 4;
  int validation_beam = 4;
  bool validation_cer = true;

  void Validate() const;
  nlohmann::json ToJson() const;
  static TrainConfig FromJson(const nlohmann::json& j);
};

inline constexpr double kAdamBeta1 = 0.9;
inline constexpr double kAdamBeta2 = 0.98;
inline constexpr double kAdamEps = 1e-9;

struct AdamState {
  int64_t step = 0;
  std::map<std::string, std::vector<double>> m, v;
};

// Independent generator per purpose, so that e.g. the contrastive arm's
// negative sampling does not shift the shuffling or chunk draws of the
// baseline arm trained from the same seed.
struct TrainRngs {
  std::mt19937_64 shuffle, chunk, negatives, augment, dropout;
  explicit TrainRngs(uint64_t seed);
};

uint64_t DeriveSeed(uint64_t seed, uint64_t stream);

// Graph and breakdown for a set of utterances: batch mean of every term.
// Without a bridge config the bridge is skipped (validation).
struct BatchLoss {
  Tensor<float> total;
  LossBreakdown breakdown;
};
BatchLoss ComputeBatchLoss(std::span<const Utterance> batch,
                           const Parameters<float>& params,
                           const ModelConfig& model, double ctc_weight,
                           ChunkSetting streaming_chunk,
                           const ContrastiveConfig* bridge,
                           std::mt19937_64* negatives_rng,
                           std::mt19937_64* dropout_rng = nullptr);

struct StepStats {
  LossBreakdown loss;
  double lr = 0;
  double grad_norm = 0;  // before clipping
  ChunkSetting chunk = ChunkSetting::Full();
};

// One optimizer step. Throws NumericError with the step number and chunk on
// a non-finite loss or gradient.
StepStats TrainStep(std::span<const Utterance> batch, Parameters<float>& params,
                    AdamState& adam, const ModelConfig& model,
                    const TrainConfig& cfg, TrainRngs& rngs);

struct StepRecord {
  int64_t step = 0;
  int epoch = 0;
  StepStats stats;
};

struct EpochRecord {
  int epoch = 0;
  int64_t step = 0;
  double train_loss = 0;       // mean step total over the epoch
  double validation_loss = 0;  // ASR loss only, bridge excluded
  double cer_full = -1;        // first pass; -1 when not measured
  double cer_chunk = -1;
};

struct TrainLog {
  std::vector<StepRecord> steps;
  std::vector<EpochRecord> epochs;

  std::string StepsCsv() const;
  std::string EpochsCsv() const;
  void Write(const std::string& steps_path, const std::string& epochs_path) const;
};

// Pure ASR validation loss (bridge excluded), streaming branch at `chunk`.
double ValidationLoss(const std::vector<Utterance>& dev,
                      const Parameters<float>& params, const ModelConfig& model,
                      double ctc_weight, int chunk);

struct TrainResult {
  Checkpoint averaged;                 // mean of the top-k epoch checkpoints
  std::vector<Checkpoint> checkpoints; // one per epoch
  TrainLog log;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

// When cfg.checkpoint_dir is set, writes epoch_NNN.ckpt, avg.ckpt,
// train_log.csv and validation.csv there.
TrainResult Train(const std::vector<Utterance>& train,
                  const std::vector<Utterance>& dev, const ModelConfig& model,
                  const TrainConfig& cfg, const EpochCallback& on_epoch = {});

struct ExperimentConfig {
  std::vector<Bridge> bridges{Bridge::kNone, Bridge::kL2, Bridge::kContrastive};
  std::vector<uint64_t> seeds{1};
  std::vector<ChunkSetting> chunks{ChunkSetting::Full(), ChunkSetting::Chunk(16),
                                   ChunkSetting::Chunk(8), ChunkSetting::Chunk(4)};
  DecodeOptions decode;  // pass 2 evaluates both passes
};

struct ExperimentCell {
  Bridge bridge = Bridge::kNone;
  uint64_t seed = 0;
  std::vector<CerRow> cer;
  LossBreakdown first_step;
  Checkpoint model;
  TrainLog log;

  // -1 when the grid lacks that entry.
  double CerAt(ChunkSetting chunk, int pass) const;
};

struct ExperimentReport {
  std::vector<ChunkSetting> chunks;
  std::vector<ExperimentCell> cells;

  const ExperimentCell& Cell(Bridge bridge, uint64_t seed) const;
  // Rows per bridge setting (mean over seeds), columns first pass then
  // second pass over the chunk grid; a per-seed table follows.
  std::string Markdown() const;
  std::string Csv() const;  // bridge,seed,mode,chunk,pass,cer
};

using CellCallback = std::function<void(const ExperimentCell&)>;

// Trains every (bridge, seed) pair from the same initialization per seed and
// evaluates CER on `test`.
ExperimentReport RunExperiment(const std::vector<Utterance>& train,
                               const std::vector<Utterance>& dev,
                               const std::vector<Utterance>& test,
                               const ModelConfig& model, const TrainConfig& base,
                               const ExperimentConfig& experiment,
                               const CellCallback& on_cell = {});

}  // namespace uasr

#endif  // UASR_TRAINING_H_
