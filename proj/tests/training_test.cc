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

#include "uasr/training.h"

#include <cmath>
#include <cstring>
#include <filesystem>
#include <set>

#include "gtest/gtest.h"
#include "probes.h"

namespace uasr {
namespace {

TEST(LrScheduleTest, Examples) {
  EXPECT_DOUBLE_EQ(LrSchedule(500, 1e-3, 500), 1e-3);
  EXPECT_DOUBLE_EQ(LrSchedule(250, 1e-3, 500), 5e-4);
  EXPECT_DOUBLE_EQ(LrSchedule(2000, 1e-3, 500), 5e-4);
  EXPECT_EQ(LrSchedule(0, 1e-3, 500), 0.0);
  EXPECT_THROW(LrSchedule(1, 1e-3, 0), std::invalid_argument);
}

ModelConfig Small() {
  auto c = testing::TinyConfig();
  c.dropout = 0.1;
  return c;
}

std::vector<Utterance> SmallCorpus(uint64_t seed, size_t n) {
  const auto c = Small();
  return GenerateCorpus(seed, n, c.vocab(), c.feat_dim, 0.3);
}

TrainConfig SmallTrain() {
  TrainConfig t;
  t.epochs = 2;
  t.batch_size = 4;
  t.warmup_steps = 4;
  t.average_top_k = 2;
  t.validation_beam = 2;
  return t;
}

TEST(BatchLossTest, NoBridgeTotalIsBranchSum) {
  const auto c = Small();
  auto params = InitParams<float>(1, c);
  auto batch = SmallCorpus(1, 3);
  ContrastiveConfig none;
  none.bridge = Bridge::kNone;
  auto loss = ComputeBatchLoss(batch, params, c, 0.3, ChunkSetting::Chunk(2),
                               &none, nullptr);
  const auto& b = loss.breakdown;
  const double ls = 0.3 * b.ctc_s + 0.7 * b.aed_s;
  const double lns = 0.3 * b.ctc_ns + 0.7 * b.aed_ns;
  EXPECT_NEAR(b.total, ls + lns, 1e-6);
  EXPECT_NEAR(loss.total.item(), ls + lns, 1e-4 * (ls + lns));
  EXPECT_EQ(b.bridge, 0.0);

  // Independent recomputation of one branch term from the public heads.
  double ctc_s = 0;
  for (const auto& u : batch) {
    auto h = Encode(FramesTensor<float>(u), ChunkSetting::Chunk(2), params, c);
    ctc_s += CtcLoss(CtcHead(h, params), u.tokens, c.vocab().blank()).item();
  }
  EXPECT_NEAR(b.ctc_s, ctc_s / 3, 1e-6);
}

TEST(BatchLossTest, BridgeTermsAreWeighted) {
  const auto c = Small();
  auto params = InitParams<float>(2, c);
  auto batch = SmallCorpus(2, 2);
  ContrastiveConfig l2;
  l2.bridge = Bridge::kL2;
  l2.weight = 2.5;
  auto loss = ComputeBatchLoss(batch, params, c, 0.3, ChunkSetting::Chunk(1),
                               &l2, nullptr);
  EXPECT_GT(loss.breakdown.bridge, 0.0);
  LossBreakdown copy = loss.breakdown;
  EXPECT_NEAR(copy.total, CombineLosses(copy, 0.3, 2.5), 1e-9);
  ContrastiveConfig ctl;
  EXPECT_THROW(ComputeBatchLoss(batch, params, c, 0.3, ChunkSetting::Chunk(1),
                                &ctl, nullptr),
               std::invalid_argument);
}

TEST(TrainStepTest, ZeroLearningRateLeavesParametersBitIdentical) {
  const auto c = Small();
  auto params = InitParams<float>(3, c);
  Parameters<float> before;
  for (const auto& [n, p] : params) before.emplace(n, p.Clone(false));
  TrainConfig cfg;
  cfg.peak_lr = 0.0;
  AdamState adam;
  TrainRngs rngs(3);
  auto batch = SmallCorpus(3, 4);
  auto stats = TrainStep(batch, params, adam, c, cfg, rngs);
  EXPECT_EQ(stats.lr, 0.0);
  EXPECT_GT(stats.grad_norm, 0.0);
  for (const auto& [n, p] : params)
    EXPECT_EQ(std::memcmp(p.data().data(), before.at(n).data().data(),
                          p.size() * sizeof(float)),
              0)
        << n;
}

TEST(TrainStepTest, FirstAdamStepMovesBySignedLearningRate) {
  const auto c = Small();
  auto params = InitParams<float>(4, c);
  Parameters<float> before;
  for (const auto& [n, p] : params) before.emplace(n, p.Clone(false));
  TrainConfig cfg;
  cfg.peak_lr = 1e-3;
  cfg.warmup_steps = 1;
  cfg.grad_clip = 1e9;
  AdamState adam;
  TrainRngs rngs(4);
  auto batch = SmallCorpus(4, 2);
  TrainStep(batch, params, adam, c, cfg, rngs);
  // With bias correction, step one is lr * g / (|g| + eps) per element.
  int moved = 0;
  for (const auto& [n, p] : params)
    for (size_t i = 0; i < p.size(); ++i) {
      const double d = std::abs(double(p.data()[i]) - before.at(n).data()[i]);
      EXPECT_LE(d, 1e-3 * (1 + 1e-3)) << n;
      if (d > 0.9e-3) ++moved;
    }
  EXPECT_GT(moved, 100);
}

TEST(TrainStepTest, NonFiniteLossAbortsWithStep) {
  const auto c = Small();
  auto params = InitParams<float>(5, c);
  params.at("ctc.bias").mutable_data()[0] = std::nanf("");
  TrainConfig cfg;
  AdamState adam;
  TrainRngs rngs(5);
  auto batch = SmallCorpus(5, 2);
  try {
    TrainStep(batch, params, adam, c, cfg, rngs);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_EQ(std::string(e.what()).rfind("step 1 (chunk ", 0), 0u) << e.what();
  }
}

TEST(TrainStepTest, BothEncoderPassesReadIdenticalTensors) {
  const auto c = Small();
  auto params = InitParams<float>(6, c);
  auto u = SmallCorpus(6, 1)[0];
  std::vector<const void*> a, b;
  ForwardOptions oa{nullptr, &a}, ob{nullptr, &b};
  Encode(FramesTensor<float>(u), ChunkSetting::Chunk(1), params, c, oa);
  Encode(FramesTensor<float>(u), ChunkSetting::Full(), params, c, ob);
  EXPECT_EQ(a, b);
  std::set<const void*> encoder;
  for (const auto& [n, p] : params)
    if (n.rfind("encoder.", 0) == 0) encoder.insert(p.node());
  EXPECT_EQ(std::set<const void*>(a.begin(), a.end()), encoder);
}

TEST(TrainConfigTest, JsonRoundTripAndValidation) {
  TrainConfig t;
  t.bridge.bridge = Bridge::kL2;
  t.augment.num_time_masks = 2;
  t.checkpoint_dir = "x/y";
  auto back = TrainConfig::FromJson(t.ToJson());
  EXPECT_EQ(back.ToJson(), t.ToJson());
  t.warmup_steps = 0;
  EXPECT_THROW(t.Validate(), std::invalid_argument);
  t.warmup_steps = 1;
  t.epochs = 0;
  EXPECT_THROW(t.Validate(), std::invalid_argument);
}

TEST(TrainTest, DeterministicLogsAndCheckpoints) {
  const auto c = Small();
  auto all = SmallCorpus(7, 14);
  std::vector<Utterance> train(all.begin(), all.begin() + 10),
      dev(all.begin() + 10, all.end());
  auto cfg = SmallTrain();
  const auto dir = std::filesystem::temp_directory_path() / "uasr_train_det";
  std::filesystem::remove_all(dir);
  cfg.checkpoint_dir = dir.string();
  auto a = Train(train, dev, c, cfg);
  cfg.checkpoint_dir.clear();
  auto b = Train(train, dev, c, cfg);
  EXPECT_EQ(a.log.StepsCsv(), b.log.StepsCsv());
  EXPECT_EQ(a.log.EpochsCsv(), b.log.EpochsCsv());
  EXPECT_EQ(a.log.steps.size(), 6u);
  ASSERT_EQ(a.log.epochs.size(), 2u);
  for (const auto& [n, p] : a.averaged.params)
    EXPECT_EQ(std::memcmp(p.data().data(), b.averaged.params.at(n).data().data(),
                          p.size() * sizeof(float)),
              0);
  for (const char* f : {"epoch_001.ckpt", "epoch_002.ckpt", "avg.ckpt",
                        "train_log.csv", "validation.csv"})
    EXPECT_TRUE(std::filesystem::exists(dir / f)) << f;
  // The stored validation loss is the pure ASR loss of that epoch's weights.
  EXPECT_NEAR(a.checkpoints[1].validation_loss,
              ValidationLoss(dev, a.checkpoints[1].params, c, 0.3, 4), 1e-9);
  std::filesystem::remove_all(dir);
}

TEST(TrainTest, BridgeArmsShareInitialization) {
  const auto c = Small();
  auto all = SmallCorpus(8, 10);
  std::vector<Utterance> train(all.begin(), all.begin() + 8),
      dev(all.begin() + 8, all.end());
  auto cfg = SmallTrain();
  cfg.epochs = 1;
  cfg.validation_cer = false;
  std::vector<LossBreakdown> first;
  for (Bridge b : {Bridge::kNone, Bridge::kL2, Bridge::kContrastive}) {
    cfg.bridge.bridge = b;
    first.push_back(Train(train, dev, c, cfg).log.steps.front().stats.loss);
  }
  for (const auto& f : first) {
    EXPECT_EQ(f.ctc_s, first[0].ctc_s);
    EXPECT_EQ(f.aed_s, first[0].aed_s);
    EXPECT_EQ(f.ctc_ns, first[0].ctc_ns);
    EXPECT_EQ(f.aed_ns, first[0].aed_ns);
  }
  EXPECT_EQ(first[0].bridge, 0.0);
  EXPECT_GT(first[1].bridge, 0.0);
  EXPECT_GT(first[2].bridge, 0.0);
}

TEST(TrainTest, RejectsBadInputs) {
  const auto c = Small();
  auto all = SmallCorpus(9, 3);
  EXPECT_THROW(Train({}, all, c, SmallTrain()), std::invalid_argument);
  EXPECT_THROW(Train(all, {}, c, SmallTrain()), std::invalid_argument);
  auto other = GenerateCorpus(9, 2, c.vocab(), c.feat_dim + 1, 0.3);
  EXPECT_THROW(Train(other, all, c, SmallTrain()), std::invalid_argument);
}

TEST(ExperimentTest, SingleSettingGivesOneRowBlock) {
  const auto c = Small();
  auto all = SmallCorpus(10, 12);
  std::vector<Utterance> train(all.begin(), all.begin() + 8),
      dev(all.begin() + 8, all.begin() + 10), test(all.begin() + 10, all.end());
  auto cfg = SmallTrain();
  cfg.epochs = 1;
  cfg.validation_cer = false;
  ExperimentConfig exp;
  exp.bridges = {Bridge::kContrastive};
  exp.decode.beam = 2;
  auto report = RunExperiment(train, dev, test, c, cfg, exp);
  ASSERT_EQ(report.cells.size(), 1u);
  EXPECT_EQ(report.cells[0].cer.size(), 8u);
  const auto md = report.Markdown();
  EXPECT_NE(md.find("| Contrastive Loss | L2 Loss |"), std::string::npos);
  EXPECT_NE(md.find("| Yes | No |"), std::string::npos);
  EXPECT_EQ(md.find("| No | No |"), std::string::npos);
  // Header plus 4 chunks x 2 passes.
  const auto csv = report.Csv();
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 9);
  EXPECT_GE(report.Cell(Bridge::kContrastive, 1).CerAt(ChunkSetting::Chunk(4), 2),
            0.0);
  EXPECT_THROW(report.Cell(Bridge::kNone, 1), std::out_of_range);
}

}  // namespace
}  // namespace uasr
