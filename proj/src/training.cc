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

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "uasr/lengths.h"

namespace uasr {
namespace {

enum Stream : uint64_t { kInit = 1, kShuffle, kChunk, kNegatives, kAugment, kDropout };

std::string Num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string ChunkPolicyMode(ChunkPolicy::Mode m) {
  switch (m) {
    case ChunkPolicy::Mode::kFull:
      return "full";
    case ChunkPolicy::Mode::kFixed:
      return "fixed";
    case ChunkPolicy::Mode::kDynamic:
      return "dynamic";
  }
  return "dynamic";
}

ChunkPolicy::Mode ParseChunkPolicyMode(const std::string& s) {
  if (s == "full") return ChunkPolicy::Mode::kFull;
  if (s == "fixed") return ChunkPolicy::Mode::kFixed;
  if (s == "dynamic") return ChunkPolicy::Mode::kDynamic;
  throw std::invalid_argument("unknown chunk policy '" + s + "'");
}

std::vector<int> DecoderInput(const TokenSequence& tokens, int sos) {
  std::vector<int> in{sos};
  in.insert(in.end(), tokens.begin(), tokens.end());
  return in;
}

std::vector<int> DecoderTarget(const TokenSequence& tokens, int eos) {
  std::vector<int> out(tokens.begin(), tokens.end());
  out.push_back(eos);
  return out;
}

}  // namespace

double LrSchedule(int64_t step, double peak, int warmup) {
  if (warmup < 1) throw std::invalid_argument("warmup_steps must be >= 1");
  if (step <= 0) return 0.0;
  const double s = static_cast<double>(step), w = static_cast<double>(warmup);
  return peak * std::min(s / w, std::sqrt(w / s));
}

uint64_t DeriveSeed(uint64_t seed, uint64_t stream) {
  // splitmix64 finalizer over the pair.
  uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

TrainRngs::TrainRngs(uint64_t seed)
    : shuffle(DeriveSeed(seed, kShuffle)),
      chunk(DeriveSeed(seed, kChunk)),
      negatives(DeriveSeed(seed, kNegatives)),
      augment(DeriveSeed(seed, kAugment)),
      dropout(DeriveSeed(seed, kDropout)) {}

void TrainConfig::Validate() const {
  if (epochs < 1) throw std::invalid_argument("epochs must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (warmup_steps < 1) throw std::invalid_argument("warmup_steps must be >= 1");
  if (!(peak_lr >= 0) || !std::isfinite(peak_lr))
    throw std::invalid_argument("peak_lr must be finite and >= 0");
  if (!(ctc_weight >= 0 && ctc_weight <= 1))
    throw std::invalid_argument("ctc_weight (lambda) must lie in [0, 1]");
  if (!(grad_clip > 0)) throw std::invalid_argument("grad_clip must be > 0");
  if (average_top_k < 1) throw std::invalid_argument("average_top_k must be >= 1");
  if (validation_chunk < 1)
    throw std::invalid_argument("validation_chunk must be >= 1");
  if (validation_beam < 1) throw std::invalid_argument("validation_beam must be >= 1");
  if (augment.num_time_masks < 0 || augment.num_freq_masks < 0 ||
      augment.max_time_mask_width < 0 || augment.max_freq_mask_width < 0)
    throw std::invalid_argument("augment counts and widths must be >= 0");
  bridge.Validate();
  chunk_policy.Validate();
}

nlohmann::json TrainConfig::ToJson() const {
  return {
      {"epochs", epochs},
      {"batch_size", batch_size},
      {"peak_lr", peak_lr},
      {"warmup_steps", warmup_steps},
      {"seed", seed},
      {"ctc_weight", ctc_weight},
      {"bridge",
       {{"type", BridgeName(bridge.bridge)},
        {"temperature", bridge.temperature},
        {"num_negatives", bridge.num_negatives},
        {"weight", bridge.weight},
        {"contrastive_stop_gradient", bridge.contrastive_stop_gradient},
        {"l2_stop_gradient", bridge.l2_stop_gradient}}},
      {"chunk_policy",
       {{"mode", ChunkPolicyMode(chunk_policy.mode)},
        {"fixed_chunk", chunk_policy.fixed_chunk},
        {"max_chunk", chunk_policy.max_chunk},
        {"p_full", chunk_policy.p_full}}},
      {"grad_clip", grad_clip},
      {"augment",
       {{"num_time_masks", augment.num_time_masks},
        {"max_time_mask_width", augment.max_time_mask_width},
        {"num_freq_masks", augment.num_freq_masks},
        {"max_freq_mask_width", augment.max_freq_mask_width}}},
      {"average_top_k", average_top_k},
      {"checkpoint_dir", checkpoint_dir},
      {"validation_chunk", validation_chunk},
      {"validation_beam", validation_beam},
      {"validation_cer", validation_cer},
  };
}

TrainConfig TrainConfig::FromJson(const nlohmann::json& j) {
  TrainConfig c;
  c.epochs = j.at("epochs").get<int>();
  c.batch_size = j.at("batch_size").get<int>();
  c.peak_lr = j.at("peak_lr").get<double>();
  c.warmup_steps = j.at("warmup_steps").get<int>();
  c.seed = j.at("seed").get<uint64_t>();
  c.ctc_weight = j.at("ctc_weight").get<double>();
  const auto& b = j.at("bridge");
  c.bridge.bridge = ParseBridge(b.at("type").get<std::string>());
  c.bridge.temperature = b.at("temperature").get<double>();
  c.bridge.num_negatives = b.at("num_negatives").get<int>();
  c.bridge.weight = b.at("weight").get<double>();
  c.bridge.contrastive_stop_gradient = b.at("contrastive_stop_gradient").get<bool>();
  c.bridge.l2_stop_gradient = b.at("l2_stop_gradient").get<bool>();
  const auto& p = j.at("chunk_policy");
  c.chunk_policy.mode = ParseChunkPolicyMode(p.at("mode").get<std::string>());
  c.chunk_policy.fixed_chunk = p.at("fixed_chunk").get<int>();
  c.chunk_policy.max_chunk = p.at("max_chunk").get<int>();
  c.chunk_policy.p_full = p.at("p_full").get<double>();
  c.grad_clip = j.at("grad_clip").get<double>();
  const auto& a = j.at("augment");
  c.augment.num_time_masks = a.at("num_time_masks").get<int>();
  c.augment.max_time_mask_width = a.at("max_time_mask_width").get<int>();
  c.augment.num_freq_masks = a.at("num_freq_masks").get<int>();
  c.augment.max_freq_mask_width = a.at("max_freq_mask_width").get<int>();
  c.average_top_k = j.at("average_top_k").get<int>();
  c.checkpoint_dir = j.at("checkpoint_dir").get<std::string>();
  c.validation_chunk = j.at("validation_chunk").get<int>();
  c.validation_beam = j.at("validation_beam").get<int>();
  c.validation_cer = j.at("validation_cer").get<bool>();
  c.Validate();
  return c;
}

BatchLoss ComputeBatchLoss(std::span<const Utterance> batch,
                           const Parameters<float>& params,
                           const ModelConfig& model, double ctc_weight,
                           ChunkSetting streaming_chunk,
                           const ContrastiveConfig* bridge,
                           std::mt19937_64* negatives_rng,
                           std::mt19937_64* dropout_rng) {
  if (batch.empty()) throw std::invalid_argument("empty batch");
  const auto vocab = model.vocab();
  const float lambda = static_cast<float>(ctc_weight);
  const bool use_bridge = bridge != nullptr && bridge->bridge != Bridge::kNone;
  if (use_bridge && bridge->bridge == Bridge::kContrastive && negatives_rng == nullptr)
    throw std::invalid_argument("contrastive bridge needs a negatives RNG");
  BatchLoss out;
  Tensor<float> sum;
  for (const auto& u : batch) {
    const auto x = FramesTensor<float>(u);
    std::vector<const void*> reads_s, reads_ns;
    ForwardOptions opt_s{dropout_rng, &reads_s};
    ForwardOptions opt_ns{dropout_rng, &reads_ns};
    const auto hs = Encode(x, streaming_chunk, params, model, opt_s);
    const auto hns = Encode(x, ChunkSetting::Full(), params, model, opt_ns);
    // Weight sharing is by identity: both passes read the same tensors.
    if (reads_s != reads_ns)
      throw std::logic_error("encoder passes read different parameter tensors");

    const auto din = DecoderInput(u.tokens, vocab.sos_eos());
    const auto dout = DecoderTarget(u.tokens, vocab.sos_eos());
    auto ctc_s = CtcLoss(CtcHead(hs, params), u.tokens, vocab.blank());
    auto ctc_ns = CtcLoss(CtcHead(hns, params), u.tokens, vocab.blank());
    auto aed_s = AedLoss(DecoderForward(hs, din, params, model, opt_s), dout,
                         model.label_smoothing);
    auto aed_ns = AedLoss(DecoderForward(hns, din, params, model, opt_ns), dout,
                          model.label_smoothing);
    auto total = Add(Add(Scale(ctc_s, lambda), Scale(aed_s, 1 - lambda)),
                     Add(Scale(ctc_ns, lambda), Scale(aed_ns, 1 - lambda)));
    double bridge_value = 0;
    if (use_bridge) {
      auto b = bridge->bridge == Bridge::kContrastive
                   ? ContrastiveLoss(hs.hidden, hns.hidden, *bridge, *negatives_rng)
                   : L2BridgeLoss(hs.hidden, hns.hidden, bridge->l2_stop_gradient);
      bridge_value = b.item();
      total = Add(total, Scale(b, static_cast<float>(bridge->weight)));
    }
    out.breakdown.ctc_s += ctc_s.item();
    out.breakdown.aed_s += aed_s.item();
    out.breakdown.ctc_ns += ctc_ns.item();
    out.breakdown.aed_ns += aed_ns.item();
    out.breakdown.bridge += bridge_value;
    sum = sum.defined() ? Add(sum, total) : total;
  }
  const double n = static_cast<double>(batch.size());
  auto& b = out.breakdown;
  for (double* v : {&b.ctc_s, &b.aed_s, &b.ctc_ns, &b.aed_ns, &b.bridge}) *v /= n;
  b.total = CombineLosses(b, ctc_weight, use_bridge ? bridge->weight : 0.0);
  out.total = Scale(sum, static_cast<float>(1.0 / n));
  return out;
}

StepStats TrainStep(std::span<const Utterance> batch, Parameters<float>& params,
                    AdamState& adam, const ModelConfig& model,
                    const TrainConfig& cfg, TrainRngs& rngs) {
  const int64_t step = adam.step + 1;
  StepStats stats;
  stats.chunk = SampleChunk(cfg.chunk_policy, rngs.chunk);
  stats.lr = LrSchedule(step, cfg.peak_lr, cfg.warmup_steps);

  std::vector<Utterance> augmented;
  const auto& a = cfg.augment;
  const bool augment = a.num_time_masks > 0 || a.num_freq_masks > 0;
  if (augment)
    for (const auto& u : batch) augmented.push_back(SpecAugment(u, a, rngs.augment));
  const std::span<const Utterance> inputs =
      augment ? std::span<const Utterance>(augmented) : batch;

  auto fail = [&](const std::string& what) {
    return NumericError("step " + std::to_string(step) + " (chunk " +
                        stats.chunk.ToString() + "): " + what);
  };
  try {
    auto loss = ComputeBatchLoss(inputs, params, model, cfg.ctc_weight,
                                 stats.chunk, &cfg.bridge, &rngs.negatives,
                                 model.dropout > 0 ? &rngs.dropout : nullptr);
    stats.loss = loss.breakdown;
    if (!std::isfinite(stats.loss.total)) throw fail("non-finite loss");
    loss.total.Backward();
  } catch (const NumericError& e) {
    if (std::string(e.what()).rfind("step ", 0) == 0) throw;
    throw fail(e.what());
  }

  double norm2 = 0;
  for (auto& [name, p] : params)
    if (p.has_grad())
      for (float g : p.grad()) norm2 += static_cast<double>(g) * g;
  stats.grad_norm = std::sqrt(norm2);
  if (!std::isfinite(stats.grad_norm)) throw fail("non-finite gradient");
  const double clip =
      stats.grad_norm > cfg.grad_clip ? cfg.grad_clip / stats.grad_norm : 1.0;

  adam.step = step;
  const double bc1 = 1 - std::pow(kAdamBeta1, static_cast<double>(step));
  const double bc2 = 1 - std::pow(kAdamBeta2, static_cast<double>(step));
  for (auto& [name, p] : params) {
    auto& m = adam.m[name];
    auto& v = adam.v[name];
    m.resize(p.size(), 0.0);
    v.resize(p.size(), 0.0);
    if (!p.has_grad()) continue;
    auto g = p.grad();
    auto w = p.mutable_data();
    for (size_t i = 0; i < w.size(); ++i) {
      const double gi = clip * g[i];
      m[i] = kAdamBeta1 * m[i] + (1 - kAdamBeta1) * gi;
      v[i] = kAdamBeta2 * v[i] + (1 - kAdamBeta2) * gi * gi;
      if (stats.lr == 0) continue;
      const double update = stats.lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + kAdamEps);
      w[i] = static_cast<float>(w[i] - update);
    }
    p.ZeroGrad();
  }
  return stats;
}

std::string TrainLog::StepsCsv() const {
  std::ostringstream os;
  os << "step,epoch,chunk,ctc_s,aed_s,ctc_ns,aed_ns,bridge,total,lr,grad_norm\n";
  for (const auto& r : steps) {
    const auto& l = r.stats.loss;
    os << r.step << "," << r.epoch << "," << r.stats.chunk.ToString() << ","
       << Num(l.ctc_s) << "," << Num(l.aed_s) << "," << Num(l.ctc_ns) << ","
       << Num(l.aed_ns) << "," << Num(l.bridge) << "," << Num(l.total) << ","
       << Num(r.stats.lr) << "," << Num(r.stats.grad_norm) << "\n";
  }
  return os.str();
}

std::string TrainLog::EpochsCsv() const {
  std::ostringstream os;
  os << "epoch,step,train_loss,validation_loss,cer_full,cer_chunk\n";
  for (const auto& r : epochs)
    os << r.epoch << "," << r.step << "," << Num(r.train_loss) << ","
       << Num(r.validation_loss) << "," << Num(r.cer_full) << ","
       << Num(r.cer_chunk) << "\n";
  return os.str();
}

void TrainLog::Write(const std::string& steps_path,
                     const std::string& epochs_path) const {
  for (const auto& [path, text] :
       {std::pair{steps_path, StepsCsv()}, std::pair{epochs_path, EpochsCsv()}}) {
    std::ofstream os(path, std::ios::binary);
    os << text;
    if (!os) throw std::runtime_error("failed writing " + path);
  }
}

double ValidationLoss(const std::vector<Utterance>& dev,
                      const Parameters<float>& params, const ModelConfig& model,
                      double ctc_weight, int chunk) {
  NoGradGuard no_grad;
  double total = 0;
  for (const auto& u : dev)
    total += ComputeBatchLoss(std::span<const Utterance>(&u, 1), params, model,
                              ctc_weight, ChunkSetting::Chunk(chunk), nullptr,
                              nullptr)
                 .breakdown.total;
  return total / static_cast<double>(dev.size());
}

TrainResult Train(const std::vector<Utterance>& train,
                  const std::vector<Utterance>& dev, const ModelConfig& model,
                  const TrainConfig& cfg, const EpochCallback& on_epoch) {
  cfg.Validate();
  model.Validate();
  if (train.empty()) throw std::invalid_argument("training set is empty");
  if (dev.empty()) throw std::invalid_argument("validation set is empty");
  for (const auto* set : {&train, &dev})
    for (const auto& u : *set) {
      ValidateUtterance(u, model.vocab());
      if (u.feat_dim != model.feat_dim)
        throw std::invalid_argument("utterance " + u.id +
                                    " feature size differs from the model");
    }
  if (!cfg.checkpoint_dir.empty())
    std::filesystem::create_directories(cfg.checkpoint_dir);

  TrainResult result;
  auto params = InitParams<float>(DeriveSeed(cfg.seed, kInit), model);
  AdamState adam;
  TrainRngs rngs(cfg.seed);
  std::vector<size_t> order(train.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rngs.shuffle);
    double epoch_loss = 0;
    int epoch_steps = 0;
    for (size_t start = 0; start < order.size(); start += cfg.batch_size) {
      std::vector<Utterance> batch;
      for (size_t i = start; i < std::min(order.size(), start + cfg.batch_size); ++i)
        batch.push_back(train[order[i]]);
      auto stats = TrainStep(batch, params, adam, model, cfg, rngs);
      epoch_loss += stats.loss.total;
      ++epoch_steps;
      result.log.steps.push_back({adam.step, epoch, stats});
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.step = adam.step;
    rec.train_loss = epoch_loss / epoch_steps;
    rec.validation_loss =
        ValidationLoss(dev, params, model, cfg.ctc_weight, cfg.validation_chunk);
    if (cfg.validation_cer) {
      DecodeOptions o;
      o.pass = 1;
      o.beam = cfg.validation_beam;
      auto rows = EvaluateCer(params, model, dev,
                              {ChunkSetting::Full(),
                               ChunkSetting::Chunk(cfg.validation_chunk)},
                              o);
      rec.cer_full = rows[0].cer;
      rec.cer_chunk = rows[1].cer;
    }
    result.log.epochs.push_back(rec);

    Checkpoint ckpt;
    ckpt.config = model;
    ckpt.validation_loss = rec.validation_loss;
    ckpt.step = adam.step;
    for (const auto& [name, p] : params) ckpt.params.emplace(name, p.Clone(false));
    if (!cfg.checkpoint_dir.empty()) {
      char name[32];
      std::snprintf(name, sizeof(name), "epoch_%03d.ckpt", epoch);
      SaveCheckpoint((std::filesystem::path(cfg.checkpoint_dir) / name).string(),
                     ckpt);
    }
    result.checkpoints.push_back(std::move(ckpt));
    if (on_epoch) on_epoch(rec);
  }

  result.averaged = AverageCheckpoints(
      result.checkpoints,
      std::min<int>(cfg.average_top_k, static_cast<int>(result.checkpoints.size())));
  if (!cfg.checkpoint_dir.empty()) {
    const std::filesystem::path dir(cfg.checkpoint_dir);
    SaveCheckpoint((dir / "avg.ckpt").string(), result.averaged);
    result.log.Write((dir / "train_log.csv").string(),
                     (dir / "validation.csv").string());
  }
  return result;
}

double ExperimentCell::CerAt(ChunkSetting chunk, int pass) const {
  for (const auto& r : cer)
    if (r.chunk == chunk && r.pass == pass) return r.cer;
  return -1;
}

const ExperimentCell& ExperimentReport::Cell(Bridge bridge, uint64_t seed) const {
  for (const auto& c : cells)
    if (c.bridge == bridge && c.seed == seed) return c;
  throw std::out_of_range("no experiment cell for " + BridgeName(bridge) +
                          " seed " + std::to_string(seed));
}

std::string ExperimentReport::Markdown() const {
  std::vector<Bridge> bridges;
  std::vector<uint64_t> seeds;
  for (const auto& c : cells) {
    if (std::find(bridges.begin(), bridges.end(), c.bridge) == bridges.end())
      bridges.push_back(c.bridge);
    if (std::find(seeds.begin(), seeds.end(), c.seed) == seeds.end())
      seeds.push_back(c.seed);
  }
  auto header = [&](std::ostringstream& os, bool with_seed) {
    os << "| Contrastive Loss | L2 Loss |" << (with_seed ? " Seed |" : "");
    for (int pass : {1, 2})
      for (const auto& c : chunks)
        os << " " << (pass == 1 ? "1st" : "2nd") << " pass " << c.ToString() << " |";
    os << "\n|---|---|" << (with_seed ? "---|" : "");
    for (size_t i = 0; i < 2 * chunks.size(); ++i) os << "---|";
    os << "\n";
  };
  auto flags = [](Bridge b) {
    return std::string("| ") + (b == Bridge::kContrastive ? "Yes" : "No") + " | " +
           (b == Bridge::kL2 ? "Yes" : "No") + " |";
  };
  char buf[32];
  std::ostringstream os;
  os << "CER (%) on the test set, mean over " << seeds.size() << " seed(s).\n\n";
  header(os, false);
  for (Bridge b : bridges) {
    os << flags(b);
    for (int pass : {1, 2})
      for (const auto& c : chunks) {
        double sum = 0;
        int n = 0;
        for (const auto& cell : cells)
          if (cell.bridge == b && cell.CerAt(c, pass) >= 0) {
            sum += cell.CerAt(c, pass);
            ++n;
          }
        if (n == 0) {
          os << " - |";
          continue;
        }
        std::snprintf(buf, sizeof(buf), " %.2f |", 100 * sum / n);
        os << buf;
      }
    os << "\n";
  }
  os << "\nPer seed:\n\n";
  header(os, true);
  for (Bridge b : bridges)
    for (uint64_t s : seeds) {
      const auto& cell = Cell(b, s);
      os << flags(b) << " " << s << " |";
      for (int pass : {1, 2})
        for (const auto& c : chunks) {
          const double v = cell.CerAt(c, pass);
          if (v < 0) {
            os << " - |";
            continue;
          }
          std::snprintf(buf, sizeof(buf), " %.2f |", 100 * v);
          os << buf;
        }
      os << "\n";
    }
  return os.str();
}

std::string ExperimentReport::Csv() const {
  std::ostringstream os;
  os << "bridge,seed,mode,chunk,pass,cer\n";
  for (const auto& cell : cells)
    for (const auto& r : cell.cer)
      os << BridgeName(cell.bridge) << "," << cell.seed << "," << r.mode() << ","
         << r.chunk.ToString() << "," << r.pass << "," << Num(r.cer) << "\n";
  return os.str();
}

ExperimentReport RunExperiment(const std::vector<Utterance>& train,
                               const std::vector<Utterance>& dev,
                               const std::vector<Utterance>& test,
                               const ModelConfig& model, const TrainConfig& base,
                               const ExperimentConfig& experiment,
                               const CellCallback& on_cell) {
  if (experiment.bridges.empty() || experiment.seeds.empty())
    throw std::invalid_argument("experiment matrix is empty");
  if (test.empty()) throw std::invalid_argument("test set is empty");
  ExperimentReport report;
  report.chunks = experiment.chunks;
  for (uint64_t seed : experiment.seeds)
    for (Bridge b : experiment.bridges) {
      TrainConfig cfg = base;
      cfg.seed = seed;
      cfg.bridge.bridge = b;
      if (!base.checkpoint_dir.empty())
        cfg.checkpoint_dir = (std::filesystem::path(base.checkpoint_dir) /
                              (BridgeName(b) + "_seed" + std::to_string(seed)))
                                 .string();
      auto result = Train(train, dev, model, cfg);
      ExperimentCell cell;
      cell.bridge = b;
      cell.seed = seed;
      cell.first_step = result.log.steps.front().stats.loss;
      cell.cer = EvaluateCer(result.averaged.params, model, test,
                             experiment.chunks, experiment.decode);
      cell.model = std::move(result.averaged);
      cell.log = std::move(result.log);
      if (on_cell) on_cell(cell);
      report.cells.push_back(std::move(cell));
    }
  return report;
}

}  // namespace uasr
