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

// Acceptance run. Prints one PASS/FAIL line per criterion and exits non-zero
// if any criterion fails. The toy training grid takes several minutes.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "grad_suite.h"
#include "oracles.h"
#include "probes.h"
#include "test_util.h"
#include "uasr/analysis.h"
#include "uasr/checkpoint.h"
#include "uasr/cli.h"
#include "uasr/data.h"
#include "uasr/decoding.h"
#include "uasr/lengths.h"
#include "uasr/losses.h"
#include "uasr/model.h"
#include "uasr/ngram.h"
#include "uasr/training.h"

namespace uasr {
namespace {

namespace fs = std::filesystem;
using testing::RandomTensor;

class Timer {
 public:
  double Seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                         start_)
        .count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

int failures = 0;

void Report(int id, bool pass, const std::string& detail) {
  if (!pass) ++failures;
  std::printf("%s criterion %d: %s\n", pass ? "PASS" : "FAIL", id,
              detail.c_str());
  std::fflush(stdout);
}

std::string Fmt(const char* format, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), format, args...);
  return buf;
}

std::string Slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(is)), {});
}

void GradientSuite() {
  Timer timer;
  std::mt19937_64 rng(2024);
  double worst = 0;
  std::string worst_case;
  int checks = 0;
  auto visit = [&](const std::string& name, const ScalarFn& f,
                   const Tensor<double>& at) {
    const double err = GradCheck(f, at);
    ++checks;
    if (!(err <= worst)) worst = err, worst_case = name;
  };
  for (int trial = 0; trial < 20; ++trial) {
    testing::PrimitiveGradCases(trial, rng, visit);
    testing::LossGradCases(trial, rng, visit);
  }
  const double secs = timer.Seconds();
  Report(1, worst < 1e-4 && secs < 120,
         Fmt("gradient suite, %d checks (20 instances per case), max rel err "
             "%.2e at %s (< 1e-4), %.1f s",
             checks, worst, worst_case.c_str(), secs));
}

void CtcOracle() {
  Timer timer;
  std::mt19937_64 rng(42);
  double worst = 0;
  int instances = 0;
  for (int frames = 1; frames <= 6; ++frames)
    for (int vocab = 1; vocab <= 4; ++vocab) {
      const int dim = vocab + 1, blank = vocab;
      auto lp = LogSoftmax(RandomTensor({frames, dim}, rng, 1.5));
      std::vector<double> probs;
      for (double v : lp.data()) probs.push_back(std::exp(v));
      auto paths = testing::EnumerateCtc(probs, frames, dim, blank);
      for (const auto& target : testing::AllSequences(vocab, 3)) {
        if (CtcMinFrames(target) > frames) continue;
        const double want = -std::log(paths[target]);
        worst = std::max(worst, std::abs(CtcLoss(lp, target, blank).item() - want));
        ++instances;
      }
    }
  const double secs = timer.Seconds();
  Report(2, worst <= 1e-8 && secs < 60,
         Fmt("CTC vs alignment enumeration, %d feasible instances, max |diff| "
             "%.2e (<= 1e-8), %.1f s",
             instances, worst, secs));
}

void BeamOracle() {
  std::mt19937_64 rng(31);
  int token_mismatch = 0;
  double worst = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const int frames = 1 + trial % 4, dim = 2 + trial % 3;
    auto p = testing::RandomPosteriors(frames, dim, rng);
    auto best = testing::ExhaustiveBest(p, frames, dim);
    auto hyps = PrefixBeamSearch(testing::LogTable(p, frames, dim), 32);
    if (hyps[0].tokens != best.first) ++token_mismatch;
    worst = std::max(worst, std::abs(hyps[0].ctc_logscore - std::log(best.second)));
  }
  Report(3, token_mismatch == 0 && worst <= 1e-8,
         Fmt("beam 32 top-1 vs exhaustive argmax, 100 tables, %d token "
             "mismatches, max |score diff| %.2e (<= 1e-8)",
             token_mismatch, worst));
}

void ModeEquality() {
  const auto c = testing::TinyConfig();
  std::mt19937_64 rng(4);
  double worst_h = 0, worst_cos = 0;
  for (int trial = 0; trial < 20; ++trial) {
    auto params = InitParams<double>(400 + trial, c);
    const int frames = 15 + 3 * trial;
    auto x = RandomTensor({frames, c.feat_dim}, rng);
    const int len = SubsampledLength(frames);
    const int chunk = len + trial % 3;
    auto full = Encode(x, ChunkSetting::Full(), params, c).hidden;
    auto big = Encode(x, ChunkSetting::Chunk(chunk), params, c).hidden;
    for (size_t i = 0; i < full.size(); ++i)
      worst_h = std::max(worst_h, std::abs(full.data()[i] - big.data()[i]));
    Utterance u;
    u.id = "u" + std::to_string(trial);
    u.num_frames = frames;
    u.feat_dim = c.feat_dim;
    for (double v : x.data()) u.frames.push_back(static_cast<float>(v));
    u.tokens = {0};
    auto gap = ComputeGapReport(CastParams<float>(params, false), c, {u}, {chunk});
    worst_cos = std::max(worst_cos, std::abs(gap.rows[0].mean_cos - 1.0));
  }
  Report(4, worst_h <= 1e-6 && worst_cos <= 1e-6,
         Fmt("encode(chunk >= T') vs encode(full), 20 inputs, max |diff| %.2e "
             "(<= 1e-6); gap report |mean cos - 1| max %.2e (<= 1e-6)",
             worst_h, worst_cos));
}

void Causality() {
  const auto c = testing::TinyConfig();
  std::mt19937_64 rng(5);
  double enc_leak = 0, dec_leak = 0, enc_infl = 0, dec_infl = 0;
  int enc_runs = 0, attempts = 0;
  while (enc_runs < 50 && attempts < 1000) {
    auto params = InitParams<double>(500 + attempts, c);
    auto r = testing::EncoderChunkProbe(params, c, 30 + attempts % 20,
                                        1 + attempts % 4, rng);
    ++attempts;
    if (!r.ran) continue;
    ++enc_runs;
    enc_leak = std::max(enc_leak, r.leakage);
    enc_infl = std::max(enc_infl, r.influence);
  }
  for (int trial = 0; trial < 50; ++trial) {
    auto params = InitParams<double>(600 + trial, c);
    auto r = testing::DecoderPrefixProbe(params, c, rng);
    dec_leak = std::max(dec_leak, r.leakage);
    dec_infl = std::max(dec_infl, r.influence);
  }
  Report(5,
         enc_runs == 50 && enc_leak == 0.0 && dec_leak == 0.0 && enc_infl > 0 &&
             dec_infl > 0,
         Fmt("%d encoder chunk probes, max leakage %.1e; 50 decoder prefix "
             "probes, max leakage %.1e (exactly 0)",
             enc_runs, enc_leak, dec_leak));
}

Tensor<double> Basis(int i, int d) {
  std::vector<double> v(d, 0.0);
  v[i] = 1.0;
  return Tensor<double>::FromData({1, d}, v);
}

void ContrastiveAnalytics() {
  double worst = 0;
  for (int n : {2, 3, 5, 9, 17})
    for (double tau : {0.1, 0.4, 1.0}) {
      // Orthonormal frames: positive cosine 1, N = n - 1 negatives at 0.
      std::vector<Tensor<double>> rows;
      for (int i = 0; i < n; ++i) rows.push_back(Basis(i, n));
      auto eye = ConcatRows(rows);
      ContrastiveConfig cfg;
      cfg.temperature = tau;
      cfg.num_negatives = n - 1;
      std::mt19937_64 rng(n);
      const double got = ContrastiveLoss(eye, eye, cfg, rng).item();
      worst = std::max(worst,
                       std::abs(got - std::log(1 + (n - 1) * std::exp(-1 / tau))));
      // Query orthogonal to identical keys: every logit ties.
      const int neg = n - 1;
      std::vector<Tensor<double>> same(neg, Basis(1, 2));
      const double tie =
          ContrastiveFrameLoss(Basis(0, 2), Basis(1, 2), ConcatRows(same), tau)
              .item();
      worst = std::max(worst, std::abs(tie - std::log(neg + 1.0)));
    }
  Report(6, worst <= 1e-9,
         Fmt("contrastive closed forms log(1+N e^{-1/tau}) and log(N+1), 15 "
             "settings each, max |diff| %.2e (<= 1e-9)",
             worst));
}

struct Splits {
  std::vector<Utterance> train, dev, test;
};

Splits ToyCorpus(uint64_t seed) {
  ModelConfig m;
  auto all = GenerateCorpus(seed, 700, m.vocab(), m.feat_dim, 0.3);
  return {{all.begin(), all.begin() + 500},
          {all.begin() + 500, all.begin() + 600},
          {all.begin() + 600, all.end()}};
}

void Toy(const Splits& data, const fs::path& work) {
  Timer timer;
  ModelConfig model;
  TrainConfig base;
  ExperimentConfig experiment;
  experiment.seeds = {1, 2, 3};
  auto report = RunExperiment(
      data.train, data.dev, data.test, model, base, experiment,
      [&](const ExperimentCell& cell) {
        std::printf("  trained %s seed %llu: chunk-4 2nd-pass CER %.4f (%.0f s)\n",
                    BridgeName(cell.bridge).c_str(),
                    static_cast<unsigned long long>(cell.seed),
                    cell.CerAt(ChunkSetting::Chunk(4), 2), timer.Seconds());
        std::fflush(stdout);
      });
  const double secs = timer.Seconds();
  std::ofstream(work / "toy_report.md") << report.Markdown();
  std::ofstream(work / "toy_report.csv") << report.Csv();
  std::cout << report.Markdown();

  const auto c4 = ChunkSetting::Chunk(4);
  int wins = 0;
  double diff_sum = 0;
  std::string per_seed;
  for (uint64_t seed : experiment.seeds) {
    const double b = report.Cell(Bridge::kNone, seed).CerAt(c4, 2);
    const double k = report.Cell(Bridge::kContrastive, seed).CerAt(c4, 2);
    if (k <= b) ++wins;
    diff_sum += b - k;
    per_seed += Fmt(" seed %llu %.4f vs %.4f;",
                    static_cast<unsigned long long>(seed), k, b);
  }
  const double mean_diff = diff_sum / experiment.seeds.size();
  Report(7, wins >= 2 && mean_diff >= 0,
         Fmt("chunk-4 2nd-pass CER contrastive vs none:%s contrastive <= none "
             "on %d/3 seeds (need >= 2), mean(none - contrastive) %+.4f (need >= "
             "0), %.0f s",
             per_seed.c_str(), wins, mean_diff, secs));

  // Gap analysis on the seed-1 models.
  const auto& none = report.Cell(Bridge::kNone, 1).model;
  const auto& ctl = report.Cell(Bridge::kContrastive, 1).model;
  auto g_none = ComputeGapReport(none.params, model, data.test, {4});
  auto g_ctl = ComputeGapReport(ctl.params, model, data.test, {4});
  const auto& rn = g_none.rows[0];
  const auto& rc = g_ctl.rows[0];
  Report(8, rc.mean_cos > rn.mean_cos && rc.uniformity_s <= rn.uniformity_s,
         Fmt("seed 1 at chunk 4: mean cosine contrastive %.4f vs none %.4f "
             "(need >); streaming uniformity contrastive %.4f vs none %.4f "
             "(need <=)",
             rc.mean_cos, rn.mean_cos, rc.uniformity_s, rn.uniformity_s));

  SaveCheckpoint((work / "toy_contrastive_seed1.ckpt").string(), ctl);
}

bool SameBits(const Checkpoint& a, const Checkpoint& b) {
  if (!(a.config == b.config) || a.step != b.step ||
      std::memcmp(&a.validation_loss, &b.validation_loss, sizeof(double)) != 0 ||
      a.params.size() != b.params.size())
    return false;
  for (const auto& [name, t] : a.params) {
    auto it = b.params.find(name);
    if (it == b.params.end() || it->second.shape() != t.shape() ||
        std::memcmp(t.data().data(), it->second.data().data(),
                    t.size() * sizeof(float)) != 0)
      return false;
  }
  return true;
}

void RoundTrips(const Splits& data, const fs::path& work) {
  // Checkpoints: the trained model and a fresh initialization.
  bool ckpt_ok = true;
  std::vector<Checkpoint> ckpts;
  ckpts.push_back(LoadCheckpoint((work / "toy_contrastive_seed1.ckpt").string()));
  Checkpoint fresh;
  fresh.params = InitParams<float>(9, fresh.config);
  fresh.validation_loss = 1.0 / 3.0;
  fresh.step = 12345;
  ckpts.push_back(fresh);
  for (size_t i = 0; i < ckpts.size(); ++i) {
    const auto a = (work / ("rt_" + std::to_string(i) + "a.ckpt")).string();
    const auto b = (work / ("rt_" + std::to_string(i) + "b.ckpt")).string();
    SaveCheckpoint(a, ckpts[i]);
    auto back = LoadCheckpoint(a);
    SaveCheckpoint(b, back);
    ckpt_ok = ckpt_ok && SameBits(ckpts[i], back) && Slurp(a) == Slurp(b);
  }

  // Corpus: every split, frames compared bitwise.
  bool corpus_ok = true;
  for (const auto* split : {&data.train, &data.dev, &data.test}) {
    const auto path = (work / "rt_corpus.jsonl").string();
    SaveCorpus(path, *split);
    auto back = LoadCorpus(path);
    corpus_ok = corpus_ok && back.size() == split->size();
    for (size_t i = 0; corpus_ok && i < back.size(); ++i) {
      const auto& u = (*split)[i];
      corpus_ok = back[i].id == u.id && back[i].tokens == u.tokens &&
                  back[i].num_frames == u.num_frames &&
                  back[i].feat_dim == u.feat_dim &&
                  back[i].frames.size() == u.frames.size() &&
                  std::memcmp(back[i].frames.data(), u.frames.data(),
                              u.frames.size() * sizeof(float)) == 0;
    }
  }

  // LM: export/import and per-context normalization.
  std::vector<TokenSequence> text;
  for (const auto& u : data.train) text.push_back(u.tokens);
  const int vocab = ModelConfig{}.vocab_size;
  auto lm = NGramLM::Train(text, vocab, 3);
  const auto arpa = (work / "rt_lm.arpa").string();
  lm.WriteArpa(arpa);
  auto back = NGramLM::ReadArpa(arpa);
  double arpa_diff = 0, mass_diff = 0;
  const auto contexts = lm.Contexts();
  for (const auto& h : contexts) {
    double mass = 0;
    for (int w = 0; w <= lm.eos(); ++w) {
      const double lp = lm.ContextLogProb(h, w);
      arpa_diff = std::max(arpa_diff, std::abs(back.ContextLogProb(h, w) - lp));
      mass += std::exp(lp);
    }
    mass_diff = std::max(mass_diff, std::abs(mass - 1.0));
  }
  Report(9, ckpt_ok && corpus_ok && arpa_diff <= 1e-6 && mass_diff <= 1e-6,
         Fmt("checkpoint bit-exact %s; corpus bit-exact %s; ARPA max |diff| "
             "%.2e (<= 1e-6); LM normalization over %zu contexts max |mass - 1| "
             "%.2e (<= 1e-6)",
             ckpt_ok ? "yes" : "no", corpus_ok ? "yes" : "no", arpa_diff,
             contexts.size(), mass_diff));
}

int Cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = RunCli(args, out, err);
  if (code != 0) std::cerr << err.str();
  return code;
}

void Determinism(const fs::path& work) {
  Timer timer;
  const auto data = work / "cli_data";
  bool ok = Cli({"gen-data", "--seed", "1", "--out-dir", data.string()}) == 0;
  const auto train = (data / "train.jsonl").string();
  const auto dev = (data / "dev.jsonl").string();
  const auto test = (data / "test.jsonl").string();
  for (const char* run : {"cli_run_a", "cli_run_b"})
    ok = ok && Cli({"train", "--train", train, "--dev", dev, "--out-dir",
                    (work / run).string()}) == 0;
  bool logs_same = true;
  for (const char* f : {"train_log.csv", "validation.csv"}) {
    const auto a = Slurp(work / "cli_run_a" / f);
    logs_same = logs_same && !a.empty() && a == Slurp(work / "cli_run_b" / f);
  }
  const bool ckpt_same = Slurp(work / "cli_run_a" / "avg.ckpt") ==
                         Slurp(work / "cli_run_b" / "avg.ckpt");
  const auto model = (work / "cli_run_a" / "avg.ckpt").string();
  for (const char* out : {"nbest_a.jsonl", "nbest_b.jsonl"})
    ok = ok && Cli({"decode", "--model", model, "--corpus", test, "--out",
                    (work / out).string(), "--chunk", "4", "--pass", "2"}) == 0;
  const auto nbest = Slurp(work / "nbest_a.jsonl");
  const bool decode_same = !nbest.empty() && nbest == Slurp(work / "nbest_b.jsonl");
  Report(10, ok && logs_same && decode_same,
         Fmt("two CLI train runs: train log and validation CSVs identical %s "
             "(averaged checkpoints identical %s); two CLI decode runs: n-best "
             "bytes identical %s; %.0f s",
             logs_same ? "yes" : "no", ckpt_same ? "yes" : "no",
             decode_same ? "yes" : "no", timer.Seconds()));
}

}  // namespace
}  // namespace uasr

int main(int argc, char** argv) {
  using namespace uasr;
  // Usage: acceptance_test [work_dir] [--fast]; --fast skips the training
  // criteria (7 to 10).
  fs::path work = fs::temp_directory_path() / "uasr_acceptance";
  bool fast = false;
  for (int i = 1; i < argc; ++i) {
    if (std::string(argv[i]) == "--fast")
      fast = true;
    else
      work = argv[i];
  }
  fs::create_directories(work);
  auto guarded = [](int id, const std::function<void()>& f) {
    try {
      f();
    } catch (const std::exception& e) {
      Report(id, false, std::string("threw: ") + e.what());
    }
  };
  Timer total;
  guarded(1, GradientSuite);
  guarded(2, CtcOracle);
  guarded(3, BeamOracle);
  guarded(4, ModeEquality);
  guarded(5, Causality);
  guarded(6, ContrastiveAnalytics);
  if (!fast) {
    const auto data = ToyCorpus(1);
    const int before = failures;
    guarded(7, [&] { Toy(data, work); });
    if (failures > before && !fs::exists(work / "toy_contrastive_seed1.ckpt"))
      Report(8, false, "no seed-1 models");
    guarded(9, [&] { RoundTrips(data, work); });
    guarded(10, [&] { Determinism(work); });
  }
  std::printf("%d criteria failed; total %.0f s\n", failures, total.Seconds());
  return failures == 0 ? 0 : 1;
}
