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

#include "uasr/cli.h"

#include <algorithm>
#include <charconv>
#include <deque>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <stdexcept>

#include "CLI11.hpp"
#include "json.hpp"
#include "uasr/analysis.h"
#include "uasr/checkpoint.h"
#include "uasr/data.h"
#include "uasr/decoding.h"
#include "uasr/ngram.h"
#include "uasr/training.h"

namespace uasr {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::string Fmt(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, end);
}
std::string Fmt(int v) { return std::to_string(v); }
std::string Fmt(bool v) { return v ? "true" : "false"; }

std::string Trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> SplitList(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, ',');)
    if (!Trim(item).empty()) out.push_back(Trim(item));
  return out;
}

// Resolved settings of one subcommand: flag, else config file, else default.
class Settings {
 public:
  explicit Settings(CLI::App* app) : app_(app) {
    app_->add_option("--config", config_path_,
                     "key=value settings file; flags take precedence")
        ->type_name("PATH");
  }

  void Add(const std::string& key, const std::string& def,
           const std::string& help, bool required = false) {
    auto& s = items_.emplace_back();
    s.key = key;
    s.def = def;
    s.required = required;
    std::string text = help;
    text += required ? " (required)" : " (default: " + (def.empty() ? "none" : def) + ")";
    std::string flag = "--" + key;
    std::replace(flag.begin(), flag.end(), '_', '-');
    s.flag = flag;
    s.opt = app_->add_option(flag, s.value, text)->type_name("VALUE");
  }

  void Resolve() {
    std::map<std::string, std::string> file;
    if (!config_path_.empty()) file = ReadConfig(config_path_);
    for (auto& s : items_) {
      if (s.opt->count() > 0) continue;
      auto it = file.find(s.key);
      s.value = it != file.end() ? it->second : s.def;
      if (s.required && s.value.empty())
        throw std::invalid_argument(s.flag + " is required");
    }
  }

  const std::string& Str(const std::string& key) const { return Find(key).value; }

  int Int(const std::string& key) const {
    const auto& v = Str(key);
    int out = 0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size())
      throw std::invalid_argument(Find(key).flag + ": expected an integer, got '" +
                                  v + "'");
    return out;
  }

  uint64_t U64(const std::string& key) const {
    const auto& v = Str(key);
    uint64_t out = 0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size())
      throw std::invalid_argument(Find(key).flag +
                                  ": expected a non-negative integer, got '" + v + "'");
    return out;
  }

  double Real(const std::string& key) const {
    const auto& v = Str(key);
    double out = 0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size())
      throw std::invalid_argument(Find(key).flag + ": expected a number, got '" +
                                  v + "'");
    return out;
  }

  bool Bool(const std::string& key) const {
    const auto& v = Str(key);
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw std::invalid_argument(Find(key).flag + ": expected true or false, got '" +
                                v + "'");
  }

  bool Has(const std::string& key) const {
    return std::any_of(items_.begin(), items_.end(),
                       [&](const Item& s) { return s.key == key; });
  }

  json Json() const {
    json j = json::object();
    for (const auto& s : items_) j[s.key] = s.value;
    return j;
  }

  std::vector<std::string> Args() const {
    std::vector<std::string> out;
    for (const auto& s : items_) {
      out.push_back(s.flag);
      out.push_back(s.value);
    }
    return out;
  }

 private:
  struct Item {
    std::string key, def, flag, value;
    bool required = false;
    CLI::Option* opt = nullptr;
  };

  const Item& Find(const std::string& key) const {
    for (const auto& s : items_)
      if (s.key == key) return s;
    throw std::logic_error("undeclared setting " + key);
  }

  std::map<std::string, std::string> ReadConfig(const std::string& path) const {
    std::ifstream is(path);
    if (!is) throw std::invalid_argument("cannot open config file " + path);
    std::map<std::string, std::string> out;
    std::string line;
    for (int n = 1; std::getline(is, line); ++n) {
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.resize(hash);
      line = Trim(line);
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos)
        throw std::invalid_argument(path + ":" + std::to_string(n) +
                                    ": expected key = value");
      std::string key = Trim(line.substr(0, eq));
      std::string value = Trim(line.substr(eq + 1));
      std::replace(key.begin(), key.end(), '-', '_');
      if (value.size() >= 2 && value.front() == '"' && value.back() == '"')
        value = value.substr(1, value.size() - 2);
      if (!Has(key))
        throw std::invalid_argument(path + ":" + std::to_string(n) +
                                    ": unknown key '" + key + "'");
      out[key] = value;
    }
    return out;
  }

  CLI::App* app_;
  std::string config_path_;
  std::deque<Item> items_;
};

void WriteManifest(const std::string& path, const std::string& command,
                   const Settings& s, const std::vector<std::string>& inputs,
                   const std::vector<std::string>& outputs,
                   const std::vector<std::string>& positional = {}) {
  json j;
  j["tool"] = "uasr";
  j["version"] = kToolVersion;
  j["command"] = command;
  if (s.Has("seed")) j["seed"] = s.U64("seed");
  j["settings"] = s.Json();
  std::vector<std::string> used;
  for (const auto& i : inputs)
    if (!i.empty()) used.push_back(i);
  j["inputs"] = used;
  j["outputs"] = outputs;
  std::vector<std::string> args{command};
  for (auto& a : s.Args()) args.push_back(a);
  for (auto& p : positional) args.push_back(p);
  j["args"] = args;
  std::ofstream os(path, std::ios::binary);
  os << j.dump(2) << "\n";
  if (!os) throw std::runtime_error("failed writing " + path);
}

void AddModelSettings(Settings& s) {
  const ModelConfig d;
  s.Add("feat_dim", Fmt(d.feat_dim), "feature dimension F");
  s.Add("d_model", Fmt(d.d_model), "model width");
  s.Add("n_heads", Fmt(d.n_heads), "attention heads");
  s.Add("d_ff", Fmt(d.d_ff), "feed-forward width");
  s.Add("n_enc_layers", Fmt(d.n_enc_layers), "encoder blocks");
  s.Add("n_dec_layers", Fmt(d.n_dec_layers), "decoder blocks");
  s.Add("conv_kernel", Fmt(d.conv_kernel), "depthwise convolution kernel");
  s.Add("vocab_size", Fmt(d.vocab_size), "token vocabulary size V");
  s.Add("dropout", Fmt(d.dropout), "training dropout rate");
  s.Add("label_smoothing", Fmt(d.label_smoothing), "attention-loss smoothing");
}

ModelConfig ModelFrom(const Settings& s) {
  ModelConfig c;
  c.feat_dim = s.Int("feat_dim");
  c.d_model = s.Int("d_model");
  c.n_heads = s.Int("n_heads");
  c.d_ff = s.Int("d_ff");
  c.n_enc_layers = s.Int("n_enc_layers");
  c.n_dec_layers = s.Int("n_dec_layers");
  c.conv_kernel = s.Int("conv_kernel");
  c.vocab_size = s.Int("vocab_size");
  c.dropout = s.Real("dropout");
  c.label_smoothing = s.Real("label_smoothing");
  c.Validate();
  return c;
}

void AddTrainSettings(Settings& s, bool with_bridge) {
  const TrainConfig d;
  s.Add("epochs", Fmt(d.epochs), "training epochs");
  s.Add("batch_size", Fmt(d.batch_size), "utterances per batch");
  s.Add("peak_lr", Fmt(d.peak_lr), "peak learning rate");
  s.Add("warmup_steps", Fmt(d.warmup_steps), "linear warmup steps");
  s.Add("lambda", Fmt(d.ctc_weight), "CTC weight within each branch");
  if (with_bridge)
    s.Add("bridge", BridgeName(d.bridge.bridge), "bridge loss: none, l2, contrastive");
  s.Add("temperature", Fmt(d.bridge.temperature), "contrastive temperature");
  s.Add("num_negatives", Fmt(d.bridge.num_negatives), "distractors per frame");
  s.Add("bridge_weight", Fmt(d.bridge.weight), "weight of the bridge term");
  s.Add("contrastive_stop_gradient", Fmt(d.bridge.contrastive_stop_gradient),
        "detach the full-context side of the contrastive loss");
  s.Add("l2_stop_gradient", Fmt(d.bridge.l2_stop_gradient),
        "detach the full-context side of the L2 loss");
  s.Add("max_chunk", Fmt(d.chunk_policy.max_chunk), "largest streaming chunk");
  s.Add("p_full", Fmt(d.chunk_policy.p_full),
        "probability the streaming branch sees full context");
  s.Add("grad_clip", Fmt(d.grad_clip), "gradient-norm clip");
  s.Add("time_masks", Fmt(d.augment.num_time_masks), "SpecAugment time masks");
  s.Add("time_mask_width", Fmt(d.augment.max_time_mask_width), "max time mask width");
  s.Add("freq_masks", Fmt(d.augment.num_freq_masks), "SpecAugment frequency masks");
  s.Add("freq_mask_width", Fmt(d.augment.max_freq_mask_width), "max frequency mask width");
  s.Add("average_top_k", Fmt(d.average_top_k), "checkpoints averaged at the end");
  s.Add("validation_chunk", Fmt(d.validation_chunk), "streaming chunk for validation");
  s.Add("validation_beam", Fmt(d.validation_beam), "beam for validation CER");
  s.Add("validation_cer", Fmt(d.validation_cer), "measure CER every epoch");
}

TrainConfig TrainFrom(const Settings& s) {
  TrainConfig c;
  c.epochs = s.Int("epochs");
  c.batch_size = s.Int("batch_size");
  c.peak_lr = s.Real("peak_lr");
  c.warmup_steps = s.Int("warmup_steps");
  if (s.Has("seed")) c.seed = s.U64("seed");
  c.ctc_weight = s.Real("lambda");
  if (s.Has("bridge")) c.bridge.bridge = ParseBridge(s.Str("bridge"));
  c.bridge.temperature = s.Real("temperature");
  c.bridge.num_negatives = s.Int("num_negatives");
  c.bridge.weight = s.Real("bridge_weight");
  c.bridge.contrastive_stop_gradient = s.Bool("contrastive_stop_gradient");
  c.bridge.l2_stop_gradient = s.Bool("l2_stop_gradient");
  c.chunk_policy = ChunkPolicy::Dynamic(s.Int("max_chunk"), s.Real("p_full"));
  c.grad_clip = s.Real("grad_clip");
  c.augment.num_time_masks = s.Int("time_masks");
  c.augment.max_time_mask_width = s.Int("time_mask_width");
  c.augment.num_freq_masks = s.Int("freq_masks");
  c.augment.max_freq_mask_width = s.Int("freq_mask_width");
  c.average_top_k = s.Int("average_top_k");
  c.validation_chunk = s.Int("validation_chunk");
  c.validation_beam = s.Int("validation_beam");
  c.validation_cer = s.Bool("validation_cer");
  c.Validate();
  return c;
}

void CheckCorpusFits(const std::vector<Utterance>& corpus, const ModelConfig& c,
                     const std::string& path) {
  for (const auto& u : corpus) {
    if (u.feat_dim != c.feat_dim)
      throw std::invalid_argument(path + ": utterance " + u.id + " has F=" +
                                  std::to_string(u.feat_dim) + " but the model expects " +
                                  std::to_string(c.feat_dim));
    ValidateUtterance(u, c.vocab());
  }
}

std::vector<Utterance> LoadNonEmpty(const std::string& path) {
  if (!fs::exists(path)) throw std::invalid_argument("no such corpus file " + path);
  auto c = LoadCorpus(path);
  if (c.empty()) throw std::invalid_argument(path + " holds no utterances");
  return c;
}

// ---- subcommands ----

int GenData(const Settings& s, std::ostream& out) {
  const int n_train = s.Int("num_train"), n_dev = s.Int("num_dev"),
            n_test = s.Int("num_test");
  if (n_train < 1 || n_dev < 0 || n_test < 0)
    throw std::invalid_argument("split sizes must be >= 1 (train) and >= 0");
  VocabSpec vocab{s.Int("vocab_size")};
  const int feat_dim = s.Int("feat_dim");
  const double sigma = s.Real("noise_sigma");
  if (vocab.size < 1) throw std::invalid_argument("vocab_size must be >= 1");
  if (feat_dim < 2) throw std::invalid_argument("feat_dim must be >= 2");
  if (!(sigma >= 0)) throw std::invalid_argument("noise_sigma must be >= 0");
  // One draw so every split shares the token templates of the seed.
  auto all = GenerateCorpus(s.U64("seed"), n_train + n_dev + n_test, vocab,
                            feat_dim, sigma);
  const fs::path dir(s.Str("out_dir"));
  fs::create_directories(dir);
  std::vector<std::string> outputs;
  auto write = [&](const std::string& name, size_t b, size_t e) {
    if (b == e) return;
    const auto path = (dir / (name + ".jsonl")).string();
    SaveCorpus(path, std::vector<Utterance>(all.begin() + b, all.begin() + e));
    outputs.push_back(path);
    out << "wrote " << e - b << " utterances to " << path << "\n";
  };
  write("train", 0, n_train);
  write("dev", n_train, n_train + n_dev);
  write("test", n_train + n_dev, all.size());
  WriteManifest((dir / "manifest.json").string(), "gen-data", s, {}, outputs);
  return kExitOk;
}

int TrainCmd(const Settings& s, std::ostream& out) {
  const auto model = ModelFrom(s);
  auto cfg = TrainFrom(s);
  cfg.checkpoint_dir = s.Str("out_dir");
  const auto train = LoadNonEmpty(s.Str("train"));
  const auto dev = LoadNonEmpty(s.Str("dev"));
  CheckCorpusFits(train, model, s.Str("train"));
  CheckCorpusFits(dev, model, s.Str("dev"));
  auto result = Train(train, dev, model, cfg, [&](const EpochRecord& r) {
    out << "epoch " << r.epoch << " step " << r.step << " train_loss "
        << Fmt(r.train_loss) << " val_loss " << Fmt(r.validation_loss);
    if (r.cer_full >= 0)
      out << " cer_full " << Fmt(r.cer_full) << " cer_chunk" << cfg.validation_chunk
          << " " << Fmt(r.cer_chunk);
    out << "\n";
  });
  const fs::path dir(cfg.checkpoint_dir);
  std::vector<std::string> outputs;
  for (int e = 1; e <= cfg.epochs; ++e) {
    char name[32];
    std::snprintf(name, sizeof(name), "epoch_%03d.ckpt", e);
    outputs.push_back((dir / name).string());
  }
  for (const char* f : {"avg.ckpt", "train_log.csv", "validation.csv"})
    outputs.push_back((dir / f).string());
  WriteManifest((dir / "manifest.json").string(), "train", s,
                {s.Str("train"), s.Str("dev")}, outputs);
  out << "averaged model written to " << (dir / "avg.ckpt").string() << "\n";
  return kExitOk;
}

struct DecodeSetup {
  DecodeOptions options;
  NGramLM lm;
};

void ReadDecodeOptions(const Settings& s, DecodeSetup& d) {
  d.options.chunk = ChunkSetting::Parse(s.Str("chunk"));
  d.options.pass = s.Int("pass");
  d.options.beam = s.Int("beam");
  d.options.lm_weight = s.Real("lm_weight");
  d.options.ctc_weight = s.Real("ctc_weight");
  d.options.Validate();
  if (!s.Str("lm").empty()) {
    d.lm = NGramLM::ReadArpa(s.Str("lm"));
    d.options.lm = &d.lm;
  }
}

int Decode(const Settings& s, std::ostream& out) {
  DecodeSetup d;
  ReadDecodeOptions(s, d);
  const auto ckpt = LoadCheckpoint(s.Str("model"));
  const auto corpus = LoadNonEmpty(s.Str("corpus"));
  CheckCorpusFits(corpus, ckpt.config, s.Str("corpus"));
  std::vector<NBest> results;
  std::vector<TokenSequence> refs, best;
  for (const auto& u : corpus) {
    results.push_back({u.id, DecodeUtterance(u, ckpt.params, ckpt.config, d.options)});
    refs.push_back(u.tokens);
    best.push_back(results.back().hyps.front().tokens);
  }
  WriteNBest(s.Str("out"), results);
  WriteManifest(s.Str("out") + ".manifest.json", "decode", s,
                {s.Str("model"), s.Str("corpus"), s.Str("lm")}, {s.Str("out")});
  out << "decoded " << corpus.size() << " utterances (chunk "
      << d.options.chunk.ToString() << ", pass " << d.options.pass
      << "), top-1 CER " << Fmt(Cer(refs, best)) << "\n";
  return kExitOk;
}

int Eval(const Settings& s, std::ostream& out) {
  const auto nbest = ReadNBest(s.Str("nbest"));
  const auto corpus = LoadNonEmpty(s.Str("corpus"));
  std::map<std::string, const Utterance*> by_id;
  for (const auto& u : corpus) by_id[u.id] = &u;
  std::vector<TokenSequence> refs, hyps;
  for (const auto& r : nbest) {
    auto it = by_id.find(r.id);
    if (it == by_id.end())
      throw std::invalid_argument("n-best id " + r.id + " is not in the corpus");
    refs.push_back(it->second->tokens);
    hyps.push_back(r.hyps.empty() ? TokenSequence{} : r.hyps.front().tokens);
  }
  if (refs.size() != corpus.size())
    throw std::invalid_argument("n-best covers " + std::to_string(refs.size()) +
                                " of " + std::to_string(corpus.size()) +
                                " utterances");
  // The decode manifest, when present, labels the row.
  std::string chunk = "unknown", pass = "unknown", mode = "unknown";
  const auto manifest = s.Str("nbest") + ".manifest.json";
  if (fs::exists(manifest)) {
    std::ifstream is(manifest);
    const auto j = json::parse(is);
    chunk = j.at("settings").at("chunk").get<std::string>();
    pass = j.at("settings").at("pass").get<std::string>();
    mode = ChunkSetting::Parse(chunk).is_full() ? "full" : "streaming";
  }
  long errors = 0, total = 0;
  for (size_t i = 0; i < refs.size(); ++i) {
    errors += EditDistance(refs[i], hyps[i]);
    total += static_cast<long>(refs[i].size());
  }
  const double cer = Cer(refs, hyps);
  std::ofstream os(s.Str("out"), std::ios::binary);
  os << "mode,chunk,pass,cer,errors,ref_tokens\n"
     << mode << "," << chunk << "," << pass << "," << Fmt(cer) << "," << errors
     << "," << total << "\n";
  if (!os) throw std::runtime_error("failed writing " + s.Str("out"));
  WriteManifest(s.Str("out") + ".manifest.json", "eval", s,
                {s.Str("nbest"), s.Str("corpus")}, {s.Str("out")});
  out << "CER " << Fmt(cer) << " (" << errors << "/" << total << ")\n";
  return kExitOk;
}

int AnalyzeGap(const Settings& s, std::ostream& out) {
  const auto ckpt = LoadCheckpoint(s.Str("model"));
  const auto corpus = LoadNonEmpty(s.Str("corpus"));
  CheckCorpusFits(corpus, ckpt.config, s.Str("corpus"));
  std::vector<int> chunks;
  for (const auto& c : SplitList(s.Str("chunks"))) {
    const auto setting = ChunkSetting::Parse(c);
    if (setting.is_full())
      throw std::invalid_argument("--chunks lists streaming chunk sizes only");
    chunks.push_back(setting.chunk());
  }
  const int n = s.Int("num_utts");
  if (n < 0) throw std::invalid_argument("--num-utts must be >= 0 (0: all)");
  std::vector<size_t> order(corpus.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::mt19937_64 rng(DeriveSeed(s.U64("seed"), 101));
  std::shuffle(order.begin(), order.end(), rng);
  if (n > 0 && static_cast<size_t>(n) < order.size()) order.resize(n);
  std::sort(order.begin(), order.end());
  std::vector<Utterance> sample;
  for (size_t i : order) sample.push_back(corpus[i]);
  const auto prefix = s.Str("out_prefix");
  auto report = ComputeGapReport(ckpt.params, ckpt.config, sample, chunks, prefix);
  WriteGapReportCsv(prefix + ".csv", report);
  WriteManifest(prefix + ".manifest.json", "analyze-gap", s,
                {s.Str("model"), s.Str("corpus")},
                {prefix + ".csv", prefix + ".projection.csv", prefix + ".vectors.csv"});
  out << "chunk mean_cos sd_cos uniformity_s (uniformity_ns "
      << Fmt(report.uniformity_ns) << ")\n";
  for (const auto& r : report.rows)
    out << r.chunk << " " << Fmt(r.mean_cos) << " " << Fmt(r.sd_cos) << " "
        << Fmt(r.uniformity_s) << "\n";
  return kExitOk;
}

int AvgCkpt(const Settings& s, const std::vector<std::string>& inputs,
            std::ostream& out) {
  if (inputs.empty()) throw std::invalid_argument("avg-ckpt needs input checkpoints");
  const auto avg = AverageCheckpoints(inputs, s.Int("k"));
  SaveCheckpoint(s.Str("out"), avg);
  WriteManifest(s.Str("out") + ".manifest.json", "avg-ckpt", s, inputs,
                {s.Str("out")}, inputs);
  out << "averaged " << s.Int("k") << " of " << inputs.size() << " checkpoints into "
      << s.Str("out") << "\n";
  return kExitOk;
}

int TrainLm(const Settings& s, std::ostream& out) {
  const auto corpus = LoadNonEmpty(s.Str("corpus"));
  std::vector<TokenSequence> text;
  for (const auto& u : corpus) text.push_back(u.tokens);
  const auto lm = NGramLM::Train(text, s.Int("vocab_size"), s.Int("order"));
  lm.WriteArpa(s.Str("out"));
  WriteManifest(s.Str("out") + ".manifest.json", "train-lm", s, {s.Str("corpus")},
                {s.Str("out")});
  out << "wrote " << s.Int("order") << "-gram LM to " << s.Str("out") << "\n";
  return kExitOk;
}

int Experiment(const Settings& s, std::ostream& out) {
  const auto model = ModelFrom(s);
  auto cfg = TrainFrom(s);
  cfg.checkpoint_dir = s.Str("out_dir");
  ExperimentConfig exp;
  exp.bridges.clear();
  for (const auto& b : SplitList(s.Str("bridges"))) exp.bridges.push_back(ParseBridge(b));
  exp.seeds.clear();
  for (const auto& v : SplitList(s.Str("seeds"))) {
    uint64_t seed = 0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), seed);
    if (ec != std::errc() || p != v.data() + v.size())
      throw std::invalid_argument("--seeds: bad seed '" + v + "'");
    exp.seeds.push_back(seed);
  }
  exp.chunks.clear();
  for (const auto& c : SplitList(s.Str("chunks")))
    exp.chunks.push_back(ChunkSetting::Parse(c));
  exp.decode.beam = s.Int("beam");
  exp.decode.ctc_weight = s.Real("ctc_weight");
  exp.decode.Validate();
  const auto train = LoadNonEmpty(s.Str("train"));
  const auto dev = LoadNonEmpty(s.Str("dev"));
  const auto test = LoadNonEmpty(s.Str("test"));
  for (const auto* set : {&train, &dev, &test}) CheckCorpusFits(*set, model, "corpus");
  auto report = RunExperiment(train, dev, test, model, cfg, exp,
                              [&](const ExperimentCell& c) {
                                out << "trained " << BridgeName(c.bridge) << " seed "
                                    << c.seed << "\n";
                              });
  const fs::path dir(cfg.checkpoint_dir);
  std::ofstream(dir / "report.md", std::ios::binary) << report.Markdown();
  std::ofstream(dir / "report.csv", std::ios::binary) << report.Csv();
  WriteManifest((dir / "manifest.json").string(), "experiment", s,
                {s.Str("train"), s.Str("dev"), s.Str("test")},
                {(dir / "report.md").string(), (dir / "report.csv").string()});
  out << report.Markdown();
  return kExitOk;
}

}  // namespace

int RunCli(const std::vector<std::string>& args, std::ostream& out,
           std::ostream& err) {
  CLI::App app{"Unified streaming and full-context ASR toolkit", "uasr"};
  app.set_version_flag("--version", kToolVersion);
  app.require_subcommand(1);

  auto* gen = app.add_subcommand("gen-data", "Generate the synthetic corpus splits");
  Settings gen_s(gen);
  gen_s.Add("seed", "1", "random seed");
  gen_s.Add("out_dir", "", "output directory", true);
  gen_s.Add("num_train", "500", "training utterances");
  gen_s.Add("num_dev", "100", "validation utterances");
  gen_s.Add("num_test", "100", "test utterances");
  gen_s.Add("vocab_size", "12", "token vocabulary size V");
  gen_s.Add("feat_dim", "16", "feature dimension F");
  gen_s.Add("noise_sigma", "0.3", "Gaussian noise sd added to templates");

  auto* train = app.add_subcommand("train", "Train one model");
  Settings train_s(train);
  train_s.Add("seed", "1", "random seed");
  train_s.Add("train", "", "training corpus (JSONL)", true);
  train_s.Add("dev", "", "validation corpus (JSONL)", true);
  train_s.Add("out_dir", "", "checkpoint and log directory", true);
  AddModelSettings(train_s);
  AddTrainSettings(train_s, true);

  auto* decode = app.add_subcommand("decode", "Decode a corpus to n-best JSONL");
  Settings decode_s(decode);
  decode_s.Add("model", "", "checkpoint", true);
  decode_s.Add("corpus", "", "corpus to decode (JSONL)", true);
  decode_s.Add("out", "", "n-best output (JSONL)", true);
  decode_s.Add("chunk", "full", "decoding chunk: full or a positive integer");
  decode_s.Add("pass", "2", "1: CTC prefix beam search; 2: plus attention rescoring");
  decode_s.Add("beam", "10", "beam size");
  decode_s.Add("lm", "", "ARPA language model for shallow fusion");
  decode_s.Add("lm_weight", "0", "shallow-fusion weight");
  decode_s.Add("ctc_weight", "0.5", "CTC weight in rescoring");

  auto* eval = app.add_subcommand("eval", "Score n-best JSONL against a corpus");
  Settings eval_s(eval);
  eval_s.Add("nbest", "", "n-best JSONL from decode", true);
  eval_s.Add("corpus", "", "reference corpus (JSONL)", true);
  eval_s.Add("out", "", "CER report (CSV)", true);

  auto* gap = app.add_subcommand("analyze-gap", "Streaming vs full-context representation gap");
  Settings gap_s(gap);
  gap_s.Add("seed", "1", "random seed for utterance selection");
  gap_s.Add("model", "", "checkpoint", true);
  gap_s.Add("corpus", "", "corpus (JSONL)", true);
  gap_s.Add("out_prefix", "", "prefix for the CSV outputs", true);
  gap_s.Add("chunks", "16,8,4,1", "comma-separated streaming chunk sizes");
  gap_s.Add("num_utts", "1", "utterances sampled (0: all)");

  auto* avg = app.add_subcommand("avg-ckpt", "Average the best checkpoints");
  Settings avg_s(avg);
  avg_s.Add("out", "", "averaged checkpoint", true);
  avg_s.Add("k", "3", "number of lowest-validation-loss checkpoints");
  std::vector<std::string> avg_inputs;
  avg->add_option("inputs", avg_inputs, "input checkpoints");

  auto* lm = app.add_subcommand("train-lm", "Train an n-gram LM on transcripts");
  Settings lm_s(lm);
  lm_s.Add("corpus", "", "corpus whose transcripts are used (JSONL)", true);
  lm_s.Add("out", "", "ARPA output", true);
  lm_s.Add("order", "3", "n-gram order");
  lm_s.Add("vocab_size", "12", "token vocabulary size V");

  auto* exp = app.add_subcommand("experiment", "Train and compare bridge-loss settings");
  Settings exp_s(exp);
  exp_s.Add("train", "", "training corpus (JSONL)", true);
  exp_s.Add("dev", "", "validation corpus (JSONL)", true);
  exp_s.Add("test", "", "test corpus (JSONL)", true);
  exp_s.Add("out_dir", "", "output directory", true);
  exp_s.Add("seeds", "1,2,3", "comma-separated seeds");
  exp_s.Add("bridges", "none,l2,contrastive", "comma-separated bridge settings");
  exp_s.Add("chunks", "full,16,8,4", "evaluation chunk grid");
  exp_s.Add("beam", "10", "decoding beam");
  exp_s.Add("ctc_weight", "0.5", "CTC weight in rescoring");
  AddModelSettings(exp_s);
  AddTrainSettings(exp_s, false);

  auto* replay = app.add_subcommand("replay", "Re-run the command recorded in a manifest");
  std::string manifest_path;
  replay->add_option("manifest", manifest_path, "manifest.json")->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    auto subs = app.get_subcommands();
    out << (subs.empty() ? app.help() : subs.front()->help());
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::CallForVersion&) {
    out << kToolVersion << "\n";
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    auto subs = app.get_subcommands();
    err << (subs.empty() ? app.help() : subs.front()->help());
    return kExitValidation;
  }

  try {
    if (replay->parsed()) {
      std::ifstream is(manifest_path);
      if (!is) throw std::invalid_argument("cannot open manifest " + manifest_path);
      const auto j = json::parse(is);
      return RunCli(j.at("args").get<std::vector<std::string>>(), out, err);
    }
    const std::vector<std::pair<CLI::App*, Settings*>> commands{
        {gen, &gen_s},   {train, &train_s}, {decode, &decode_s}, {eval, &eval_s},
        {gap, &gap_s},   {avg, &avg_s},     {lm, &lm_s},         {exp, &exp_s}};
    for (const auto& [cmd, settings] : commands) {
      if (!cmd->parsed()) continue;
      settings->Resolve();
      if (cmd == gen) return GenData(*settings, out);
      if (cmd == train) return TrainCmd(*settings, out);
      if (cmd == decode) return Decode(*settings, out);
      if (cmd == eval) return Eval(*settings, out);
      if (cmd == gap) return AnalyzeGap(*settings, out);
      if (cmd == avg) return AvgCkpt(*settings, avg_inputs, out);
      if (cmd == lm) return TrainLm(*settings, out);
      if (cmd == exp) return Experiment(*settings, out);
    }
    err << "error: no subcommand\n" << app.help();
    return kExitValidation;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::out_of_range& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}

}  // namespace uasr
