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

#include "uasr/data.h"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"
#include "uasr/lengths.h"

namespace uasr {

using nlohmann::json;

void ValidateUtterance(const Utterance& u, const VocabSpec& vocab) {
  auto fail = [&](const std::string& why) {
    throw std::invalid_argument("utterance " + u.id + ": " + why);
  };
  if (u.frames.size() != static_cast<size_t>(u.num_frames) * u.feat_dim)
    fail("frame buffer does not match T x F");
  if (u.num_frames < kMinInputFrames) fail("fewer than 7 frames");
  if (u.tokens.empty()) fail("empty transcript");
  for (int t : u.tokens)
    if (t < 0 || t >= vocab.size) fail("token id outside vocabulary");
  if (CtcMinFrames(u.tokens) > SubsampledLength(u.num_frames))
    fail("transcript is CTC-infeasible after subsampling");
}

std::vector<std::vector<float>> TokenTemplates(uint64_t seed,
                                               const VocabSpec& vocab,
                                               int feat_dim) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<std::vector<float>> templates(vocab.size);
  for (auto& t : templates) {
    std::vector<double> v(feat_dim);
    double norm = 0;
    for (auto& x : v) {
      x = normal(rng);
      norm += x * x;
    }
    norm = std::sqrt(norm);
    t.resize(feat_dim);
    for (int f = 0; f < feat_dim; ++f) t[f] = static_cast<float>(v[f] / norm);
  }
  return templates;
}

Utterance EmitUtterance(const std::string& id, const TokenSequence& tokens,
                        const std::vector<int>& durations,
                        const std::vector<std::vector<float>>& templates,
                        double noise_sigma, std::mt19937_64& rng) {
  if (tokens.size() != durations.size())
    throw std::invalid_argument("one duration per token required");
  Utterance u;
  u.id = id;
  u.tokens = tokens;
  u.feat_dim = static_cast<int>(templates.at(0).size());
  std::normal_distribution<double> noise(0.0, noise_sigma > 0 ? noise_sigma : 1);
  for (size_t i = 0; i < tokens.size(); ++i) {
    const auto& tmpl = templates.at(tokens[i]);
    for (int d = 0; d < durations[i]; ++d) {
      for (int f = 0; f < u.feat_dim; ++f) {
        double v = tmpl[f];
        if (noise_sigma > 0) v += noise(rng);
        u.frames.push_back(static_cast<float>(v));
      }
      ++u.num_frames;
    }
  }
  return u;
}

std::vector<Utterance> GenerateCorpus(uint64_t seed, int num_utts,
                                      const VocabSpec& vocab, int feat_dim,
                                      double noise_sigma) {
  if (num_utts < 1) throw std::invalid_argument("n_utts must be >= 1");
  if (feat_dim < 2) throw std::invalid_argument("F must be >= 2");
  if (vocab.size < 2) throw std::invalid_argument("vocabulary needs >= 2 tokens");
  if (noise_sigma < 0) throw std::invalid_argument("noise_sigma must be >= 0");
  const auto templates = TokenTemplates(seed, vocab, feat_dim);
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::uniform_int_distribution<int> num_tokens(3, 10);
  std::uniform_int_distribution<int> duration(4, 8);
  std::uniform_int_distribution<int> token(0, vocab.size - 1);
  std::uniform_int_distribution<int> other(0, vocab.size - 2);

  std::vector<Utterance> corpus;
  corpus.reserve(num_utts);
  char id[32];
  while (static_cast<int>(corpus.size()) < num_utts) {
    const int n = num_tokens(rng);
    TokenSequence tokens;
    std::vector<int> durations;
    int total = 0;
    for (int i = 0; i < n; ++i) {
      int t = token(rng);
      if (i > 0) {
        // Uniform over the vocabulary minus the previous token.
        t = other(rng);
        if (t >= tokens.back()) ++t;
      }
      tokens.push_back(t);
      durations.push_back(duration(rng));
      total += durations.back();
    }
    if (CtcMinFrames(tokens) > SubsampledLength(total)) continue;
    std::snprintf(id, sizeof(id), "utt%05zu", corpus.size());
    corpus.push_back(
        EmitUtterance(id, tokens, durations, templates, noise_sigma, rng));
  }
  return corpus;
}

Utterance SpecAugment(const Utterance& u, const AugmentPolicy& policy,
                      std::mt19937_64& rng, std::vector<MaskRegion>* applied) {
  if (policy.num_time_masks > 0 && policy.max_time_mask_width >= u.num_frames)
    throw std::invalid_argument("time mask width must be < T");
  if (policy.num_freq_masks > 0 && policy.max_freq_mask_width >= u.feat_dim)
    throw std::invalid_argument("frequency mask width must be < F");
  Utterance out = u;
  auto draw = [&](int count, int max_width, int extent, bool time) {
    for (int m = 0; m < count; ++m) {
      const int w = std::uniform_int_distribution<int>(0, max_width)(rng);
      const int start =
          std::uniform_int_distribution<int>(0, extent - w)(rng);
      for (int i = start; i < start + w; ++i) {
        if (time) {
          for (int f = 0; f < out.feat_dim; ++f)
            out.frames[i * out.feat_dim + f] = 0.0f;
        } else {
          for (int t = 0; t < out.num_frames; ++t)
            out.frames[t * out.feat_dim + i] = 0.0f;
        }
      }
      if (applied) applied->push_back({time, start, w});
    }
  };
  draw(policy.num_time_masks, policy.max_time_mask_width, u.num_frames, true);
  draw(policy.num_freq_masks, policy.max_freq_mask_width, u.feat_dim, false);
  return out;
}

void SaveCorpus(const std::string& path, const std::vector<Utterance>& corpus) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path + " for writing");
  for (const auto& u : corpus) {
    json frames = json::array();
    for (int t = 0; t < u.num_frames; ++t) {
      json row = json::array();
      for (int f = 0; f < u.feat_dim; ++f) row.push_back(u.at(t, f));
      frames.push_back(std::move(row));
    }
    json line = {{"id", u.id}, {"tokens", u.tokens}, {"frames", frames}};
    os << line.dump() << "\n";
  }
  if (!os) throw std::runtime_error("write failed: " + path);
}

std::vector<Utterance> LoadCorpus(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path);
  std::vector<Utterance> corpus;
  std::string line;
  int line_no = 0;
  int feat_dim = -1;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto fail = [&](const std::string& why) {
      throw std::invalid_argument(path + ":" + std::to_string(line_no) + ": " +
                                  why);
    };
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      fail(std::string("malformed JSON: ") + e.what());
    }
    if (!j.is_object() || !j.contains("id") || !j.contains("tokens") ||
        !j.contains("frames") || !j["id"].is_string() ||
        !j["tokens"].is_array() || !j["frames"].is_array())
      fail("expected object with string id, tokens array and frames array");
    Utterance u;
    u.id = j["id"].get<std::string>();
    for (const auto& t : j["tokens"]) {
      if (!t.is_number_integer() || t.get<int>() < 0)
        fail("tokens must be non-negative integers");
      u.tokens.push_back(t.get<int>());
    }
    for (const auto& row : j["frames"]) {
      if (!row.is_array() || row.empty()) fail("frames must be arrays");
      const int f = static_cast<int>(row.size());
      if (feat_dim < 0) feat_dim = f;
      if (f != feat_dim)
        fail("feature dimension " + std::to_string(f) + " differs from " +
             std::to_string(feat_dim));
      for (const auto& v : row) {
        if (!v.is_number()) fail("non-numeric feature value");
        u.frames.push_back(v.get<float>());
      }
      ++u.num_frames;
    }
    if (u.num_frames == 0) fail("utterance has no frames");
    u.feat_dim = feat_dim;
    corpus.push_back(std::move(u));
  }
  return corpus;
}

}  // namespace uasr
