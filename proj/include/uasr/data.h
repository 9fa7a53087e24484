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

// Utterances, the synthetic template-emission corpus, simplified SpecAugment
// and the JSONL corpus format.

#ifndef UASR_DATA_H_
#define UASR_DATA_H_

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace uasr {

using TokenSequence = std::vector<int>;

// T x F feature frames plus transcript.
struct Utterance {
  std::string id;
  int num_frames = 0;
  int feat_dim = 0;
  std::vector<float> frames;  // row-major, num_frames * feat_dim
  TokenSequence tokens;

  float at(int t, int f) const { return frames[t * feat_dim + f]; }
  bool operator==(const Utterance&) const = default;
};

// Token IDs are [0, size). CTC uses blank = size (output dim size + 1); the
// attention decoder additionally reserves sos/eos = size + 1.
struct VocabSpec {
  int size = 12;
  int blank() const { return size; }
  int sos_eos() const { return size + 1; }
  int ctc_dim() const { return size + 1; }
  int decoder_dim() const { return size + 2; }
};

struct AugmentPolicy {
  int num_time_masks = 0;
  int max_time_mask_width = 0;
  int num_freq_masks = 0;
  int max_freq_mask_width = 0;
};

struct MaskRegion {
  bool time = true;  // rows when true, columns otherwise
  int start = 0;
  int width = 0;
};

// Throws std::invalid_argument if the utterance violates the length or
// vocabulary invariants (T >= 7, 1 <= |tokens|, CTC-feasible after
// subsampling, ids in [0, vocab.size)).
void ValidateUtterance(const Utterance& u, const VocabSpec& vocab);

// Unit-norm template per token, drawn from the corpus seed.
std::vector<std::vector<float>> TokenTemplates(uint64_t seed,
                                               const VocabSpec& vocab,
                                               int feat_dim);

// Renders a transcript with explicit per-token durations.
Utterance EmitUtterance(const std::string& id, const TokenSequence& tokens,
                        const std::vector<int>& durations,
                        const std::vector<std::vector<float>>& templates,
                        double noise_sigma, std::mt19937_64& rng);

// Each utterance has 3-10 tokens without immediate repeats, each held for
// 4-8 frames of its template plus N(0, noise_sigma^2) noise. Draws that would
// be CTC-infeasible after subsampling are redrawn.
std::vector<Utterance> GenerateCorpus(uint64_t seed, int num_utts,
                                      const VocabSpec& vocab, int feat_dim,
                                      double noise_sigma);

Utterance SpecAugment(const Utterance& u, const AugmentPolicy& policy,
                      std::mt19937_64& rng,
                      std::vector<MaskRegion>* applied = nullptr);

// JSONL, one utterance per line: {"id", "tokens", "frames"}.
void SaveCorpus(const std::string& path, const std::vector<Utterance>& corpus);
std::vector<Utterance> LoadCorpus(const std::string& path);

}  // namespace uasr

#endif  // UASR_DATA_H_
