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

// Two-pass decoding: CTC prefix beam search with optional n-gram shallow
// fusion, then attention rescoring of the n-best list by the decoder.

#ifndef UASR_DECODING_H_
#define UASR_DECODING_H_

#include <string>
#include <vector>

#include "uasr/data.h"
#include "uasr/masking.h"
#include "uasr/model.h"
#include "uasr/ngram.h"
#include "uasr/tensor.h"

namespace uasr {

struct Hypothesis {
  TokenSequence tokens;  // never contains blank
  double ctc_logscore = 0;
  double lm_logscore = 0;   // unweighted sum of fused LM log-probabilities
  double aed_logscore = 0;  // filled by rescoring
  double combined = 0;      // ranking score of the last pass that ran

  bool operator==(const Hypothesis&) const = default;
};

// Descending score, then ascending token sequence.
bool RanksBefore(double score_a, const TokenSequence& a, double score_b,
                 const TokenSequence& b);

// logprobs is T' x (V + 1) with blank in the last column. Each extension by
// token k adds lm_weight * log P_lm(k | prefix) when lm is given. Returns at
// most `beam` hypotheses with combined = ctc + lm_weight * lm.
std::vector<Hypothesis> PrefixBeamSearch(const Tensor<double>& logprobs,
                                         int beam, const NGramLM* lm = nullptr,
                                         double lm_weight = 0.0);

// Teacher-forced decoder log-probability of tokens followed by eos.
template <typename T>
double AedLogScore(const EncoderOutput<T>& enc, const TokenSequence& tokens,
                   const Parameters<T>& params, const ModelConfig& config);

// Sets aed_logscore and combined = aed + ctc_weight * ctc, then re-sorts.
template <typename T>
std::vector<Hypothesis> AttentionRescore(std::vector<Hypothesis> hyps,
                                         const EncoderOutput<T>& enc,
                                         const Parameters<T>& params,
                                         const ModelConfig& config,
                                         double ctc_weight);

struct DecodeOptions {
  ChunkSetting chunk = ChunkSetting::Full();
  int pass = 2;  // 1: prefix beam search only; 2: plus attention rescoring
  int beam = 10;
  const NGramLM* lm = nullptr;
  double lm_weight = 0.0;
  double ctc_weight = 0.5;

  void Validate() const;
};

// Prefix beam search over the CTC head of an existing encoder run.
std::vector<Hypothesis> FirstPass(const EncoderOutput<float>& enc,
                                  const Parameters<float>& params,
                                  const DecodeOptions& options);

// Both passes share one encoder run under the decoding-time mask.
std::vector<Hypothesis> DecodeUtterance(const Utterance& utt,
                                        const Parameters<float>& params,
                                        const ModelConfig& config,
                                        const DecodeOptions& options);

struct NBest {
  std::string id;
  std::vector<Hypothesis> hyps;
};

// One JSON object per line: {"id", "hyps": [{"tokens", "ctc", "lm", "aed",
// "combined"}]}; doubles are written round-trip exact.
void WriteNBest(const std::string& path, const std::vector<NBest>& results);
std::vector<NBest> ReadNBest(const std::string& path);

}  // namespace uasr

#endif  // UASR_DECODING_H_
