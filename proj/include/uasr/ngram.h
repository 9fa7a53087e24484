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

// Token n-gram language model with interpolated absolute discounting and
// ARPA import/export, used for shallow fusion in the first decoding pass.

#ifndef UASR_NGRAM_H_
#define UASR_NGRAM_H_

#include <map>
#include <span>
#include <string>
#include <vector>

#include "uasr/data.h"

namespace uasr {

class NGramLM {
 public:
  static constexpr double kDiscount = 0.5;

  // Trains on transcripts over tokens [0, vocab_size). Each sentence is
  // wrapped in <s> ... </s>; lower orders interpolate down to a uniform
  // floor over the tokens plus </s>.
  static NGramLM Train(const std::vector<TokenSequence>& corpus,
                       int vocab_size, int order = 3);

  static NGramLM ReadArpa(const std::string& path);
  void WriteArpa(const std::string& path) const;

  // Natural-log P(token | history), where history is the full token prefix
  // of the hypothesis (sentence start implied). token == eos() scores the
  // sentence end.
  double LogProb(std::span<const int> history, int token) const;

  // Same, for an explicit context of internal ids (may begin with bos()).
  double ContextLogProb(std::vector<int> context, int token) const;

  int order() const { return order_; }
  int vocab_size() const { return vocab_size_; }
  int eos() const { return vocab_size_; }
  int bos() const { return vocab_size_ + 1; }

  // Every history of length order - 1 (or shorter, starting at <s>) that
  // has an explicit backoff entry.
  std::vector<std::vector<int>> Contexts() const;

 private:
  struct Entry {
    double log10_prob = 0;
    double log10_backoff = 0;
  };

  // Probability of token after an explicit context (internal ids, with bos).
  double Log10Prob(std::vector<int> context, int token) const;
  std::string Word(int id) const;
  int Id(const std::string& word) const;

  int order_ = 3;
  int vocab_size_ = 0;
  std::map<std::vector<int>, Entry> table_;
};

}  // namespace uasr

#endif  // UASR_NGRAM_H_
