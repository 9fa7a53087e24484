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

// Training objectives: CTC, label-smoothed attention loss, the frame-level
// contrastive bridging loss between streaming and full-context encoder
// outputs, the L2 bridging baseline, and their joint combination.

#ifndef UASR_LOSSES_H_
#define UASR_LOSSES_H_

#include <random>
#include <span>
#include <string>
#include <vector>

#include "uasr/tensor.h"

namespace uasr {

enum class Bridge { kNone, kL2, kContrastive };

std::string BridgeName(Bridge b);
Bridge ParseBridge(const std::string& name);

struct ContrastiveConfig {
  Bridge bridge = Bridge::kContrastive;
  double temperature = 0.4;
  int num_negatives = 16;  // clamped to n - 1 per utterance
  double weight = 1.0;     // scale on the bridge term in the total
  // Gradient flow into the full-context side. The contrastive loss trains
  // both sides by default; the L2 baseline treats full context as teacher.
  bool contrastive_stop_gradient = false;
  bool l2_stop_gradient = true;

  void Validate() const;
};

// Per-batch means of every term plus the total they combine into.
struct LossBreakdown {
  double ctc_s = 0, aed_s = 0, ctc_ns = 0, aed_ns = 0;
  double bridge = 0;  // unweighted bridge term
  double total = 0;
};

// lambda * ctc + (1 - lambda) * aed for each branch, summed, plus
// weight * bridge.
double CombineLosses(const LossBreakdown& b, double lambda, double weight);
LossBreakdown JointLoss(double ctc_s, double aed_s, double ctc_ns,
                        double aed_ns, double bridge, double lambda,
                        double weight = 1.0);

// Negative log of the total probability of all blank-augmented alignments
// of target. logprobs is T' x (V + 1); blank is the column index blank. Throws
// std::invalid_argument("CTC infeasible") when T' is too short.
template <typename T>
Tensor<T> CtcLoss(const Tensor<T>& logprobs, std::span<const int> target,
                  int blank);

// Mean over positions of KL(smoothed one-hot || softmax(logits)); the
// smoothed target puts 1 - eps on gold and eps / (C - 1) on every other
// class. target has one entry per logits row.
template <typename T>
Tensor<T> AedLoss(const Tensor<T>& logits, std::span<const int> target,
                  double label_smoothing);

// -log softmax over {h_ns_i} U distractors of cosine(h_s_i, k) / tau,
// evaluated at the positive. Inputs are 1 x d, 1 x d and N x d.
template <typename T>
Tensor<T> ContrastiveFrameLoss(const Tensor<T>& h_s_i, const Tensor<T>& h_ns_i,
                               const Tensor<T>& distractors, double tau);

// For each of n frames, min(num_negatives, n - 1) distinct indices drawn
// uniformly from the other frames. Throws when n == 1.
std::vector<std::vector<int>> SampleNegatives(int n, int num_negatives,
                                              std::mt19937_64& rng);

// Mean of frame losses with explicit negative sets (all the same size).
template <typename T>
Tensor<T> ContrastiveLoss(const Tensor<T>& h_s, const Tensor<T>& h_ns,
                          const std::vector<std::vector<int>>& negatives,
                          double tau, bool stop_gradient_ns = false);

template <typename T>
Tensor<T> ContrastiveLoss(const Tensor<T>& h_s, const Tensor<T>& h_ns,
                          const ContrastiveConfig& cfg, std::mt19937_64& rng);

// Mean over frames of ||h_s_i - h_ns_i||^2.
template <typename T>
Tensor<T> L2BridgeLoss(const Tensor<T>& h_s, const Tensor<T>& h_ns,
                       bool stop_gradient_ns = true);

}  // namespace uasr

#endif  // UASR_LOSSES_H_
