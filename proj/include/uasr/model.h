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

// Shared Conformer-lite encoder, Transformer-lite decoder and CTC head.
//
// A single parameter map serves both streaming and full-context operation;
// the only difference between the two encoder passes is the self-attention
// mask. The convolution module is causal in both modes.

#ifndef UASR_MODEL_H_
#define UASR_MODEL_H_

#include <map>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "uasr/data.h"
#include "uasr/masking.h"
#include "uasr/tensor.h"

namespace uasr {

struct ModelConfig {
  int feat_dim = 16;
  int d_model = 32;
  int n_heads = 4;
  int d_ff = 64;
  int n_enc_layers = 2;
  int n_dec_layers = 2;
  int conv_kernel = 7;
  int vocab_size = 12;
  double dropout = 0.1;  // active only when a dropout RNG is supplied
  double label_smoothing = 0.1;

  VocabSpec vocab() const { return VocabSpec{vocab_size}; }
  void Validate() const;
  nlohmann::json ToJson() const;
  static ModelConfig FromJson(const nlohmann::json& j);
  bool operator==(const ModelConfig&) const = default;
};

template <typename T>
using Parameters = std::map<std::string, Tensor<T>>;

struct ParamSpec {
  enum class Kind { kWeight, kBias, kGain, kEmbedding };
  std::string name;
  Shape shape;
  Kind kind;
  int fan_in = 0;
  int fan_out = 0;
};

// Canonical names and shapes, determined by the config alone.
std::vector<ParamSpec> ParameterSpecs(const ModelConfig& config);

// Xavier-uniform weights, zero biases, unit gains, N(0, d_model^-1/2)
// embeddings. Deterministic per seed.
template <typename T>
Parameters<T> InitParams(uint64_t seed, const ModelConfig& config,
                         bool requires_grad = true);

template <typename To, typename From>
Parameters<To> CastParams(const Parameters<From>& params, bool requires_grad);

// Throws std::invalid_argument unless names and shapes match the config.
template <typename T>
void CheckParams(const Parameters<T>& params, const ModelConfig& config);

// Optional stochastic state for training-time dropout.
struct ForwardOptions {
  std::mt19937_64* dropout_rng = nullptr;
  // When set, receives the storage identity of every parameter read, in
  // order; lets callers assert that two passes share the same tensors.
  std::vector<const void*>* param_trace = nullptr;
};

template <typename T>
struct EncoderOutput {
  Tensor<T> hidden;  // T' x d_model
  int length = 0;
};

// Sinusoidal absolute position encoding, length x d.
std::vector<double> PositionEncoding(int length, int d);

template <typename T>
EncoderOutput<T> Encode(const Tensor<T>& frames, ChunkSetting chunk,
                        const Parameters<T>& params, const ModelConfig& config,
                        const ForwardOptions& options = {});

template <typename T>
Tensor<T> FramesTensor(const Utterance& u);

// T' x (V + 1) log-probabilities.
template <typename T>
Tensor<T> CtcHead(const EncoderOutput<T>& enc, const Parameters<T>& params);

// prev_tokens starts with sos; returns len x (V + 2) logits. Position t
// depends only on prev_tokens[0..t]; cross-attention sees all of H.
template <typename T>
Tensor<T> DecoderForward(const EncoderOutput<T>& enc,
                         std::span<const int> prev_tokens,
                         const Parameters<T>& params, const ModelConfig& config,
                         const ForwardOptions& options = {});

}  // namespace uasr

#endif  // UASR_MODEL_H_
