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

// Attention masks that switch the shared encoder between streaming
// (chunk-restricted) and full-context operation. All lengths are in
// post-subsampling frames.

#ifndef UASR_MASKING_H_
#define UASR_MASKING_H_

#include <random>
#include <span>
#include <string>
#include <vector>

#include "uasr/tensor.h"

namespace uasr {

// Entry (i, j) true: query frame i may attend key frame j.
using AttentionMask = BoolMatrix;

// Either full context or a chunk size >= 1.
class ChunkSetting {
 public:
  static ChunkSetting Full() { return ChunkSetting(0); }
  static ChunkSetting Chunk(int c);
  // "full" or a positive integer.
  static ChunkSetting Parse(const std::string& text);

  bool is_full() const { return chunk_ == 0; }
  int chunk() const { return chunk_; }
  std::string ToString() const;
  bool operator==(const ChunkSetting&) const = default;

 private:
  explicit ChunkSetting(int c) : chunk_(c) {}
  int chunk_;
};

struct ChunkPolicy {
  enum class Mode { kFull, kFixed, kDynamic };
  Mode mode = Mode::kDynamic;
  int fixed_chunk = 16;
  int max_chunk = 25;
  double p_full = 0.5;

  static ChunkPolicy Full() { return {Mode::kFull, 16, 25, 0.0}; }
  static ChunkPolicy Fixed(int c) { return {Mode::kFixed, c, 25, 0.0}; }
  static ChunkPolicy Dynamic(int max_chunk = 25, double p_full = 0.5) {
    return {Mode::kDynamic, 16, max_chunk, p_full};
  }
  void Validate() const;
};

// (i, j) true iff floor(j / c) <= floor(i / c).
AttentionMask ChunkMask(int length, int chunk);
AttentionMask FullMask(int length);
AttentionMask MaskFor(int length, ChunkSetting setting);

// One draw per batch.
ChunkSetting SampleChunk(const ChunkPolicy& policy, std::mt19937_64& rng);

// True for real frames, false for padding.
std::vector<std::vector<bool>> PaddingMask(std::span<const int> lengths,
                                           int max_length);

// ANDs a key-axis padding vector into a mask.
AttentionMask ApplyKeyPadding(const AttentionMask& mask,
                              const std::vector<bool>& key_valid);

}  // namespace uasr

#endif  // UASR_MASKING_H_
