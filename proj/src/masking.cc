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

#include "uasr/masking.h"

#include <stdexcept>

namespace uasr {

ChunkSetting ChunkSetting::Chunk(int c) {
  if (c < 1) throw std::invalid_argument("chunk must be ≥ 1 or 'full'");
  return ChunkSetting(c);
}

ChunkSetting ChunkSetting::Parse(const std::string& text) {
  if (text == "full") return Full();
  size_t used = 0;
  int c = 0;
  try {
    c = std::stoi(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != text.size() || c < 1)
    throw std::invalid_argument("chunk must be ≥ 1 or 'full'");
  return ChunkSetting(c);
}

std::string ChunkSetting::ToString() const {
  return is_full() ? "full" : std::to_string(chunk_);
}

void ChunkPolicy::Validate() const {
  if (mode == Mode::kFixed && (fixed_chunk < 1 || fixed_chunk > max_chunk))
    throw std::invalid_argument("fixed chunk must lie in [1, max_chunk]");
  if (max_chunk < 1) throw std::invalid_argument("max_chunk must be >= 1");
  if (!(p_full >= 0.0 && p_full <= 1.0))
    throw std::invalid_argument("p_full must lie in [0, 1]");
}

AttentionMask ChunkMask(int length, int chunk) {
  if (length < 1 || chunk < 1)
    throw std::invalid_argument("ChunkMask: length and chunk must be >= 1");
  AttentionMask m(length, length);
  for (int i = 0; i < length; ++i) {
    const int limit = std::min(length, (i / chunk + 1) * chunk);
    for (int j = 0; j < limit; ++j) m.Set(i, j, true);
  }
  return m;
}

AttentionMask FullMask(int length) {
  if (length < 1) throw std::invalid_argument("FullMask: length must be >= 1");
  return AttentionMask(length, length, true);
}

AttentionMask MaskFor(int length, ChunkSetting setting) {
  return setting.is_full() ? FullMask(length)
                           : ChunkMask(length, setting.chunk());
}

ChunkSetting SampleChunk(const ChunkPolicy& policy, std::mt19937_64& rng) {
  policy.Validate();
  switch (policy.mode) {
    case ChunkPolicy::Mode::kFull:
      return ChunkSetting::Full();
    case ChunkPolicy::Mode::kFixed:
      return ChunkSetting::Chunk(policy.fixed_chunk);
    case ChunkPolicy::Mode::kDynamic:
      break;
  }
  if (std::uniform_real_distribution<double>(0.0, 1.0)(rng) < policy.p_full)
    return ChunkSetting::Full();
  return ChunkSetting::Chunk(
      std::uniform_int_distribution<int>(1, policy.max_chunk)(rng));
}

std::vector<std::vector<bool>> PaddingMask(std::span<const int> lengths,
                                           int max_length) {
  std::vector<std::vector<bool>> out;
  out.reserve(lengths.size());
  for (int len : lengths) {
    if (len > max_length || len < 0)
      throw std::invalid_argument("length exceeds padded length");
    std::vector<bool> v(max_length, false);
    for (int i = 0; i < len; ++i) v[i] = true;
    out.push_back(std::move(v));
  }
  return out;
}

AttentionMask ApplyKeyPadding(const AttentionMask& mask,
                              const std::vector<bool>& key_valid) {
  if (static_cast<int>(key_valid.size()) != mask.cols)
    throw std::invalid_argument("padding vector length differs from mask");
  AttentionMask out = mask;
  for (int i = 0; i < mask.rows; ++i)
    for (int j = 0; j < mask.cols; ++j)
      out.Set(i, j, mask(i, j) && key_valid[j]);
  return out;
}

}  // namespace uasr
