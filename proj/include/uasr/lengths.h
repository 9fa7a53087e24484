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

#ifndef UASR_LENGTHS_H_
#define UASR_LENGTHS_H_

#include <span>
#include <stdexcept>

namespace uasr {

// Front-end receptive field: each post-subsampling frame t reads input frames
// [4t, 4t + 6].
inline constexpr int kSubsampleStride = 4;
inline constexpr int kSubsampleReceptiveField = 7;
inline constexpr int kMinInputFrames = 7;

// Two kernel-3, stride-2, unpadded stages.
inline int SubsampledLength(int num_frames) {
  if (num_frames < kMinInputFrames)
    throw std::invalid_argument("too short after subsampling");
  auto stage = [](int n) { return (n - 3) / 2 + 1; };
  return stage(stage(num_frames));
}

// Minimum CTC input length for a target: one frame per label plus one blank
// between each pair of identical neighbours.
inline int CtcMinFrames(std::span<const int> target) {
  int n = static_cast<int>(target.size());
  for (size_t i = 1; i < target.size(); ++i)
    if (target[i] == target[i - 1]) ++n;
  return n;
}

}  // namespace uasr

#endif  // UASR_LENGTHS_H_
