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

// Checkpoint persistence and top-k averaging.
//
// File layout:
//   "UASR"            4 bytes magic
//   version           1 byte (currently 1)
//   header_len        uint32, little-endian
//   header            header_len bytes of JSON: {"config", "validation_loss",
//                     "step", "tensors": [{"name", "shape", "offset"}]}
//   data              float32 little-endian; offsets are bytes from the start
//                     of this section

#ifndef UASR_CHECKPOINT_H_
#define UASR_CHECKPOINT_H_

#include <cstdint>
#include <string>
#include <vector>

#include "uasr/model.h"

namespace uasr {

inline constexpr uint8_t kCheckpointVersion = 1;

struct Checkpoint {
  ModelConfig config;
  Parameters<float> params;
  double validation_loss = 0.0;
  int64_t step = 0;
};

void SaveCheckpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint LoadCheckpoint(const std::string& path);

// Mean of the k checkpoints with lowest validation loss (ties: later step
// wins). All inputs must share one config.
Checkpoint AverageCheckpoints(const std::vector<std::string>& paths, int k);
Checkpoint AverageCheckpoints(std::vector<Checkpoint> ckpts, int k);

}  // namespace uasr

#endif  // UASR_CHECKPOINT_H_
