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

#include "uasr/checkpoint.h"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace uasr {

using nlohmann::json;

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

void SaveCheckpoint(const std::string& path, const Checkpoint& ckpt) {
  CheckParams(ckpt.params, ckpt.config);
  json manifest = json::array();
  uint64_t offset = 0;
  for (const auto& [name, t] : ckpt.params) {
    manifest.push_back({{"name", name}, {"shape", t.shape()}, {"offset", offset}});
    offset += t.size() * sizeof(float);
  }
  json header = {{"config", ckpt.config.ToJson()},
                 {"validation_loss", ckpt.validation_loss},
                 {"step", ckpt.step},
                 {"tensors", manifest}};
  const std::string text = header.dump();
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path + " for writing");
  os.write("UASR", 4);
  os.put(static_cast<char>(kCheckpointVersion));
  const uint32_t len = static_cast<uint32_t>(text.size());
  os.write(reinterpret_cast<const char*>(&len), sizeof(len));
  os.write(text.data(), text.size());
  for (const auto& [name, t] : ckpt.params)
    os.write(reinterpret_cast<const char*>(t.data().data()),
             t.size() * sizeof(float));
  if (!os) throw std::runtime_error("write failed: " + path);
}

Checkpoint LoadCheckpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path);
  std::string bytes((std::istreambuf_iterator<char>(is)),
                    std::istreambuf_iterator<char>());
  auto fail = [&](const std::string& why) {
    throw std::runtime_error(path + ": " + why);
  };
  if (bytes.size() < 9 || bytes.compare(0, 4, "UASR") != 0)
    fail("not a checkpoint (bad magic)");
  if (static_cast<uint8_t>(bytes[4]) != kCheckpointVersion)
    fail("unsupported checkpoint version");
  uint32_t len = 0;
  std::memcpy(&len, bytes.data() + 5, sizeof(len));
  const size_t data_start = 9 + static_cast<size_t>(len);
  if (bytes.size() < data_start) fail("truncated header");
  json header;
  try {
    header = json::parse(bytes.substr(9, len));
  } catch (const json::exception& e) {
    fail(std::string("bad header: ") + e.what());
  }
  Checkpoint ckpt;
  ckpt.config = ModelConfig::FromJson(header.at("config"));
  ckpt.validation_loss = header.at("validation_loss").get<double>();
  ckpt.step = header.at("step").get<int64_t>();
  for (const auto& entry : header.at("tensors")) {
    const auto name = entry.at("name").get<std::string>();
    const auto shape = entry.at("shape").get<Shape>();
    const auto offset = entry.at("offset").get<uint64_t>();
    const size_t n = NumElements(shape);
    if (data_start + offset + n * sizeof(float) > bytes.size())
      fail("tensor " + name + " extends past end of file");
    std::vector<float> v(n);
    std::memcpy(v.data(), bytes.data() + data_start + offset,
                n * sizeof(float));
    ckpt.params.emplace(name, Tensor<float>::FromData(shape, std::move(v)));
  }
  CheckParams(ckpt.params, ckpt.config);
  return ckpt;
}

Checkpoint AverageCheckpoints(std::vector<Checkpoint> ckpts, int k) {
  if (ckpts.empty()) throw std::invalid_argument("no checkpoints to average");
  if (k < 1 || k > static_cast<int>(ckpts.size()))
    throw std::invalid_argument("k must lie in [1, number of checkpoints]");
  for (const auto& c : ckpts)
    if (!(c.config == ckpts[0].config))
      throw std::invalid_argument("checkpoint config mismatch");
  std::stable_sort(ckpts.begin(), ckpts.end(),
                   [](const Checkpoint& a, const Checkpoint& b) {
                     if (a.validation_loss != b.validation_loss)
                       return a.validation_loss < b.validation_loss;
                     return a.step > b.step;
                   });
  Checkpoint out;
  out.config = ckpts[0].config;
  double loss = 0;
  for (int i = 0; i < k; ++i) {
    loss += ckpts[i].validation_loss;
    out.step = std::max(out.step, ckpts[i].step);
  }
  out.validation_loss = loss / k;
  for (const auto& [name, first] : ckpts[0].params) {
    std::vector<double> acc(first.size(), 0.0);
    for (int i = 0; i < k; ++i) {
      auto v = ckpts[i].params.at(name).data();
      for (size_t j = 0; j < acc.size(); ++j) acc[j] += v[j];
    }
    std::vector<float> mean(acc.size());
    for (size_t j = 0; j < acc.size(); ++j)
      mean[j] = static_cast<float>(acc[j] / k);
    out.params.emplace(name, Tensor<float>::FromData(first.shape(), mean));
  }
  return out;
}

Checkpoint AverageCheckpoints(const std::vector<std::string>& paths, int k) {
  std::vector<Checkpoint> ckpts;
  ckpts.reserve(paths.size());
  for (const auto& p : paths) ckpts.push_back(LoadCheckpoint(p));
  return AverageCheckpoints(std::move(ckpts), k);
}

}  // namespace uasr
