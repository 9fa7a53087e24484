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

#include "uasr/data.h"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "gtest/gtest.h"
#include "uasr/lengths.h"

namespace uasr {
namespace {

std::string TempPath(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

TEST(LengthsTest, SubsampledLength) {
  EXPECT_EQ(SubsampledLength(16), 3);
  EXPECT_EQ(SubsampledLength(7), 1);
  EXPECT_EQ(SubsampledLength(100), 24);
  try {
    SubsampledLength(6);
    FAIL();
  } catch (const std::invalid_argument& e) {
    EXPECT_STREQ(e.what(), "too short after subsampling");
  }
}

TEST(GenerateCorpusTest, ZeroNoiseFramesSitOnTemplates) {
  VocabSpec vocab;
  const auto templates = TokenTemplates(5, vocab, 16);
  std::mt19937_64 rng(1);
  auto u = EmitUtterance("u", {3}, {5}, templates, 0.0, rng);
  ASSERT_EQ(u.num_frames, 5);
  for (int t = 0; t < 5; ++t)
    for (int f = 0; f < 16; ++f) EXPECT_EQ(u.at(t, f), templates[3][f]);

  double norm = 0;
  for (float v : templates[7]) norm += v * v;
  EXPECT_NEAR(norm, 1.0, 1e-6);

  auto corpus = GenerateCorpus(5, 20, vocab, 16, 0.0);
  for (const auto& utt : corpus)
    for (int t = 0; t < utt.num_frames; ++t) {
      bool on_template = false;
      for (int tok : utt.tokens) {
        bool eq = true;
        for (int f = 0; f < 16; ++f) eq = eq && utt.at(t, f) == templates[tok][f];
        on_template = on_template || eq;
      }
      EXPECT_TRUE(on_template);
    }
}

TEST(GenerateCorpusTest, DeterministicPerSeed) {
  VocabSpec vocab;
  EXPECT_EQ(GenerateCorpus(3, 25, vocab, 16, 0.3),
            GenerateCorpus(3, 25, vocab, 16, 0.3));
  EXPECT_NE(GenerateCorpus(3, 25, vocab, 16, 0.3),
            GenerateCorpus(4, 25, vocab, 16, 0.3));
}

TEST(GenerateCorpusTest, InvariantSweep) {
  VocabSpec vocab;
  const auto corpus = GenerateCorpus(1, 100, vocab, 16, 0.5);
  ASSERT_EQ(corpus.size(), 100u);
  for (const auto& u : corpus) {
    EXPECT_NO_THROW(ValidateUtterance(u, vocab));
    EXPECT_GE(u.tokens.size(), 3u);
    EXPECT_LE(u.tokens.size(), 10u);
    EXPECT_GE(u.num_frames, 4 * static_cast<int>(u.tokens.size()));
    EXPECT_LE(u.num_frames, 8 * static_cast<int>(u.tokens.size()));
    EXPECT_LE(static_cast<int>(u.tokens.size()), SubsampledLength(u.num_frames));
    for (int t : u.tokens) {
      EXPECT_NE(t, vocab.blank());
      EXPECT_NE(t, vocab.sos_eos());
    }
  }
}

TEST(GenerateCorpusTest, ParameterValidation) {
  VocabSpec vocab;
  EXPECT_THROW(GenerateCorpus(1, 0, vocab, 16, 0.1), std::invalid_argument);
  EXPECT_THROW(GenerateCorpus(1, 5, vocab, 1, 0.1), std::invalid_argument);
}

TEST(SpecAugmentTest, IdentityPolicy) {
  auto u = GenerateCorpus(2, 1, VocabSpec{}, 16, 0.2)[0];
  std::mt19937_64 rng(1);
  EXPECT_EQ(SpecAugment(u, AugmentPolicy{}, rng), u);
}

TEST(SpecAugmentTest, CountsZeroedEntries) {
  auto u = GenerateCorpus(2, 10, VocabSpec{}, 16, 0.2)[3];
  for (float v : u.frames) ASSERT_NE(v, 0.0f);
  AugmentPolicy policy;
  policy.num_time_masks = 1;
  policy.max_time_mask_width = 5;
  for (uint64_t seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(seed);
    std::vector<MaskRegion> regions;
    auto out = SpecAugment(u, policy, rng, &regions);
    ASSERT_EQ(regions.size(), 1u);
    const auto zeros = std::count(out.frames.begin(), out.frames.end(), 0.0f);
    EXPECT_EQ(zeros, regions[0].width * u.feat_dim);
    EXPECT_EQ(out.tokens, u.tokens);
    EXPECT_EQ(out.num_frames, u.num_frames);
    EXPECT_EQ(out.feat_dim, u.feat_dim);
  }
}

TEST(SpecAugmentTest, SeededMasksRepeat) {
  auto u = GenerateCorpus(2, 1, VocabSpec{}, 16, 0.2)[0];
  AugmentPolicy policy{2, 4, 2, 3};
  std::mt19937_64 a(9), b(9);
  EXPECT_EQ(SpecAugment(u, policy, a), SpecAugment(u, policy, b));
}

TEST(CorpusIoTest, RoundTripIsBitExact) {
  auto corpus = GenerateCorpus(1, 10, VocabSpec{}, 16, 0.7);
  const auto path = TempPath("uasr_corpus_roundtrip.jsonl");
  SaveCorpus(path, corpus);
  auto loaded = LoadCorpus(path);
  ASSERT_EQ(loaded.size(), corpus.size());
  for (size_t i = 0; i < corpus.size(); ++i) {
    EXPECT_EQ(loaded[i].id, corpus[i].id);
    EXPECT_EQ(loaded[i].tokens, corpus[i].tokens);
    ASSERT_EQ(loaded[i].frames.size(), corpus[i].frames.size());
    EXPECT_EQ(std::memcmp(loaded[i].frames.data(), corpus[i].frames.data(),
                          corpus[i].frames.size() * sizeof(float)),
              0);
  }
  std::filesystem::remove(path);
}

TEST(CorpusIoTest, EmptyFileIsEmptyCorpus) {
  const auto path = TempPath("uasr_corpus_empty.jsonl");
  { std::ofstream os(path); }
  EXPECT_TRUE(LoadCorpus(path).empty());
  std::filesystem::remove(path);
}

TEST(CorpusIoTest, RejectsVaryingFeatureDimension) {
  const auto path = TempPath("uasr_corpus_bad_dim.jsonl");
  {
    std::ofstream os(path);
    os << R"({"id":"a","tokens":[1],"frames":[[1,2],[3,4]]})" << "\n";
    os << R"({"id":"b","tokens":[1],"frames":[[1,2,3]]})" << "\n";
  }
  try {
    LoadCorpus(path);
    FAIL();
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find(":2:"), std::string::npos) << e.what();
  }
  std::filesystem::remove(path);
}

TEST(CorpusIoTest, MalformedLineReportsLineNumber) {
  const auto path = TempPath("uasr_corpus_malformed.jsonl");
  {
    std::ofstream os(path);
    os << R"({"id":"a","tokens":[1],"frames":[[1,2]]})" << "\n";
    os << "\n";
    os << R"({"id":"b","tokens":[1],"frames":)" << "\n";
  }
  try {
    LoadCorpus(path);
    FAIL();
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find(":3:"), std::string::npos) << e.what();
  }
  std::filesystem::remove(path);
}

}  // namespace
}  // namespace uasr
