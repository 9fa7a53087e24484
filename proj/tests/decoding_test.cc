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

#include "uasr/decoding.h"

#include <cmath>
#include <filesystem>
#include <set>

#include "gtest/gtest.h"
#include "oracles.h"
#include "probes.h"
#include "test_util.h"
#include "uasr/ngram.h"

namespace uasr {
namespace {

using testing::TinyConfig;

using testing::ExhaustiveBest;
using testing::LogTable;
using testing::RandomPosteriors;

TEST(PrefixBeamSearchTest, AllBlankGivesEmpty) {
  const int frames = 5, dim = 4;
  std::vector<double> lp(frames * dim, std::log(1e-12));
  double expected = 0;
  for (int t = 0; t < frames; ++t) {
    lp[t * dim + dim - 1] = std::log(1 - 3e-12);
    expected += std::log(1 - 3e-12);
  }
  auto hyps = PrefixBeamSearch(Tensor<double>::FromData({frames, dim}, lp), 10);
  ASSERT_FALSE(hyps.empty());
  EXPECT_TRUE(hyps[0].tokens.empty());
  EXPECT_NEAR(hyps[0].ctc_logscore, expected, 1e-9);
}

TEST(PrefixBeamSearchTest, TwoFrameTableMatchesEnumeration) {
  // V = 2 labels plus blank; every collapsed sequence has at most 2 labels.
  const std::vector<double> p{0.3, 0.25, 0.45,  //
                              0.4, 0.35, 0.25};
  auto best = ExhaustiveBest(p, 2, 3);
  auto hyps = PrefixBeamSearch(LogTable(p, 2, 3), 10);
  EXPECT_EQ(hyps[0].tokens, best.first);
  EXPECT_NEAR(hyps[0].ctc_logscore, std::log(best.second), 1e-12);
  // With a beam this wide every sequence is scored exactly.
  auto all = testing::EnumerateCtc(p, 2, 3, 2);
  EXPECT_EQ(hyps.size(), all.size());
  for (const auto& h : hyps)
    EXPECT_NEAR(std::exp(h.ctc_logscore), all.at(h.tokens), 1e-12);
}

TEST(PrefixBeamSearchTest, WideBeamMatchesArgmaxSweep) {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 100; ++trial) {
    const int frames = 1 + trial % 4;
    const int dim = 2 + trial % 3;
    auto p = RandomPosteriors(frames, dim, rng);
    auto best = ExhaustiveBest(p, frames, dim);
    auto hyps = PrefixBeamSearch(LogTable(p, frames, dim), 1000);
    EXPECT_EQ(hyps[0].tokens, best.first) << trial;
    EXPECT_NEAR(hyps[0].ctc_logscore, std::log(best.second), 1e-8) << trial;
  }
}

// Pruned prefix scores are lower bounds on the exact probability, so the
// top-1 score of any beam is bounded by that of an exhaustive beam, which
// attains the optimum.
TEST(PrefixBeamSearchTest, ExhaustiveBeamBoundsEveryBeam) {
  std::mt19937_64 rng(32);
  for (int trial = 0; trial < 40; ++trial) {
    const int frames = 3 + trial % 6, dim = 4;
    auto p = RandomPosteriors(frames, dim, rng);
    auto lp = LogTable(p, frames, dim);
    auto exact = testing::EnumerateCtc(p, frames, dim, dim - 1);
    const double optimum = PrefixBeamSearch(lp, 100000)[0].ctc_logscore;
    EXPECT_NEAR(optimum, std::log(ExhaustiveBest(p, frames, dim).second), 1e-9);
    for (int beam : {1, 2, 3, 5, 8, 16, 64}) {
      auto hyps = PrefixBeamSearch(lp, beam);
      EXPECT_LE(hyps[0].ctc_logscore, optimum + 1e-12);
      for (const auto& h : hyps)
        EXPECT_LE(h.ctc_logscore, std::log(exact.at(h.tokens)) + 1e-12);
    }
  }
}

// Widening a pruned beam does not always raise the top-1 score: a wider beam
// can rank a different prefix first whose partially pruned score is lower.
TEST(PrefixBeamSearchTest, WiderBeamCanLowerTop1WhilePruning) {
  std::mt19937_64 rng(32);
  int violations = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const int frames = 3 + trial % 6, dim = 4;
    auto lp = LogTable(RandomPosteriors(frames, dim, rng), frames, dim);
    double prev = -1e300;
    for (int beam : {1, 2, 3, 5, 8, 16, 64}) {
      const double top = PrefixBeamSearch(lp, beam)[0].ctc_logscore;
      if (top < prev) ++violations;
      prev = top;
    }
  }
  EXPECT_GT(violations, 0);
}

TEST(PrefixBeamSearchTest, ErrorsOnMalformedInput) {
  EXPECT_THROW(PrefixBeamSearch(Tensor<double>::Full({2, 3}, -0.1), 4),
               std::invalid_argument);
  EXPECT_THROW(PrefixBeamSearch(Tensor<double>::Full({2, 3}, std::log(1 / 3.0)), 0),
               std::invalid_argument);
}

TEST(PrefixBeamSearchTest, ZeroLmWeightMatchesNoLm) {
  auto lm = NGramLM::Train({{0, 1, 2}, {2, 1}}, 3, 2);
  std::mt19937_64 rng(33);
  auto lp = LogTable(RandomPosteriors(6, 4, rng), 6, 4);
  auto plain = PrefixBeamSearch(lp, 5);
  auto fused = PrefixBeamSearch(lp, 5, &lm, 0.0);
  ASSERT_EQ(plain.size(), fused.size());
  for (size_t i = 0; i < plain.size(); ++i) {
    EXPECT_EQ(plain[i].tokens, fused[i].tokens);
    EXPECT_EQ(plain[i].ctc_logscore, fused[i].ctc_logscore);
  }
}

TEST(PrefixBeamSearchTest, FusionAddsWeightedLmScore) {
  auto lm = NGramLM::Train({{0, 1, 2}, {2, 1}, {0, 0, 1}}, 3, 3);
  std::mt19937_64 rng(34);
  auto lp = LogTable(RandomPosteriors(6, 4, rng), 6, 4);
  for (const auto& h : PrefixBeamSearch(lp, 6, &lm, 0.7)) {
    double expected = 0;
    for (size_t i = 0; i < h.tokens.size(); ++i)
      expected += lm.LogProb(std::span<const int>(h.tokens).first(i), h.tokens[i]);
    EXPECT_NEAR(h.lm_logscore, expected, 1e-12);
    EXPECT_NEAR(h.combined, h.ctc_logscore + 0.7 * expected, 1e-12);
  }
}

class RescoreTest : public ::testing::Test {
 protected:
  void SetUp() override {
    config_ = TinyConfig();
    params_ = InitParams<double>(41, config_);
    std::mt19937_64 rng(41);
    enc_ = Encode(testing::RandomTensor<double>({30, config_.feat_dim}, rng),
                  ChunkSetting::Chunk(2), params_, config_);
    auto lp = CtcHead(enc_, params_);
    hyps_ = PrefixBeamSearch(lp, 3);
  }
  ModelConfig config_;
  Parameters<double> params_;
  EncoderOutput<double> enc_;
  std::vector<Hypothesis> hyps_;
};

// Scores each token with a separate decoder run on its own prefix.
double IncrementalAed(const EncoderOutput<double>& enc, const TokenSequence& tokens,
                      const Parameters<double>& params, const ModelConfig& c) {
  double total = 0;
  std::vector<int> prefix{c.vocab().sos_eos()};
  for (size_t i = 0; i <= tokens.size(); ++i) {
    auto logits = DecoderForward(enc, prefix, params, c);
    const int last = logits.rows() - 1;
    const int target = i < tokens.size() ? tokens[i] : c.vocab().sos_eos();
    double m = -1e300;
    for (int k = 0; k < logits.cols(); ++k) m = std::max(m, logits.at(last, k));
    double z = 0;
    for (int k = 0; k < logits.cols(); ++k) z += std::exp(logits.at(last, k) - m);
    total += logits.at(last, target) - m - std::log(z);
    if (i < tokens.size()) prefix.push_back(tokens[i]);
  }
  return total;
}

TEST_F(RescoreTest, MatchesIncrementalRecomputation) {
  ASSERT_EQ(hyps_.size(), 3u);
  auto out = AttentionRescore(hyps_, enc_, params_, config_, 0.5);
  for (const auto& h : out) {
    const double aed = IncrementalAed(enc_, h.tokens, params_, config_);
    EXPECT_NEAR(h.aed_logscore, aed, 1e-8);
    EXPECT_NEAR(h.combined, aed + 0.5 * h.ctc_logscore, 1e-8);
  }
}

TEST_F(RescoreTest, IsAPermutation) {
  auto out = AttentionRescore(hyps_, enc_, params_, config_, 0.3);
  std::set<TokenSequence> before, after;
  for (const auto& h : hyps_) before.insert(h.tokens);
  for (const auto& h : out) after.insert(h.tokens);
  EXPECT_EQ(before, after);
  for (size_t i = 1; i < out.size(); ++i)
    EXPECT_GE(out[i - 1].combined, out[i].combined);
}

TEST_F(RescoreTest, ZeroCtcWeightIsPureAedOrder) {
  auto out = AttentionRescore(hyps_, enc_, params_, config_, 0.0);
  for (size_t i = 1; i < out.size(); ++i)
    EXPECT_GE(out[i - 1].aed_logscore, out[i].aed_logscore);
}

TEST_F(RescoreTest, SingleHypothesisAndEmptyList) {
  auto out = AttentionRescore({hyps_[1]}, enc_, params_, config_, 0.5);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0].tokens, hyps_[1].tokens);
  EXPECT_THROW(AttentionRescore({}, enc_, params_, config_, 0.5),
               std::invalid_argument);
}

TEST(DecodeUtteranceTest, PassesAndDeterminism) {
  const auto c = TinyConfig();
  auto params = InitParams<float>(42, c);
  auto corpus = GenerateCorpus(3, 2, c.vocab(), c.feat_dim, 0.1);
  DecodeOptions o;
  o.chunk = ChunkSetting::Chunk(4);
  o.pass = 1;
  auto first = DecodeUtterance(corpus[0], params, c, o);
  o.pass = 2;
  auto second = DecodeUtterance(corpus[0], params, c, o);
  EXPECT_EQ(first.size(), second.size());
  EXPECT_EQ(second, DecodeUtterance(corpus[0], params, c, o));
  o.pass = 3;
  EXPECT_THROW(DecodeUtterance(corpus[0], params, c, o), std::invalid_argument);
}

TEST(NBestTest, RoundTrip) {
  std::vector<NBest> r{{"utt1", {{{1, 2}, -1.25, -0.5, -3.0 / 7, 0.1}}},
                       {"utt2", {}}};
  const auto path =
      (std::filesystem::temp_directory_path() / "uasr_nbest.jsonl").string();
  WriteNBest(path, r);
  auto back = ReadNBest(path);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].id, "utt1");
  EXPECT_EQ(back[0].hyps, r[0].hyps);
  EXPECT_TRUE(back[1].hyps.empty());
  std::filesystem::remove(path);
}

// ---- n-gram LM ----

double ContextMass(const NGramLM& lm, const std::vector<int>& context) {
  double total = 0;
  for (int w = 0; w <= lm.eos(); ++w) total += std::exp(lm.ContextLogProb(context, w));
  return total;
}

TEST(NGramTest, SingleTranscriptNormalizes) {
  auto lm = NGramLM::Train({{0, 1}}, 3, 2);
  EXPECT_NEAR(ContextMass(lm, {0}), 1.0, 1e-9);
  EXPECT_NEAR(ContextMass(lm, {lm.bos()}), 1.0, 1e-9);
  EXPECT_NEAR(ContextMass(lm, {}), 1.0, 1e-9);
}

TEST(NGramTest, UnseenTokenHasFloorProbability) {
  auto lm = NGramLM::Train({{0, 1}}, 4, 3);
  const std::vector<int> h{0, 1};
  EXPECT_GT(std::exp(lm.LogProb(h, 3)), 0.0);
  EXPECT_GT(std::exp(lm.LogProb({}, 2)), 0.0);
}

TEST(NGramTest, HandComputedBigram) {
  // a=0, b=1, c=2. Predicted unigram counts: a 3, b 2, c 1, </s> 3 of 9, four
  // distinct types, so P(b) = (2 - .5)/9 + .5 * 4/9 * 1/4 = 2/9. After a:
  // b twice, c once, so P(b|a) = 1.5/3 + .5 * 2/3 * P(b).
  auto lm = NGramLM::Train({{0, 1}, {0, 1}, {0, 2}}, 3, 2);
  const std::vector<int> a{0};
  const double pb = 2.0 / 9;
  const double pc = 0.5 / 9 + 0.5 / 9;
  EXPECT_NEAR(std::exp(lm.ContextLogProb({}, 1)), pb, 1e-12);
  EXPECT_NEAR(std::exp(lm.LogProb(a, 1)), 1.5 / 3 + 1.0 / 3 * pb, 1e-12);
  EXPECT_NEAR(std::exp(lm.LogProb(a, 2)), 0.5 / 3 + 1.0 / 3 * pc, 1e-12);
  EXPECT_GT(lm.LogProb(a, 1), lm.LogProb(a, 2));
}

TEST(NGramTest, EveryContextNormalizes) {
  auto corpus = GenerateCorpus(5, 60, VocabSpec{6}, 4, 0.1);
  std::vector<TokenSequence> text;
  for (const auto& u : corpus) text.push_back(u.tokens);
  for (int order : {1, 2, 3, 4}) {
    auto lm = NGramLM::Train(text, 6, order);
    auto contexts = lm.Contexts();
    if (order > 1) EXPECT_GT(contexts.size(), 1u);
    for (const auto& h : contexts)
      EXPECT_NEAR(ContextMass(lm, h), 1.0, 1e-9) << "order " << order;
    // Histories never seen in training also normalize.
    std::vector<int> novel(order > 1 ? order - 1 : 0, 5);
    EXPECT_NEAR(ContextMass(lm, novel), 1.0, 1e-9);
  }
}

TEST(NGramTest, ArpaRoundTrip) {
  auto corpus = GenerateCorpus(6, 80, VocabSpec{5}, 4, 0.1);
  std::vector<TokenSequence> text;
  for (const auto& u : corpus) text.push_back(u.tokens);
  auto lm = NGramLM::Train(text, 5, 3);
  const auto path =
      (std::filesystem::temp_directory_path() / "uasr_lm.arpa").string();
  lm.WriteArpa(path);
  auto back = NGramLM::ReadArpa(path);
  EXPECT_EQ(back.order(), 3);
  EXPECT_EQ(back.vocab_size(), 5);
  for (const auto& h : lm.Contexts())
    for (int w = 0; w <= lm.eos(); ++w)
      EXPECT_NEAR(back.ContextLogProb(h, w), lm.ContextLogProb(h, w), 1e-6);
  for (const auto& seq : testing::AllSequences(5, 3))
    for (int w = 0; w <= lm.eos(); ++w)
      EXPECT_NEAR(back.LogProb(seq, w), lm.LogProb(seq, w), 1e-6);
  std::filesystem::remove(path);
}

TEST(NGramTest, RejectsBadInput) {
  EXPECT_THROW(NGramLM::Train({}, 3, 2), std::invalid_argument);
  EXPECT_THROW(NGramLM::Train({{7}}, 3, 2), std::invalid_argument);
  auto lm = NGramLM::Train({{0}}, 3, 2);
  EXPECT_THROW(lm.LogProb({}, 9), std::out_of_range);
}

}  // namespace
}  // namespace uasr
