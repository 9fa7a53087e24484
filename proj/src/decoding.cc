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

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <stdexcept>

#include "json.hpp"

namespace uasr {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double LogAdd(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double m = std::max(a, b);
  return m + std::log1p(std::exp(-std::abs(a - b)));
}

struct PrefixState {
  double blank = kNegInf;     // log P(prefix, path ends in blank)
  double non_blank = kNegInf; // log P(prefix, path ends in its last token)
  double lm = 0;              // sum of fused LM log-probabilities
  double Total() const { return LogAdd(blank, non_blank); }
};

void CheckDistributions(const Tensor<double>& logprobs) {
  if (logprobs.ndim() != 2 || logprobs.rows() < 1 || logprobs.cols() < 2)
    throw std::invalid_argument("logprobs must be T' x (V + 1) with T' >= 1");
  for (int t = 0; t < logprobs.rows(); ++t) {
    double total = kNegInf;
    for (int k = 0; k < logprobs.cols(); ++k) {
      const double v = logprobs.at(t, k);
      if (std::isnan(v) || v > 1e-9)
        throw std::invalid_argument("logprobs row is not a log-distribution");
      total = LogAdd(total, v);
    }
    if (std::abs(total) > 1e-4)
      throw std::invalid_argument("logprobs row does not normalize");
  }
}

}  // namespace

bool RanksBefore(double score_a, const TokenSequence& a, double score_b,
                 const TokenSequence& b) {
  if (score_a != score_b) return score_a > score_b;
  return a < b;
}

std::vector<Hypothesis> PrefixBeamSearch(const Tensor<double>& logprobs,
                                         int beam, const NGramLM* lm,
                                         double lm_weight) {
  if (beam < 1) throw std::invalid_argument("beam must be >= 1");
  CheckDistributions(logprobs);
  const int blank = logprobs.cols() - 1;
  if (lm != nullptr && lm->vocab_size() != blank)
    throw std::invalid_argument("LM vocabulary does not match the CTC head");
  const bool fuse = lm != nullptr && lm_weight != 0.0;

  auto score = [&](const PrefixState& s) { return s.Total() + lm_weight * s.lm; };
  using Beam = std::map<TokenSequence, PrefixState>;
  Beam current;
  current[{}].blank = 0.0;
  for (int t = 0; t < logprobs.rows(); ++t) {
    Beam next;
    auto extended = [&](const TokenSequence& prefix, const PrefixState& from,
                        int k) -> PrefixState& {
      TokenSequence longer = prefix;
      longer.push_back(k);
      auto [it, inserted] = next.try_emplace(std::move(longer));
      if (inserted) {
        auto known = current.find(it->first);
        it->second.lm =
            known != current.end()
                ? known->second.lm
                : from.lm + (fuse ? lm->LogProb(prefix, k) : 0.0);
      }
      return it->second;
    };
    for (const auto& [prefix, s] : current) {
      const double total = s.Total();
      auto& same = next[prefix];
      same.lm = s.lm;
      same.blank = LogAdd(same.blank, total + logprobs.at(t, blank));
      const int last = prefix.empty() ? -1 : prefix.back();
      for (int k = 0; k < blank; ++k) {
        const double p = logprobs.at(t, k);
        if (p == kNegInf) continue;
        if (k == last) {
          // A repeat without an intervening blank stays in the same prefix.
          auto& same_again = next[prefix];
          same_again.non_blank = LogAdd(same_again.non_blank, s.non_blank + p);
          auto& ext = extended(prefix, s, k);
          ext.non_blank = LogAdd(ext.non_blank, s.blank + p);
        } else {
          auto& ext = extended(prefix, s, k);
          ext.non_blank = LogAdd(ext.non_blank, total + p);
        }
      }
    }
    std::vector<std::pair<TokenSequence, PrefixState>> ranked;
    for (auto& kv : next)
      if (kv.second.Total() != kNegInf) ranked.push_back(std::move(kv));
    std::sort(ranked.begin(), ranked.end(), [&](const auto& a, const auto& b) {
      return RanksBefore(score(a.second), a.first, score(b.second), b.first);
    });
    if (static_cast<int>(ranked.size()) > beam) ranked.resize(beam);
    current = Beam(ranked.begin(), ranked.end());
  }

  std::vector<Hypothesis> out;
  for (const auto& [prefix, s] : current) {
    Hypothesis h;
    h.tokens = prefix;
    h.ctc_logscore = s.Total();
    h.lm_logscore = s.lm;
    h.combined = score(s);
    out.push_back(std::move(h));
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    return RanksBefore(a.combined, a.tokens, b.combined, b.tokens);
  });
  return out;
}

template <typename T>
double AedLogScore(const EncoderOutput<T>& enc, const TokenSequence& tokens,
                   const Parameters<T>& params, const ModelConfig& config) {
  NoGradGuard no_grad;
  const int sos_eos = config.vocab().sos_eos();
  std::vector<int> prev{sos_eos};
  prev.insert(prev.end(), tokens.begin(), tokens.end());
  const auto lp = LogSoftmax(DecoderForward(enc, prev, params, config));
  double total = 0;
  for (size_t i = 0; i < prev.size(); ++i)
    total += lp.at(i, i < tokens.size() ? tokens[i] : sos_eos);
  return total;
}

template <typename T>
std::vector<Hypothesis> AttentionRescore(std::vector<Hypothesis> hyps,
                                         const EncoderOutput<T>& enc,
                                         const Parameters<T>& params,
                                         const ModelConfig& config,
                                         double ctc_weight) {
  if (hyps.empty()) throw std::invalid_argument("no hypotheses to rescore");
  for (auto& h : hyps) {
    h.aed_logscore = AedLogScore(enc, h.tokens, params, config);
    h.combined = h.aed_logscore + ctc_weight * h.ctc_logscore;
  }
  std::sort(hyps.begin(), hyps.end(), [](const auto& a, const auto& b) {
    return RanksBefore(a.combined, a.tokens, b.combined, b.tokens);
  });
  return hyps;
}

void DecodeOptions::Validate() const {
  if (pass != 1 && pass != 2) throw std::invalid_argument("pass must be 1 or 2");
  if (beam < 1) throw std::invalid_argument("beam must be >= 1");
  if (!std::isfinite(lm_weight) || !std::isfinite(ctc_weight))
    throw std::invalid_argument("fusion weights must be finite");
}

std::vector<Hypothesis> FirstPass(const EncoderOutput<float>& enc,
                                  const Parameters<float>& params,
                                  const DecodeOptions& options) {
  NoGradGuard no_grad;
  const auto lp = CtcHead(enc, params);
  std::vector<double> values(lp.data().begin(), lp.data().end());
  return PrefixBeamSearch(Tensor<double>::FromData(lp.shape(), values),
                          options.beam, options.lm, options.lm_weight);
}

std::vector<Hypothesis> DecodeUtterance(const Utterance& utt,
                                        const Parameters<float>& params,
                                        const ModelConfig& config,
                                        const DecodeOptions& options) {
  options.Validate();
  NoGradGuard no_grad;
  const auto enc = Encode(FramesTensor<float>(utt), options.chunk, params, config);
  auto hyps = FirstPass(enc, params, options);
  if (options.pass == 1) return hyps;
  return AttentionRescore(std::move(hyps), enc, params, config,
                          options.ctc_weight);
}

void WriteNBest(const std::string& path, const std::vector<NBest>& results) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path);
  for (const auto& r : results) {
    nlohmann::json hyps = nlohmann::json::array();
    for (const auto& h : r.hyps)
      hyps.push_back({{"tokens", h.tokens},
                      {"ctc", h.ctc_logscore},
                      {"lm", h.lm_logscore},
                      {"aed", h.aed_logscore},
                      {"combined", h.combined}});
    os << nlohmann::json{{"id", r.id}, {"hyps", hyps}}.dump() << "\n";
  }
  if (!os) throw std::runtime_error("failed writing " + path);
}

std::vector<NBest> ReadNBest(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open " + path);
  std::vector<NBest> out;
  std::string line;
  for (int lineno = 1; std::getline(is, line); ++lineno) {
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      NBest r;
      r.id = j.at("id").get<std::string>();
      for (const auto& h : j.at("hyps")) {
        Hypothesis hyp;
        hyp.tokens = h.at("tokens").get<TokenSequence>();
        hyp.ctc_logscore = h.at("ctc").get<double>();
        hyp.lm_logscore = h.at("lm").get<double>();
        hyp.aed_logscore = h.at("aed").get<double>();
        hyp.combined = h.at("combined").get<double>();
        r.hyps.push_back(std::move(hyp));
      }
      out.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      throw std::invalid_argument(path + ":" + std::to_string(lineno) + ": " +
                                  e.what());
    }
  }
  return out;
}

template double AedLogScore(const EncoderOutput<float>&, const TokenSequence&,
                            const Parameters<float>&, const ModelConfig&);
template double AedLogScore(const EncoderOutput<double>&, const TokenSequence&,
                            const Parameters<double>&, const ModelConfig&);
template std::vector<Hypothesis> AttentionRescore(std::vector<Hypothesis>,
                                                  const EncoderOutput<float>&,
                                                  const Parameters<float>&,
                                                  const ModelConfig&, double);
template std::vector<Hypothesis> AttentionRescore(std::vector<Hypothesis>,
                                                  const EncoderOutput<double>&,
                                                  const Parameters<double>&,
                                                  const ModelConfig&, double);

}  // namespace uasr
