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

#include "uasr/losses.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "uasr/lengths.h"

namespace uasr {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double LogAdd(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double m = std::max(a, b);
  return m + std::log1p(std::exp(-std::abs(a - b)));
}

}  // namespace

std::string BridgeName(Bridge b) {
  switch (b) {
    case Bridge::kNone:
      return "none";
    case Bridge::kL2:
      return "l2";
    case Bridge::kContrastive:
      return "contrastive";
  }
  return "?";
}

Bridge ParseBridge(const std::string& name) {
  if (name == "none") return Bridge::kNone;
  if (name == "l2") return Bridge::kL2;
  if (name == "contrastive") return Bridge::kContrastive;
  throw std::invalid_argument("unknown bridge '" + name +
                              "' (expected none, l2 or contrastive)");
}

void ContrastiveConfig::Validate() const {
  if (!(temperature > 0))
    throw std::invalid_argument("temperature must be > 0");
  if (bridge == Bridge::kContrastive && num_negatives < 1)
    throw std::invalid_argument("contrastive bridge needs >= 1 negative");
  if (weight < 0) throw std::invalid_argument("bridge weight must be >= 0");
}

double CombineLosses(const LossBreakdown& b, double lambda, double weight) {
  const double asr_s = lambda * b.ctc_s + (1 - lambda) * b.aed_s;
  const double asr_ns = lambda * b.ctc_ns + (1 - lambda) * b.aed_ns;
  return asr_s + asr_ns + weight * b.bridge;
}

LossBreakdown JointLoss(double ctc_s, double aed_s, double ctc_ns,
                        double aed_ns, double bridge, double lambda,
                        double weight) {
  if (!(lambda >= 0 && lambda <= 1))
    throw std::invalid_argument("lambda must lie in [0, 1]");
  LossBreakdown b{ctc_s, aed_s, ctc_ns, aed_ns, bridge, 0};
  b.total = CombineLosses(b, lambda, weight);
  return b;
}

template <typename T>
Tensor<T> CtcLoss(const Tensor<T>& logprobs, std::span<const int> target,
                  int blank) {
  if (logprobs.ndim() != 2)
    throw std::invalid_argument("CtcLoss: logprobs must be T x (V + 1)");
  const int frames = logprobs.rows(), dim = logprobs.cols();
  if (blank < 0 || blank >= dim)
    throw std::invalid_argument("CtcLoss: blank outside output dimension");
  for (int t : target)
    if (t < 0 || t >= dim || t == blank)
      throw std::invalid_argument("CtcLoss: invalid target label");
  if (CtcMinFrames(target) > frames)
    throw std::invalid_argument("CTC infeasible");

  // Blank-augmented label sequence.
  const int states = 2 * static_cast<int>(target.size()) + 1;
  std::vector<int> ext(states, blank);
  for (size_t u = 0; u < target.size(); ++u) ext[2 * u + 1] = target[u];
  auto skip_ok = [&](int s) {  // may enter state s from s - 2
    return s >= 2 && ext[s] != blank && ext[s] != ext[s - 2];
  };
  auto y = [&](int t, int s) {
    return static_cast<double>(logprobs.data()[t * dim + ext[s]]);
  };

  std::vector<double> alpha(static_cast<size_t>(frames) * states, kNegInf);
  alpha[0] = y(0, 0);
  if (states > 1) alpha[1] = y(0, 1);
  for (int t = 1; t < frames; ++t) {
    const double* prev = &alpha[(t - 1) * states];
    double* cur = &alpha[t * states];
    for (int s = 0; s < states; ++s) {
      double a = prev[s];
      if (s >= 1) a = LogAdd(a, prev[s - 1]);
      if (skip_ok(s)) a = LogAdd(a, prev[s - 2]);
      cur[s] = a == kNegInf ? kNegInf : a + y(t, s);
    }
  }
  const double* last = &alpha[(frames - 1) * states];
  double log_p = last[states - 1];
  if (states > 1) log_p = LogAdd(log_p, last[states - 2]);
  if (log_p == kNegInf) throw std::invalid_argument("CTC infeasible");

  std::vector<int> ext_copy = ext;
  return Tensor<T>::FromOp(
      "CtcLoss", {1}, {static_cast<T>(-log_p)}, {logprobs},
      [frames, dim, states, log_p, alpha = std::move(alpha),
       ext = std::move(ext_copy), blank](auto& o) {
        auto& in = *o.inputs[0];
        auto skip_ok = [&](int s) {
          return s >= 2 && ext[s] != blank && ext[s] != ext[s - 2];
        };
        // beta[t][s]: log probability of frames t+1.. given state s at t.
        std::vector<double> beta(static_cast<size_t>(frames) * states, kNegInf);
        double* end = &beta[(frames - 1) * states];
        end[states - 1] = 0.0;
        if (states > 1) end[states - 2] = 0.0;
        for (int t = frames - 2; t >= 0; --t) {
          const double* next = &beta[(t + 1) * states];
          double* cur = &beta[t * states];
          for (int s = 0; s < states; ++s) {
            auto term = [&](int s2) {
              return next[s2] == kNegInf
                         ? kNegInf
                         : next[s2] + static_cast<double>(
                                          in.value[(t + 1) * dim + ext[s2]]);
            };
            double b = term(s);
            if (s + 1 < states) b = LogAdd(b, term(s + 1));
            if (s + 2 < states && skip_ok(s + 2)) b = LogAdd(b, term(s + 2));
            cur[s] = b;
          }
        }
        T* g = in.EnsureGrad();
        const double scale = static_cast<double>(o.grad[0]);
        for (int t = 0; t < frames; ++t)
          for (int s = 0; s < states; ++s) {
            const double a = alpha[t * states + s];
            const double b = beta[t * states + s];
            if (a == kNegInf || b == kNegInf) continue;
            g[t * dim + ext[s]] -=
                static_cast<T>(scale * std::exp(a + b - log_p));
          }
      });
}

template <typename T>
Tensor<T> AedLoss(const Tensor<T>& logits, std::span<const int> target,
                  double label_smoothing) {
  if (logits.ndim() != 2 ||
      logits.rows() != static_cast<int>(target.size()))
    throw std::invalid_argument(
        "AedLoss: target length differs from logits length");
  const int len = logits.rows(), classes = logits.cols();
  const double eps = label_smoothing;
  const double off = classes > 1 ? eps / (classes - 1) : 0.0;
  std::vector<T> q(logits.size(), static_cast<T>(off));
  for (int t = 0; t < len; ++t) {
    if (target[t] < 0 || target[t] >= classes)
      throw std::invalid_argument("AedLoss: target id out of range");
    q[t * classes + target[t]] = static_cast<T>(1 - eps);
  }
  auto xlogx = [](double v) { return v > 0 ? v * std::log(v) : 0.0; };
  const double entropy_term =
      xlogx(1 - eps) + (classes - 1) * xlogx(off);  // per position
  auto cross = Sum(Mul(Tensor<T>::FromData(logits.shape(), std::move(q)),
                       LogSoftmax(logits)));
  return Add(Scale(cross, static_cast<T>(-1.0 / len)),
             Tensor<T>::Scalar(static_cast<T>(entropy_term)));
}

template <typename T>
Tensor<T> ContrastiveFrameLoss(const Tensor<T>& h_s_i, const Tensor<T>& h_ns_i,
                               const Tensor<T>& distractors, double tau) {
  if (!(tau > 0)) throw std::invalid_argument("temperature must be > 0");
  auto anchor = NormalizeRows(h_s_i);
  auto keys = NormalizeRows(ConcatRows<T>({h_ns_i, distractors}));
  auto logits = Scale(MatMul(anchor, Transpose(keys)), static_cast<T>(1 / tau));
  return Scale(SliceCols(LogSoftmax(logits), 0, 1), T(-1));
}

std::vector<std::vector<int>> SampleNegatives(int n, int num_negatives,
                                              std::mt19937_64& rng) {
  if (n < 2) throw std::invalid_argument("no negatives available");
  if (num_negatives < 1)
    throw std::invalid_argument("num_negatives must be >= 1");
  const int m = std::min(num_negatives, n - 1);
  std::vector<std::vector<int>> out(n);
  std::vector<int> pool(n - 1);
  for (int i = 0; i < n; ++i) {
    // Other frames, then a partial Fisher-Yates shuffle.
    for (int j = 0, k = 0; j < n; ++j)
      if (j != i) pool[k++] = j;
    for (int k = 0; k < m; ++k) {
      const int pick =
          std::uniform_int_distribution<int>(k, n - 2)(rng);
      std::swap(pool[k], pool[pick]);
    }
    out[i].assign(pool.begin(), pool.begin() + m);
  }
  return out;
}

template <typename T>
Tensor<T> ContrastiveLoss(const Tensor<T>& h_s, const Tensor<T>& h_ns,
                          const std::vector<std::vector<int>>& negatives,
                          double tau, bool stop_gradient_ns) {
  if (h_s.shape() != h_ns.shape() || h_s.ndim() != 2)
    throw std::invalid_argument("ContrastiveLoss: shapes differ");
  if (!(tau > 0)) throw std::invalid_argument("temperature must be > 0");
  const int n = h_s.rows();
  if (n < 2) throw std::invalid_argument("no negatives available");
  if (static_cast<int>(negatives.size()) != n || negatives[0].empty())
    throw std::invalid_argument("ContrastiveLoss: one negative set per frame");
  const int width = 1 + static_cast<int>(negatives[0].size());
  std::vector<int> index;
  index.reserve(static_cast<size_t>(n) * width);
  for (int i = 0; i < n; ++i) {
    if (static_cast<int>(negatives[i].size()) != width - 1)
      throw std::invalid_argument("ContrastiveLoss: ragged negative sets");
    index.push_back(i);
    for (int j : negatives[i]) {
      if (j == i || j < 0 || j >= n)
        throw std::invalid_argument("ContrastiveLoss: invalid negative index");
      index.push_back(j);
    }
  }
  auto anchors = NormalizeRows(h_s);
  auto keys = NormalizeRows(stop_gradient_ns ? h_ns.Detach() : h_ns);
  auto sims = MatMul(anchors, Transpose(keys));  // n x n cosines
  auto logits = Scale(TakeAlongRows<T>(sims, index, width),
                      static_cast<T>(1 / tau));
  return Scale(Mean(SliceCols(LogSoftmax(logits), 0, 1)), T(-1));
}

template <typename T>
Tensor<T> ContrastiveLoss(const Tensor<T>& h_s, const Tensor<T>& h_ns,
                          const ContrastiveConfig& cfg, std::mt19937_64& rng) {
  cfg.Validate();
  auto negatives = SampleNegatives(h_s.rows(), cfg.num_negatives, rng);
  return ContrastiveLoss(h_s, h_ns, negatives, cfg.temperature,
                         cfg.contrastive_stop_gradient);
}

template <typename T>
Tensor<T> L2BridgeLoss(const Tensor<T>& h_s, const Tensor<T>& h_ns,
                       bool stop_gradient_ns) {
  if (h_s.shape() != h_ns.shape() || h_s.ndim() != 2)
    throw std::invalid_argument("L2BridgeLoss: shapes differ");
  auto diff = Sub(h_s, stop_gradient_ns ? h_ns.Detach() : h_ns);
  return Scale(Sum(Mul(diff, diff)), static_cast<T>(1.0 / h_s.rows()));
}

#define UASR_INSTANTIATE(T)                                                   \
  template Tensor<T> CtcLoss(const Tensor<T>&, std::span<const int>, int);    \
  template Tensor<T> AedLoss(const Tensor<T>&, std::span<const int>, double); \
  template Tensor<T> ContrastiveFrameLoss(const Tensor<T>&, const Tensor<T>&, \
                                          const Tensor<T>&, double);          \
  template Tensor<T> ContrastiveLoss(const Tensor<T>&, const Tensor<T>&,      \
                                     const std::vector<std::vector<int>>&,    \
                                     double, bool);                           \
  template Tensor<T> ContrastiveLoss(const Tensor<T>&, const Tensor<T>&,      \
                                     const ContrastiveConfig&,                \
                                     std::mt19937_64&);                       \
  template Tensor<T> L2BridgeLoss(const Tensor<T>&, const Tensor<T>&, bool);

UASR_INSTANTIATE(float)
UASR_INSTANTIATE(double)
#undef UASR_INSTANTIATE

}  // namespace uasr
