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

#include "uasr/analysis.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <stdexcept>

namespace uasr {
namespace {

std::vector<double> Normalized(const std::vector<double>& v) {
  double n = 0;
  for (double x : v) n += x * x;
  n = std::sqrt(n);
  if (n == 0 || !std::isfinite(n))
    throw NumericError("zero-norm frame in uniformity");
  std::vector<double> out(v);
  for (double& x : out) x /= n;
  return out;
}

Vectors Rows(const Tensor<float>& t) {
  Vectors out(t.rows(), std::vector<double>(t.cols()));
  for (int i = 0; i < t.rows(); ++i)
    for (int j = 0; j < t.cols(); ++j) out[i][j] = t.at(i, j);
  return out;
}

// Leading eigenvector of the covariance after removing `deflate` directions.
std::vector<double> PowerIteration(const std::vector<std::vector<double>>& cov,
                                   const std::vector<std::vector<double>>& deflate,
                                   int iterations) {
  const size_t d = cov.size();
  std::vector<double> v(d);
  // Fixed non-degenerate start keeps the projection deterministic.
  for (size_t i = 0; i < d; ++i) v[i] = 1.0 + 0.1 * static_cast<double>(i);
  auto orthogonalize = [&](std::vector<double>& x) {
    for (const auto& u : deflate) {
      const double dot = std::inner_product(x.begin(), x.end(), u.begin(), 0.0);
      for (size_t i = 0; i < d; ++i) x[i] -= dot * u[i];
    }
    double n = std::sqrt(std::inner_product(x.begin(), x.end(), x.begin(), 0.0));
    if (n == 0) return false;
    for (double& e : x) e /= n;
    return true;
  };
  if (!orthogonalize(v)) return std::vector<double>(d, 0.0);
  for (int it = 0; it < iterations; ++it) {
    std::vector<double> w(d, 0.0);
    for (size_t i = 0; i < d; ++i)
      for (size_t j = 0; j < d; ++j) w[i] += cov[i][j] * v[j];
    if (!orthogonalize(w)) {
      // Remaining variance is zero; any orthogonal unit vector will do.
      for (size_t k = 0; k < d; ++k) {
        std::vector<double> e(d, 0.0);
        e[k] = 1.0;
        if (orthogonalize(e)) return e;
      }
    }
    v = std::move(w);
  }
  return v;
}

}  // namespace

int EditDistance(const TokenSequence& a, const TokenSequence& b) {
  std::vector<int> row(b.size() + 1);
  std::iota(row.begin(), row.end(), 0);
  for (size_t i = 1; i <= a.size(); ++i) {
    int diag = row[0];
    row[0] = static_cast<int>(i);
    for (size_t j = 1; j <= b.size(); ++j) {
      const int up = row[j];
      row[j] = std::min({row[j] + 1, row[j - 1] + 1,
                         diag + (a[i - 1] == b[j - 1] ? 0 : 1)});
      diag = up;
    }
  }
  return row[b.size()];
}

double Cer(const std::vector<TokenSequence>& refs,
           const std::vector<TokenSequence>& hyps) {
  if (refs.size() != hyps.size())
    throw std::invalid_argument("reference and hypothesis counts differ");
  long errors = 0, total = 0;
  for (size_t i = 0; i < refs.size(); ++i) {
    errors += EditDistance(refs[i], hyps[i]);
    total += static_cast<long>(refs[i].size());
  }
  if (total == 0) throw std::invalid_argument("empty reference corpus");
  return static_cast<double>(errors) / static_cast<double>(total);
}

double Cosine(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("cosine size mismatch");
  double ab = 0, aa = 0, bb = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  if (aa == 0 || bb == 0) throw NumericError("cosine of a zero vector");
  return std::clamp(ab / std::sqrt(aa * bb), -1.0, 1.0);
}

double Uniformity(const Vectors& frames) {
  if (frames.size() < 2) throw std::invalid_argument("uniformity needs n >= 2");
  Vectors unit;
  unit.reserve(frames.size());
  for (const auto& f : frames) unit.push_back(Normalized(f));
  // Sum of exponentials of values in [-8, 0] needs no max-shift.
  double sum = 0;
  const size_t n = unit.size();
  for (size_t i = 0; i < n; ++i)
    for (size_t j = i + 1; j < n; ++j) {
      double d2 = 0;
      for (size_t k = 0; k < unit[i].size(); ++k) {
        const double diff = unit[i][k] - unit[j][k];
        d2 += diff * diff;
      }
      sum += std::exp(-2.0 * d2);
    }
  return std::log(sum * 2.0 / (static_cast<double>(n) * (n - 1)));
}

Pca2 ProjectPca2(const Vectors& x, int iterations) {
  if (x.empty()) throw std::invalid_argument("PCA of an empty set");
  const size_t d = x[0].size();
  Pca2 out;
  out.mean.assign(d, 0.0);
  for (const auto& row : x) {
    if (row.size() != d) throw std::invalid_argument("PCA rows differ in size");
    for (size_t k = 0; k < d; ++k) out.mean[k] += row[k];
  }
  for (double& m : out.mean) m /= static_cast<double>(x.size());
  std::vector<std::vector<double>> cov(d, std::vector<double>(d, 0.0));
  for (const auto& row : x)
    for (size_t i = 0; i < d; ++i)
      for (size_t j = 0; j < d; ++j)
        cov[i][j] += (row[i] - out.mean[i]) * (row[j] - out.mean[j]);
  for (auto& r : cov)
    for (double& c : r) c /= static_cast<double>(x.size());
  out.pc1 = PowerIteration(cov, {}, iterations);
  out.pc2 = d > 1 ? PowerIteration(cov, {out.pc1}, iterations)
                  : std::vector<double>(d, 0.0);
  auto variance = [&](const std::vector<double>& u) {
    double v = 0;
    for (size_t i = 0; i < d; ++i)
      for (size_t j = 0; j < d; ++j) v += u[i] * cov[i][j] * u[j];
    return std::max(v, 0.0);
  };
  out.var1 = variance(out.pc1);
  out.var2 = variance(out.pc2);
  for (const auto& row : x) {
    double a = 0, b = 0;
    for (size_t k = 0; k < d; ++k) {
      a += (row[k] - out.mean[k]) * out.pc1[k];
      b += (row[k] - out.mean[k]) * out.pc2[k];
    }
    out.coords.emplace_back(a, b);
  }
  return out;
}

GapReport ComputeGapReport(const Parameters<float>& params,
                           const ModelConfig& config,
                           const std::vector<Utterance>& sample,
                           const std::vector<int>& chunks,
                           const std::string& dump_prefix) {
  if (sample.empty()) throw std::invalid_argument("gap report needs utterances");
  if (chunks.empty()) throw std::invalid_argument("gap report needs chunk sizes");
  CheckParams(params, config);
  NoGradGuard no_grad;
  struct Dumped {
    std::string id;
    int frame;
    std::string mode;
    int chunk;
  };
  std::vector<Dumped> labels;
  Vectors all;
  Vectors full_frames;
  std::vector<Vectors> full_by_utt;
  for (const auto& u : sample) {
    auto rows = Rows(Encode(FramesTensor<float>(u), ChunkSetting::Full(), params,
                            config).hidden);
    for (size_t t = 0; t < rows.size(); ++t) {
      full_frames.push_back(rows[t]);
      labels.push_back({u.id, static_cast<int>(t), "full", 0});
      all.push_back(rows[t]);
    }
    full_by_utt.push_back(std::move(rows));
  }
  GapReport report;
  report.uniformity_ns = Uniformity(full_frames);
  for (int c : chunks) {
    GapRow row;
    row.chunk = c;
    std::vector<double> cosines;
    Vectors stream_frames;
    for (size_t n = 0; n < sample.size(); ++n) {
      auto rows = Rows(Encode(FramesTensor<float>(sample[n]),
                              ChunkSetting::Chunk(c), params, config)
                           .hidden);
      for (size_t t = 0; t < rows.size(); ++t) {
        cosines.push_back(Cosine(rows[t], full_by_utt[n][t]));
        labels.push_back({sample[n].id, static_cast<int>(t), "streaming", c});
        all.push_back(rows[t]);
        stream_frames.push_back(std::move(rows[t]));
      }
    }
    const double n = static_cast<double>(cosines.size());
    row.mean_cos = std::accumulate(cosines.begin(), cosines.end(), 0.0) / n;
    double ss = 0;
    for (double v : cosines) ss += (v - row.mean_cos) * (v - row.mean_cos);
    row.sd_cos = std::sqrt(ss / n);
    row.uniformity_s = Uniformity(stream_frames);
    report.rows.push_back(row);
  }
  if (!dump_prefix.empty()) {
    const auto pca = ProjectPca2(all);
    report.projection_path = dump_prefix + ".projection.csv";
    std::ofstream proj(report.projection_path);
    std::ofstream vec(dump_prefix + ".vectors.csv");
    if (!proj || !vec) throw std::runtime_error("cannot write " + dump_prefix);
    proj << "utt_id,frame,mode,chunk,pc1,pc2\n";
    vec << "utt_id,frame,mode,chunk";
    for (int k = 0; k < config.d_model; ++k) vec << ",v" << k;
    vec << "\n";
    char buf[64];
    for (size_t i = 0; i < all.size(); ++i) {
      const auto& l = labels[i];
      const std::string chunk = l.mode == "full" ? "full" : std::to_string(l.chunk);
      std::snprintf(buf, sizeof(buf), "%.9g,%.9g", pca.coords[i].first,
                    pca.coords[i].second);
      proj << l.id << "," << l.frame << "," << l.mode << "," << chunk << ","
           << buf << "\n";
      vec << l.id << "," << l.frame << "," << l.mode << "," << chunk;
      for (double v : all[i]) {
        std::snprintf(buf, sizeof(buf), ",%.9g", v);
        vec << buf;
      }
      vec << "\n";
    }
  }
  return report;
}

void WriteGapReportCsv(const std::string& path, const GapReport& report) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path);
  os << "chunk,mean_cos,sd_cos,uniformity_s,uniformity_ns\n";
  char buf[160];
  for (const auto& r : report.rows) {
    std::snprintf(buf, sizeof(buf), "%d,%.9f,%.9f,%.9f,%.9f\n", r.chunk,
                  r.mean_cos, r.sd_cos, r.uniformity_s, report.uniformity_ns);
    os << buf;
  }
}

std::vector<CerRow> EvaluateCer(const Parameters<float>& params,
                                const ModelConfig& config,
                                const std::vector<Utterance>& corpus,
                                const std::vector<ChunkSetting>& chunks,
                                const DecodeOptions& base) {
  base.Validate();
  std::vector<CerRow> out;
  std::vector<TokenSequence> refs;
  for (const auto& u : corpus) refs.push_back(u.tokens);
  for (const auto& chunk : chunks) {
    std::vector<TokenSequence> first, second;
    for (const auto& u : corpus) {
      NoGradGuard no_grad;
      const auto enc = Encode(FramesTensor<float>(u), chunk, params, config);
      const auto hyps = FirstPass(enc, params, base);
      first.push_back(hyps.front().tokens);
      if (base.pass == 2)
        second.push_back(
            AttentionRescore(hyps, enc, params, config, base.ctc_weight)
                .front()
                .tokens);
    }
    out.push_back({chunk, 1, Cer(refs, first)});
    if (base.pass == 2) out.push_back({chunk, 2, Cer(refs, second)});
  }
  return out;
}

void WriteCerCsv(const std::string& path, const std::vector<CerRow>& rows) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path);
  os << "mode,chunk,pass,cer\n";
  char buf[64];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%.9f", r.cer);
    os << r.mode() << "," << r.chunk.ToString() << "," << r.pass << "," << buf
       << "\n";
  }
}

}  // namespace uasr
