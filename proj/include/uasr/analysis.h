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

// Evaluation and representation-gap diagnostics: token error rate, paired
// cosine statistics between streaming and full-context encoder outputs,
// hypersphere uniformity, and a 2-D principal-component projection dump.

#ifndef UASR_ANALYSIS_H_
#define UASR_ANALYSIS_H_

#include <string>
#include <vector>

#include "uasr/data.h"
#include "uasr/decoding.h"
#include "uasr/masking.h"
#include "uasr/model.h"

namespace uasr {

using Vectors = std::vector<std::vector<double>>;

int EditDistance(const TokenSequence& a, const TokenSequence& b);

// Total edit distance over total reference length.
double Cer(const std::vector<TokenSequence>& refs,
           const std::vector<TokenSequence>& hyps);

// log of the mean over pairs i < j of exp(-2 |x_i - x_j|^2) after
// normalizing every row. Lower is more uniform; the range is [-4, 0].
double Uniformity(const Vectors& frames);

double Cosine(std::span<const double> a, std::span<const double> b);

struct Pca2 {
  std::vector<double> mean;
  std::vector<double> pc1, pc2;  // orthonormal directions
  double var1 = 0, var2 = 0;     // variance along each, var1 >= var2 >= 0
  std::vector<std::pair<double, double>> coords;
};

// First two principal components by power iteration on the covariance,
// deflating the first before finding the second.
Pca2 ProjectPca2(const Vectors& x, int iterations = 500);

struct GapRow {
  int chunk = 0;
  double mean_cos = 0, sd_cos = 0;
  double uniformity_s = 0;
};

struct GapReport {
  std::vector<GapRow> rows;
  double uniformity_ns = 0;
  std::string projection_path;  // empty when no dump was requested
};

// Compares full-context and chunked encoder outputs frame by frame over the
// sample. When dump_prefix is set, writes <prefix>.vectors.csv with every
// frame vector and <prefix>.projection.csv with the joint PCA coordinates.
GapReport ComputeGapReport(const Parameters<float>& params,
                           const ModelConfig& config,
                           const std::vector<Utterance>& sample,
                           const std::vector<int>& chunks,
                           const std::string& dump_prefix = "");

void WriteGapReportCsv(const std::string& path, const GapReport& report);

struct CerRow {
  ChunkSetting chunk = ChunkSetting::Full();
  int pass = 1;
  double cer = 0;
  std::string mode() const { return chunk.is_full() ? "full" : "streaming"; }
};

// Decodes every utterance once per chunk setting; pass 1 and pass 2 share
// the encoder run.
std::vector<CerRow> EvaluateCer(const Parameters<float>& params,
                                const ModelConfig& config,
                                const std::vector<Utterance>& corpus,
                                const std::vector<ChunkSetting>& chunks,
                                const DecodeOptions& base);

void WriteCerCsv(const std::string& path, const std::vector<CerRow>& rows);

}  // namespace uasr

#endif  // UASR_ANALYSIS_H_
