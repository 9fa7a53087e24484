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

#include "uasr/grad_check.h"

#include <algorithm>
#include <cmath>
#include <vector>

namespace uasr {

double GradCheck(const ScalarFn& f, const Tensor<double>& x, double eps) {
  Tensor<double> leaf = x.Clone(/*requires_grad=*/true);
  Tensor<double> y = f(leaf);
  if (y.size() != 1) throw std::invalid_argument("GradCheck: f must be scalar");
  if (!std::isfinite(y.item())) throw NumericError("GradCheck: f(x) not finite");
  std::vector<double> analytic(leaf.size(), 0.0);
  if (y.requires_grad()) {
    y.Backward();
    if (leaf.has_grad()) {
      auto g = leaf.grad();
      std::copy(g.begin(), g.end(), analytic.begin());
    }
  }

  NoGradGuard no_grad;
  std::vector<double> probe(x.data().begin(), x.data().end());
  double worst = 0.0;
  for (size_t i = 0; i < probe.size(); ++i) {
    const double saved = probe[i];
    probe[i] = saved + eps;
    const double fp = f(Tensor<double>::FromData(x.shape(), probe)).item();
    probe[i] = saved - eps;
    const double fm = f(Tensor<double>::FromData(x.shape(), probe)).item();
    probe[i] = saved;
    const double numeric = (fp - fm) / (2 * eps);
    const double denom =
        std::max({std::abs(analytic[i]), std::abs(numeric), 1e-8});
    worst = std::max(worst, std::abs(analytic[i] - numeric) / denom);
  }
  return worst;
}

}  // namespace uasr
