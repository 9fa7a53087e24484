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

#ifndef UASR_GRAD_CHECK_H_
#define UASR_GRAD_CHECK_H_

#include <functional>

#include "uasr/tensor.h"

namespace uasr {

using ScalarFn = std::function<Tensor<double>(const Tensor<double>&)>;

// Compares the reverse-mode gradient of f at x against central differences
// with step eps. Returns max over coordinates of
// |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).
// Throws NumericError if f(x) is not finite.
double GradCheck(const ScalarFn& f, const Tensor<double>& x,
                 double eps = 1e-5);

}  // namespace uasr

#endif  // UASR_GRAD_CHECK_H_
