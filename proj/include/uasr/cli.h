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

// Command-line driver. Kept in the library so that dispatch, exit codes and
// manifests are testable without spawning processes.

#ifndef UASR_CLI_H_
#define UASR_CLI_H_

#include <ostream>
#include <string>
#include <vector>

namespace uasr {

inline constexpr const char* kToolVersion = "0.1.0";

// Exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;  // bad flags, values or inputs
inline constexpr int kExitRuntime = 2;     // I/O or numeric failure

// args excludes the program name.
int RunCli(const std::vector<std::string>& args, std::ostream& out,
           std::ostream& err);

}  // namespace uasr

#endif  // UASR_CLI_H_
