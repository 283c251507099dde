// tools/cli.h
//
// Copyright 2026  spkrefine authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//   http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef SPKREFINE_TOOLS_CLI_H_
#define SPKREFINE_TOOLS_CLI_H_

#include <string>
#include <vector>

namespace spkrefine::cli {

// Process exit codes.
enum ExitCode : int {
  kExitOk = 0,
  kExitOther = 1,
  kExitUsage = 2,
  kExitIo = 3,
  kExitFormat = 4,
  kExitNumeric = 5,
};

// Runs one command line (without the program name), e.g.
// {"inspect-weights", "--weights", "w.spkt"}. Never throws.
int Run(const std::vector<std::string>& args);

}  // namespace spkrefine::cli

#endif  // SPKREFINE_TOOLS_CLI_H_
