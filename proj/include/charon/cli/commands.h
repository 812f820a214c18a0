// Copyright 2026 The Charon Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#ifndef CHARON_CLI_COMMANDS_H_
#define CHARON_CLI_COMMANDS_H_

#include <ostream>
#include <string>
#include <vector>

namespace charon::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitSimulation = 3;

// Parses `args` (without the program name) and runs one subcommand:
// simulate, trace, search, breakdown, gen-profile-db or calibrate. Returns
// 0 on success, 2 for configuration errors (bad or missing files, invalid
// settings, unwritable outputs) and 3 when the simulation fails.
int RunCli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace charon::cli

#endif  // CHARON_CLI_COMMANDS_H_
