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


#ifndef CHARON_COMMON_FILE_UTIL_H_
#define CHARON_COMMON_FILE_UTIL_H_

#include <string>

namespace charon {

// Reads a whole file; throws ConfigError naming `path` if it cannot be read.
std::string ReadFile(const std::string& path);

// Writes `contents` to a temporary sibling of `path` and renames it into
// place, so readers never observe a partial file. Throws ConfigError on
// failure and leaves no temporary behind.
void WriteFileAtomic(const std::string& path, const std::string& contents);

}  // namespace charon

#endif  // CHARON_COMMON_FILE_UTIL_H_
