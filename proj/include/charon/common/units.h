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

#ifndef CHARON_COMMON_UNITS_H_
#define CHARON_COMMON_UNITS_H_

#include <chrono>
#include <cmath>

namespace charon {

// All simulated time is kept as fractional nanoseconds.
using Duration = std::chrono::duration<double, std::nano>;

inline constexpr Duration Seconds(double s) { return Duration(s * 1e9); }
inline constexpr Duration Micros(double us) { return Duration(us * 1e3); }
inline constexpr Duration Nanos(double ns) { return Duration(ns); }

inline constexpr double ToSeconds(Duration d) { return d.count() * 1e-9; }
inline constexpr double ToMicros(Duration d) { return d.count() * 1e-3; }

// Reports print microseconds rounded to three decimals.
inline double RoundMicros(Duration d) {
  return std::round(ToMicros(d) * 1000.0) / 1000.0;
}

inline constexpr double kMiB = 1024.0 * 1024.0;
inline constexpr double kGiB = 1024.0 * kMiB;

}  // namespace charon

#endif  // CHARON_COMMON_UNITS_H_
