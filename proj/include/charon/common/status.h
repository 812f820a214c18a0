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

#ifndef CHARON_COMMON_STATUS_H_
#define CHARON_COMMON_STATUS_H_

#include <stdexcept>
#include <string>

namespace charon {

// Errors are thrown as exceptions. The CLI maps ConfigError-derived failures
// to exit code 2 and SimulationError to exit code 3.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad user input: inconsistent model dims, invalid parallelism sizes,
// malformed files, missing paths.
class ConfigError : public Error {
 public:
  using Error::Error;
};

class ParseError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

// Structural graph violation (dangling ref, cycle, duplicate id).
class GraphError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

class UnsupportedOpError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

class TopologyError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

class RewriteError : public Error {
 public:
  using Error::Error;
};

class TrainingError : public Error {
 public:
  using Error::Error;
};

// Raised while executing a schedule (deadlock, unmatched send/recv).
class SimulationError : public Error {
 public:
  using Error::Error;
};

}  // namespace charon

#endif  // CHARON_COMMON_STATUS_H_
