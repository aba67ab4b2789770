// base/common.h

// Copyright 2026  Accnorm Authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#ifndef ACCNORM_BASE_COMMON_H_
#define ACCNORM_BASE_COMMON_H_

#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>

namespace accnorm {

// Error classes map onto the CLI exit codes, see tools/accnorm.cc.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

class MissingInputError : public std::runtime_error {
 public:
  explicit MissingInputError(const std::string& msg)
      : std::runtime_error(msg) {}
};

class DivergenceError : public std::runtime_error {
 public:
  explicit DivergenceError(const std::string& msg)
      : std::runtime_error(msg) {}
};

class EvalError : public std::runtime_error {
 public:
  explicit EvalError(const std::string& msg) : std::runtime_error(msg) {}
};

// Precondition check that throws std::invalid_argument with context.
#define ACN_CHECK(cond, msg)                                        \
  do {                                                              \
    if (!(cond)) {                                                  \
      std::ostringstream os_;                                       \
      os_ << __FILE__ << ":" << __LINE__ << ": " << msg;            \
      throw std::invalid_argument(os_.str());                       \
    }                                                               \
  } while (0)

}  // namespace accnorm

#endif  // ACCNORM_BASE_COMMON_H_
