// nn/checkpoint.h

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

#ifndef ACCNORM_NN_CHECKPOINT_H_
#define ACCNORM_NN_CHECKPOINT_H_

#include <map>
#include <string>

#include "autodiff/tape.h"

namespace accnorm {

// Self-describing checkpoint container:
//   "ACNCKPT1\n" | uint64 header_bytes | JSON header | raw double payload
// The JSON header carries the format version, a config echo (string map),
// the tensor directory (name, rows, cols in payload order), and an FNV-1a
// digest of the payload. Keys are emitted sorted, so save -> load -> save
// is byte-identical.
void SaveCheckpoint(const std::string& path, const ParamStore& ps,
                    const std::map<std::string, std::string>& config);

// Loads into a fresh ParamStore (tensors re-registered in saved order).
// Throws MissingInputError when absent, ConfigError on version or digest
// mismatch.
void LoadCheckpoint(const std::string& path, ParamStore* ps,
                    std::map<std::string, std::string>* config);

// Compatibility guard for resuming: every key in `expect` must match the
// loaded config echo exactly; throws ConfigError naming the first offender.
void RequireConfig(const std::map<std::string, std::string>& loaded,
                   const std::map<std::string, std::string>& expect,
                   const std::string& context);

}  // namespace accnorm

#endif  // ACCNORM_NN_CHECKPOINT_H_
