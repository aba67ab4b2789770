// pipeline/cli.h

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

#ifndef ACCNORM_PIPELINE_CLI_H_
#define ACCNORM_PIPELINE_CLI_H_

namespace accnorm {

// Command line entry point. Exit codes: 0 success, 2 config error, 3 missing
// input, 4 training divergence, 5 evaluation failure, 1 anything else.
int RunCli(int argc, const char* const* argv);

}  // namespace accnorm

#endif  // ACCNORM_PIPELINE_CLI_H_
