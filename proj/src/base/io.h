// base/io.h

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

#ifndef ACCNORM_BASE_IO_H_
#define ACCNORM_BASE_IO_H_

#include <cstdint>
#include <string>
#include <vector>

namespace accnorm {

std::string ReadFile(const std::string& path);
void WriteFile(const std::string& path, const std::string& contents);
bool FileExists(const std::string& path);
void EnsureDir(const std::string& path);

// FNV-1a 64-bit content digest, hex-encoded. Used for stage caching and
// checkpoint payload checks; non-cryptographic by design.
uint64_t Fnv1a64(const void* data, size_t n, uint64_t h = 0xCBF29CE484222325ull);
std::string HexDigest(uint64_t h);
std::string FileDigest(const std::string& path);

}  // namespace accnorm

#endif  // ACCNORM_BASE_IO_H_
