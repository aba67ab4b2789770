// nn/checkpoint.cc

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

#include "nn/checkpoint.h"

#include <cstring>

#include "base/common.h"
#include "base/io.h"
#include "json.hpp"

namespace accnorm {

namespace {
constexpr char kMagic[] = "ACNCKPT1\n";
constexpr size_t kMagicLen = 9;
constexpr int kVersion = 1;
}  // namespace

void SaveCheckpoint(const std::string& path, const ParamStore& ps,
                    const std::map<std::string, std::string>& config) {
  const std::vector<double>& flat = ps.Flat();
  const size_t payload_bytes = flat.size() * sizeof(double);

  nlohmann::json header;
  header["version"] = kVersion;
  header["config"] = config;
  header["payload_digest"] =
      HexDigest(Fnv1a64(flat.data(), payload_bytes));
  nlohmann::json tensors = nlohmann::json::array();
  for (int i = 0; i < ps.Count(); ++i) {
    const ParamStore::Info& info = ps.InfoOf(i);
    tensors.push_back({{"name", info.name},
                       {"rows", info.rows},
                       {"cols", info.cols}});
  }
  header["tensors"] = tensors;
  const std::string hjson = header.dump();

  std::string out;
  out.reserve(kMagicLen + 8 + hjson.size() + payload_bytes);
  out.append(kMagic, kMagicLen);
  uint64_t hlen = hjson.size();
  out.append(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
  out.append(hjson);
  out.append(reinterpret_cast<const char*>(flat.data()), payload_bytes);
  WriteFile(path, out);
}

void LoadCheckpoint(const std::string& path, ParamStore* ps,
                    std::map<std::string, std::string>* config) {
  if (!FileExists(path))
    throw MissingInputError("checkpoint not found: " + path);
  const std::string raw = ReadFile(path);
  if (raw.size() < kMagicLen + 8 ||
      std::memcmp(raw.data(), kMagic, kMagicLen) != 0)
    throw ConfigError("checkpoint " + path + ": bad magic");
  uint64_t hlen = 0;
  std::memcpy(&hlen, raw.data() + kMagicLen, sizeof(hlen));
  if (raw.size() < kMagicLen + 8 + hlen)
    throw ConfigError("checkpoint " + path + ": truncated header");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(raw.substr(kMagicLen + 8, hlen));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("checkpoint " + path + ": header parse: " + e.what());
  }
  if (header.at("version").get<int>() != kVersion)
    throw ConfigError("checkpoint " + path + ": unsupported version");

  const size_t payload_off = kMagicLen + 8 + hlen;
  size_t n_doubles = 0;
  for (const auto& t : header.at("tensors"))
    n_doubles += static_cast<size_t>(t.at("rows").get<int>()) *
                 t.at("cols").get<int>();
  if (raw.size() != payload_off + n_doubles * sizeof(double))
    throw ConfigError("checkpoint " + path + ": payload size mismatch");
  const std::string digest =
      HexDigest(Fnv1a64(raw.data() + payload_off, n_doubles * sizeof(double)));
  if (digest != header.at("payload_digest").get<std::string>())
    throw ConfigError("checkpoint " + path + ": payload digest mismatch");

  if (config != nullptr) {
    config->clear();
    for (auto it = header.at("config").begin(); it != header.at("config").end();
         ++it)
      (*config)[it.key()] = it.value().get<std::string>();
  }

  const double* p = reinterpret_cast<const double*>(raw.data() + payload_off);
  for (const auto& t : header.at("tensors")) {
    const int rows = t.at("rows").get<int>();
    const int cols = t.at("cols").get<int>();
    Tensor tensor(rows, cols);
    std::memcpy(tensor.data.data(), p, tensor.size() * sizeof(double));
    p += tensor.size();
    ps->Add(t.at("name").get<std::string>(), tensor);
  }
}

void RequireConfig(const std::map<std::string, std::string>& loaded,
                   const std::map<std::string, std::string>& expect,
                   const std::string& context) {
  for (const auto& [k, v] : expect) {
    auto it = loaded.find(k);
    if (it == loaded.end() || it->second != v) {
      throw ConfigError(context + ": incompatible checkpoint, key '" + k +
                        "' expected '" + v + "' got '" +
                        (it == loaded.end() ? std::string("<absent>")
                                            : it->second) +
                        "'");
    }
  }
}

}  // namespace accnorm
