// Copyright 2026 The SMAE Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Checkpoint layout (all integers little-endian):
//
//   "SMAE"            4 bytes magic
//   version           u32
//   header_length     u64
//   header            UTF-8 JSON: {"config", "parameters": [{"name","shape"}...],
//                                  "metadata"}
//   payload           float32 values of every parameter, in header order

#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "smae/error.hpp"
#include "smae/model.hpp"

namespace smae {

inline constexpr char kCheckpointMagic[4] = {'S', 'M', 'A', 'E'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  SmaeModel model;
  nlohmann::json metadata = nlohmann::json::object();
};

namespace detail {

template <typename U>
void put_le(std::string& out, U v) {
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

template <typename U>
U get_le(const unsigned char* p) {
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(p[i]) << (8 * i);
  return v;
}

}  // namespace detail

/// Serializes parameters in the given name order (defaults to model order).
inline std::string encode_checkpoint(const SmaeModel& model, const nlohmann::json& metadata,
                                     const std::vector<std::string>& order = {}) {
  std::vector<std::string> names = order;
  if (names.empty())
    for (const auto& p : model.parameters()) names.push_back(p.name);
  nlohmann::json header;
  header["config"] = model.config();
  header["parameters"] = nlohmann::json::array();
  for (const auto& n : names) {
    header["parameters"].push_back({{"name", n}, {"shape", model.param(n).shape()}});
  }
  header["metadata"] = metadata;
  const std::string text = header.dump();

  std::string out(kCheckpointMagic, 4);
  detail::put_le<std::uint32_t>(out, kCheckpointVersion);
  detail::put_le<std::uint64_t>(out, text.size());
  out += text;
  for (const auto& n : names) {
    for (double v : model.param(n).data()) {
      detail::put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    }
  }
  return out;
}

inline Checkpoint decode_checkpoint(const std::string& bytes) {
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kCheckpointMagic, 4) != 0) {
    raise<BadMagicError>("not an SMAE checkpoint (bad magic)");
  }
  const auto version = detail::get_le<std::uint32_t>(p + 4);
  if (version != kCheckpointVersion) {
    raise<UnsupportedVersionError>("unsupported checkpoint version ", version);
  }
  const auto header_len = detail::get_le<std::uint64_t>(p + 8);
  if (header_len > bytes.size() - 16) raise<PayloadLengthError>("checkpoint header truncated");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.begin() + 16, bytes.begin() + 16 + static_cast<std::ptrdiff_t>(header_len));
  } catch (const nlohmann::json::exception& e) {
    raise<FormatError>("checkpoint header is not valid JSON: ", e.what());
  }
  std::size_t offset = 16 + header_len;
  std::size_t expected = 0;
  for (const auto& entry : header.at("parameters")) {
    expected += shape_size(entry.at("shape").get<Shape>()) * 4;
  }
  const std::size_t payload = bytes.size() - offset;
  if (payload != expected) {
    raise<PayloadLengthError>("checkpoint payload has ", payload, " bytes, header implies ", expected);
  }
  std::vector<SmaeModel::Parameter> params;
  for (const auto& entry : header.at("parameters")) {
    Shape shape = entry.at("shape").get<Shape>();
    Tensor t(shape);
    for (double& v : t.data()) {
      v = static_cast<double>(std::bit_cast<float>(detail::get_le<std::uint32_t>(p + offset)));
      offset += 4;
    }
    params.push_back({entry.at("name").get<std::string>(), std::move(t)});
  }
  Checkpoint ck;
  ck.model = SmaeModel::from_parameters(header.at("config").get<SmaeConfig>(), std::move(params));
  ck.metadata = header.value("metadata", nlohmann::json::object());
  return ck;
}

inline void save_checkpoint(const SmaeModel& model, const std::filesystem::path& path,
                            const nlohmann::json& metadata = nlohmann::json::object()) {
  const std::string bytes = encode_checkpoint(model, metadata);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) raise<IoError>("cannot write '", path.string(), "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) raise<IoError>("failed writing '", path.string(), "'");
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise<IoError>("cannot open '", path.string(), "'");
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

}  // namespace smae
