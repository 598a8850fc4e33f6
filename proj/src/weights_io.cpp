/*
 * Copyright (c) 2026, The fuseq Authors.  All rights reserved.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "fuseq/errors.h"
#include "fuseq/half.h"
#include "fuseq/model.h"

namespace fuseq {

static_assert(std::endian::native == std::endian::little,
              "weight files are read and written as little-endian");

namespace {

constexpr char kMagic[4] = {'L', 'S', 'Q', 'W'};
constexpr size_t kPreambleBytes = 4 + 4 + 8;

template <typename T>
void append_pod(std::vector<uint8_t>& out, T value) {
  uint8_t bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  out.insert(out.end(), bytes, bytes + sizeof(T));
}

template <typename T>
T read_pod(std::span<const uint8_t> bytes, size_t offset) {
  T value;
  std::memcpy(&value, bytes.data() + offset, sizeof(T));
  return value;
}

std::string_view storage_name(StorageType s) {
  return s == StorageType::kFloat16 ? "f16" : "f32";
}

}  // namespace

std::vector<uint8_t> serialize_weights(const Model& model,
                                       StorageType storage) {
  ModelConfig config = model.config;
  ModelWeights& weights = const_cast<ModelWeights&>(model.weights);

  nlohmann::json tensors = nlohmann::json::array();
  size_t payload_values = 0;
  for_each_weight(config, weights,
                  [&](const std::string& name, const std::vector<size_t>& shape,
                      std::vector<float>& values) {
                    tensors.push_back({{"name", name}, {"shape", shape}});
                    payload_values += values.size();
                  });
  nlohmann::json header = {{"format", "fuseq-weights"},
                           {"config", config.to_json()},
                           {"storage", storage_name(storage)},
                           {"tensors", tensors}};
  const std::string text = header.dump();

  const size_t elem = storage == StorageType::kFloat16 ? 2 : 4;
  std::vector<uint8_t> out;
  out.reserve(kPreambleBytes + text.size() + payload_values * elem);
  out.insert(out.end(), kMagic, kMagic + 4);
  append_pod<uint32_t>(out, kWeightFileVersion);
  append_pod<uint64_t>(out, text.size());
  out.insert(out.end(), text.begin(), text.end());
  for_each_weight(config, weights,
                  [&](const std::string&, const std::vector<size_t>&,
                      std::vector<float>& values) {
                    for (float v : values) {
                      if (storage == StorageType::kFloat16) {
                        append_pod<uint16_t>(out, float_to_half(v));
                      } else {
                        append_pod<float>(out, v);
                      }
                    }
                  });
  return out;
}

Model deserialize_weights(std::span<const uint8_t> bytes) {
  if (bytes.size() < kPreambleBytes) {
    throw FormatError("weight file truncated inside the preamble");
  }
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw FormatError("bad magic: not an LSQW weight file");
  }
  const auto version = read_pod<uint32_t>(bytes, 4);
  if (version != kWeightFileVersion) {
    throw FormatError("unsupported weight file version " +
                      std::to_string(version));
  }
  const auto header_len = read_pod<uint64_t>(bytes, 8);
  if (header_len > bytes.size() - kPreambleBytes) {
    throw FormatError("weight file truncated inside the header");
  }
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.begin() + kPreambleBytes,
                                   bytes.begin() + kPreambleBytes +
                                       static_cast<std::ptrdiff_t>(header_len));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed weight file header: ") + e.what());
  }
  if (!header.is_object() || !header.contains("config") ||
      !header.contains("tensors") || !header.contains("storage")) {
    throw FormatError("weight file header lacks config/tensors/storage");
  }
  const std::string storage_str = header["storage"].is_string()
                                      ? header["storage"].get<std::string>()
                                      : std::string();
  StorageType storage;
  if (storage_str == "f32") {
    storage = StorageType::kFloat32;
  } else if (storage_str == "f16") {
    storage = StorageType::kFloat16;
  } else {
    throw FormatError("unknown storage type '" + storage_str + "'");
  }

  Model model;
  model.config = ModelConfig::from_json(header["config"]);
  model.weights = allocate_weights(model.config);

  const auto& listed = header["tensors"];
  if (!listed.is_array()) throw FormatError("header 'tensors' is not a list");
  size_t index = 0;
  for_each_weight(model.config, model.weights,
                  [&](const std::string& name, const std::vector<size_t>& shape,
                      std::vector<float>&) {
                    if (index >= listed.size()) {
                      throw ConsistencyError("header lists fewer tensors than "
                                             "the config requires");
                    }
                    const auto& t = listed[index++];
                    if (t.value("name", std::string()) != name ||
                        t.value("shape", std::vector<size_t>()) != shape) {
                      throw ConsistencyError(
                          "tensor " + std::to_string(index - 1) +
                          " in header does not match expected '" + name + "'");
                    }
                  });
  if (index != listed.size()) {
    throw ConsistencyError("header lists more tensors than the config requires");
  }

  const size_t elem = storage == StorageType::kFloat16 ? 2 : 4;
  size_t offset = kPreambleBytes + header_len;
  for_each_weight(model.config, model.weights,
                  [&](const std::string& name, const std::vector<size_t>&,
                      std::vector<float>& values) {
                    const size_t need = values.size() * elem;
                    if (bytes.size() - offset < need) {
                      throw FormatError("weight file truncated inside tensor '" +
                                        name + "'");
                    }
                    for (float& v : values) {
                      v = storage == StorageType::kFloat16
                              ? half_to_float(read_pod<uint16_t>(bytes, offset))
                              : read_pod<float>(bytes, offset);
                      offset += elem;
                    }
                  });
  if (offset != bytes.size()) {
    throw FormatError("weight file has " + std::to_string(bytes.size() - offset) +
                      " trailing bytes");
  }
  model.finalize();
  return model;
}

void save_weights(const Model& model, const std::string& path,
                  StorageType storage) {
  const auto bytes = serialize_weights(model, storage);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open '" + path + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("failed writing '" + path + "'");
}

Model load_weights(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open weight file '" + path + "'");
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                             std::istreambuf_iterator<char>());
  return deserialize_weights(bytes);
}

}  // namespace fuseq
