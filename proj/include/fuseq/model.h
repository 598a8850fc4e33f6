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

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "fuseq/ops.h"
#include "fuseq/tensor.h"

namespace fuseq {

/// Architecture plus the maximum shapes the memory plan is sized for.
struct ModelConfig {
  size_t num_encoder_layers = 6;
  size_t num_decoder_layers = 6;
  size_t d_model = 512;
  size_t d_ff = 2048;
  size_t num_heads = 8;
  size_t vocab_size = 32000;
  size_t max_batch = 8;
  size_t max_seq_len = 64;
  size_t max_beam_size = 4;
  /// Size of the classification head; 0 means no head.
  size_t num_labels = 0;
  Activation activation = Activation::kRelu;
  bool tied_embedding = true;
  float layer_norm_eps = 1e-5f;
  int32_t pad_id = 0;
  int32_t bos_id = 1;
  int32_t eos_id = 2;

  size_t head_dim() const { return d_model / num_heads; }

  /// Throws ConsistencyError when an invariant does not hold.
  void validate() const;

  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);

  bool operator==(const ModelConfig&) const = default;

  /// Tiny configuration for tests.
  static ModelConfig tiny();
  /// Transformer-base dimensions (6+6 layers, 512/2048/8) with a 32k vocab.
  static ModelConfig base();
};

struct LinearWeights {
  std::vector<float> weight;  // [in x out], y = x * W + b
  std::vector<float> bias;    // [out]
};

struct NormWeights {
  std::vector<float> gamma;
  std::vector<float> beta;
};

struct EncoderLayerWeights {
  LinearWeights qkv;  // [d x 3d]
  LinearWeights attn_out;
  NormWeights attn_norm;
  LinearWeights ffn_in;  // [d x d_ff]
  LinearWeights ffn_out;  // [d_ff x d]
  NormWeights ffn_norm;
};

struct DecoderLayerWeights {
  LinearWeights self_qkv;
  LinearWeights self_out;
  NormWeights self_norm;
  LinearWeights cross_q;   // [d x d]
  LinearWeights cross_kv;  // [d x 2d], applied to encoder memory
  LinearWeights cross_out;
  NormWeights cross_norm;
  LinearWeights ffn_in;
  LinearWeights ffn_out;
  NormWeights ffn_norm;
};

struct ModelWeights {
  std::vector<float> token_embedding;    // [vocab x d]
  std::vector<float> output_projection;  // [vocab x d]; empty when tied
  std::vector<EncoderLayerWeights> encoder;
  std::vector<DecoderLayerWeights> decoder;
  LinearWeights classifier;  // [d x num_labels]; empty without a head
};

/// Visits every weight tensor in the canonical file order.
using TensorVisitor = std::function<void(const std::string& name,
                                         const std::vector<size_t>& shape,
                                         std::vector<float>& values)>;
void for_each_weight(const ModelConfig& config, ModelWeights& weights,
                     const TensorVisitor& visit);

/// Sizes every tensor for `config` without filling values.
ModelWeights allocate_weights(const ModelConfig& config);

struct Model {
  ModelConfig config;
  ModelWeights weights;
  /// Sinusoidal table [max_seq_len x d_model], derived from config.
  std::vector<float> positional;

  /// Checks shapes against the config and that all values are finite;
  /// throws ConsistencyError otherwise. Rebuilds the positional table.
  void finalize();

  const std::vector<float>& output_matrix() const {
    return config.tied_embedding ? weights.token_embedding
                                 : weights.output_projection;
  }

  /// Seeded random initialization. Identical seeds give identical weights on
  /// every platform (the generator and float conversion are spelled out).
  static Model random(const ModelConfig& config, uint64_t seed);
};

std::vector<float> sinusoidal_table(size_t positions, size_t d_model);

enum class StorageType : uint8_t { kFloat32 = 0, kFloat16 };

/// Binary weight file:
///   "LSQW" | u32 version | u64 header length | JSON header | tensors
/// Tensors follow the header in canonical order as raw little-endian f32 or
/// f16 values. f16 payloads are widened to f32 on load.
void save_weights(const Model& model, const std::string& path,
                  StorageType storage = StorageType::kFloat32);
Model load_weights(const std::string& path);
std::vector<uint8_t> serialize_weights(const Model& model, StorageType storage);
Model deserialize_weights(std::span<const uint8_t> bytes);

inline constexpr uint32_t kWeightFileVersion = 1;

}  // namespace fuseq
