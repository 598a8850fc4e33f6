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
#include <span>
#include <string_view>

#include "fuseq/counters.h"
#include "fuseq/tensor.h"

namespace fuseq {

enum class Activation : uint8_t { kNone = 0, kRelu, kGelu };

std::string_view activation_name(Activation act);
Activation parse_activation(std::string_view name);

/// x * Phi(x) with the exact erf form.
float gelu(float x);

struct SoftmaxOptions {
  float scale = 1.0f;
  /// Optional additive key mask [B, 1, 1, K] holding 0 or -inf.
  const Tensor* mask = nullptr;
  /// Query i may attend key j only when j <= i + (K - Q).
  bool causal = false;
};

// Fused single-pass kernels. Each call records exactly one fused pass of the
// given kind. In-place use (out aliasing the first input) is allowed.

/// Row-wise (x - mean) / sqrt(var + eps) * gamma + beta.
void fused_layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                      float eps, const Tensor& out);

/// Softmax over the last axis of scores [B, H, Q, K] * scale + mask.
/// Throws FullMaskError if a row has no attendable key.
void fused_attention_softmax(const Tensor& scores, const SoftmaxOptions& opts,
                             const Tensor& out);

/// activation(x + bias) (+ residual).
void fused_bias_residual_activation(
    const Tensor& x, const Tensor& bias, const Tensor* residual,
    Activation act, const Tensor& out,
    FusedPassKind kind = FusedPassKind::kFfnBiasActivation);

/// layer_norm(x + bias + residual); counted as ffn_bias_residual.
void fused_bias_residual_layer_norm(const Tensor& x, const Tensor& bias,
                                    const Tensor& residual,
                                    const Tensor& gamma, const Tensor& beta,
                                    float eps, const Tensor& out);

/// Adds the bias to x [B * S, n * H * d] and scatters the n slices into
/// head-major destinations [B, H, L, d]. Slice c lands at sequence positions
/// [positions[c], positions[c] + S); no positions means 0 for every slice.
/// Counted as qkv_bias_reshape.
void fused_bias_split_heads(const Tensor& x, const Tensor& bias,
                            size_t seq_len, std::span<const Tensor> dsts,
                            std::span<const size_t> positions = {});

// Framework-style references. Every elementwise step or reduction is its own
// pass over memory and every intermediate is materialized in freshly
// allocated storage. Pass decomposition per op:
//   layer norm              mean, variance, normalize                 (3)
//   attention softmax       scale, mask, max, subtract, exp, sum, div (7,
//                           mask pass only when a mask is given)
//   bias/residual/act       bias, activation, residual                (1-3)
//   bias/residual/norm      bias, residual, + layer norm              (5)
//   bias + split heads      bias, split (n > 1), one transpose per slice
//   merge heads             transpose                                 (1)

void naive_layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                      float eps, const Tensor& out);
void naive_attention_softmax(const Tensor& scores, const SoftmaxOptions& opts,
                             const Tensor& out);
void naive_bias_residual_activation(const Tensor& x, const Tensor& bias,
                                    const Tensor* residual, Activation act,
                                    const Tensor& out);
void naive_bias_residual_layer_norm(const Tensor& x, const Tensor& bias,
                                    const Tensor& residual,
                                    const Tensor& gamma, const Tensor& beta,
                                    float eps, const Tensor& out);
void naive_bias_split_heads(const Tensor& x, const Tensor& bias,
                            size_t seq_len, std::span<const Tensor> dsts,
                            std::span<const size_t> positions = {});
/// [B, H, S, d] -> [B * S, H * d].
void naive_merge_heads(const Tensor& heads, const Tensor& out);

}  // namespace fuseq
