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

#include <cmath>
#include <limits>
#include <string>

#include "fuseq/errors.h"
#include "fuseq/ops.h"

namespace fuseq::detail {

inline void require_same_shape(const Tensor& a, const Tensor& b,
                               const char* what) {
  if (!(a.shape() == b.shape())) {
    throw DimensionError(std::string(what) + ": shape " + a.shape().str() +
                         " does not match " + b.shape().str());
  }
}

inline void require_vector(const Tensor& v, size_t n, const char* what) {
  if (v.numel() != n) {
    throw DimensionError(std::string(what) + ": expected " +
                         std::to_string(n) + " elements, got " +
                         v.shape().str());
  }
}

inline float activate(float v, Activation act) {
  switch (act) {
    case Activation::kNone: return v;
    case Activation::kRelu: return v > 0.0f ? v : 0.0f;
    case Activation::kGelu: return gelu(v);
  }
  return v;
}

/// Row statistics shared by the fused and naive layer norms so both round
/// identically: mean and variance are accumulated in double and stored as
/// float, normalization is done in float.
inline float row_mean(const float* x, size_t d) {
  double s = 0.0;
  for (size_t i = 0; i < d; ++i) s += x[i];
  return static_cast<float>(s / static_cast<double>(d));
}

inline float row_variance(const float* x, size_t d, float mean) {
  double s = 0.0;
  for (size_t i = 0; i < d; ++i) {
    double c = static_cast<double>(x[i]) - static_cast<double>(mean);
    s += c * c;
  }
  return static_cast<float>(s / static_cast<double>(d));
}

inline float inverse_stddev(float var, float eps) {
  return 1.0f / std::sqrt(var + eps);
}

inline float normalize(float x, float mean, float inv, float gamma,
                       float beta) {
  return (x - mean) * inv * gamma + beta;
}

inline bool is_neg_inf(float v) {
  return v == -std::numeric_limits<float>::infinity();
}

void check_layer_norm_args(const Tensor& x, const Tensor& gamma,
                           const Tensor& beta, float eps, const Tensor& out);
void check_softmax_args(const Tensor& scores, const SoftmaxOptions& opts,
                        const Tensor& out);
void check_bias_args(const Tensor& x, const Tensor& bias,
                     const Tensor* residual, const Tensor& out);
/// Returns heads-per-slice geometry after validating the destinations.
struct SplitGeometry {
  size_t batch;
  size_t slices;
  size_t heads;
  size_t head_dim;
};
SplitGeometry check_split_args(const Tensor& x, const Tensor& bias,
                               size_t seq_len, std::span<const Tensor> dsts,
                               std::span<const size_t> positions);

inline size_t split_position(std::span<const size_t> positions, size_t i) {
  return positions.empty() ? 0 : positions[i];
}

[[noreturn]] void throw_full_mask(size_t row);

}  // namespace fuseq::detail
