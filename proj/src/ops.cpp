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

#include <algorithm>
#include <cmath>

#include "fuseq/ops.h"
#include "ops_common.h"

namespace fuseq {

std::string_view activation_name(Activation act) {
  switch (act) {
    case Activation::kNone: return "none";
    case Activation::kRelu: return "relu";
    case Activation::kGelu: return "gelu";
  }
  return "none";
}

Activation parse_activation(std::string_view name) {
  if (name == "none") return Activation::kNone;
  if (name == "relu") return Activation::kRelu;
  if (name == "gelu") return Activation::kGelu;
  throw ParameterError("unknown activation '" + std::string(name) + "'");
}

float gelu(float x) {
  return 0.5f * x * (1.0f + std::erf(x * 0.70710678118654752440f));
}

namespace detail {

void check_layer_norm_args(const Tensor& x, const Tensor& gamma,
                           const Tensor& beta, float eps, const Tensor& out) {
  if (x.rank() == 0 || x.cols() == 0) {
    throw DimensionError("layer norm needs a non-empty last dimension");
  }
  if (!(eps > 0.0f) && eps != 0.0f) {
    throw ParameterError("layer norm eps must be non-negative");
  }
  require_same_shape(x, out, "layer norm output");
  require_vector(gamma, x.cols(), "layer norm gamma");
  require_vector(beta, x.cols(), "layer norm beta");
}

void check_softmax_args(const Tensor& scores, const SoftmaxOptions& opts,
                        const Tensor& out) {
  if (scores.rank() != 4 || scores.dim(3) == 0) {
    throw DimensionError("attention softmax expects [B,H,Q,K] with K >= 1, got " +
                         scores.shape().str());
  }
  require_same_shape(scores, out, "attention softmax output");
  if (opts.causal && scores.dim(2) > scores.dim(3)) {
    throw DimensionError("causal attention needs Q <= K");
  }
  if (opts.mask) {
    const Tensor& m = *opts.mask;
    if (m.rank() != 4 || m.dim(0) != scores.dim(0) || m.dim(1) != 1 ||
        m.dim(2) != 1 || m.dim(3) != scores.dim(3)) {
      throw DimensionError("attention mask must be [B,1,1,K] = [" +
                           std::to_string(scores.dim(0)) + "x1x1x" +
                           std::to_string(scores.dim(3)) + "], got " +
                           m.shape().str());
    }
    for (float v : m.values()) {
      if (v != 0.0f && !is_neg_inf(v)) {
        throw ParameterError("attention mask entries must be 0 or -inf");
      }
    }
  }
}

void check_bias_args(const Tensor& x, const Tensor& bias,
                     const Tensor* residual, const Tensor& out) {
  if (x.rank() == 0) throw DimensionError("bias op on empty tensor");
  require_same_shape(x, out, "bias op output");
  require_vector(bias, x.cols(), "bias");
  if (residual) require_same_shape(x, *residual, "residual");
}

SplitGeometry check_split_args(const Tensor& x, const Tensor& bias,
                               size_t seq_len, std::span<const Tensor> dsts,
                               std::span<const size_t> positions) {
  if (x.rank() != 2 || dsts.empty() || seq_len == 0 ||
      x.dim(0) % seq_len != 0 || x.dim(1) % dsts.size() != 0) {
    throw DimensionError("split heads: input " + x.shape().str() +
                         " does not divide into " +
                         std::to_string(dsts.size()) + " slices of seq " +
                         std::to_string(seq_len));
  }
  require_vector(bias, x.dim(1), "split heads bias");
  SplitGeometry g{x.dim(0) / seq_len, dsts.size(), 0, 0};
  const size_t width = x.dim(1) / dsts.size();
  if (!positions.empty() && positions.size() != dsts.size()) {
    throw DimensionError("split heads: " + std::to_string(positions.size()) +
                         " positions for " + std::to_string(dsts.size()) +
                         " destinations");
  }
  for (size_t c = 0; c < dsts.size(); ++c) {
    const Tensor& d = dsts[c];
    const size_t position = split_position(positions, c);
    if (d.rank() != 4 || d.dim(0) != g.batch || d.dim(1) * d.dim(3) != width ||
        position + seq_len > d.dim(2)) {
      throw DimensionError("split heads: destination " + d.shape().str() +
                           " cannot hold batch " + std::to_string(g.batch) +
                           " positions [" + std::to_string(position) + ", " +
                           std::to_string(position + seq_len) + ")");
    }
    if (g.heads == 0) {
      g.heads = d.dim(1);
      g.head_dim = d.dim(3);
    } else if (d.dim(1) != g.heads || d.dim(3) != g.head_dim) {
      throw DimensionError("split heads: destinations disagree on head layout");
    }
    if (overlaps(d.values(), x.values())) {
      throw AliasingError("split heads destination overlaps its input");
    }
  }
  return g;
}

void throw_full_mask(size_t row) {
  throw FullMaskError("attention row " + std::to_string(row) +
                      " has every key masked");
}

}  // namespace detail

using namespace detail;

void fused_layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                      float eps, const Tensor& out) {
  check_layer_norm_args(x, gamma, beta, eps, out);
  const size_t n = x.rows();
  const size_t d = x.cols();
  const float* g = gamma.data();
  const float* b = beta.data();
  active_counters().record_fused(FusedPassKind::kLayerNorm,
                                 2 * n * d * sizeof(float));
  for (size_t r = 0; r < n; ++r) {
    const float* xr = x.data() + r * d;
    float* yr = out.data() + r * d;
    const float mean = row_mean(xr, d);
    const float inv = inverse_stddev(row_variance(xr, d, mean), eps);
    for (size_t i = 0; i < d; ++i) yr[i] = normalize(xr[i], mean, inv, g[i], b[i]);
  }
}

void fused_attention_softmax(const Tensor& scores, const SoftmaxOptions& opts,
                             const Tensor& out) {
  check_softmax_args(scores, opts, out);
  const size_t heads = scores.dim(1);
  const size_t q_len = scores.dim(2);
  const size_t k_len = scores.dim(3);
  const size_t rows = scores.rows();
  active_counters().record_fused(FusedPassKind::kAttentionScaleMaskSoftmax,
                                 2 * rows * k_len * sizeof(float));
  const float neg_inf = -std::numeric_limits<float>::infinity();
  for (size_t r = 0; r < rows; ++r) {
    const float* s = scores.data() + r * k_len;
    float* y = out.data() + r * k_len;
    const size_t b = r / (heads * q_len);
    const size_t q = r % q_len;
    const float* mask = opts.mask ? opts.mask->data() + b * k_len : nullptr;
    const size_t visible =
        opts.causal ? q + (k_len - q_len) + 1 : k_len;

    float max_v = neg_inf;
    for (size_t j = 0; j < k_len; ++j) {
      float v = s[j] * opts.scale;
      if (mask) v = v + mask[j];
      if (j >= visible) v = neg_inf;
      y[j] = v;
      max_v = std::max(max_v, v);
    }
    if (is_neg_inf(max_v)) throw_full_mask(r);
    float sum = 0.0f;
    for (size_t j = 0; j < k_len; ++j) {
      y[j] = std::exp(y[j] - max_v);
      sum += y[j];
    }
    for (size_t j = 0; j < k_len; ++j) y[j] = y[j] / sum;
  }
}

void fused_bias_residual_activation(const Tensor& x, const Tensor& bias,
                                    const Tensor* residual, Activation act,
                                    const Tensor& out, FusedPassKind kind) {
  check_bias_args(x, bias, residual, out);
  const size_t n = x.rows();
  const size_t d = x.cols();
  active_counters().record_fused(
      kind, (residual ? 3 : 2) * n * d * sizeof(float));
  const float* b = bias.data();
  for (size_t r = 0; r < n; ++r) {
    const float* xr = x.data() + r * d;
    float* yr = out.data() + r * d;
    if (residual) {
      const float* rr = residual->data() + r * d;
      for (size_t i = 0; i < d; ++i) yr[i] = activate(xr[i] + b[i], act) + rr[i];
    } else {
      for (size_t i = 0; i < d; ++i) yr[i] = activate(xr[i] + b[i], act);
    }
  }
}

void fused_bias_residual_layer_norm(const Tensor& x, const Tensor& bias,
                                    const Tensor& residual,
                                    const Tensor& gamma, const Tensor& beta,
                                    float eps, const Tensor& out) {
  check_bias_args(x, bias, &residual, out);
  check_layer_norm_args(x, gamma, beta, eps, out);
  const size_t n = x.rows();
  const size_t d = x.cols();
  active_counters().record_fused(FusedPassKind::kFfnBiasResidual,
                                 3 * n * d * sizeof(float));
  const float* b = bias.data();
  const float* g = gamma.data();
  const float* be = beta.data();
  for (size_t r = 0; r < n; ++r) {
    const float* xr = x.data() + r * d;
    const float* rr = residual.data() + r * d;
    float* yr = out.data() + r * d;
    for (size_t i = 0; i < d; ++i) yr[i] = (xr[i] + b[i]) + rr[i];
    const float mean = row_mean(yr, d);
    const float inv = inverse_stddev(row_variance(yr, d, mean), eps);
    for (size_t i = 0; i < d; ++i) yr[i] = normalize(yr[i], mean, inv, g[i], be[i]);
  }
}

void fused_bias_split_heads(const Tensor& x, const Tensor& bias,
                            size_t seq_len, std::span<const Tensor> dsts,
                            std::span<const size_t> positions) {
  const SplitGeometry g = check_split_args(x, bias, seq_len, dsts, positions);
  const size_t width = g.heads * g.head_dim;
  active_counters().record_fused(FusedPassKind::kQkvBiasReshape,
                                 2 * x.numel() * sizeof(float));
  for (size_t r = 0; r < x.dim(0); ++r) {
    const size_t b = r / seq_len;
    const size_t s = r % seq_len;
    const float* xr = x.data() + r * x.dim(1);
    for (size_t c = 0; c < g.slices; ++c) {
      const Tensor& dst = dsts[c];
      for (size_t h = 0; h < g.heads; ++h) {
        const size_t col = c * width + h * g.head_dim;
        float* y = dst.data() + b * dst.stride(0) + h * dst.stride(1) +
                   (split_position(positions, c) + s) * dst.stride(2);
        const float* bb = bias.data() + col;
        for (size_t i = 0; i < g.head_dim; ++i) y[i] = xr[col + i] + bb[i];
      }
    }
  }
}

}  // namespace fuseq
