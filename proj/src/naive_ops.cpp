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
#include <vector>

#include "fuseq/ops.h"
#include "ops_common.h"

namespace fuseq {

using namespace detail;

namespace {

/// A materialized intermediate, allocated per call the way an eager
/// framework would.
Buffer materialize(size_t elements) {
  active_counters().record_materialized();
  return Buffer(elements);
}

void count_pass(size_t elements_touched) {
  active_counters().record_naive(elements_touched * sizeof(float));
}

void layer_norm_passes(const float* x, size_t n, size_t d, const float* gamma,
                       const float* beta, float eps, float* out) {
  Buffer mean = materialize(n);
  count_pass(n * d + n);
  for (size_t r = 0; r < n; ++r) mean.data()[r] = row_mean(x + r * d, d);

  Buffer var = materialize(n);
  count_pass(n * d + 2 * n);
  for (size_t r = 0; r < n; ++r) {
    var.data()[r] = row_variance(x + r * d, d, mean.data()[r]);
  }

  count_pass(2 * n * d + 2 * n);
  for (size_t r = 0; r < n; ++r) {
    const float m = mean.data()[r];
    const float inv = inverse_stddev(var.data()[r], eps);
    for (size_t i = 0; i < d; ++i) {
      out[r * d + i] = normalize(x[r * d + i], m, inv, gamma[i], beta[i]);
    }
  }
}

}  // namespace

void naive_layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                      float eps, const Tensor& out) {
  check_layer_norm_args(x, gamma, beta, eps, out);
  layer_norm_passes(x.data(), x.rows(), x.cols(), gamma.data(), beta.data(),
                    eps, out.data());
}

void naive_attention_softmax(const Tensor& scores, const SoftmaxOptions& opts,
                             const Tensor& out) {
  check_softmax_args(scores, opts, out);
  const size_t heads = scores.dim(1);
  const size_t q_len = scores.dim(2);
  const size_t k_len = scores.dim(3);
  const size_t rows = scores.rows();
  const size_t total = rows * k_len;
  const float neg_inf = -std::numeric_limits<float>::infinity();

  Buffer scaled = materialize(total);
  count_pass(2 * total);
  for (size_t i = 0; i < total; ++i) {
    scaled.data()[i] = scores.data()[i] * opts.scale;
  }

  Buffer masked_storage;
  const float* logits = scaled.data();
  if (opts.mask || opts.causal) {
    masked_storage = materialize(total);
    count_pass(3 * total);
    for (size_t r = 0; r < rows; ++r) {
      const size_t b = r / (heads * q_len);
      const size_t q = r % q_len;
      const size_t visible = opts.causal ? q + (k_len - q_len) + 1 : k_len;
      for (size_t j = 0; j < k_len; ++j) {
        float v = scaled.data()[r * k_len + j];
        if (opts.mask) v = v + opts.mask->data()[b * k_len + j];
        if (j >= visible) v = neg_inf;
        masked_storage.data()[r * k_len + j] = v;
      }
    }
    logits = masked_storage.data();
  }

  Buffer row_max = materialize(rows);
  count_pass(total + rows);
  for (size_t r = 0; r < rows; ++r) {
    float m = neg_inf;
    for (size_t j = 0; j < k_len; ++j) m = std::max(m, logits[r * k_len + j]);
    if (is_neg_inf(m)) throw_full_mask(r);
    row_max.data()[r] = m;
  }

  Buffer shifted = materialize(total);
  count_pass(2 * total + rows);
  for (size_t r = 0; r < rows; ++r) {
    for (size_t j = 0; j < k_len; ++j) {
      shifted.data()[r * k_len + j] = logits[r * k_len + j] - row_max.data()[r];
    }
  }

  Buffer exps = materialize(total);
  count_pass(2 * total);
  for (size_t i = 0; i < total; ++i) exps.data()[i] = std::exp(shifted.data()[i]);

  Buffer sums = materialize(rows);
  count_pass(total + rows);
  for (size_t r = 0; r < rows; ++r) {
    float s = 0.0f;
    for (size_t j = 0; j < k_len; ++j) s += exps.data()[r * k_len + j];
    sums.data()[r] = s;
  }

  count_pass(2 * total + rows);
  for (size_t r = 0; r < rows; ++r) {
    for (size_t j = 0; j < k_len; ++j) {
      out.data()[r * k_len + j] = exps.data()[r * k_len + j] / sums.data()[r];
    }
  }
}

void naive_bias_residual_activation(const Tensor& x, const Tensor& bias,
                                    const Tensor* residual, Activation act,
                                    const Tensor& out) {
  check_bias_args(x, bias, residual, out);
  const size_t n = x.rows();
  const size_t d = x.cols();
  const size_t total = n * d;
  const bool has_act = act != Activation::kNone;

  Buffer biased;
  float* biased_out = out.data();
  if (has_act || residual) {
    biased = materialize(total);
    biased_out = biased.data();
  }
  count_pass(2 * total + d);
  for (size_t r = 0; r < n; ++r) {
    for (size_t i = 0; i < d; ++i) {
      biased_out[r * d + i] = x.data()[r * d + i] + bias.data()[i];
    }
  }
  const float* current = biased_out;

  Buffer activated;
  if (has_act) {
    float* dst = out.data();
    if (residual) {
      activated = materialize(total);
      dst = activated.data();
    }
    count_pass(2 * total);
    for (size_t i = 0; i < total; ++i) dst[i] = activate(current[i], act);
    current = dst;
  }

  if (residual) {
    count_pass(3 * total);
    for (size_t i = 0; i < total; ++i) {
      out.data()[i] = current[i] + residual->data()[i];
    }
  }
}

void naive_bias_residual_layer_norm(const Tensor& x, const Tensor& bias,
                                    const Tensor& residual,
                                    const Tensor& gamma, const Tensor& beta,
                                    float eps, const Tensor& out) {
  check_bias_args(x, bias, &residual, out);
  check_layer_norm_args(x, gamma, beta, eps, out);
  const size_t n = x.rows();
  const size_t d = x.cols();
  const size_t total = n * d;

  Buffer biased = materialize(total);
  count_pass(2 * total + d);
  for (size_t r = 0; r < n; ++r) {
    for (size_t i = 0; i < d; ++i) {
      biased.data()[r * d + i] = x.data()[r * d + i] + bias.data()[i];
    }
  }
  Buffer summed = materialize(total);
  count_pass(3 * total);
  for (size_t i = 0; i < total; ++i) {
    summed.data()[i] = biased.data()[i] + residual.data()[i];
  }
  layer_norm_passes(summed.data(), n, d, gamma.data(), beta.data(), eps,
                    out.data());
}

void naive_bias_split_heads(const Tensor& x, const Tensor& bias,
                            size_t seq_len, std::span<const Tensor> dsts,
                            std::span<const size_t> positions) {
  const SplitGeometry g = check_split_args(x, bias, seq_len, dsts, positions);
  const size_t rows = x.dim(0);
  const size_t cols = x.dim(1);
  const size_t width = g.heads * g.head_dim;

  Buffer biased = materialize(rows * cols);
  count_pass(2 * rows * cols + cols);
  for (size_t r = 0; r < rows; ++r) {
    for (size_t i = 0; i < cols; ++i) {
      biased.data()[r * cols + i] = x.data()[r * cols + i] + bias.data()[i];
    }
  }

  // Slice c of the biased activation as a contiguous [rows, width] block.
  std::vector<Buffer> slices;
  std::vector<const float*> slice_ptrs;
  size_t slice_ld = cols;
  if (g.slices > 1) {
    count_pass(2 * rows * cols);
    for (size_t c = 0; c < g.slices; ++c) {
      slices.push_back(materialize(rows * width));
      for (size_t r = 0; r < rows; ++r) {
        std::copy_n(biased.data() + r * cols + c * width, width,
                    slices.back().data() + r * width);
      }
      slice_ptrs.push_back(slices.back().data());
    }
    slice_ld = width;
  } else {
    slice_ptrs.push_back(biased.data());
  }

  for (size_t c = 0; c < g.slices; ++c) {
    const Tensor& dst = dsts[c];
    count_pass(2 * rows * width);
    for (size_t r = 0; r < rows; ++r) {
      const size_t b = r / seq_len;
      const size_t s = r % seq_len;
      for (size_t h = 0; h < g.heads; ++h) {
        float* y = dst.data() + b * dst.stride(0) + h * dst.stride(1) +
                   (split_position(positions, c) + s) * dst.stride(2);
        std::copy_n(slice_ptrs[c] + r * slice_ld + h * g.head_dim, g.head_dim,
                    y);
      }
    }
  }
}

void naive_merge_heads(const Tensor& heads, const Tensor& out) {
  if (heads.rank() != 4 || out.rank() != 2 ||
      out.dim(0) != heads.dim(0) * heads.dim(2) ||
      out.dim(1) != heads.dim(1) * heads.dim(3)) {
    throw DimensionError("merge heads: cannot map " + heads.shape().str() +
                         " to " + out.shape().str());
  }
  const size_t batch = heads.dim(0);
  const size_t num_heads = heads.dim(1);
  const size_t seq = heads.dim(2);
  const size_t hd = heads.dim(3);
  count_pass(2 * heads.numel());
  for (size_t b = 0; b < batch; ++b) {
    for (size_t h = 0; h < num_heads; ++h) {
      for (size_t s = 0; s < seq; ++s) {
        std::copy_n(heads.data() + ((b * num_heads + h) * seq + s) * hd, hd,
                    out.data() + (b * seq + s) * out.dim(1) + h * hd);
      }
    }
  }
}

}  // namespace fuseq
