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

#include "fuseq/tensor.h"

namespace fuseq {

/// out[M x N] = a[M x K] * b (+ out when accumulating). With transpose_b the
/// right operand is stored as [N x K]. One call counts as one GEMM.
///
/// Throws DimensionError on non-conforming shapes and AliasingError when out
/// shares storage with an operand.
void gemm(const Tensor& a, const Tensor& b, const Tensor& out,
          bool transpose_b = false, bool accumulate = false);

/// A batch of equally shaped matrices inside one buffer, addressed by a
/// two-level (outer, inner) batch index. Covers head-major [B, H, L, d]
/// blocks as well as heads interleaved inside a [B * S, H * d] activation.
struct MatrixBatch {
  std::span<float> data;
  size_t rows = 0;
  size_t cols = 0;
  size_t ld = 0;
  size_t outer = 1;
  size_t inner = 1;
  size_t outer_stride = 0;
  size_t inner_stride = 0;

  size_t count() const { return outer * inner; }
  size_t offset(size_t o, size_t i) const {
    return o * outer_stride + i * inner_stride;
  }
};

/// Head-major view of a [B, H, L, d] tensor restricted to its first `rows`
/// positions along L.
MatrixBatch head_major_batch(const Tensor& t, size_t rows);

/// View of a [batch * seq, heads * head_dim] activation as batch x heads
/// matrices of seq x head_dim.
MatrixBatch interleaved_head_batch(const Tensor& t, size_t batch, size_t seq,
                                   size_t heads);

/// Strided batched GEMM. Counted as a single GEMM call regardless of batch
/// count, matching a strided-batched BLAS launch.
void gemm_batched(const MatrixBatch& a, const MatrixBatch& b,
                  const MatrixBatch& out, bool transpose_b,
                  bool accumulate = false);

}  // namespace fuseq
