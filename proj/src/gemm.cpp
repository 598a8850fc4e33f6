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

#include "fuseq/gemm.h"

#include <cblas.h>

#include <algorithm>
#include <string>

#include "fuseq/counters.h"
#include "fuseq/errors.h"

namespace fuseq {

namespace {

void check_batch_extent(const MatrixBatch& m, const char* what) {
  if (m.ld < m.cols) {
    throw DimensionError(std::string(what) + ": leading dimension " +
                         std::to_string(m.ld) + " < cols " +
                         std::to_string(m.cols));
  }
  if (m.count() == 0 || m.rows == 0 || m.cols == 0) return;
  size_t last = m.offset(m.outer - 1, m.inner - 1) + (m.rows - 1) * m.ld +
                m.cols;
  if (last > m.data.size()) {
    throw DimensionError(std::string(what) + ": batch view exceeds storage (" +
                         std::to_string(last) + " > " +
                         std::to_string(m.data.size()) + ")");
  }
}

void check_no_alias(std::span<const float> out, std::span<const float> a,
                    std::span<const float> b) {
  if (overlaps(out, a) || overlaps(out, b)) {
    throw AliasingError("gemm output storage overlaps an input operand");
  }
}

void sgemm(size_t m, size_t n, size_t k, const float* a, size_t lda,
           const float* b, size_t ldb, bool transpose_b, float* c, size_t ldc,
           bool accumulate) {
  if (m == 0 || n == 0) return;
  if (k == 0) {
    if (!accumulate) {
      for (size_t i = 0; i < m; ++i) std::fill_n(c + i * ldc, n, 0.0f);
    }
    return;
  }
  cblas_sgemm(CblasRowMajor, CblasNoTrans,
              transpose_b ? CblasTrans : CblasNoTrans, static_cast<int>(m),
              static_cast<int>(n), static_cast<int>(k), 1.0f, a,
              static_cast<int>(lda), b, static_cast<int>(ldb),
              accumulate ? 1.0f : 0.0f, c, static_cast<int>(ldc));
}

}  // namespace

void gemm(const Tensor& a, const Tensor& b, const Tensor& out,
          bool transpose_b, bool accumulate) {
  if (a.rank() != 2 || b.rank() != 2 || out.rank() != 2) {
    throw DimensionError("gemm expects rank-2 operands, got " +
                         a.shape().str() + ", " + b.shape().str() + ", " +
                         out.shape().str());
  }
  const size_t m = a.dim(0);
  const size_t k = a.dim(1);
  const size_t kb = transpose_b ? b.dim(1) : b.dim(0);
  const size_t n = transpose_b ? b.dim(0) : b.dim(1);
  if (k != kb || out.dim(0) != m || out.dim(1) != n) {
    throw DimensionError("gemm shape mismatch: " + a.shape().str() + " * " +
                         b.shape().str() + (transpose_b ? "^T" : "") +
                         " -> " + out.shape().str());
  }
  check_no_alias(out.values(), a.values(), b.values());

  ScopedTimer timer(TimeCategory::kGemm);
  active_counters().record_gemm((m * k + k * n + m * n) * sizeof(float));
  sgemm(m, n, k, a.data(), k, b.data(), b.dim(1), transpose_b, out.data(), n,
        accumulate);
}

MatrixBatch head_major_batch(const Tensor& t, size_t rows) {
  if (t.rank() != 4 || rows > t.dim(2)) {
    throw DimensionError("head-major view needs [B,H,L,d] with rows <= L, got " +
                         t.shape().str() + " rows=" + std::to_string(rows));
  }
  MatrixBatch m;
  m.data = t.values();
  m.rows = rows;
  m.cols = t.dim(3);
  m.ld = t.dim(3);
  m.outer = t.dim(0);
  m.inner = t.dim(1);
  m.outer_stride = t.stride(0);
  m.inner_stride = t.stride(1);
  return m;
}

MatrixBatch interleaved_head_batch(const Tensor& t, size_t batch, size_t seq,
                                   size_t heads) {
  if (t.rank() != 2 || t.dim(0) != batch * seq || heads == 0 ||
      t.dim(1) % heads != 0) {
    throw DimensionError("interleaved view needs [batch*seq, heads*d], got " +
                         t.shape().str());
  }
  MatrixBatch m;
  m.data = t.values();
  m.rows = seq;
  m.cols = t.dim(1) / heads;
  m.ld = t.dim(1);
  m.outer = batch;
  m.inner = heads;
  m.outer_stride = seq * t.dim(1);
  m.inner_stride = m.cols;
  return m;
}

void gemm_batched(const MatrixBatch& a, const MatrixBatch& b,
                  const MatrixBatch& out, bool transpose_b, bool accumulate) {
  if (a.outer != b.outer || a.inner != b.inner || a.outer != out.outer ||
      a.inner != out.inner) {
    throw DimensionError("gemm_batched: batch counts differ");
  }
  const size_t m = a.rows;
  const size_t k = a.cols;
  const size_t kb = transpose_b ? b.cols : b.rows;
  const size_t n = transpose_b ? b.rows : b.cols;
  if (k != kb || out.rows != m || out.cols != n) {
    throw DimensionError("gemm_batched shape mismatch: [" + std::to_string(m) +
                         "x" + std::to_string(k) + "] * [" +
                         std::to_string(b.rows) + "x" + std::to_string(b.cols) +
                         "]" + (transpose_b ? "^T" : "") + " -> [" +
                         std::to_string(out.rows) + "x" +
                         std::to_string(out.cols) + "]");
  }
  check_batch_extent(a, "gemm_batched a");
  check_batch_extent(b, "gemm_batched b");
  check_batch_extent(out, "gemm_batched out");
  check_no_alias(out.data, a.data, b.data);

  ScopedTimer timer(TimeCategory::kGemm);
  const size_t count = a.count();
  active_counters().record_gemm(count * (m * k + k * n + m * n) *
                                sizeof(float));
  for (size_t o = 0; o < a.outer; ++o) {
    for (size_t i = 0; i < a.inner; ++i) {
      sgemm(m, n, k, a.data.data() + a.offset(o, i), a.ld,
            b.data.data() + b.offset(o, i), b.ld, transpose_b,
            out.data.data() + out.offset(o, i), out.ld, accumulate);
    }
  }
}

}  // namespace fuseq
