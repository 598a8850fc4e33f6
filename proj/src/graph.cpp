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

#include "fuseq/graph.h"

#include <algorithm>
#include <limits>

namespace fuseq {

std::string_view buffer_name(BufferId id) {
  switch (id) {
    case BufferId::kEncX: return "enc_x";
    case BufferId::kSrcMask: return "src_mask";
    case BufferId::kEncQkv: return "enc_qkv";
    case BufferId::kEncHeads: return "enc_heads";
    case BufferId::kEncScores: return "enc_scores";
    case BufferId::kEncCtx: return "enc_ctx";
    case BufferId::kEncProj: return "enc_proj";
    case BufferId::kEncRes: return "enc_res";
    case BufferId::kEncNorm: return "enc_norm";
    case BufferId::kEncFfnHidden: return "enc_ffn_hidden";
    case BufferId::kEncFfnOut: return "enc_ffn_out";
    case BufferId::kCrossKvLin: return "cross_kv_lin";
    case BufferId::kCrossKv: return "cross_kv";
    case BufferId::kPooled: return "pooled";
    case BufferId::kClsLogits: return "cls_logits";
    case BufferId::kDecX: return "dec_x";
    case BufferId::kDecQkv: return "dec_qkv";
    case BufferId::kDecQ: return "dec_q";
    case BufferId::kDecScores: return "dec_scores";
    case BufferId::kDecCtx: return "dec_ctx";
    case BufferId::kDecProj: return "dec_proj";
    case BufferId::kDecRes: return "dec_res";
    case BufferId::kDecNorm1: return "dec_norm1";
    case BufferId::kCrossQLin: return "cross_q_lin";
    case BufferId::kCrossQ: return "cross_q";
    case BufferId::kCrossScores: return "cross_scores";
    case BufferId::kCrossCtx: return "cross_ctx";
    case BufferId::kCrossProj: return "cross_proj";
    case BufferId::kCrossRes: return "cross_res";
    case BufferId::kDecNorm2: return "dec_norm2";
    case BufferId::kDecFfnHidden: return "dec_ffn_hidden";
    case BufferId::kDecFfnOut: return "dec_ffn_out";
    case BufferId::kLogits: return "logits";
    case BufferId::kKvCacheA: return "kv_cache_a";
    case BufferId::kKvCacheB: return "kv_cache_b";
    case BufferId::kCount: break;
  }
  return "unknown";
}

bool is_request_lifetime(BufferId id) {
  return id == BufferId::kSrcMask || id == BufferId::kCrossKv ||
         id == BufferId::kKvCacheA || id == BufferId::kKvCacheB;
}

size_t buffer_max_elements(const ModelConfig& c, BufferId id) {
  const size_t d = c.d_model;
  const size_t enc_rows = c.max_batch * c.max_seq_len;
  const size_t dec_rows = c.max_batch * c.max_beam_size;
  const size_t s = c.max_seq_len;
  const size_t h = c.num_heads;
  switch (id) {
    case BufferId::kEncX:
    case BufferId::kEncCtx:
    case BufferId::kEncProj:
    case BufferId::kEncRes:
    case BufferId::kEncNorm:
    case BufferId::kEncFfnOut:
      return enc_rows * d;
    case BufferId::kSrcMask: return c.max_batch * s;
    case BufferId::kEncQkv:
    case BufferId::kEncHeads:
      return enc_rows * 3 * d;
    case BufferId::kEncScores: return c.max_batch * h * s * s;
    case BufferId::kEncFfnHidden: return enc_rows * c.d_ff;
    case BufferId::kCrossKvLin: return enc_rows * 2 * d;
    case BufferId::kCrossKv: return c.num_decoder_layers * 2 * enc_rows * d;
    case BufferId::kPooled: return c.max_batch * d;
    case BufferId::kClsLogits: return c.max_batch * c.num_labels;
    case BufferId::kDecX:
    case BufferId::kDecQ:
    case BufferId::kDecCtx:
    case BufferId::kDecProj:
    case BufferId::kDecRes:
    case BufferId::kDecNorm1:
    case BufferId::kCrossQLin:
    case BufferId::kCrossQ:
    case BufferId::kCrossCtx:
    case BufferId::kCrossProj:
    case BufferId::kCrossRes:
    case BufferId::kDecNorm2:
    case BufferId::kDecFfnOut:
      return dec_rows * d;
    case BufferId::kDecQkv: return dec_rows * 3 * d;
    case BufferId::kDecScores: return dec_rows * h * s;
    case BufferId::kCrossScores: return dec_rows * h * s;
    case BufferId::kDecFfnHidden: return dec_rows * c.d_ff;
    case BufferId::kLogits: return dec_rows * c.vocab_size;
    case BufferId::kKvCacheA:
    case BufferId::kKvCacheB:
      return c.num_decoder_layers * 2 * dec_rows * s * d;
    case BufferId::kCount: break;
  }
  return 0;
}

ExecutionGraph build_execution_graph(const ModelConfig& config) {
  config.validate();
  using B = BufferId;
  ExecutionGraph g;
  auto op = [&](std::string name, std::vector<BufferId> buffers) {
    g.ops.push_back(GraphOp{std::move(name), std::move(buffers)});
  };

  op("encoder.embed", {B::kEncX, B::kSrcMask});
  op("encoder.qkv_gemm", {B::kEncX, B::kEncQkv});
  op("encoder.qkv_bias_reshape", {B::kEncQkv, B::kEncHeads});
  op("encoder.scores_gemm", {B::kEncHeads, B::kEncScores});
  op("encoder.softmax", {B::kEncScores, B::kSrcMask});
  op("encoder.context_gemm", {B::kEncScores, B::kEncHeads, B::kEncCtx});
  op("encoder.out_gemm", {B::kEncCtx, B::kEncProj});
  op("encoder.out_bias_residual", {B::kEncProj, B::kEncX, B::kEncRes});
  op("encoder.attn_norm", {B::kEncRes, B::kEncNorm});
  op("encoder.ffn_in_gemm", {B::kEncNorm, B::kEncFfnHidden});
  op("encoder.ffn_bias_activation", {B::kEncFfnHidden});
  op("encoder.ffn_out_gemm", {B::kEncFfnHidden, B::kEncFfnOut});
  op("encoder.ffn_bias_residual_norm", {B::kEncFfnOut, B::kEncNorm, B::kEncX});

  const bool has_decoder = config.num_decoder_layers > 0;
  if (has_decoder) {
    op("cross.kv_gemm", {B::kEncX, B::kCrossKvLin});
    op("cross.kv_bias_reshape", {B::kCrossKvLin, B::kCrossKv});
  }
  if (config.num_labels > 0) {
    op("classifier.pool", {B::kEncX, B::kPooled});
    op("classifier.gemm", {B::kPooled, B::kClsLogits});
  }
  if (has_decoder) {
    op("decoder.embed", {B::kDecX});
    op("decoder.self_qkv_gemm", {B::kDecX, B::kDecQkv});
    op("decoder.self_qkv_bias_reshape",
       {B::kDecQkv, B::kDecQ, B::kKvCacheA, B::kKvCacheB});
    op("decoder.self_scores_gemm",
       {B::kDecQ, B::kKvCacheA, B::kKvCacheB, B::kDecScores});
    op("decoder.self_softmax", {B::kDecScores});
    op("decoder.self_context_gemm",
       {B::kDecScores, B::kKvCacheA, B::kKvCacheB, B::kDecCtx});
    op("decoder.self_out_gemm", {B::kDecCtx, B::kDecProj});
    op("decoder.self_bias_residual", {B::kDecProj, B::kDecX, B::kDecRes});
    op("decoder.self_norm", {B::kDecRes, B::kDecNorm1});
    op("decoder.cross_q_gemm", {B::kDecNorm1, B::kCrossQLin});
    op("decoder.cross_q_bias_reshape", {B::kCrossQLin, B::kCrossQ});
    op("decoder.cross_scores_gemm", {B::kCrossQ, B::kCrossKv, B::kCrossScores});
    op("decoder.cross_softmax", {B::kCrossScores, B::kSrcMask});
    op("decoder.cross_context_gemm",
       {B::kCrossScores, B::kCrossKv, B::kCrossCtx});
    op("decoder.cross_out_gemm", {B::kCrossCtx, B::kCrossProj});
    op("decoder.cross_bias_residual",
       {B::kCrossProj, B::kDecNorm1, B::kCrossRes});
    op("decoder.cross_norm", {B::kCrossRes, B::kDecNorm2});
    op("decoder.ffn_in_gemm", {B::kDecNorm2, B::kDecFfnHidden});
    op("decoder.ffn_bias_activation", {B::kDecFfnHidden});
    op("decoder.ffn_out_gemm", {B::kDecFfnHidden, B::kDecFfnOut});
    op("decoder.ffn_bias_residual_norm",
       {B::kDecFfnOut, B::kDecNorm2, B::kDecX});
    op("decoder.logits_gemm", {B::kDecX, B::kLogits});
    op("decoder.cache_reorder", {B::kLogits, B::kKvCacheA, B::kKvCacheB});
  }

  constexpr size_t kUnused = std::numeric_limits<size_t>::max();
  std::array<size_t, kBufferCount> first;
  std::array<size_t, kBufferCount> last{};
  first.fill(kUnused);
  for (size_t i = 0; i < g.ops.size(); ++i) {
    for (BufferId id : g.ops[i].buffers) {
      const auto b = static_cast<size_t>(id);
      first[b] = std::min(first[b], i);
      last[b] = std::max(last[b], i);
    }
  }
  const size_t end = g.ops.size() - 1;
  for (size_t b = 0; b < kBufferCount; ++b) {
    if (first[b] == kUnused) continue;
    const auto id = static_cast<BufferId>(b);
    const size_t elems = buffer_max_elements(config, id);
    if (elems == 0) continue;
    IntermediateSpec spec;
    spec.name = std::string(buffer_name(id));
    spec.max_bytes = elems * sizeof(float);
    spec.first_use = is_request_lifetime(id) ? 0 : first[b];
    spec.last_use = is_request_lifetime(id) ? end : last[b];
    g.specs.push_back(std::move(spec));
    g.spec_ids.push_back(id);
  }
  return g;
}

}  // namespace fuseq
