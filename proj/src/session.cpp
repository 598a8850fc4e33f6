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

#include "fuseq/session.h"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <string>

#include "fuseq/errors.h"
#include "fuseq/gemm.h"
#include "fuseq/ops.h"

namespace fuseq {

std::string_view engine_name(EngineKind kind) {
  return kind == EngineKind::kFused ? "fused" : "naive";
}

EngineKind parse_engine(std::string_view name) {
  if (name == "fused") return EngineKind::kFused;
  if (name == "naive") return EngineKind::kNaive;
  throw ParameterError("unknown engine '" + std::string(name) + "'");
}

namespace {

Tensor weight(const std::vector<float>& w, size_t rows, size_t cols) {
  return const_view(w, {rows, cols});
}

Tensor vec(const std::vector<float>& v) { return const_view(v, {v.size()}); }

// Engine dispatch for the non-GEMM layer pieces.
struct Kernels {
  EngineKind engine;

  void layer_norm(const Tensor& x, const NormWeights& w, float eps,
                  const Tensor& out) const {
    if (engine == EngineKind::kFused) {
      fused_layer_norm(x, vec(w.gamma), vec(w.beta), eps, out);
    } else {
      naive_layer_norm(x, vec(w.gamma), vec(w.beta), eps, out);
    }
  }

  void softmax(const Tensor& scores, const SoftmaxOptions& opts) const {
    if (engine == EngineKind::kFused) {
      fused_attention_softmax(scores, opts, scores);
    } else {
      naive_attention_softmax(scores, opts, scores);
    }
  }

  void bias_residual(const Tensor& x, const std::vector<float>& bias,
                     const Tensor& residual, const Tensor& out) const {
    if (engine == EngineKind::kFused) {
      fused_bias_residual_activation(x, vec(bias), &residual, Activation::kNone,
                                     out,
                                     FusedPassKind::kAttnOutputBiasResidual);
    } else {
      naive_bias_residual_activation(x, vec(bias), &residual,
                                     Activation::kNone, out);
    }
  }

  void bias_activation(const Tensor& x, const std::vector<float>& bias,
                       Activation act) const {
    if (engine == EngineKind::kFused) {
      fused_bias_residual_activation(x, vec(bias), nullptr, act, x,
                                     FusedPassKind::kFfnBiasActivation);
    } else {
      naive_bias_residual_activation(x, vec(bias), nullptr, act, x);
    }
  }

  void bias_residual_norm(const Tensor& x, const std::vector<float>& bias,
                          const Tensor& residual, const NormWeights& w,
                          float eps, const Tensor& out) const {
    if (engine == EngineKind::kFused) {
      fused_bias_residual_layer_norm(x, vec(bias), residual, vec(w.gamma),
                                     vec(w.beta), eps, out);
    } else {
      naive_bias_residual_layer_norm(x, vec(bias), residual, vec(w.gamma),
                                     vec(w.beta), eps, out);
    }
  }

  void split(const Tensor& x, const std::vector<float>& bias, size_t seq_len,
             std::span<const Tensor> dsts,
             std::span<const size_t> positions = {}) const {
    if (engine == EngineKind::kFused) {
      fused_bias_split_heads(x, vec(bias), seq_len, dsts, positions);
    } else {
      naive_bias_split_heads(x, vec(bias), seq_len, dsts, positions);
    }
  }
};

void check_tokens(std::span<const int32_t> ids, size_t vocab) {
  for (size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<size_t>(ids[i]) >= vocab) {
      throw InputError("token id " + std::to_string(ids[i]) + " at index " +
                       std::to_string(i) + " outside vocabulary of " +
                       std::to_string(vocab));
    }
  }
}

}  // namespace

struct InferenceSession::Binding {
  explicit Binding(InferenceSession& s)
      : counters(s.counters_),
        profiler(s.profiling_ ? &s.profiler_ : nullptr) {}
  ScopedCounters counters;
  ScopedProfiler profiler;
};

InferenceSession::InferenceSession(std::shared_ptr<const Model> model,
                                   SessionOptions options)
    : model_(std::move(model)), options_(options) {
  if (!model_) throw ParameterError("session needs a model");
  graph_ = build_execution_graph(model_->config);
  plan_ = options_.plan == PlanPolicy::kShared
              ? build_plan(graph_.specs)
              : build_unshared_plan(graph_.specs);
  plan_index_.fill(std::numeric_limits<size_t>::max());
  for (size_t i = 0; i < graph_.spec_ids.size(); ++i) {
    plan_index_[static_cast<size_t>(graph_.spec_ids[i])] = i;
  }
  if (options_.engine == EngineKind::kFused) {
    arena_ = std::make_unique<Arena>(plan_);
  }
}

InferenceSession::~InferenceSession() = default;

Tensor InferenceSession::buffer(BufferId id, Shape shape) {
  const auto b = static_cast<size_t>(id);
  if (arena_) return arena_->acquire(plan_index_[b], shape);
  const size_t limit = buffer_max_elements(config(), id);
  if (shape.numel() > limit) {
    throw CapacityError(std::string(buffer_name(id)) + " shape " +
                        shape.str() + " exceeds planned maximum of " +
                        std::to_string(limit) + " elements");
  }
  scratch_.emplace_back(shape.numel());
  active_counters().record_materialized();
  return scratch_.back().view(shape);
}

Tensor InferenceSession::persistent(BufferId id, Shape shape) {
  const auto b = static_cast<size_t>(id);
  if (arena_) return arena_->acquire(plan_index_[b], shape);
  if (!(owned_shape_[b] == shape) || owned_[b].size() < shape.numel()) {
    owned_[b] = Buffer(shape.numel());
    owned_shape_[b] = shape;
  }
  return owned_[b].view(shape);
}

void InferenceSession::clear_scratch() { scratch_.clear(); }

Tensor InferenceSession::kv_slice(size_t layer, size_t which) {
  const ModelConfig& c = config();
  const size_t rows = batch_ * slots_;
  const size_t block = rows * c.num_heads * c.max_seq_len * c.head_dim();
  const BufferId id = cache_b_active_ ? BufferId::kKvCacheB : BufferId::kKvCacheA;
  Tensor cache = persistent(
      id, {c.num_decoder_layers * 2 * rows, c.num_heads, c.max_seq_len,
           c.head_dim()});
  return cache.view_at((layer * 2 + which) * block,
                       {rows, c.num_heads, c.max_seq_len, c.head_dim()});
}

void InferenceSession::embed(std::span<const int32_t> tokens, size_t rows,
                             size_t seq, size_t position, const Tensor& out) {
  const ModelConfig& c = config();
  const size_t d = c.d_model;
  const float scale = std::sqrt(static_cast<float>(d));
  const float* table = model_->weights.token_embedding.data();
  for (size_t r = 0; r < rows * seq; ++r) {
    const float* e = table + static_cast<size_t>(tokens[r]) * d;
    const float* pe = model_->positional.data() + (position + r % seq) * d;
    float* y = out.data() + r * d;
    for (size_t i = 0; i < d; ++i) y[i] = e[i] * scale + pe[i];
  }
  active_counters().record_aux(2 * rows * seq * d * sizeof(float));
}

Tensor InferenceSession::encode(const TokenMatrix& src) {
  Binding bind(*this);
  const ModelConfig& c = config();
  if (c.num_encoder_layers == 0) throw ParameterError("model has no encoder");
  if (src.rows == 0 || src.cols == 0) {
    throw InputError("empty source batch");
  }
  if (src.ids.size() != src.rows * src.cols) {
    throw DimensionError("source ids hold " + std::to_string(src.ids.size()) +
                         " tokens, expected " +
                         std::to_string(src.rows * src.cols));
  }
  if (src.rows > c.max_batch) {
    throw CapacityError("batch " + std::to_string(src.rows) +
                        " exceeds max_batch " + std::to_string(c.max_batch));
  }
  if (src.cols > c.max_seq_len) {
    throw CapacityError("source length " + std::to_string(src.cols) +
                        " exceeds max_seq_len " +
                        std::to_string(c.max_seq_len));
  }
  check_tokens(src.ids, c.vocab_size);

  clear_scratch();
  batch_ = src.rows;
  src_len_ = src.cols;
  slots_ = 0;
  cache_len_ = 0;
  encoded_ = false;

  Tensor x = buffer(BufferId::kEncX, {batch_ * src_len_, c.d_model});
  Tensor mask = persistent(BufferId::kSrcMask, {batch_, 1, 1, src_len_});
  embed(src.ids, batch_, src_len_, 0, x);
  const float neg_inf = -std::numeric_limits<float>::infinity();
  for (size_t i = 0; i < src.ids.size(); ++i) {
    mask.data()[i] = src.ids[i] == c.pad_id ? neg_inf : 0.0f;
  }
  active_counters().record_aux(mask.numel() * sizeof(float));

  for (size_t l = 0; l < c.num_encoder_layers; ++l) {
    encoder_layer_forward(l, x, &mask, batch_, src_len_);
  }
  if (c.num_decoder_layers > 0) {
    Tensor kv_lin = buffer(BufferId::kCrossKvLin,
                           {batch_ * src_len_, 2 * c.d_model});
    Tensor cross = persistent(
        BufferId::kCrossKv,
        {c.num_decoder_layers * 2 * batch_, c.num_heads, src_len_,
         c.head_dim()});
    const size_t block = batch_ * c.d_model * src_len_;
    const Kernels k{engine()};
    for (size_t l = 0; l < c.num_decoder_layers; ++l) {
      const auto& w = model_->weights.decoder[l].cross_kv;
      gemm(x, weight(w.weight, c.d_model, 2 * c.d_model), kv_lin);
      const std::array<Tensor, 2> dsts{
          cross.view_at(2 * l * block,
                        {batch_, c.num_heads, src_len_, c.head_dim()}),
          cross.view_at((2 * l + 1) * block,
                        {batch_, c.num_heads, src_len_, c.head_dim()})};
      ScopedTimer timer(TimeCategory::kCacheRefresh);
      k.split(kv_lin, w.bias, src_len_, dsts);
    }
  }
  encoded_ = true;
  return x;
}

void InferenceSession::encoder_layer_forward(size_t layer, const Tensor& x,
                                             const Tensor* mask, size_t batch,
                                             size_t seq) {
  Binding bind(*this);
  const ModelConfig& c = config();
  if (layer >= c.num_encoder_layers) {
    throw ParameterError("encoder layer " + std::to_string(layer) +
                         " out of range");
  }
  if (batch == 0 || seq == 0 || x.rank() != 2 ||
      x.dim(0) != batch * seq || x.dim(1) != c.d_model) {
    throw DimensionError("encoder layer input " + x.shape().str() +
                         " does not match batch " + std::to_string(batch) +
                         " x seq " + std::to_string(seq));
  }
  if (batch > c.max_batch || seq > c.max_seq_len) {
    throw CapacityError("encoder layer shape " + std::to_string(batch) + "x" +
                        std::to_string(seq) + " exceeds the planned maximum");
  }
  const size_t mark = scratch_.size();
  const auto& w = model_->weights.encoder[layer];
  const Kernels k{engine()};
  const size_t n = batch * seq;
  const size_t d = c.d_model;
  const size_t h = c.num_heads;
  const size_t hd = c.head_dim();
  const size_t head_block = batch * h * seq * hd;

  Tensor qkv = buffer(BufferId::kEncQkv, {n, 3 * d});
  gemm(x, weight(w.qkv.weight, d, 3 * d), qkv);
  Tensor heads = buffer(BufferId::kEncHeads, {3 * batch, h, seq, hd});
  const std::array<Tensor, 3> qkv_heads{
      heads.view_at(0, {batch, h, seq, hd}),
      heads.view_at(head_block, {batch, h, seq, hd}),
      heads.view_at(2 * head_block, {batch, h, seq, hd})};
  k.split(qkv, w.qkv.bias, seq, qkv_heads);

  Tensor scores = buffer(BufferId::kEncScores, {batch, h, seq, seq});
  gemm_batched(head_major_batch(qkv_heads[0], seq),
               head_major_batch(qkv_heads[1], seq),
               head_major_batch(scores, seq), true);
  SoftmaxOptions opts;
  opts.scale = 1.0f / std::sqrt(static_cast<float>(hd));
  opts.mask = mask;
  k.softmax(scores, opts);

  Tensor ctx = buffer(BufferId::kEncCtx, {n, d});
  if (engine() == EngineKind::kFused) {
    gemm_batched(head_major_batch(scores, seq),
                 head_major_batch(qkv_heads[2], seq),
                 interleaved_head_batch(ctx, batch, seq, h), false);
  } else {
    scratch_.emplace_back(head_block);
    active_counters().record_materialized();
    Tensor ctx_heads = scratch_.back().view({batch, h, seq, hd});
    gemm_batched(head_major_batch(scores, seq),
                 head_major_batch(qkv_heads[2], seq),
                 head_major_batch(ctx_heads, seq), false);
    naive_merge_heads(ctx_heads, ctx);
  }

  Tensor proj = buffer(BufferId::kEncProj, {n, d});
  gemm(ctx, weight(w.attn_out.weight, d, d), proj);
  Tensor res = buffer(BufferId::kEncRes, {n, d});
  k.bias_residual(proj, w.attn_out.bias, x, res);
  Tensor norm = buffer(BufferId::kEncNorm, {n, d});
  k.layer_norm(res, w.attn_norm, c.layer_norm_eps, norm);

  Tensor hidden = buffer(BufferId::kEncFfnHidden, {n, c.d_ff});
  gemm(norm, weight(w.ffn_in.weight, d, c.d_ff), hidden);
  k.bias_activation(hidden, w.ffn_in.bias, c.activation);
  Tensor ffn_out = buffer(BufferId::kEncFfnOut, {n, d});
  gemm(hidden, weight(w.ffn_out.weight, c.d_ff, d), ffn_out);
  k.bias_residual_norm(ffn_out, w.ffn_out.bias, norm, w.ffn_norm,
                       c.layer_norm_eps, x);

  scratch_.erase(scratch_.begin() + static_cast<std::ptrdiff_t>(mark),
                 scratch_.end());
}

Tensor InferenceSession::classify(const TokenMatrix& src) {
  const ModelConfig& c = config();
  if (c.num_labels == 0) throw ParameterError("model has no classifier head");
  Tensor x = encode(src);
  Binding bind(*this);
  Tensor pooled = buffer(BufferId::kPooled, {batch_, c.d_model});
  for (size_t b = 0; b < batch_; ++b) {
    std::memcpy(pooled.data() + b * c.d_model,
                x.data() + b * src_len_ * c.d_model,
                c.d_model * sizeof(float));
  }
  active_counters().record_aux(2 * pooled.numel() * sizeof(float));
  Tensor logits = buffer(BufferId::kClsLogits, {batch_, c.num_labels});
  const auto& w = model_->weights.classifier;
  gemm(pooled, weight(w.weight, c.d_model, c.num_labels), logits);
  for (size_t b = 0; b < batch_; ++b) {
    float* y = logits.data() + b * c.num_labels;
    for (size_t j = 0; j < c.num_labels; ++j) y[j] += w.bias[j];
  }
  active_counters().record_aux(logits.numel() * sizeof(float));
  return logits;
}

void InferenceSession::start(size_t slots) {
  const ModelConfig& c = config();
  if (c.num_decoder_layers == 0) throw ParameterError("model has no decoder");
  if (!encoded_ || batch_ == 0) {
    throw ParameterError("start() requires an encoded source batch");
  }
  if (slots == 0) throw ParameterError("decoding needs at least one slot");
  if (slots > c.max_beam_size) {
    throw CapacityError("beam of " + std::to_string(slots) +
                        " exceeds max_beam_size " +
                        std::to_string(c.max_beam_size));
  }
  slots_ = slots;
  cache_len_ = 0;
  cache_b_active_ = false;
  // Touch the active cache so the naive engine owns it before the first step.
  kv_slice(0, 0);
}

void InferenceSession::self_attention_step(size_t layer, const Tensor& x,
                                           const Tensor& out) {
  const ModelConfig& c = config();
  const auto& w = model_->weights.decoder[layer];
  const Kernels k{engine()};
  const size_t rows = batch_ * slots_;
  const size_t d = c.d_model;
  const size_t h = c.num_heads;
  const size_t hd = c.head_dim();
  const size_t t = cache_len_;

  Tensor qkv = buffer(BufferId::kDecQkv, {rows, 3 * d});
  gemm(x, weight(w.self_qkv.weight, d, 3 * d), qkv);
  const std::array<Tensor, 3> dsts{buffer(BufferId::kDecQ, {rows, h, 1, hd}),
                                   kv_slice(layer, 0), kv_slice(layer, 1)};
  {
    ScopedTimer timer(TimeCategory::kCacheRefresh);
    const std::array<size_t, 3> positions{0, t, t};
    k.split(qkv, w.self_qkv.bias, 1, dsts, positions);
  }
  Tensor scores = buffer(BufferId::kDecScores, {rows, h, 1, t + 1});
  gemm_batched(head_major_batch(dsts[0], 1), head_major_batch(dsts[1], t + 1),
               head_major_batch(scores, 1), true);
  SoftmaxOptions opts;
  opts.scale = 1.0f / std::sqrt(static_cast<float>(hd));
  k.softmax(scores, opts);
  if (engine() == EngineKind::kFused) {
    gemm_batched(head_major_batch(scores, 1), head_major_batch(dsts[2], t + 1),
                 interleaved_head_batch(out, rows, 1, h), false);
  } else {
    scratch_.emplace_back(rows * d);
    active_counters().record_materialized();
    Tensor heads = scratch_.back().view({rows, h, 1, hd});
    gemm_batched(head_major_batch(scores, 1), head_major_batch(dsts[2], t + 1),
                 head_major_batch(heads, 1), false);
    naive_merge_heads(heads, out);
  }
}

Tensor InferenceSession::step(std::span<const int32_t> tokens) {
  Binding bind(*this);
  const ModelConfig& c = config();
  if (slots_ == 0) throw ParameterError("step() before start()");
  const size_t rows = batch_ * slots_;
  if (tokens.size() != rows) {
    throw DimensionError("step expects " + std::to_string(rows) +
                         " tokens, got " + std::to_string(tokens.size()));
  }
  if (cache_len_ >= c.max_seq_len) {
    throw CapacityError("decode length exceeds max_seq_len " +
                        std::to_string(c.max_seq_len));
  }
  check_tokens(tokens, c.vocab_size);
  clear_scratch();

  const Kernels k{engine()};
  const size_t d = c.d_model;
  const size_t h = c.num_heads;
  const size_t hd = c.head_dim();
  const size_t block = batch_ * d * src_len_;
  const float eps = c.layer_norm_eps;

  Tensor x = buffer(BufferId::kDecX, {rows, d});
  embed(tokens, rows, 1, cache_len_, x);
  Tensor mask = persistent(BufferId::kSrcMask, {batch_, 1, 1, src_len_});
  Tensor cross = persistent(
      BufferId::kCrossKv,
      {c.num_decoder_layers * 2 * batch_, h, src_len_, hd});

  for (size_t l = 0; l < c.num_decoder_layers; ++l) {
    const auto& w = model_->weights.decoder[l];
    Tensor ctx = buffer(BufferId::kDecCtx, {rows, d});
    self_attention_step(l, x, ctx);
    Tensor proj = buffer(BufferId::kDecProj, {rows, d});
    gemm(ctx, weight(w.self_out.weight, d, d), proj);
    Tensor res = buffer(BufferId::kDecRes, {rows, d});
    k.bias_residual(proj, w.self_out.bias, x, res);
    Tensor norm1 = buffer(BufferId::kDecNorm1, {rows, d});
    k.layer_norm(res, w.self_norm, eps, norm1);

    Tensor q_lin = buffer(BufferId::kCrossQLin, {rows, d});
    gemm(norm1, weight(w.cross_q.weight, d, d), q_lin);
    const std::array<Tensor, 1> q{
        buffer(BufferId::kCrossQ, {batch_, h, slots_, hd})};
    k.split(q_lin, w.cross_q.bias, slots_, q);
    Tensor mem_k = cross.view_at(2 * l * block, {batch_, h, src_len_, hd});
    Tensor mem_v = cross.view_at((2 * l + 1) * block, {batch_, h, src_len_, hd});
    Tensor scores = buffer(BufferId::kCrossScores, {batch_, h, slots_, src_len_});
    gemm_batched(head_major_batch(q[0], slots_), head_major_batch(mem_k, src_len_),
                 head_major_batch(scores, slots_), true);
    SoftmaxOptions opts;
    opts.scale = 1.0f / std::sqrt(static_cast<float>(hd));
    opts.mask = &mask;
    k.softmax(scores, opts);
    Tensor cctx = buffer(BufferId::kCrossCtx, {rows, d});
    if (engine() == EngineKind::kFused) {
      gemm_batched(head_major_batch(scores, slots_),
                   head_major_batch(mem_v, src_len_),
                   interleaved_head_batch(cctx, batch_, slots_, h), false);
    } else {
      scratch_.emplace_back(rows * d);
      active_counters().record_materialized();
      Tensor heads = scratch_.back().view({batch_, h, slots_, hd});
      gemm_batched(head_major_batch(scores, slots_),
                   head_major_batch(mem_v, src_len_),
                   head_major_batch(heads, slots_), false);
      naive_merge_heads(heads, cctx);
    }
    Tensor cproj = buffer(BufferId::kCrossProj, {rows, d});
    gemm(cctx, weight(w.cross_out.weight, d, d), cproj);
    Tensor cres = buffer(BufferId::kCrossRes, {rows, d});
    k.bias_residual(cproj, w.cross_out.bias, norm1, cres);
    Tensor norm2 = buffer(BufferId::kDecNorm2, {rows, d});
    k.layer_norm(cres, w.cross_norm, eps, norm2);

    Tensor hidden = buffer(BufferId::kDecFfnHidden, {rows, c.d_ff});
    gemm(norm2, weight(w.ffn_in.weight, d, c.d_ff), hidden);
    k.bias_activation(hidden, w.ffn_in.bias, c.activation);
    Tensor ffn_out = buffer(BufferId::kDecFfnOut, {rows, d});
    gemm(hidden, weight(w.ffn_out.weight, c.d_ff, d), ffn_out);
    k.bias_residual_norm(ffn_out, w.ffn_out.bias, norm2, w.ffn_norm, eps, x);
  }

  Tensor logits = buffer(BufferId::kLogits, {rows, c.vocab_size});
  gemm(x, weight(model_->output_matrix(), c.vocab_size, d), logits, true);
  ++cache_len_;
  return logits;
}

void InferenceSession::reorder(std::span<const int32_t> parent_rows) {
  Binding bind(*this);
  const ModelConfig& c = config();
  const size_t rows = batch_ * slots_;
  if (slots_ == 0) throw ParameterError("reorder() before start()");
  if (parent_rows.size() != rows) {
    throw DimensionError("reorder expects " + std::to_string(rows) +
                         " parents, got " + std::to_string(parent_rows.size()));
  }
  for (int32_t p : parent_rows) {
    if (p < 0 || static_cast<size_t>(p) >= rows) {
      throw InputError("parent row " + std::to_string(p) + " out of range");
    }
  }
  ScopedTimer timer(TimeCategory::kCacheRefresh);
  const Shape shape{c.num_decoder_layers * 2 * rows, c.num_heads,
                    c.max_seq_len, c.head_dim()};
  const BufferId src_id =
      cache_b_active_ ? BufferId::kKvCacheB : BufferId::kKvCacheA;
  const BufferId dst_id =
      cache_b_active_ ? BufferId::kKvCacheA : BufferId::kKvCacheB;
  Tensor src = persistent(src_id, shape);
  Tensor dst = persistent(dst_id, shape);
  const size_t head_span = c.max_seq_len * c.head_dim();
  const size_t used = cache_len_ * c.head_dim();
  const size_t row_span = c.num_heads * head_span;
  for (size_t block = 0; block < c.num_decoder_layers * 2; ++block) {
    for (size_t r = 0; r < rows; ++r) {
      const float* from =
          src.data() + (block * rows + static_cast<size_t>(parent_rows[r])) *
                           row_span;
      float* to = dst.data() + (block * rows + r) * row_span;
      for (size_t hh = 0; hh < c.num_heads; ++hh) {
        std::memcpy(to + hh * head_span, from + hh * head_span,
                    used * sizeof(float));
      }
    }
  }
  active_counters().record_aux(2 * c.num_decoder_layers * 2 * rows *
                               c.num_heads * used * sizeof(float));
  cache_b_active_ = !cache_b_active_;
}

std::vector<float> InferenceSession::recompute_logits(
    const TokenMatrix& prefix) {
  const ModelConfig& c = config();
  if (slots_ == 0) throw ParameterError("recompute_logits() before start()");
  const size_t rows = batch_ * slots_;
  const size_t len = prefix.cols;
  if (prefix.rows != rows || len == 0 || prefix.ids.size() != rows * len) {
    throw DimensionError("prefix must be [" + std::to_string(rows) + " x T]");
  }
  if (len > c.max_seq_len) throw CapacityError("prefix exceeds max_seq_len");
  check_tokens(prefix.ids, c.vocab_size);

  // Reference path: private buffers, counters kept out of the session.
  Counters sink;
  ScopedCounters bind(sink);
  const Kernels k{engine()};
  const size_t d = c.d_model;
  const size_t h = c.num_heads;
  const size_t hd = c.head_dim();
  const size_t n = rows * len;
  const float eps = c.layer_norm_eps;
  const float scale = 1.0f / std::sqrt(static_cast<float>(hd));

  Buffer xb(n * d), qkv_b(n * 3 * d), heads_b(3 * n * d), ctx_b(n * d),
      proj_b(n * d), res_b(n * d), norm1_b(n * d), norm2_b(n * d),
      hidden_b(n * c.d_ff), scores_b(rows * h * len *
                                     std::max(len, src_len_));
  Tensor x = xb.view({n, d});
  embed(prefix.ids, rows, len, 0, x);
  Tensor mask = persistent(BufferId::kSrcMask, {batch_, 1, 1, src_len_});
  Tensor cross = persistent(BufferId::kCrossKv,
                            {c.num_decoder_layers * 2 * batch_, h, src_len_, hd});
  const size_t block = batch_ * d * src_len_;

  for (size_t l = 0; l < c.num_decoder_layers; ++l) {
    const auto& w = model_->weights.decoder[l];
    Tensor qkv = qkv_b.view({n, 3 * d});
    gemm(x, weight(w.self_qkv.weight, d, 3 * d), qkv);
    const std::array<Tensor, 3> dsts{
        Tensor(heads_b.span().subspan(0, n * d), {rows, h, len, hd}),
        Tensor(heads_b.span().subspan(n * d, n * d), {rows, h, len, hd}),
        Tensor(heads_b.span().subspan(2 * n * d, n * d), {rows, h, len, hd})};
    k.split(qkv, w.self_qkv.bias, len, dsts);
    Tensor scores = scores_b.view({rows, h, len, len});
    gemm_batched(head_major_batch(dsts[0], len), head_major_batch(dsts[1], len),
                 head_major_batch(scores, len), true);
    SoftmaxOptions self_opts;
    self_opts.scale = scale;
    self_opts.causal = true;
    k.softmax(scores, self_opts);
    Tensor ctx = ctx_b.view({n, d});
    gemm_batched(head_major_batch(scores, len), head_major_batch(dsts[2], len),
                 interleaved_head_batch(ctx, rows, len, h), false);
    Tensor proj = proj_b.view({n, d});
    gemm(ctx, weight(w.self_out.weight, d, d), proj);
    Tensor res = res_b.view({n, d});
    k.bias_residual(proj, w.self_out.bias, x, res);
    Tensor norm1 = norm1_b.view({n, d});
    k.layer_norm(res, w.self_norm, eps, norm1);

    // Rows are ordered (batch, slot, position), so each batch entry's queries
    // form one contiguous block of slots * len positions.
    const size_t q_len = slots_ * len;
    gemm(norm1, weight(w.cross_q.weight, d, d), proj);
    const std::array<Tensor, 1> q{
        Tensor(heads_b.span().subspan(0, n * d), {batch_, h, q_len, hd})};
    k.split(proj, w.cross_q.bias, q_len, q);
    Tensor mem_k = cross.view_at(2 * l * block, {batch_, h, src_len_, hd});
    Tensor mem_v = cross.view_at((2 * l + 1) * block, {batch_, h, src_len_, hd});
    Tensor cscores = scores_b.view({batch_, h, q_len, src_len_});
    gemm_batched(head_major_batch(q[0], q_len),
                 head_major_batch(mem_k, src_len_),
                 head_major_batch(cscores, q_len), true);
    SoftmaxOptions cross_opts;
    cross_opts.scale = scale;
    cross_opts.mask = &mask;
    k.softmax(cscores, cross_opts);
    gemm_batched(head_major_batch(cscores, q_len),
                 head_major_batch(mem_v, src_len_),
                 interleaved_head_batch(ctx, batch_, q_len, h), false);
    gemm(ctx, weight(w.cross_out.weight, d, d), proj);
    k.bias_residual(proj, w.cross_out.bias, norm1, res);
    Tensor norm2 = norm2_b.view({n, d});
    k.layer_norm(res, w.cross_norm, eps, norm2);

    Tensor hidden = hidden_b.view({n, c.d_ff});
    gemm(norm2, weight(w.ffn_in.weight, d, c.d_ff), hidden);
    k.bias_activation(hidden, w.ffn_in.bias, c.activation);
    gemm(hidden, weight(w.ffn_out.weight, c.d_ff, d), proj);
    k.bias_residual_norm(proj, w.ffn_out.bias, norm2, w.ffn_norm, eps, x);
  }

  Buffer last_b(rows * d);
  Tensor last = last_b.view({rows, d});
  for (size_t r = 0; r < rows; ++r) {
    std::memcpy(last.data() + r * d, x.data() + (r * len + len - 1) * d,
                d * sizeof(float));
  }
  std::vector<float> logits(rows * c.vocab_size);
  gemm(last, weight(model_->output_matrix(), c.vocab_size, d),
       Tensor(logits, {rows, c.vocab_size}), true);
  return logits;
}

}  // namespace fuseq
