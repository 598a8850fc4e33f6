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

#include <array>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string_view>
#include <vector>

#include "fuseq/counters.h"
#include "fuseq/graph.h"
#include "fuseq/memory_plan.h"
#include "fuseq/model.h"
#include "fuseq/step_model.h"

namespace fuseq {

enum class EngineKind : uint8_t { kFused = 0, kNaive };
std::string_view engine_name(EngineKind kind);
EngineKind parse_engine(std::string_view name);

enum class PlanPolicy : uint8_t { kShared = 0, kUnshared };

struct SessionOptions {
  EngineKind engine = EngineKind::kFused;
  PlanPolicy plan = PlanPolicy::kShared;
};

/// Row-major token ids [rows x cols].
struct TokenMatrix {
  std::span<const int32_t> ids;
  size_t rows = 0;
  size_t cols = 0;
};

/// One inference session: owns its arena (fused engine), KV caches and
/// counters. Weights are shared read-only between sessions.
///
/// Per-call counter deltas:
///   encoder layer   6 GEMM + 6 fused passes (fused engine) or
///                   6 GEMM + 25 naive passes (naive engine)
///   encode          embedding/mask aux pass + L_enc layers, plus per decoder
///                   layer 1 GEMM + 1 qkv_bias_reshape for cross memory
///   decode step     1 aux embedding pass, per decoder layer 10 GEMM and
///                   10 fused passes, then 1 output-projection GEMM
class InferenceSession : public StepModel {
 public:
  explicit InferenceSession(std::shared_ptr<const Model> model,
                            SessionOptions options = {});
  ~InferenceSession() override;

  const ModelConfig& config() const { return model_->config; }
  const Model& model() const { return *model_; }
  EngineKind engine() const { return options_.engine; }
  const MemoryPlan& plan() const { return plan_; }
  const ExecutionGraph& graph() const { return graph_; }

  Counters& counters() { return counters_; }
  Profiler& profiler() { return profiler_; }
  void set_profiling(bool enabled) { profiling_ = enabled; }

  /// Encodes src [batch x seq]; pad tokens are masked out of attention.
  /// Returns the encoder memory [batch * seq x d_model].
  Tensor encode(const TokenMatrix& src);

  /// One post-norm encoder layer applied in place to x [batch * seq x d].
  void encoder_layer_forward(size_t layer, const Tensor& x, const Tensor* mask,
                             size_t batch, size_t seq);

  /// Encodes src and returns classifier logits [batch x num_labels] from the
  /// first position of each sequence.
  Tensor classify(const TokenMatrix& src);

  // StepModel
  size_t vocab_size() const override { return config().vocab_size; }
  size_t batch_size() const override { return batch_; }
  size_t max_length() const override { return config().max_seq_len; }
  void start(size_t slots) override;
  Tensor step(std::span<const int32_t> tokens) override;
  void reorder(std::span<const int32_t> parent_rows) override;

  size_t cache_length() const { return cache_len_; }
  size_t slots() const { return slots_; }

  /// Last-position logits for prefixes [batch * slots x T] computed over the
  /// whole prefix with a causal mask and no KV cache. Reference path.
  std::vector<float> recompute_logits(const TokenMatrix& prefix);

 private:
  struct Binding;

  Tensor buffer(BufferId id, Shape shape);
  Tensor persistent(BufferId id, Shape shape);
  void clear_scratch();
  Tensor kv_slice(size_t layer, size_t which);

  void embed(std::span<const int32_t> tokens, size_t rows, size_t seq,
             size_t position, const Tensor& out);
  void prepare_cross_memory();
  void self_attention_step(size_t layer, const Tensor& x, const Tensor& out);

  std::shared_ptr<const Model> model_;
  SessionOptions options_;
  ExecutionGraph graph_;
  MemoryPlan plan_;
  std::unique_ptr<Arena> arena_;
  std::array<size_t, kBufferCount> plan_index_{};

  // Naive engine storage: per-call scratch and per-request persistent buffers.
  std::vector<Buffer> scratch_;
  std::array<Buffer, kBufferCount> owned_;
  std::array<Shape, kBufferCount> owned_shape_;

  Counters counters_;
  Profiler profiler_;
  bool profiling_ = false;

  size_t batch_ = 0;
  size_t src_len_ = 0;
  size_t slots_ = 0;
  size_t cache_len_ = 0;
  bool encoded_ = false;
  bool cache_b_active_ = false;
};

}  // namespace fuseq
