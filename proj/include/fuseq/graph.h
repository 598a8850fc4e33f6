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
#include <string>
#include <string_view>
#include <vector>

#include "fuseq/memory_plan.h"
#include "fuseq/model.h"

namespace fuseq {

/// Every intermediate the fused engine places in its arena.
enum class BufferId : uint8_t {
  kEncX,
  kSrcMask,
  kEncQkv,
  kEncHeads,
  kEncScores,
  kEncCtx,
  kEncProj,
  kEncRes,
  kEncNorm,
  kEncFfnHidden,
  kEncFfnOut,
  kCrossKvLin,
  kCrossKv,
  kPooled,
  kClsLogits,
  kDecX,
  kDecQkv,
  kDecQ,
  kDecScores,
  kDecCtx,
  kDecProj,
  kDecRes,
  kDecNorm1,
  kCrossQLin,
  kCrossQ,
  kCrossScores,
  kCrossCtx,
  kCrossProj,
  kCrossRes,
  kDecNorm2,
  kDecFfnHidden,
  kDecFfnOut,
  kLogits,
  kKvCacheA,
  kKvCacheB,
  kCount,
};
inline constexpr size_t kBufferCount = static_cast<size_t>(BufferId::kCount);

std::string_view buffer_name(BufferId id);

struct GraphOp {
  std::string name;
  std::vector<BufferId> buffers;  // read or written
};

/// The static, topologically ordered op list of one request: embedding,
/// one encoder layer, cross-attention memory, the classifier head and one
/// decode step. Layers repeat the same template, so intra-layer buffers are
/// dead at every layer boundary and the template lifetimes hold for all of
/// them. Request-lifetime buffers (mask, cross-attention memory, KV caches)
/// span the whole list.
struct ExecutionGraph {
  std::vector<GraphOp> ops;
  std::vector<IntermediateSpec> specs;
  std::vector<BufferId> spec_ids;  // spec i describes spec_ids[i]
};

ExecutionGraph build_execution_graph(const ModelConfig& config);

/// Maximum element count of a buffer under `config`.
size_t buffer_max_elements(const ModelConfig& config, BufferId id);

bool is_request_lifetime(BufferId id);

}  // namespace fuseq
