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
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "fuseq/tensor.h"

namespace fuseq {

inline constexpr size_t kArenaAlignment = 64;

/// An intermediate result sized at the configured maximum shapes, live over
/// the closed step interval [first_use, last_use] of a static op list.
struct IntermediateSpec {
  std::string name;
  size_t max_bytes = 0;
  size_t first_use = 0;
  size_t last_use = 0;
};

struct Assignment {
  std::string name;
  size_t offset = 0;
  size_t size = 0;  // aligned bytes reserved
  size_t max_bytes = 0;
  size_t first_use = 0;
  size_t last_use = 0;
};

/// Immutable placement of every intermediate inside one arena.
class MemoryPlan {
 public:
  MemoryPlan() = default;

  const std::vector<Assignment>& assignments() const { return assignments_; }
  size_t arena_bytes() const { return arena_bytes_; }
  size_t no_share_bytes() const { return no_share_bytes_; }
  double sharing_ratio() const;

  /// Index of `name`; throws PlanError when unknown.
  size_t index_of(std::string_view name) const;
  const Assignment& at(std::string_view name) const {
    return assignments_[index_of(name)];
  }

  /// {arena_bytes, no_share_bytes, sharing_ratio, assignments[]}
  nlohmann::json report() const;

 private:
  friend MemoryPlan build_plan(std::span<const IntermediateSpec>);
  friend MemoryPlan build_unshared_plan(std::span<const IntermediateSpec>);

  std::vector<Assignment> assignments_;  // in spec order
  std::unordered_map<std::string, size_t> index_;
  size_t arena_bytes_ = 0;
  size_t no_share_bytes_ = 0;
};

/// Linear-scan first-fit placement: specs are visited by first_use and each
/// takes the lowest aligned gap not used by an interval-overlapping spec.
/// Throws PlanError on empty input, duplicate names, zero sizes or inverted
/// intervals.
MemoryPlan build_plan(std::span<const IntermediateSpec> specs);

/// One private buffer per intermediate, laid out back to back.
MemoryPlan build_unshared_plan(std::span<const IntermediateSpec> specs);

/// True when no two interval-overlapping assignments share bytes and every
/// assignment lies inside the arena.
bool plan_is_valid(const MemoryPlan& plan);

/// One allocation sized by a plan. acquire() hands out views at planned
/// offsets and never allocates.
class Arena {
 public:
  explicit Arena(const MemoryPlan& plan);

  const MemoryPlan& plan() const { return *plan_; }

  /// Throws PlanError for unknown names and CapacityError when the shape
  /// exceeds the planned maximum.
  Tensor acquire(std::string_view name, Shape shape) const;
  Tensor acquire(size_t index, Shape shape) const;

  size_t acquire_count() const { return acquires_; }

 private:
  const MemoryPlan* plan_;
  Buffer storage_;
  mutable size_t acquires_ = 0;
};

}  // namespace fuseq
