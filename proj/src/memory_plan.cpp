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

#include "fuseq/memory_plan.h"

#include <algorithm>
#include <numeric>
#include <unordered_set>

#include "fuseq/errors.h"

namespace fuseq {

namespace {

size_t align_up(size_t bytes) {
  return (bytes + kArenaAlignment - 1) / kArenaAlignment * kArenaAlignment;
}

void validate_specs(std::span<const IntermediateSpec> specs) {
  if (specs.empty()) throw PlanError("memory plan needs at least one spec");
  std::unordered_set<std::string_view> names;
  for (const auto& s : specs) {
    if (!names.insert(s.name).second) {
      throw PlanError("duplicate intermediate name '" + s.name + "'");
    }
    if (s.max_bytes == 0) {
      throw PlanError("intermediate '" + s.name + "' has zero size");
    }
    if (s.first_use > s.last_use) {
      throw PlanError("intermediate '" + s.name + "' has first_use " +
                      std::to_string(s.first_use) + " > last_use " +
                      std::to_string(s.last_use));
    }
  }
}

Assignment make_assignment(const IntermediateSpec& s, size_t offset) {
  return Assignment{s.name, offset, align_up(s.max_bytes), s.max_bytes,
                    s.first_use, s.last_use};
}

}  // namespace

double MemoryPlan::sharing_ratio() const {
  return no_share_bytes_ == 0 ? 1.0
                              : static_cast<double>(arena_bytes_) /
                                    static_cast<double>(no_share_bytes_);
}

size_t MemoryPlan::index_of(std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) {
    throw PlanError("no intermediate named '" + std::string(name) +
                    "' in memory plan");
  }
  return it->second;
}

nlohmann::json MemoryPlan::report() const {
  nlohmann::json j;
  j["arena_bytes"] = arena_bytes_;
  j["no_share_bytes"] = no_share_bytes_;
  j["sharing_ratio"] = sharing_ratio();
  auto& list = j["assignments"] = nlohmann::json::array();
  for (const auto& a : assignments_) {
    list.push_back({{"name", a.name},
                    {"offset", a.offset},
                    {"size", a.size},
                    {"max_bytes", a.max_bytes},
                    {"first_use", a.first_use},
                    {"last_use", a.last_use}});
  }
  return j;
}

MemoryPlan build_plan(std::span<const IntermediateSpec> specs) {
  validate_specs(specs);

  std::vector<size_t> order(specs.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    return specs[a].first_use < specs[b].first_use;
  });

  struct Live {
    size_t offset;
    size_t size;
    size_t last_use;
  };
  std::vector<Live> live;  // kept sorted by offset
  std::vector<size_t> offsets(specs.size(), 0);
  size_t arena = 0;

  for (size_t idx : order) {
    const auto& spec = specs[idx];
    std::erase_if(live,
                  [&](const Live& l) { return l.last_use < spec.first_use; });
    const size_t size = align_up(spec.max_bytes);

    size_t cursor = 0;
    auto pos = live.begin();
    for (; pos != live.end(); ++pos) {
      if (pos->offset >= cursor && pos->offset - cursor >= size) break;
      cursor = std::max(cursor, pos->offset + pos->size);
    }
    offsets[idx] = cursor;
    live.insert(pos, Live{cursor, size, spec.last_use});
    arena = std::max(arena, cursor + size);
  }

  MemoryPlan plan;
  for (size_t i = 0; i < specs.size(); ++i) {
    plan.assignments_.push_back(make_assignment(specs[i], offsets[i]));
    plan.index_.emplace(specs[i].name, i);
    plan.no_share_bytes_ += align_up(specs[i].max_bytes);
  }
  plan.arena_bytes_ = arena;
  return plan;
}

MemoryPlan build_unshared_plan(std::span<const IntermediateSpec> specs) {
  validate_specs(specs);
  MemoryPlan plan;
  size_t offset = 0;
  for (size_t i = 0; i < specs.size(); ++i) {
    plan.assignments_.push_back(make_assignment(specs[i], offset));
    plan.index_.emplace(specs[i].name, i);
    offset += align_up(specs[i].max_bytes);
  }
  plan.arena_bytes_ = offset;
  plan.no_share_bytes_ = offset;
  return plan;
}

bool plan_is_valid(const MemoryPlan& plan) {
  const auto& as = plan.assignments();
  for (size_t i = 0; i < as.size(); ++i) {
    const auto& a = as[i];
    if (a.offset % kArenaAlignment != 0) return false;
    if (a.size < a.max_bytes) return false;
    if (a.offset + a.size > plan.arena_bytes()) return false;
    for (size_t j = i + 1; j < as.size(); ++j) {
      const auto& b = as[j];
      bool time_overlap =
          a.first_use <= b.last_use && b.first_use <= a.last_use;
      bool byte_overlap =
          a.offset < b.offset + b.size && b.offset < a.offset + a.size;
      if (time_overlap && byte_overlap) return false;
    }
  }
  return plan.arena_bytes() <= plan.no_share_bytes();
}

Arena::Arena(const MemoryPlan& plan)
    : plan_(&plan), storage_(plan.arena_bytes() / sizeof(float)) {}

Tensor Arena::acquire(std::string_view name, Shape shape) const {
  return acquire(plan_->index_of(name), shape);
}

Tensor Arena::acquire(size_t index, Shape shape) const {
  const auto& a = plan_->assignments().at(index);
  const size_t bytes = shape.numel() * sizeof(float);
  if (bytes > a.max_bytes) {
    throw CapacityError("intermediate '" + a.name + "' requested " +
                        std::to_string(bytes) + " bytes (shape " +
                        shape.str() + "), planned maximum is " +
                        std::to_string(a.max_bytes));
  }
  ++acquires_;
  std::span<float> region(storage_.data() + a.offset / sizeof(float),
                          a.max_bytes / sizeof(float));
  return Tensor(region, shape);
}

}  // namespace fuseq
