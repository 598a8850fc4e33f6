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
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "fuseq/counters.h"
#include "fuseq/decode.h"
#include "fuseq/model.h"
#include "fuseq/session.h"

namespace fuseq {

enum class Task : uint8_t { kTranslate = 0, kGenerate, kClassify };

std::string_view task_name(Task task);
Task parse_task(std::string_view name);

/// Which output layer the decode uses. kEngineDefault pairs the fused engine
/// with retrieve-and-rerank and the naive engine with the exhaustive
/// softmax-and-select path, as a framework baseline would.
enum class SearchPolicy : uint8_t { kEngineDefault = 0, kRetrieve, kExhaustive };

std::string_view search_policy_name(SearchPolicy policy);
SearchPolicy parse_search_policy(std::string_view name);

struct BenchOptions {
  EngineKind engine = EngineKind::kFused;
  Task task = Task::kTranslate;
  DecodeConfig decode;
  SearchPolicy search = SearchPolicy::kEngineDefault;
  size_t batch = 1;
  size_t seq_len = 16;
  uint64_t seed = 0;
  size_t reps = 5;
  size_t warmup = 1;
  /// Adds per-repetition timings to the report.
  bool profile = false;
  size_t parallel_sessions = 1;
};

/// Seeded source batch [batch x seq_len]. The first request fills the whole
/// length; the others have random lengths in [ceil(seq_len / 2), seq_len]
/// and are right-padded. Tokens avoid the pad, bos and eos ids.
std::vector<int32_t> make_workload(const ModelConfig& config, size_t batch,
                                   size_t seq_len, uint64_t seed);

struct Breakdown {
  double gemm_ms = 0.0;
  double cache_refresh_ms = 0.0;
  double other_ms = 0.0;
};

struct ProfileReport {
  EngineKind engine = EngineKind::kFused;
  BenchOptions options;
  nlohmann::json model_config;
  double total_ms = 0.0;  // median over repetitions
  Breakdown breakdown;    // of the median repetition
  OpCounters counters;    // of one repetition
  std::vector<double> rep_ms;
  std::vector<Breakdown> rep_breakdown;
  /// Best hypothesis per request, or the predicted label for classify.
  std::vector<std::vector<int32_t>> outputs;
  std::vector<double> scores;
  size_t arena_bytes = 0;
  size_t no_share_bytes = 0;
  bool sessions_consistent = true;

  /// gemm, cache_refresh, other shares of total_ms.
  std::array<double, 3> proportions() const;
  nlohmann::json to_json() const;
};

/// Runs `warmup` then `reps` timed repetitions of one task on a fresh
/// session per worker. Throws CapacityError for shapes above the model's
/// maxima.
ProfileReport run_bench(std::shared_ptr<const Model> model,
                        const BenchOptions& options);

struct CompareBucket {
  size_t batch = 0;
  size_t seq_len = 0;
  double baseline_ms = 0.0;
  double candidate_ms = 0.0;
  double speedup = 0.0;  // baseline / candidate
  double baseline_gemm_share = 0.0;
  double candidate_gemm_share = 0.0;
  bool outputs_match = false;
};

struct CompareReport {
  EngineKind baseline = EngineKind::kNaive;
  EngineKind candidate = EngineKind::kFused;
  BenchOptions options;
  std::vector<CompareBucket> buckets;

  nlohmann::json to_json() const;
  std::string to_text() const;
};

/// Median speedup of `candidate` over `baseline` per (batch, seq_len).
CompareReport run_compare(std::shared_ptr<const Model> model,
                          const BenchOptions& options, EngineKind baseline,
                          EngineKind candidate,
                          const std::vector<std::pair<size_t, size_t>>& buckets);

nlohmann::json counters_to_json(const OpCounters& counters);
nlohmann::json decode_config_to_json(const DecodeConfig& config);

}  // namespace fuseq
