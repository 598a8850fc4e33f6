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
#include <atomic>
#include <chrono>
#include <cstddef>
#include <cstdint>
#include <string_view>

namespace fuseq {

/// The six single-pass kernels an encoder layer is built from, one between
/// each pair of GEMMs. The grouping is a reconstruction of the layer diagram:
///   qkv_bias_reshape              QKV bias add + split into head-major Q/K/V
///   attention_scale_mask_softmax  scale, key mask and softmax of the scores
///   attn_output_bias_residual     output-projection bias + residual add
///   layer_norm                    post-attention layer norm
///   ffn_bias_activation           FFN inner bias + activation
///   ffn_bias_residual             FFN outer bias + residual + closing norm
enum class FusedPassKind : uint8_t {
  kQkvBiasReshape = 0,
  kAttentionScaleMaskSoftmax,
  kAttnOutputBiasResidual,
  kLayerNorm,
  kFfnBiasActivation,
  kFfnBiasResidual,
};
inline constexpr size_t kFusedPassKindCount = 6;

std::string_view fused_pass_kind_name(FusedPassKind kind);

/// Snapshot of the instrumentation counters.
///
/// `aux_passes` covers passes outside the layer structure (embedding lookup,
/// mask construction, KV-cache reordering). `logit_passes` counts full-vocab
/// passes over one logits row by an output layer. Neither is part of the
/// per-layer fused/naive accounting.
struct OpCounters {
  uint64_t gemm_calls = 0;
  uint64_t fused_passes = 0;
  uint64_t naive_passes = 0;
  uint64_t aux_passes = 0;
  uint64_t logit_passes = 0;
  uint64_t materialized_intermediates = 0;
  uint64_t bytes_moved_estimate = 0;
  std::array<uint64_t, kFusedPassKindCount> fused_by_kind{};

  bool operator==(const OpCounters&) const = default;
  OpCounters operator-(const OpCounters& base) const;
};

class Counters {
 public:
  void record_gemm(uint64_t bytes);
  void record_fused(FusedPassKind kind, uint64_t bytes);
  void record_naive(uint64_t bytes);
  void record_aux(uint64_t bytes);
  void record_logit_pass(uint64_t bytes);
  void record_materialized();

  OpCounters snapshot() const;
  void reset();

 private:
  std::atomic<uint64_t> gemm_calls_{0};
  std::atomic<uint64_t> fused_passes_{0};
  std::atomic<uint64_t> naive_passes_{0};
  std::atomic<uint64_t> aux_passes_{0};
  std::atomic<uint64_t> logit_passes_{0};
  std::atomic<uint64_t> materialized_{0};
  std::atomic<uint64_t> bytes_{0};
  std::array<std::atomic<uint64_t>, kFusedPassKindCount> by_kind_{};
};

/// Counters that kernels on the calling thread report to. Defaults to a
/// process-wide instance; sessions bind their own with ScopedCounters.
Counters& active_counters();

class ScopedCounters {
 public:
  explicit ScopedCounters(Counters& counters);
  ~ScopedCounters();
  ScopedCounters(const ScopedCounters&) = delete;
  ScopedCounters& operator=(const ScopedCounters&) = delete;

 private:
  Counters* previous_;
};

void reset_counters();
OpCounters read_counters();

enum class TimeCategory : uint8_t { kGemm = 0, kCacheRefresh };

/// Accumulates wall time per category while bound to a thread.
class Profiler {
 public:
  void add(TimeCategory category, double ms) {
    totals_ms_[static_cast<size_t>(category)] += ms;
  }
  double total_ms(TimeCategory category) const {
    return totals_ms_[static_cast<size_t>(category)];
  }
  void reset() { totals_ms_ = {}; }

 private:
  std::array<double, 2> totals_ms_{};
};

Profiler* active_profiler();

class ScopedProfiler {
 public:
  explicit ScopedProfiler(Profiler* profiler);
  ~ScopedProfiler();
  ScopedProfiler(const ScopedProfiler&) = delete;
  ScopedProfiler& operator=(const ScopedProfiler&) = delete;

 private:
  Profiler* previous_;
};

/// Times the enclosing scope into the active profiler, if any.
class ScopedTimer {
 public:
  explicit ScopedTimer(TimeCategory category)
      : profiler_(active_profiler()), category_(category) {
    if (profiler_) start_ = std::chrono::steady_clock::now();
  }
  ~ScopedTimer() {
    if (profiler_) {
      auto end = std::chrono::steady_clock::now();
      profiler_->add(category_,
                     std::chrono::duration<double, std::milli>(end - start_)
                         .count());
    }
  }
  ScopedTimer(const ScopedTimer&) = delete;
  ScopedTimer& operator=(const ScopedTimer&) = delete;

 private:
  Profiler* profiler_;
  TimeCategory category_;
  std::chrono::steady_clock::time_point start_;
};

}  // namespace fuseq
