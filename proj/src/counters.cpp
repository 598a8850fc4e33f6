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

#include "fuseq/counters.h"

namespace fuseq {

std::string_view fused_pass_kind_name(FusedPassKind kind) {
  switch (kind) {
    case FusedPassKind::kQkvBiasReshape: return "qkv_bias_reshape";
    case FusedPassKind::kAttentionScaleMaskSoftmax:
      return "attention_scale_mask_softmax";
    case FusedPassKind::kAttnOutputBiasResidual:
      return "attn_output_bias_residual";
    case FusedPassKind::kLayerNorm: return "layer_norm";
    case FusedPassKind::kFfnBiasActivation: return "ffn_bias_activation";
    case FusedPassKind::kFfnBiasResidual: return "ffn_bias_residual";
  }
  return "unknown";
}

OpCounters OpCounters::operator-(const OpCounters& base) const {
  OpCounters d;
  d.gemm_calls = gemm_calls - base.gemm_calls;
  d.fused_passes = fused_passes - base.fused_passes;
  d.naive_passes = naive_passes - base.naive_passes;
  d.aux_passes = aux_passes - base.aux_passes;
  d.logit_passes = logit_passes - base.logit_passes;
  d.materialized_intermediates =
      materialized_intermediates - base.materialized_intermediates;
  d.bytes_moved_estimate = bytes_moved_estimate - base.bytes_moved_estimate;
  for (size_t i = 0; i < kFusedPassKindCount; ++i) {
    d.fused_by_kind[i] = fused_by_kind[i] - base.fused_by_kind[i];
  }
  return d;
}

namespace {
constexpr auto kRelaxed = std::memory_order_relaxed;
}

void Counters::record_gemm(uint64_t bytes) {
  gemm_calls_.fetch_add(1, kRelaxed);
  bytes_.fetch_add(bytes, kRelaxed);
}

void Counters::record_fused(FusedPassKind kind, uint64_t bytes) {
  fused_passes_.fetch_add(1, kRelaxed);
  by_kind_[static_cast<size_t>(kind)].fetch_add(1, kRelaxed);
  bytes_.fetch_add(bytes, kRelaxed);
}

void Counters::record_naive(uint64_t bytes) {
  naive_passes_.fetch_add(1, kRelaxed);
  bytes_.fetch_add(bytes, kRelaxed);
}

void Counters::record_aux(uint64_t bytes) {
  aux_passes_.fetch_add(1, kRelaxed);
  bytes_.fetch_add(bytes, kRelaxed);
}

void Counters::record_logit_pass(uint64_t bytes) {
  logit_passes_.fetch_add(1, kRelaxed);
  bytes_.fetch_add(bytes, kRelaxed);
}

void Counters::record_materialized() { materialized_.fetch_add(1, kRelaxed); }

OpCounters Counters::snapshot() const {
  OpCounters s;
  s.gemm_calls = gemm_calls_.load(kRelaxed);
  s.fused_passes = fused_passes_.load(kRelaxed);
  s.naive_passes = naive_passes_.load(kRelaxed);
  s.aux_passes = aux_passes_.load(kRelaxed);
  s.logit_passes = logit_passes_.load(kRelaxed);
  s.materialized_intermediates = materialized_.load(kRelaxed);
  s.bytes_moved_estimate = bytes_.load(kRelaxed);
  for (size_t i = 0; i < kFusedPassKindCount; ++i) {
    s.fused_by_kind[i] = by_kind_[i].load(kRelaxed);
  }
  return s;
}

void Counters::reset() {
  gemm_calls_ = 0;
  fused_passes_ = 0;
  naive_passes_ = 0;
  aux_passes_ = 0;
  logit_passes_ = 0;
  materialized_ = 0;
  bytes_ = 0;
  for (auto& c : by_kind_) c = 0;
}

namespace {
Counters& global_counters() {
  static Counters counters;
  return counters;
}
thread_local Counters* t_counters = nullptr;
thread_local Profiler* t_profiler = nullptr;
}  // namespace

Counters& active_counters() {
  return t_counters ? *t_counters : global_counters();
}

ScopedCounters::ScopedCounters(Counters& counters) : previous_(t_counters) {
  t_counters = &counters;
}
ScopedCounters::~ScopedCounters() { t_counters = previous_; }

void reset_counters() { active_counters().reset(); }
OpCounters read_counters() { return active_counters().snapshot(); }

Profiler* active_profiler() { return t_profiler; }

ScopedProfiler::ScopedProfiler(Profiler* profiler) : previous_(t_profiler) {
  t_profiler = profiler;
}
ScopedProfiler::~ScopedProfiler() { t_profiler = previous_; }

}  // namespace fuseq
