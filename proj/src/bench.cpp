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

#include "fuseq/bench.h"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <numeric>
#include <random>
#include <sstream>
#include <thread>

#include "fuseq/errors.h"

namespace fuseq {

std::string_view task_name(Task task) {
  switch (task) {
    case Task::kTranslate: return "translate";
    case Task::kGenerate: return "generate";
    case Task::kClassify: return "classify";
  }
  return "unknown";
}

Task parse_task(std::string_view name) {
  if (name == "translate") return Task::kTranslate;
  if (name == "generate") return Task::kGenerate;
  if (name == "classify") return Task::kClassify;
  throw ParameterError("unknown task '" + std::string(name) + "'");
}

std::string_view search_policy_name(SearchPolicy policy) {
  switch (policy) {
    case SearchPolicy::kEngineDefault: return "auto";
    case SearchPolicy::kRetrieve: return "retrieve";
    case SearchPolicy::kExhaustive: return "exhaustive";
  }
  return "unknown";
}

SearchPolicy parse_search_policy(std::string_view name) {
  if (name == "auto") return SearchPolicy::kEngineDefault;
  if (name == "retrieve") return SearchPolicy::kRetrieve;
  if (name == "exhaustive") return SearchPolicy::kExhaustive;
  throw ParameterError("unknown search policy '" + std::string(name) + "'");
}

std::vector<int32_t> make_workload(const ModelConfig& config, size_t batch,
                                   size_t seq_len, uint64_t seed) {
  if (batch == 0 || seq_len == 0) {
    throw ParameterError("workload needs batch >= 1 and seq_len >= 1");
  }
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int32_t> token(
      0, static_cast<int32_t>(config.vocab_size) - 1);
  std::uniform_int_distribution<size_t> length((seq_len + 1) / 2, seq_len);
  auto special = [&](int32_t t) {
    return t == config.pad_id || t == config.bos_id || t == config.eos_id;
  };
  std::vector<int32_t> ids(batch * seq_len, config.pad_id);
  for (size_t b = 0; b < batch; ++b) {
    const size_t len = b == 0 ? seq_len : length(rng);
    for (size_t i = 0; i < len; ++i) {
      int32_t t = token(rng);
      while (special(t)) t = token(rng);
      ids[b * seq_len + i] = t;
    }
  }
  return ids;
}

nlohmann::json counters_to_json(const OpCounters& c) {
  nlohmann::json by_kind = nlohmann::json::object();
  for (size_t i = 0; i < kFusedPassKindCount; ++i) {
    by_kind[std::string(fused_pass_kind_name(static_cast<FusedPassKind>(i)))] =
        c.fused_by_kind[i];
  }
  return {{"gemm_calls", c.gemm_calls},
          {"fused_passes", c.fused_passes},
          {"naive_passes", c.naive_passes},
          {"aux_passes", c.aux_passes},
          {"logit_passes", c.logit_passes},
          {"materialized_intermediates", c.materialized_intermediates},
          {"bytes_moved_estimate", c.bytes_moved_estimate},
          {"fused_by_kind", by_kind}};
}

nlohmann::json decode_config_to_json(const DecodeConfig& c) {
  return {{"method", decode_method_name(c.method)},
          {"beam_size", c.beam_size},
          {"groups", c.groups},
          {"diversity", c.diversity},
          {"sample_k", c.sample_k},
          {"sample_p", c.sample_p},
          {"length_penalty", c.length_penalty},
          {"max_steps", c.max_steps},
          {"eos_token", c.eos_token},
          {"bos_token", c.bos_token},
          {"seed", c.seed},
          {"exhaustive", c.exhaustive}};
}

std::array<double, 3> ProfileReport::proportions() const {
  if (total_ms <= 0.0) return {0.0, 0.0, 1.0};
  const double gemm = breakdown.gemm_ms / total_ms;
  const double cache = breakdown.cache_refresh_ms / total_ms;
  return {gemm, cache, 1.0 - gemm - cache};
}

nlohmann::json ProfileReport::to_json() const {
  auto breakdown_json = [](const Breakdown& b) {
    return nlohmann::json{{"gemm_ms", b.gemm_ms},
                          {"cache_refresh_ms", b.cache_refresh_ms},
                          {"other_ms", b.other_ms}};
  };
  const auto p = proportions();
  nlohmann::json bd = breakdown_json(breakdown);
  bd["proportions"] = {{"gemm", p[0]}, {"cache_refresh", p[1]}, {"other", p[2]}};
  nlohmann::json j;
  j["schema"] = "fuseq.profile/1";
  j["engine"] = engine_name(engine);
  j["task"] = task_name(options.task);
  j["config"] = {{"model", model_config},
                 {"batch", options.batch},
                 {"seq_len", options.seq_len},
                 {"seed", options.seed},
                 {"reps", options.reps},
                 {"warmup", options.warmup},
                 {"parallel_sessions", options.parallel_sessions},
                 {"search", search_policy_name(options.search)},
                 {"decode", decode_config_to_json(options.decode)}};
  j["total_ms"] = total_ms;
  j["breakdown"] = bd;
  j["counters"] = counters_to_json(counters);
  j["memory"] = {{"arena_bytes", arena_bytes},
                 {"no_share_bytes", no_share_bytes}};
  j["outputs"] = outputs;
  j["scores"] = scores;
  j["sessions_consistent"] = sessions_consistent;
  if (options.profile) {
    nlohmann::json reps = nlohmann::json::array();
    for (size_t i = 0; i < rep_ms.size(); ++i) {
      nlohmann::json r = breakdown_json(rep_breakdown[i]);
      r["total_ms"] = rep_ms[i];
      reps.push_back(std::move(r));
    }
    j["repetitions"] = std::move(reps);
  }
  return j;
}

namespace {

struct RepResult {
  double ms = 0.0;
  Breakdown breakdown;
  OpCounters counters;
  std::vector<std::vector<int32_t>> outputs;
  std::vector<double> scores;
};

RepResult run_once(InferenceSession& session, const BenchOptions& o,
                   std::span<const int32_t> src) {
  session.counters().reset();
  session.profiler().reset();
  session.set_profiling(true);
  ScopedCounters bind(session.counters());
  RepResult r;
  const TokenMatrix m{src, o.batch, o.seq_len};
  const auto start = std::chrono::steady_clock::now();
  if (o.task == Task::kClassify) {
    const Tensor logits = session.classify(m);
    for (size_t b = 0; b < o.batch; ++b) {
      auto [label, prob] = argmax_output(logits.row(b));
      r.outputs.push_back({label});
      r.scores.push_back(prob);
    }
  } else {
    session.encode(m);
    DecodeResult d = decode(session, o.decode);
    for (auto& hyps : d.hypotheses) {
      if (hyps.empty()) {
        r.outputs.emplace_back();
        r.scores.push_back(0.0);
      } else {
        r.outputs.push_back(std::move(hyps.front().tokens));
        r.scores.push_back(hyps.front().score);
      }
    }
  }
  const auto end = std::chrono::steady_clock::now();
  r.ms = std::chrono::duration<double, std::milli>(end - start).count();
  r.breakdown.gemm_ms = session.profiler().total_ms(TimeCategory::kGemm);
  r.breakdown.cache_refresh_ms =
      session.profiler().total_ms(TimeCategory::kCacheRefresh);
  r.breakdown.other_ms = std::max(
      0.0, r.ms - r.breakdown.gemm_ms - r.breakdown.cache_refresh_ms);
  r.counters = session.counters().snapshot();
  session.set_profiling(false);
  return r;
}

ProfileReport run_worker(const std::shared_ptr<const Model>& model,
                         BenchOptions o, std::span<const int32_t> src) {
  switch (o.search) {
    case SearchPolicy::kEngineDefault:
      o.decode.exhaustive = o.engine == EngineKind::kNaive;
      break;
    case SearchPolicy::kRetrieve: o.decode.exhaustive = false; break;
    case SearchPolicy::kExhaustive: o.decode.exhaustive = true; break;
  }
  SessionOptions so;
  so.engine = o.engine;
  InferenceSession session(model, so);
  for (size_t i = 0; i < o.warmup; ++i) run_once(session, o, src);
  std::vector<RepResult> reps;
  for (size_t i = 0; i < o.reps; ++i) reps.push_back(run_once(session, o, src));

  std::vector<size_t> order(reps.size());
  std::iota(order.begin(), order.end(), size_t{0});
  std::sort(order.begin(), order.end(),
            [&](size_t a, size_t b) { return reps[a].ms < reps[b].ms; });
  RepResult& median = reps[order[(order.size() - 1) / 2]];

  ProfileReport report;
  report.engine = o.engine;
  report.options = o;
  report.model_config = model->config.to_json();
  report.total_ms = median.ms;
  report.breakdown = median.breakdown;
  report.counters = median.counters;
  for (const RepResult& r : reps) {
    report.rep_ms.push_back(r.ms);
    report.rep_breakdown.push_back(r.breakdown);
  }
  report.outputs = median.outputs;
  report.scores = median.scores;
  report.arena_bytes = session.plan().arena_bytes();
  report.no_share_bytes = session.plan().no_share_bytes();
  return report;
}

}  // namespace

ProfileReport run_bench(std::shared_ptr<const Model> model,
                        const BenchOptions& o) {
  if (!model) throw ParameterError("bench needs a model");
  const ModelConfig& c = model->config;
  if (o.reps == 0) throw ParameterError("reps must be >= 1");
  if (o.parallel_sessions == 0) {
    throw ParameterError("parallel_sessions must be >= 1");
  }
  if (o.batch == 0 || o.seq_len == 0) {
    throw ParameterError("batch and seq_len must be >= 1");
  }
  if (o.batch > c.max_batch || o.seq_len > c.max_seq_len) {
    throw CapacityError("shape " + std::to_string(o.batch) + "x" +
                        std::to_string(o.seq_len) +
                        " exceeds the model maxima " +
                        std::to_string(c.max_batch) + "x" +
                        std::to_string(c.max_seq_len));
  }
  if (o.task == Task::kClassify && c.num_labels == 0) {
    throw ParameterError("classify needs a model with a classifier head");
  }
  if (o.task != Task::kClassify) {
    o.decode.validate(c.vocab_size, c.max_beam_size);
  }
  const std::vector<int32_t> src =
      make_workload(c, o.batch, o.seq_len, o.seed);

  if (o.parallel_sessions == 1) return run_worker(model, o, src);

  std::vector<ProfileReport> reports(o.parallel_sessions);
  std::vector<std::exception_ptr> errors(o.parallel_sessions);
  std::vector<std::thread> workers;
  for (size_t i = 0; i < o.parallel_sessions; ++i) {
    workers.emplace_back([&, i] {
      try {
        reports[i] = run_worker(model, o, src);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    });
  }
  for (auto& w : workers) w.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  ProfileReport report = std::move(reports[0]);
  for (size_t i = 1; i < reports.size(); ++i) {
    if (reports[i].outputs != report.outputs ||
        reports[i].counters != report.counters) {
      report.sessions_consistent = false;
    }
  }
  return report;
}

CompareReport run_compare(std::shared_ptr<const Model> model,
                          const BenchOptions& options, EngineKind baseline,
                          EngineKind candidate,
                          const std::vector<std::pair<size_t, size_t>>& buckets) {
  CompareReport out;
  out.baseline = baseline;
  out.candidate = candidate;
  out.options = options;
  for (auto [batch, seq_len] : buckets) {
    BenchOptions o = options;
    o.batch = batch;
    o.seq_len = seq_len;
    o.engine = baseline;
    const ProfileReport base = run_bench(model, o);
    o.engine = candidate;
    const ProfileReport cand = run_bench(model, o);
    CompareBucket b;
    b.batch = batch;
    b.seq_len = seq_len;
    b.baseline_ms = base.total_ms;
    b.candidate_ms = cand.total_ms;
    b.speedup = cand.total_ms > 0.0 ? base.total_ms / cand.total_ms : 0.0;
    b.baseline_gemm_share = base.proportions()[0];
    b.candidate_gemm_share = cand.proportions()[0];
    b.outputs_match = base.outputs == cand.outputs;
    out.buckets.push_back(b);
  }
  return out;
}

nlohmann::json CompareReport::to_json() const {
  nlohmann::json rows = nlohmann::json::array();
  for (const CompareBucket& b : buckets) {
    rows.push_back({{"batch", b.batch},
                    {"seq_len", b.seq_len},
                    {"baseline_ms", b.baseline_ms},
                    {"candidate_ms", b.candidate_ms},
                    {"speedup", b.speedup},
                    {"baseline_gemm_share", b.baseline_gemm_share},
                    {"candidate_gemm_share", b.candidate_gemm_share},
                    {"outputs_match", b.outputs_match}});
  }
  return {{"schema", "fuseq.compare/1"},
          {"baseline", engine_name(baseline)},
          {"candidate", engine_name(candidate)},
          {"task", task_name(options.task)},
          {"search", search_policy_name(options.search)},
          {"decode", decode_config_to_json(options.decode)},
          {"reps", options.reps},
          {"warmup", options.warmup},
          {"seed", options.seed},
          {"buckets", rows}};
}

std::string CompareReport::to_text() const {
  std::ostringstream os;
  char line[160];
  std::snprintf(line, sizeof(line), "%6s %8s %12s %12s %8s %7s %7s %8s\n",
                "batch", "seq_len", "baseline_ms", "candidate_ms", "speedup",
                "gemm_b", "gemm_c", "outputs");
  os << line;
  for (const CompareBucket& b : buckets) {
    std::snprintf(line, sizeof(line),
                  "%6zu %8zu %12.3f %12.3f %7.2fx %6.1f%% %6.1f%% %8s\n",
                  b.batch, b.seq_len, b.baseline_ms, b.candidate_ms, b.speedup,
                  100.0 * b.baseline_gemm_share,
                  100.0 * b.candidate_gemm_share,
                  b.outputs_match ? "same" : "DIFFER");
    os << line;
  }
  return os.str();
}

}  // namespace fuseq
