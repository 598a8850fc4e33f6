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

// fuseq: benchmark harness for the fused and naive inference engines.
//
//   fuseq make-model --preset base --seed 1 --out base.lsqw
//   fuseq bench --model base.lsqw --engine fused --batch 8 --seq-len 32
//   fuseq compare --model base.lsqw --buckets 1x16,8x32
//   fuseq plan --preset base
//
// Exit codes: 0 success, 2 usage, 3 model or format error, 4 capacity error.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "fuseq/bench.h"
#include "fuseq/errors.h"
#include "fuseq/graph.h"
#include "fuseq/memory_plan.h"
#include "fuseq/model.h"

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitModel = 3;
constexpr int kExitCapacity = 4;

struct RunFlags {
  std::string model;
  std::string engine = "fused";
  std::string task = "translate";
  std::string decode;
  size_t batch = 1;
  size_t seq_len = 16;
  size_t beam_size = 4;
  size_t topk = 4;
  double topp = 0.9;
  size_t groups = 2;
  double diversity = 0.5;
  double length_penalty = 0.0;
  size_t max_steps = 32;
  uint64_t seed = 0;
  size_t reps = 5;
  size_t warmup = 1;
  size_t parallel_sessions = 1;
  std::string search = "auto";
  bool profile = false;
  std::string out;
};

void add_run_flags(CLI::App* app, RunFlags& f) {
  app->add_option("--model", f.model, "LSQW weight file")->required();
  app->add_option("--engine", f.engine, "fused or naive")
      ->check(CLI::IsMember({"fused", "naive"}));
  app->add_option("--task", f.task, "translate, generate or classify")
      ->check(CLI::IsMember({"translate", "generate", "classify"}));
  app->add_option("--decode", f.decode,
                  "beam, diverse, topk, topp or greedy (default: beam for "
                  "translate, topk for generate)")
      ->check(CLI::IsMember({"beam", "diverse", "topk", "topp", "greedy"}));
  app->add_option("--batch", f.batch)->check(CLI::PositiveNumber);
  app->add_option("--seq-len", f.seq_len)->check(CLI::PositiveNumber);
  app->add_option("--beam-size", f.beam_size)->check(CLI::PositiveNumber);
  app->add_option("--topk", f.topk)->check(CLI::PositiveNumber);
  app->add_option("--topp", f.topp);
  app->add_option("--groups", f.groups, "diverse beam groups")
      ->check(CLI::PositiveNumber);
  app->add_option("--diversity", f.diversity, "diverse beam penalty");
  app->add_option("--length-penalty", f.length_penalty);
  app->add_option("--max-steps", f.max_steps)->check(CLI::PositiveNumber);
  app->add_option("--seed", f.seed);
  app->add_option("--reps", f.reps)->check(CLI::PositiveNumber);
  app->add_option("--warmup", f.warmup);
  app->add_option("--parallel-sessions", f.parallel_sessions)
      ->check(CLI::PositiveNumber);
  app->add_option("--search", f.search,
                  "output layer: auto (retrieve for fused, exhaustive for "
                  "naive), retrieve or exhaustive")
      ->check(CLI::IsMember({"auto", "retrieve", "exhaustive"}));
  app->add_flag("--profile", f.profile, "include per-repetition timings");
  app->add_option("--out", f.out, "write the JSON report here");
}

fuseq::BenchOptions to_options(const RunFlags& f,
                               const fuseq::ModelConfig& config) {
  fuseq::BenchOptions o;
  o.engine = fuseq::parse_engine(f.engine);
  o.task = fuseq::parse_task(f.task);
  std::string method = f.decode;
  if (method.empty()) method = o.task == fuseq::Task::kGenerate ? "topk" : "beam";
  o.decode.method = fuseq::parse_decode_method(method);
  o.decode.beam_size = f.beam_size;
  o.decode.groups = f.groups;
  o.decode.diversity = f.diversity;
  o.decode.sample_k = f.topk;
  o.decode.sample_p = f.topp;
  o.decode.length_penalty = f.length_penalty;
  o.decode.max_steps = f.max_steps;
  o.decode.eos_token = config.eos_id;
  o.decode.bos_token = config.bos_id;
  o.decode.seed = f.seed;
  o.search = fuseq::parse_search_policy(f.search);
  o.batch = f.batch;
  o.seq_len = f.seq_len;
  o.seed = f.seed;
  o.reps = f.reps;
  o.warmup = f.warmup;
  o.profile = f.profile;
  o.parallel_sessions = f.parallel_sessions;
  return o;
}

void emit(const std::string& text, const std::string& path) {
  if (path.empty()) {
    std::cout << text << "\n";
    return;
  }
  std::ofstream out(path);
  if (!out) throw fuseq::ParameterError("cannot write " + path);
  out << text << "\n";
}

std::vector<std::pair<size_t, size_t>> parse_buckets(const std::string& spec) {
  std::vector<std::pair<size_t, size_t>> out;
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const size_t x = item.find('x');
    try {
      if (x == std::string::npos) throw std::invalid_argument(item);
      size_t used = 0;
      const size_t b = std::stoul(item.substr(0, x), &used);
      const size_t s = std::stoul(item.substr(x + 1));
      if (b == 0 || s == 0) throw std::invalid_argument(item);
      out.emplace_back(b, s);
    } catch (const std::logic_error&) {
      throw fuseq::ParameterError("bad bucket '" + item +
                                  "', expected BATCHxSEQ_LEN");
    }
  }
  if (out.empty()) throw fuseq::ParameterError("no buckets given");
  return out;
}

fuseq::ModelConfig preset(const std::string& name) {
  if (name == "tiny") return fuseq::ModelConfig::tiny();
  if (name == "base") return fuseq::ModelConfig::base();
  throw fuseq::ParameterError("unknown preset '" + name + "'");
}

int exit_code(const fuseq::Error& e) {
  switch (e.kind()) {
    case fuseq::ErrorKind::kFormat:
    case fuseq::ErrorKind::kConsistency:
      return kExitModel;
    case fuseq::ErrorKind::kCapacity:
      return kExitCapacity;
    default:
      return kExitUsage;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fuseq: fused seq2seq inference benchmark harness"};
  app.require_subcommand(1);

  RunFlags bench_flags;
  CLI::App* bench = app.add_subcommand("bench", "profile one workload");
  add_run_flags(bench, bench_flags);

  RunFlags cmp_flags;
  std::string buckets;
  std::string baseline = "naive";
  std::string candidate = "fused";
  std::string format = "text";
  CLI::App* compare =
      app.add_subcommand("compare", "median speedup per (batch, seq_len)");
  add_run_flags(compare, cmp_flags);
  compare->add_option("--buckets", buckets,
                      "comma-separated BATCHxSEQ_LEN list (default: "
                      "--batch x --seq-len)");
  compare->add_option("--baseline", baseline)
      ->check(CLI::IsMember({"fused", "naive"}));
  compare->add_option("--candidate", candidate)
      ->check(CLI::IsMember({"fused", "naive"}));
  compare->add_option("--format", format, "stdout rendering: text or json")
      ->check(CLI::IsMember({"text", "json"}));

  std::string make_preset = "tiny";
  uint64_t make_seed = 0;
  std::string make_out;
  bool make_fp16 = false;
  std::optional<size_t> make_vocab, make_labels, make_max_batch, make_max_seq,
      make_max_beam;
  std::string make_activation;
  CLI::App* make = app.add_subcommand("make-model", "write a random model");
  make->add_option("--preset", make_preset)
      ->check(CLI::IsMember({"tiny", "base"}));
  make->add_option("--seed", make_seed);
  make->add_option("--out", make_out)->required();
  make->add_flag("--fp16", make_fp16, "store weights as float16");
  make->add_option("--vocab", make_vocab);
  make->add_option("--labels", make_labels, "classifier head size");
  make->add_option("--max-batch", make_max_batch);
  make->add_option("--max-seq-len", make_max_seq);
  make->add_option("--max-beam", make_max_beam);
  make->add_option("--activation", make_activation)
      ->check(CLI::IsMember({"relu", "gelu"}));

  std::string plan_model;
  std::string plan_preset = "base";
  std::string plan_out;
  bool plan_unshared = false;
  CLI::App* plan = app.add_subcommand("plan", "print the memory plan");
  plan->add_option("--model", plan_model, "LSQW file (overrides --preset)");
  plan->add_option("--preset", plan_preset)
      ->check(CLI::IsMember({"tiny", "base"}));
  plan->add_flag("--unshared", plan_unshared, "one buffer per intermediate");
  plan->add_option("--out", plan_out);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (*bench) {
      auto model = std::make_shared<const fuseq::Model>(
          fuseq::load_weights(bench_flags.model));
      const auto report =
          fuseq::run_bench(model, to_options(bench_flags, model->config));
      emit(report.to_json().dump(2), bench_flags.out);
    } else if (*compare) {
      auto model = std::make_shared<const fuseq::Model>(
          fuseq::load_weights(cmp_flags.model));
      const auto list =
          buckets.empty()
              ? std::vector<std::pair<size_t, size_t>>{{cmp_flags.batch,
                                                       cmp_flags.seq_len}}
              : parse_buckets(buckets);
      const auto report = fuseq::run_compare(
          model, to_options(cmp_flags, model->config),
          fuseq::parse_engine(baseline), fuseq::parse_engine(candidate), list);
      if (!cmp_flags.out.empty()) emit(report.to_json().dump(2), cmp_flags.out);
      if (format == "json") {
        std::cout << report.to_json().dump(2) << "\n";
      } else {
        std::cout << report.to_text();
      }
    } else if (*make) {
      fuseq::ModelConfig config = preset(make_preset);
      if (make_vocab) config.vocab_size = *make_vocab;
      if (make_labels) config.num_labels = *make_labels;
      if (make_max_batch) config.max_batch = *make_max_batch;
      if (make_max_seq) config.max_seq_len = *make_max_seq;
      if (make_max_beam) config.max_beam_size = *make_max_beam;
      if (!make_activation.empty()) {
        config.activation = fuseq::parse_activation(make_activation);
      }
      config.validate();
      const fuseq::Model model = fuseq::Model::random(config, make_seed);
      fuseq::save_weights(model, make_out,
                          make_fp16 ? fuseq::StorageType::kFloat16
                                    : fuseq::StorageType::kFloat32);
    } else if (*plan) {
      const fuseq::ModelConfig config =
          plan_model.empty() ? preset(plan_preset)
                             : fuseq::load_weights(plan_model).config;
      const fuseq::ExecutionGraph graph = fuseq::build_execution_graph(config);
      const fuseq::MemoryPlan mp = plan_unshared
                                       ? fuseq::build_unshared_plan(graph.specs)
                                       : fuseq::build_plan(graph.specs);
      nlohmann::json j = mp.report();
      j["ops"] = graph.ops.size();
      j["config"] = config.to_json();
      emit(j.dump(2), plan_out);
    }
  } catch (const fuseq::Error& e) {
    std::cerr << "fuseq: " << fuseq::error_kind_name(e.kind())
              << " error: " << e.what() << "\n";
    return exit_code(e);
  } catch (const std::exception& e) {
    std::cerr << "fuseq: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
