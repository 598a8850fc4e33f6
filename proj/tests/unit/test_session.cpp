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

#include <doctest.h>

#include <memory>
#include <random>
#include <vector>

#include "fuseq/errors.h"
#include "fuseq/session.h"
#include "oracles.h"

using namespace fuseq;

namespace {

std::shared_ptr<const Model> tiny_model(uint64_t seed,
                                        Activation act = Activation::kRelu,
                                        bool tied = true) {
  ModelConfig c = ModelConfig::tiny();
  c.activation = act;
  c.tied_embedding = tied;
  c.num_labels = 3;
  return std::make_shared<const Model>(Model::random(c, seed));
}

std::vector<int32_t> random_batch(std::mt19937_64& rng, const ModelConfig& c,
                                  size_t batch, size_t seq, bool pad) {
  std::vector<int32_t> ids(batch * seq);
  for (size_t b = 0; b < batch; ++b) {
    const size_t len = pad && b > 0 ? 1 + rng() % seq : seq;
    for (size_t s = 0; s < seq; ++s) {
      ids[b * seq + s] =
          s < len ? static_cast<int32_t>(3 + rng() % (c.vocab_size - 3)) : c.pad_id;
    }
  }
  return ids;
}

std::vector<float> copy(const Tensor& t) {
  return {t.values().begin(), t.values().end()};
}

}  // namespace

TEST_SUITE("session") {

TEST_CASE("engine names") {
  CHECK(parse_engine("fused") == EngineKind::kFused);
  CHECK(parse_engine("naive") == EngineKind::kNaive);
  CHECK(engine_name(EngineKind::kNaive) == "naive");
  CHECK_THROWS_AS(parse_engine("gpu"), ParameterError);
}

TEST_CASE("encoder output matches the reference transformer") {
  std::mt19937_64 rng(1);
  for (Activation act : {Activation::kRelu, Activation::kGelu}) {
    auto model = tiny_model(7, act);
    const auto& c = model->config;
    const size_t batch = 3, seq = 7;
    const auto ids = random_batch(rng, c, batch, seq, true);
    for (EngineKind engine : {EngineKind::kFused, EngineKind::kNaive}) {
      InferenceSession session(model, {engine});
      const auto got = copy(session.encode({ids, batch, seq}));
      for (size_t b = 0; b < batch; ++b) {
        const auto want = oracle::encode(
            *model, std::span<const int32_t>(ids).subspan(b * seq, seq));
        std::vector<float> row(got.begin() + b * seq * c.d_model,
                               got.begin() + (b + 1) * seq * c.d_model);
        CHECK(oracle::max_rel_error(row, want) <= 1e-5);
      }
    }
  }
}

TEST_CASE("fused and naive engines agree bit for bit") {
  std::mt19937_64 rng(2);
  auto model = tiny_model(3);
  const auto ids = random_batch(rng, model->config, 4, 9, true);
  InferenceSession fused(model, {EngineKind::kFused});
  InferenceSession naive(model, {EngineKind::kNaive});
  CHECK(copy(fused.encode({ids, 4, 9})) == copy(naive.encode({ids, 4, 9})));
}

TEST_CASE("encoder layer counts 6 GEMMs and 6 fused or 25 naive passes") {
  auto model = tiny_model(4);
  std::mt19937_64 rng(3);
  auto x = oracle::random_floats(rng, 2 * 5 * model->config.d_model);
  for (EngineKind engine : {EngineKind::kFused, EngineKind::kNaive}) {
    InferenceSession s(model, {engine});
    auto buf = x;
    std::vector<float> mask(2 * 5, 0.0f);
    Tensor m(mask, {2, 1, 1, 5});
    s.counters().reset();
    s.encoder_layer_forward(0, Tensor(buf, {10, model->config.d_model}), &m, 2, 5);
    const OpCounters got = s.counters().snapshot();
    CHECK(got.gemm_calls == 6);
    if (engine == EngineKind::kFused) {
      CHECK(got.fused_passes == 6);
      CHECK(got.naive_passes == 0);
      for (uint64_t n : got.fused_by_kind) CHECK(n == 1);
      CHECK(got.materialized_intermediates == 0);
    } else {
      CHECK(got.naive_passes == 25);
      CHECK(got.fused_passes == 0);
      CHECK(got.materialized_intermediates > 0);
    }
  }
}

TEST_CASE("a zero-weight layer reduces to LN(LN(x))") {
  ModelConfig c = ModelConfig::tiny();
  Model m = Model::random(c, 5);
  auto& w = m.weights.encoder[0];
  for (auto* lin : {&w.qkv, &w.attn_out, &w.ffn_in, &w.ffn_out}) {
    std::fill(lin->weight.begin(), lin->weight.end(), 0.0f);
    std::fill(lin->bias.begin(), lin->bias.end(), 0.0f);
  }
  for (auto* n : {&w.attn_norm, &w.ffn_norm}) {
    std::fill(n->gamma.begin(), n->gamma.end(), 1.0f);
    std::fill(n->beta.begin(), n->beta.end(), 0.0f);
  }
  auto model = std::make_shared<const Model>(std::move(m));
  std::mt19937_64 rng(4);
  const size_t n = 6, d = c.d_model;
  auto x = oracle::random_floats(rng, n * d, -2, 2);
  const std::vector<float> ones(d, 1.0f), zeros(d, 0.0f);
  const auto ln1 = oracle::layer_norm(x, n, d, ones, zeros, c.layer_norm_eps);
  const auto want = oracle::layer_norm(ln1, n, d, ones, zeros, c.layer_norm_eps);
  for (EngineKind engine : {EngineKind::kFused, EngineKind::kNaive}) {
    InferenceSession s(model, {engine});
    auto buf = x;
    s.encoder_layer_forward(0, Tensor(buf, {n, d}), nullptr, 2, 3);
    CHECK(oracle::max_rel_error(buf, want) <= 1e-5);
  }
}

TEST_CASE("an all-pad sequence raises a full-mask error") {
  auto model = tiny_model(1);
  std::vector<int32_t> ids{5, 6, 7, 0, 0, 0};
  for (EngineKind engine : {EngineKind::kFused, EngineKind::kNaive}) {
    InferenceSession s(model, {engine});
    CHECK_THROWS_AS(s.encode({ids, 2, 3}), FullMaskError);
  }
}

TEST_CASE("input validation") {
  auto model = tiny_model(1);
  InferenceSession s(model);
  const auto& c = model->config;
  std::vector<int32_t> ids(c.max_batch * (c.max_seq_len + 1), 5);
  CHECK_THROWS_AS(s.encode({{}, 0, 0}), InputError);
  CHECK_THROWS_AS(s.encode({ids, 2, 3}), DimensionError);
  CHECK_THROWS_AS(s.encode({std::span<const int32_t>(ids).first(c.max_batch + 1),
                            c.max_batch + 1, 1}),
                  CapacityError);
  CHECK_THROWS_AS(s.encode({std::span<const int32_t>(ids).first(c.max_seq_len + 1),
                            1, c.max_seq_len + 1}),
                  CapacityError);
  std::vector<int32_t> bad{5, static_cast<int32_t>(c.vocab_size)};
  CHECK_THROWS_AS(s.encode({bad, 1, 2}), InputError);
  CHECK_THROWS_AS(s.start(1), ParameterError);
  std::vector<int32_t> ok{5, 6};
  s.encode({ok, 1, 2});
  CHECK_THROWS_AS(s.start(c.max_beam_size + 1), CapacityError);
  s.start(1);
  std::vector<int32_t> two{1, 1};
  CHECK_THROWS_AS(s.step(two), DimensionError);
}

TEST_CASE("classifier head") {
  auto model = tiny_model(2);
  std::mt19937_64 rng(5);
  const auto ids = random_batch(rng, model->config, 2, 5, false);
  InferenceSession fused(model, {EngineKind::kFused});
  InferenceSession naive(model, {EngineKind::kNaive});
  const auto a = copy(fused.classify({ids, 2, 5}));
  CHECK(a.size() == 2 * model->config.num_labels);
  CHECK(a == copy(naive.classify({ids, 2, 5})));
}

TEST_CASE("decode steps match the reference and recompute") {
  std::mt19937_64 rng(6);
  for (bool tied : {true, false}) {
    auto model = tiny_model(9, Activation::kGelu, tied);
    const auto& c = model->config;
    const size_t batch = 2, seq = 6, slots = 2, steps = 5;
    const auto src = random_batch(rng, c, batch, seq, true);
    InferenceSession s(model);
    s.encode({src, batch, seq});
    s.start(slots);
    std::vector<int32_t> prefix_store(batch * slots * steps);
    std::vector<int32_t> feed(batch * slots, c.bos_id);
    for (size_t t = 0; t < steps; ++t) {
      for (size_t r = 0; r < feed.size(); ++r) prefix_store[r * steps + t] = feed[r];
      const auto logits = copy(s.step(feed));
      CHECK(s.cache_length() == t + 1);

      std::vector<int32_t> prefix(batch * slots * (t + 1));
      for (size_t r = 0; r < feed.size(); ++r) {
        for (size_t i = 0; i <= t; ++i) prefix[r * (t + 1) + i] = prefix_store[r * steps + i];
      }
      const auto recomputed = s.recompute_logits({prefix, batch * slots, t + 1});
      CHECK(oracle::max_rel_error(logits, recomputed) <= 1e-5);

      for (size_t r = 0; r < feed.size(); ++r) {
        const auto want = oracle::next_logits(
            *model, std::span<const int32_t>(src).subspan((r / slots) * seq, seq),
            std::span<const int32_t>(prefix).subspan(r * (t + 1), t + 1));
        std::vector<float> row(logits.begin() + r * c.vocab_size,
                               logits.begin() + (r + 1) * c.vocab_size);
        CHECK(oracle::max_rel_error(row, want) <= 1e-5);
        feed[r] = static_cast<int32_t>(3 + rng() % (c.vocab_size - 3));
      }
    }
  }
}

TEST_CASE("reorder copies cache rows from their parents") {
  std::mt19937_64 rng(7);
  auto model = tiny_model(10);
  const auto& c = model->config;
  const auto src = random_batch(rng, c, 1, 4, false);
  InferenceSession s(model);
  s.encode({src, 1, 4});
  s.start(3);
  std::vector<std::vector<int32_t>> prefixes{{1}, {1}, {1}};
  std::vector<int32_t> feed{1, 1, 1};
  s.step(feed);
  feed = {10, 11, 12};
  for (size_t r = 0; r < 3; ++r) prefixes[r].push_back(feed[r]);
  s.step(feed);
  // Rows become copies of rows 2, 2 and 0.
  const std::vector<int32_t> parents{2, 2, 0};
  s.reorder(parents);
  const auto old = prefixes;
  for (size_t r = 0; r < 3; ++r) prefixes[r] = old[parents[r]];
  feed = {20, 21, 22};
  for (size_t r = 0; r < 3; ++r) prefixes[r].push_back(feed[r]);
  const auto logits = copy(s.step(feed));
  std::vector<int32_t> flat;
  for (const auto& p : prefixes) flat.insert(flat.end(), p.begin(), p.end());
  CHECK(oracle::max_rel_error(logits, s.recompute_logits({flat, 3, 3})) <= 1e-5);
  const std::vector<int32_t> bad{0, 1, 3};
  CHECK_THROWS_AS(s.reorder(bad), InputError);
}

TEST_CASE("decoding past max_seq_len is a capacity error") {
  auto model = tiny_model(11);
  std::vector<int32_t> src{5, 6};
  InferenceSession s(model);
  s.encode({src, 1, 2});
  s.start(1);
  std::vector<int32_t> feed{1};
  for (size_t t = 0; t < model->config.max_seq_len; ++t) s.step(feed);
  CHECK_THROWS_AS(s.step(feed), CapacityError);
}

TEST_CASE("decode step counters") {
  auto model = tiny_model(12);
  const auto& c = model->config;
  std::vector<int32_t> src{5, 6, 7, 8};
  for (EngineKind engine : {EngineKind::kFused, EngineKind::kNaive}) {
    InferenceSession s(model, {engine});
    s.counters().reset();
    s.encode({src, 2, 2});
    OpCounters enc = s.counters().snapshot();
    CHECK(enc.gemm_calls == 6 * c.num_encoder_layers + c.num_decoder_layers);
    if (engine == EngineKind::kFused) {
      CHECK(enc.fused_passes == 6 * c.num_encoder_layers + c.num_decoder_layers);
    }
    s.start(2);
    std::vector<int32_t> feed(4, 1);
    s.counters().reset();
    s.step(feed);
    const OpCounters step = s.counters().snapshot();
    CHECK(step.gemm_calls == 10 * c.num_decoder_layers + 1);
    if (engine == EngineKind::kFused) {
      CHECK(step.fused_passes == 10 * c.num_decoder_layers);
      CHECK(step.materialized_intermediates == 0);
    } else {
      CHECK(step.fused_passes == 0);
      CHECK(step.naive_passes > 10 * c.num_decoder_layers);
    }
  }
}

TEST_CASE("shared and unshared plans give identical results") {
  std::mt19937_64 rng(8);
  auto model = tiny_model(13);
  const auto& c = model->config;
  const auto src = random_batch(rng, c, 3, 8, true);
  InferenceSession shared(model, {EngineKind::kFused, PlanPolicy::kShared});
  InferenceSession unshared(model, {EngineKind::kFused, PlanPolicy::kUnshared});
  CHECK(shared.plan().arena_bytes() < unshared.plan().arena_bytes());
  CHECK(copy(shared.encode({src, 3, 8})) == copy(unshared.encode({src, 3, 8})));
  shared.start(2);
  unshared.start(2);
  std::vector<int32_t> feed(6, c.bos_id);
  for (size_t t = 0; t < 6; ++t) {
    const auto a = copy(shared.step(feed));
    REQUIRE(a == copy(unshared.step(feed)));
    for (auto& f : feed) f = static_cast<int32_t>(3 + rng() % (c.vocab_size - 3));
    const std::vector<int32_t> parents{1, 0, 2, 2, 5, 4};
    shared.reorder(parents);
    unshared.reorder(parents);
  }
}

}  // TEST_SUITE
