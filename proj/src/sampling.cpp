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

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "fuseq/counters.h"
#include "fuseq/decode.h"
#include "fuseq/errors.h"

namespace fuseq {

namespace {

bool ranks_before(const Candidate& a, const Candidate& b) {
  if (a.logit != b.logit) return a.logit > b.logit;
  return a.token < b.token;
}

// Draws among order[0, n) with weights exp(logit - order[0].logit).
int32_t draw(std::span<const Candidate> order, size_t n, std::mt19937_64& rng) {
  const double top = order[0].logit;
  double total = 0.0;
  for (size_t i = 0; i < n; ++i) total += std::exp(order[i].logit - top);
  std::uniform_real_distribution<double> uniform(0.0, total);
  const double u = uniform(rng);
  double acc = 0.0;
  for (size_t i = 0; i < n; ++i) {
    acc += std::exp(order[i].logit - top);
    if (u < acc) return order[i].token;
  }
  return order[n - 1].token;
}

// Length of the shortest prefix of `order` whose mass reaches p, or 0 when
// the whole of `order` falls short.
size_t nucleus_size(std::span<const Candidate> order, double lse, double p) {
  double mass = 0.0;
  for (size_t i = 0; i < order.size(); ++i) {
    mass += std::exp(static_cast<double>(order[i].logit) - lse);
    if (mass >= p) return i + 1;
  }
  return 0;
}

Sample make_sample(std::span<const float> row, int32_t token, double lse) {
  return {token, static_cast<double>(row[static_cast<size_t>(token)]) - lse};
}

void check_k(size_t k, size_t vocab) {
  if (k == 0 || k > vocab) {
    throw ParameterError("top-k sampling needs 1 <= k <= vocab (k=" +
                         std::to_string(k) + ")");
  }
}

void check_p(double p) {
  if (!(p > 0.0 && p <= 1.0)) {
    throw ParameterError("top-p sampling needs 0 < p <= 1");
  }
}

std::vector<Candidate> sorted_vocab(std::span<const float> row) {
  std::vector<Candidate> order(row.size());
  for (size_t i = 0; i < row.size(); ++i) {
    if (!std::isfinite(row[i])) {
      throw InputError("non-finite logit at index " + std::to_string(i));
    }
    order[i] = {static_cast<int32_t>(i), row[i]};
  }
  std::sort(order.begin(), order.end(), ranks_before);
  return order;
}

}  // namespace

void SampleWorkspace::reserve(size_t vocab) {
  retrieved.reserve(1, vocab, vocab);
  order.reserve(vocab);
}

Sample sample_top_k(std::span<const float> row, size_t k, std::mt19937_64& rng,
                    SampleWorkspace& ws) {
  check_k(k, row.size());
  retrieve(const_view(row, {1, row.size()}), k, ws.retrieved);
  std::span<const Candidate> cands = ws.retrieved.candidates(0);
  ws.order.assign(cands.begin(), cands.end());
  std::partial_sort(ws.order.begin(),
                    ws.order.begin() + static_cast<std::ptrdiff_t>(k),
                    ws.order.end(), ranks_before);
  return make_sample(row, draw(ws.order, k, rng),
                     ws.retrieved.logsumexp_full(0));
}

Sample sample_top_p(std::span<const float> row, double p, std::mt19937_64& rng,
                    SampleWorkspace& ws) {
  check_p(p);
  const size_t vocab = row.size();
  const Tensor logits = const_view(row, {1, vocab});
  // Retrieve candidates are exactly the highest-ranked tokens, so the sorted
  // candidate list is a prefix of the sorted vocabulary. Widen the retrieve
  // until that prefix carries mass p.
  size_t k = std::min<size_t>(vocab, 16);
  size_t n = 0;
  for (;;) {
    retrieve(logits, k, ws.retrieved);
    std::span<const Candidate> cands = ws.retrieved.candidates(0);
    ws.order.assign(cands.begin(), cands.end());
    std::sort(ws.order.begin(), ws.order.end(), ranks_before);
    n = nucleus_size(ws.order, ws.retrieved.logsumexp_full(0), p);
    if (n > 0) break;
    if (k == vocab) {
      n = ws.order.size();
      break;
    }
    k = std::min(vocab, 4 * k);
  }
  return make_sample(row, draw(ws.order, n, rng),
                     ws.retrieved.logsumexp_full(0));
}

Sample sample_top_k_exhaustive(std::span<const float> row, size_t k,
                               std::mt19937_64& rng) {
  check_k(k, row.size());
  const std::vector<Candidate> order = sorted_vocab(row);
  const double lse = logsumexp(row);
  active_counters().record_logit_pass(row.size() * sizeof(float));
  active_counters().record_logit_pass(row.size() * sizeof(float));
  return make_sample(row, draw(order, k, rng), lse);
}

Sample sample_top_p_exhaustive(std::span<const float> row, double p,
                               std::mt19937_64& rng) {
  check_p(p);
  const std::vector<Candidate> order = sorted_vocab(row);
  const double lse = logsumexp(row);
  active_counters().record_logit_pass(row.size() * sizeof(float));
  active_counters().record_logit_pass(row.size() * sizeof(float));
  size_t n = nucleus_size(order, lse, p);
  if (n == 0) n = order.size();
  return make_sample(row, draw(order, n, rng), lse);
}

}  // namespace fuseq
