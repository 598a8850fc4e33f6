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
#include <limits>
#include <string>

#include "fuseq/counters.h"
#include "fuseq/decode.h"
#include "fuseq/errors.h"

namespace fuseq {

namespace {

constexpr float kNegInf = -std::numeric_limits<float>::infinity();

// Running log-sum-exp: one exp per element, rescaling when the max moves.
struct OnlineLse {
  double max = -std::numeric_limits<double>::infinity();
  double sum = 0.0;

  void add(double v) {
    if (v > max) {
      sum = sum * std::exp(max - v) + 1.0;
      max = v;
    } else {
      sum += std::exp(v - max);
    }
  }
  double value() const { return max + std::log(sum); }
};

[[noreturn]] void throw_non_finite(size_t i) {
  throw InputError("non-finite logit at index " + std::to_string(i));
}

// Returns the candidate count. `maxima` holds k entries, `cand` up to vocab.
size_t retrieve_row(const float* x, size_t vocab, size_t k, float* maxima,
                    Candidate* cand, float& threshold, double& lse) {
  std::fill(maxima, maxima + k, kNegInf);
  OnlineLse acc;
  // Lower bound on R: the minimum of the maxima seen so far can only grow,
  // so anything below it can never pass the final threshold.
  float bound = kNegInf;
  size_t count = 0;
  size_t g = 0;
  for (size_t i = 0; i < vocab; ++i) {
    const float v = x[i];
    if (!std::isfinite(v)) throw_non_finite(i);
    if (v > maxima[g]) maxima[g] = v;
    acc.add(v);
    if (v >= bound) cand[count++] = Candidate{static_cast<int32_t>(i), v};
    if (++g == k) {
      g = 0;
      bound = *std::min_element(maxima, maxima + k);
    }
  }
  threshold = *std::min_element(maxima, maxima + k);
  size_t kept = 0;
  for (size_t i = 0; i < count; ++i) {
    if (cand[i].logit >= threshold) cand[kept++] = cand[i];
  }
  lse = acc.value();
  return kept;
}

}  // namespace

void RetrieveResult::reserve(size_t rows, size_t vocab, size_t k) {
  if (maxima_.size() < rows * k) maxima_.resize(rows * k);
  if (thresholds_.size() < rows) thresholds_.resize(rows);
  if (lse_.size() < rows) lse_.resize(rows);
  if (counts_.size() < rows) counts_.resize(rows);
  if (candidates_.size() < rows * vocab) candidates_.resize(rows * vocab);
}

void retrieve(const Tensor& logits, size_t k, RetrieveResult& out,
              size_t row_count) {
  if (logits.rank() != 2) {
    throw DimensionError("retrieve expects [rows x vocab] logits, got " +
                         logits.shape().str());
  }
  const size_t vocab = logits.dim(1);
  const size_t rows = std::min(row_count, logits.dim(0));
  if (k == 0 || k > vocab) {
    throw ParameterError("retrieve needs 1 <= k <= vocab (k=" +
                         std::to_string(k) + ", vocab=" +
                         std::to_string(vocab) + ")");
  }
  out.reserve(rows, vocab, k);
  out.rows_ = rows;
  out.vocab_ = vocab;
  out.k_ = k;
  Counters& counters = active_counters();
  for (size_t r = 0; r < rows; ++r) {
    out.counts_[r] = retrieve_row(
        logits.data() + r * vocab, vocab, k, out.maxima_.data() + r * k,
        out.candidates_.data() + r * vocab, out.thresholds_[r], out.lse_[r]);
    counters.record_logit_pass(vocab * sizeof(float));
  }
}

RetrieveResult retrieve(const Tensor& logits, size_t k) {
  RetrieveResult out;
  retrieve(logits, k, out);
  return out;
}

double logsumexp(std::span<const float> row) {
  if (row.empty()) return -std::numeric_limits<double>::infinity();
  double m = row[0];
  for (float v : row) m = std::max(m, static_cast<double>(v));
  double s = 0.0;
  for (float v : row) s += std::exp(static_cast<double>(v) - m);
  return m + std::log(s);
}

std::pair<int32_t, double> argmax_output(std::span<const float> row) {
  if (row.empty()) throw DimensionError("argmax_output of an empty row");
  OnlineLse acc;
  size_t best = 0;
  for (size_t i = 0; i < row.size(); ++i) {
    if (!std::isfinite(row[i])) throw_non_finite(i);
    if (row[i] > row[best]) best = i;
    acc.add(row[i]);
  }
  active_counters().record_logit_pass(row.size() * sizeof(float));
  return {static_cast<int32_t>(best),
          std::exp(static_cast<double>(row[best]) - acc.value())};
}

double perplexity(const Tensor& logits, std::span<const int32_t> targets) {
  if (logits.rank() != 2 || logits.dim(0) != targets.size()) {
    throw DimensionError("perplexity: " + std::to_string(targets.size()) +
                         " targets for logits " + logits.shape().str());
  }
  if (targets.empty()) throw DimensionError("perplexity of an empty sequence");
  const size_t vocab = logits.dim(1);
  double total = 0.0;
  for (size_t t = 0; t < targets.size(); ++t) {
    if (targets[t] < 0 || static_cast<size_t>(targets[t]) >= vocab) {
      throw InputError("target token " + std::to_string(targets[t]) +
                       " outside vocabulary");
    }
    std::span<const float> row = logits.row(t);
    total += static_cast<double>(row[static_cast<size_t>(targets[t])]) -
             logsumexp(row);
  }
  return std::exp(-total / static_cast<double>(targets.size()));
}

}  // namespace fuseq
