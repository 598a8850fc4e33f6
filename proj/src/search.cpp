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
#include <cstring>
#include <string>

#include "fuseq/counters.h"
#include "fuseq/decode.h"
#include "fuseq/errors.h"

namespace fuseq {

std::string_view decode_method_name(DecodeMethod method) {
  switch (method) {
    case DecodeMethod::kBeam: return "beam";
    case DecodeMethod::kDiverseBeam: return "diverse";
    case DecodeMethod::kTopK: return "topk";
    case DecodeMethod::kTopP: return "topp";
    case DecodeMethod::kGreedy: return "greedy";
  }
  return "unknown";
}

DecodeMethod parse_decode_method(std::string_view name) {
  if (name == "beam") return DecodeMethod::kBeam;
  if (name == "diverse" || name == "diverse_beam") {
    return DecodeMethod::kDiverseBeam;
  }
  if (name == "topk" || name == "top_k") return DecodeMethod::kTopK;
  if (name == "topp" || name == "top_p") return DecodeMethod::kTopP;
  if (name == "greedy") return DecodeMethod::kGreedy;
  throw ParameterError("unknown decode method '" + std::string(name) + "'");
}

void DecodeConfig::validate(size_t vocab_size, size_t max_beam_size) const {
  auto fail = [](const std::string& what) { throw ParameterError(what); };
  const bool beam = method == DecodeMethod::kBeam ||
                    method == DecodeMethod::kDiverseBeam;
  if (beam && (beam_size < 1 || beam_size > max_beam_size)) {
    fail("beam_size must be in [1, " + std::to_string(max_beam_size) + "]");
  }
  if (beam && beam_size > vocab_size) fail("beam_size exceeds the vocabulary");
  if (method == DecodeMethod::kDiverseBeam &&
      (groups < 1 || beam_size % groups != 0)) {
    fail("diverse beam search needs groups dividing beam_size (" +
         std::to_string(beam_size) + " % " + std::to_string(groups) + ")");
  }
  if (!(diversity >= 0.0)) fail("diversity penalty must be >= 0");
  if (method == DecodeMethod::kTopK &&
      (sample_k < 1 || sample_k > vocab_size)) {
    fail("sample_k must be in [1, vocab_size]");
  }
  if (method == DecodeMethod::kTopP && !(sample_p > 0.0 && sample_p <= 1.0)) {
    fail("sample_p must be in (0, 1]");
  }
  if (!(length_penalty >= 0.0)) fail("length_penalty must be >= 0");
  if (max_steps < 1) fail("max_steps must be >= 1");
  if (eos_token >= 0 && static_cast<size_t>(eos_token) >= vocab_size) {
    fail("eos_token outside the vocabulary");
  }
  if (bos_token < 0 || static_cast<size_t>(bos_token) >= vocab_size) {
    fail("bos_token outside the vocabulary");
  }
}

size_t DecodeConfig::slots() const {
  return method == DecodeMethod::kBeam || method == DecodeMethod::kDiverseBeam
             ? beam_size
             : 1;
}

void BeamState::reset(size_t beams, size_t max_length) {
  beam_size = beams;
  max_len = max_length;
  length = 0;
  live = 1;
  done = false;
  prefixes.assign(beams * max_length, 0);
  next_prefixes.assign(beams * max_length, 0);
  cum_log_prob.assign(beams, 0.0);
  parent.assign(beams, 0);
  last_token.assign(beams, 0);
  finished_count = 0;
  finished_tokens.assign(beams * max_length, 0);
  finished_length.assign(beams, 0);
  finished_score.assign(beams, 0.0);
  finished_log_prob.assign(beams, 0.0);
  step_eos = 0;
  step_live = 0;
}

void BeamWorkspace::reserve(size_t beam_size, size_t vocab) {
  retrieved.reserve(beam_size, vocab, vocab);
  choices.reserve(beam_size * vocab);
}

namespace {

double normalized(double log_prob, size_t length, double alpha) {
  if (alpha == 0.0) return log_prob;
  return log_prob / std::pow(static_cast<double>(length), alpha);
}

// Inserts into the best-first finished pool; equal scores keep the earlier
// hypothesis first. `tail` (if >= 0) is appended after `prefix`.
void add_finished(BeamState& s, std::span<const int32_t> prefix, int32_t tail,
                  double log_prob, double alpha) {
  const size_t len = prefix.size() + (tail >= 0 ? 1 : 0);
  const double score = normalized(log_prob, len, alpha);
  size_t pos = 0;
  while (pos < s.finished_count && s.finished_score[pos] >= score) ++pos;
  if (pos >= s.beam_size) return;
  const size_t last = std::min(s.finished_count, s.beam_size - 1);
  for (size_t i = last; i > pos; --i) {
    std::memcpy(&s.finished_tokens[i * s.max_len],
                &s.finished_tokens[(i - 1) * s.max_len],
                s.finished_length[i - 1] * sizeof(int32_t));
    s.finished_length[i] = s.finished_length[i - 1];
    s.finished_score[i] = s.finished_score[i - 1];
    s.finished_log_prob[i] = s.finished_log_prob[i - 1];
  }
  int32_t* dst = &s.finished_tokens[pos * s.max_len];
  std::copy(prefix.begin(), prefix.end(), dst);
  if (tail >= 0) dst[prefix.size()] = tail;
  s.finished_length[pos] = len;
  s.finished_score[pos] = score;
  s.finished_log_prob[pos] = log_prob;
  s.finished_count = std::min(s.finished_count + 1, s.beam_size);
}

void finalize_live(BeamState& s, double alpha) {
  for (size_t j = 0; j < s.live; ++j) {
    add_finished(s, s.prefix(j), -1, s.cum_log_prob[j], alpha);
  }
  s.live = 0;
  s.done = true;
}

void check_stop(BeamState& s, const DecodeConfig& config) {
  const size_t limit = std::min(config.max_steps, s.max_len);
  if (s.live == 0) {
    s.done = true;
  } else if (s.length >= limit) {
    finalize_live(s, config.length_penalty);
  } else if (s.finished_count == s.beam_size) {
    // Log probs only fall as beams extend; with a length penalty the best
    // reachable score is the current one spread over the longest length.
    double best = s.cum_log_prob[0];
    for (size_t j = 1; j < s.live; ++j) best = std::max(best, s.cum_log_prob[j]);
    const double bound = normalized(best, limit, config.length_penalty);
    if (bound <= s.finished_score[s.beam_size - 1]) s.done = true;
  }
}

}  // namespace

void beam_search_step(BeamState& s, const Tensor& logits,
                      const DecodeConfig& config, BeamWorkspace& ws,
                      const DiversityPenalty* penalty) {
  if (s.done) return;
  if (logits.rank() != 2 || logits.dim(0) < s.live) {
    throw DimensionError("beam step needs " + std::to_string(s.live) +
                         " logits rows, got " + logits.shape().str());
  }
  const size_t vocab = logits.dim(1);
  const size_t live = s.live;
  auto cost = [&](int32_t token) {
    if (penalty == nullptr) return 0.0;
    const uint32_t c = penalty->counts[static_cast<size_t>(token)];
    return c == 0 ? 0.0 : penalty->lambda * static_cast<double>(c);
  };

  ws.choices.clear();
  if (config.exhaustive) {
    Counters& counters = active_counters();
    for (size_t b = 0; b < live; ++b) {
      std::span<const float> row = logits.row(b);
      const double lse = logsumexp(row);
      counters.record_logit_pass(vocab * sizeof(float));
      for (size_t t = 0; t < vocab; ++t) {
        const double lp = s.cum_log_prob[b] + (static_cast<double>(row[t]) - lse);
        const auto token = static_cast<int32_t>(t);
        ws.choices.push_back({lp - cost(token), lp, token,
                              static_cast<int32_t>(b)});
      }
      counters.record_logit_pass(vocab * sizeof(float));
    }
  } else {
    size_t groups = 2 * s.beam_size;
    if (penalty != nullptr) groups += penalty->touched.size();
    groups = std::min(groups, vocab);
    retrieve(logits, groups, ws.retrieved, live);
    for (size_t b = 0; b < live; ++b) {
      const double lse = ws.retrieved.logsumexp_full(b);
      for (const Candidate& c : ws.retrieved.candidates(b)) {
        const double lp =
            s.cum_log_prob[b] + (static_cast<double>(c.logit) - lse);
        ws.choices.push_back({lp - cost(c.token), lp, c.token,
                              static_cast<int32_t>(b)});
      }
    }
  }

  const size_t select = std::min(2 * s.beam_size, ws.choices.size());
  std::partial_sort(
      ws.choices.begin(), ws.choices.begin() + static_cast<std::ptrdiff_t>(select),
      ws.choices.end(), [](const BeamWorkspace::Choice& a,
                           const BeamWorkspace::Choice& b) {
        if (a.score != b.score) return a.score > b.score;
        if (a.token != b.token) return a.token < b.token;
        return a.beam < b.beam;
      });

  s.step_eos = 0;
  size_t next = 0;
  for (size_t i = 0; i < select && next < s.beam_size; ++i) {
    const BeamWorkspace::Choice& c = ws.choices[i];
    const auto beam = static_cast<size_t>(c.beam);
    if (config.eos_token >= 0 && c.token == config.eos_token) {
      if (i < s.beam_size) {
        add_finished(s, s.prefix(beam), c.token, c.log_prob,
                     config.length_penalty);
        ++s.step_eos;
      }
      continue;
    }
    int32_t* dst = &s.next_prefixes[next * s.max_len];
    std::copy_n(&s.prefixes[beam * s.max_len], s.length, dst);
    dst[s.length] = c.token;
    s.cum_log_prob[next] = c.log_prob;
    s.parent[next] = c.beam;
    s.last_token[next] = c.token;
    ++next;
  }
  s.prefixes.swap(s.next_prefixes);
  s.live = next;
  s.step_live = next;
  ++s.length;
  check_stop(s, config);
}

void extend_single(BeamState& s, int32_t token, double log_prob,
                   const DecodeConfig& config) {
  if (s.done) return;
  s.cum_log_prob[0] += log_prob;
  s.parent[0] = 0;
  s.last_token[0] = token;
  s.step_eos = 0;
  s.step_live = 0;
  if (config.eos_token >= 0 && token == config.eos_token) {
    add_finished(s, s.prefix(0), token, s.cum_log_prob[0],
                 config.length_penalty);
    s.step_eos = 1;
    s.live = 0;
    ++s.length;
    s.done = true;
    return;
  }
  s.prefixes[s.length] = token;
  s.step_live = 1;
  ++s.length;
  check_stop(s, config);
}

}  // namespace fuseq
