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

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "fuseq/step_model.h"
#include "fuseq/tensor.h"

namespace fuseq {

enum class DecodeMethod : uint8_t { kBeam = 0, kDiverseBeam, kTopK, kTopP, kGreedy };

std::string_view decode_method_name(DecodeMethod method);
DecodeMethod parse_decode_method(std::string_view name);

struct DecodeConfig {
  DecodeMethod method = DecodeMethod::kBeam;
  size_t beam_size = 4;
  /// Diverse beam search: groups G (must divide beam_size) and penalty lambda.
  size_t groups = 1;
  double diversity = 0.0;
  size_t sample_k = 1;
  double sample_p = 1.0;
  /// Finished score = log prob / length^alpha.
  double length_penalty = 0.0;
  size_t max_steps = 32;
  /// Negative disables end-of-sequence handling.
  int32_t eos_token = 2;
  int32_t bos_token = 1;
  uint64_t seed = 0;
  /// Use the exhaustive softmax-and-sort path instead of retrieve-and-rerank.
  bool exhaustive = false;

  /// Throws ParameterError on out-of-range fields.
  void validate(size_t vocab_size, size_t max_beam_size) const;
  /// Decode rows per request.
  size_t slots() const;
};

// ---------------------------------------------------------------------------
// Retrieve

struct Candidate {
  int32_t token;
  float logit;
};

/// Per-row retrieve output held in reusable storage. Rows are processed
/// independently; candidates are in ascending token order.
class RetrieveResult {
 public:
  /// Sizes storage for up to `rows` rows of `vocab` logits with `k` groups.
  void reserve(size_t rows, size_t vocab, size_t k);

  size_t rows() const { return rows_; }
  size_t groups() const { return k_; }
  std::span<const float> group_maxima(size_t row) const {
    return {maxima_.data() + row * k_, k_};
  }
  float threshold(size_t row) const { return thresholds_[row]; }
  std::span<const Candidate> candidates(size_t row) const {
    return {candidates_.data() + row * vocab_, counts_[row]};
  }
  double logsumexp_full(size_t row) const { return lse_[row]; }

 private:
  friend void retrieve(const Tensor&, size_t, RetrieveResult&, size_t);
  size_t rows_ = 0;
  size_t vocab_ = 0;
  size_t k_ = 0;
  std::vector<float> maxima_;
  std::vector<float> thresholds_;
  std::vector<double> lse_;
  std::vector<Candidate> candidates_;
  std::vector<size_t> counts_;
};

/// Single pass per row over logits [rows x vocab]: strided groups (token i in
/// group i mod k), group maxima m_i, threshold R = min m_i, every token with
/// logit >= R, and the log-sum-exp of the whole row. Only the first
/// `row_count` rows are processed (all rows by default). Records one logit
/// pass per row. Throws ParameterError when k is 0 or exceeds the vocabulary.
void retrieve(const Tensor& logits, size_t k, RetrieveResult& out,
              size_t row_count = SIZE_MAX);
RetrieveResult retrieve(const Tensor& logits, size_t k);

// ---------------------------------------------------------------------------
// Output helpers

/// log(sum(exp(row))) with a max shift, accumulated in double.
double logsumexp(std::span<const float> row);

/// Highest-logit label (lowest index on ties) and its softmax probability,
/// computed in one pass without materializing the softmax.
std::pair<int32_t, double> argmax_output(std::span<const float> row);

/// exp(-mean(logit[target] - logsumexp(row))) over logits [T x vocab].
/// Throws DimensionError when the target count differs from T.
double perplexity(const Tensor& logits, std::span<const int32_t> targets);

// ---------------------------------------------------------------------------
// Sampling

struct Sample {
  int32_t token = 0;
  double log_prob = 0.0;
};

/// Reusable storage for the sampling routines.
struct SampleWorkspace {
  RetrieveResult retrieved;
  std::vector<Candidate> order;
  void reserve(size_t vocab);
};

/// Draws from the renormalized k highest-logit tokens.
Sample sample_top_k(std::span<const float> row, size_t k, std::mt19937_64& rng,
                    SampleWorkspace& ws);
/// Draws from the smallest prefix of tokens, sorted by probability, whose
/// mass reaches p. The prefix always contains the argmax.
Sample sample_top_p(std::span<const float> row, double p, std::mt19937_64& rng,
                    SampleWorkspace& ws);
/// Reference variants that sort the full vocabulary. Top-k draws weight the
/// kept tokens by exp(logit - max), so given the same generator state both
/// variants return the same token.
Sample sample_top_k_exhaustive(std::span<const float> row, size_t k,
                               std::mt19937_64& rng);
Sample sample_top_p_exhaustive(std::span<const float> row, double p,
                               std::mt19937_64& rng);

// ---------------------------------------------------------------------------
// Beam search

/// Beam search state of one request (or one diverse-beam group). Storage is
/// sized once by reset(); steps never allocate.
struct BeamState {
  size_t beam_size = 0;
  size_t max_len = 0;
  size_t length = 0;  // tokens in every live prefix
  size_t live = 0;
  bool done = false;

  std::vector<int32_t> prefixes;  // [beam_size x max_len]
  std::vector<double> cum_log_prob;
  std::vector<int32_t> parent;  // slot each live beam extended last step
  std::vector<int32_t> last_token;

  size_t finished_count = 0;  // kept best first
  std::vector<int32_t> finished_tokens;  // [beam_size x max_len]
  std::vector<size_t> finished_length;
  std::vector<double> finished_score;
  std::vector<double> finished_log_prob;

  std::vector<int32_t> next_prefixes;
  size_t step_eos = 0;  // hypotheses finished by the last step
  size_t step_live = 0;  // beams extended by the last step


  void reset(size_t beam_size, size_t max_len);
  std::span<const int32_t> prefix(size_t i) const {
    return {prefixes.data() + i * max_len, length};
  }
  std::span<const int32_t> finished(size_t i) const {
    return {finished_tokens.data() + i * max_len, finished_length[i]};
  }
};

/// Per-token penalty for diverse beam search: lambda * counts[token].
struct DiversityPenalty {
  std::span<const uint32_t> counts;
  std::span<const int32_t> touched;  // tokens with a nonzero count
  double lambda = 0.0;
};

struct BeamWorkspace {
  RetrieveResult retrieved;
  struct Choice {
    double score;
    double log_prob;
    int32_t token;
    int32_t beam;
  };
  std::vector<Choice> choices;
  void reserve(size_t beam_size, size_t vocab);
};

/// Advances `state` by one token using logits rows [0, state.live). Each live
/// beam is scored as cum_log_prob + logit - logsumexp; candidates come from
/// retrieve with min(vocab, 2 * beam_size + penalized tokens) groups (or the
/// full vocabulary when config.exhaustive). Choices are ranked by score
/// descending, then token, then beam. An end-of-sequence choice ranked within
/// the first beam_size moves to the finished pool; other choices become live
/// beams until beam_size are kept. Marks the state done when no live beam is
/// left, max_steps is reached (live beams are then finished) or no live beam
/// can beat the worst kept finished hypothesis.
void beam_search_step(BeamState& state, const Tensor& logits,
                      const DecodeConfig& config, BeamWorkspace& ws,
                      const DiversityPenalty* penalty = nullptr);

/// Single-beam update used by greedy decoding and sampling: appends `token`
/// to beam 0, finishing it on end-of-sequence or at max_steps.
void extend_single(BeamState& state, int32_t token, double log_prob,
                   const DecodeConfig& config);

// ---------------------------------------------------------------------------
// Decoding driver

struct Hypothesis {
  std::vector<int32_t> tokens;  // generated tokens, including a final EOS
  double score = 0.0;
  double log_prob = 0.0;
};

/// Per request, hypotheses best first.
struct DecodeResult {
  std::vector<std::vector<Hypothesis>> hypotheses;
  size_t steps = 0;
};

/// Drives a StepModel through one decode. begin() sizes every buffer; step()
/// then runs without heap allocation until it returns false.
class Decoder {
 public:
  explicit Decoder(DecodeConfig config);

  const DecodeConfig& config() const { return config_; }

  void begin(StepModel& model);
  /// Runs one model step and one search step; false once every request is
  /// done.
  bool step(StepModel& model);
  DecodeResult finish() const;

  DecodeResult run(StepModel& model);

 private:
  void search_step(const Tensor& logits);
  void beam_rows(const Tensor& logits);
  void sample_rows(const Tensor& logits);

  DecodeConfig config_;
  size_t vocab_ = 0;
  size_t batch_ = 0;
  size_t slots_ = 0;
  size_t group_size_ = 0;
  size_t max_len_ = 0;
  size_t steps_ = 0;
  bool active_ = false;

  std::vector<BeamState> beams_;  // [batch x groups]
  BeamWorkspace beam_ws_;
  SampleWorkspace sample_ws_;
  std::vector<uint32_t> counts_;
  std::vector<int32_t> touched_;
  std::vector<int32_t> feed_;
  std::vector<int32_t> parents_;
  std::mt19937_64 rng_;
};

DecodeResult decode(StepModel& model, const DecodeConfig& config);

}  // namespace fuseq
