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
#include <cstdint>

#include "fuseq/decode.h"
#include "fuseq/errors.h"

namespace fuseq {

Decoder::Decoder(DecodeConfig config) : config_(config) {}

void Decoder::begin(StepModel& model) {
  vocab_ = model.vocab_size();
  batch_ = model.batch_size();
  config_.validate(vocab_, SIZE_MAX);
  if (batch_ == 0) throw ParameterError("decode needs an encoded batch");
  slots_ = config_.slots();
  const size_t groups =
      config_.method == DecodeMethod::kDiverseBeam ? config_.groups : 1;
  group_size_ = slots_ / groups;
  max_len_ = std::min(config_.max_steps, model.max_length());
  model.start(slots_);

  beams_.resize(batch_ * groups);
  for (BeamState& s : beams_) s.reset(group_size_, max_len_);
  beam_ws_.reserve(group_size_, vocab_);
  sample_ws_.reserve(vocab_);
  counts_.assign(vocab_, 0);
  touched_.clear();
  touched_.reserve(2 * slots_);
  feed_.assign(batch_ * slots_, config_.bos_token);
  parents_.assign(batch_ * slots_, 0);
  rng_.seed(config_.seed);
  steps_ = 0;
  active_ = true;
}

bool Decoder::step(StepModel& model) {
  if (!active_) return false;
  const Tensor logits = model.step(feed_);
  search_step(logits);
  ++steps_;
  const bool all_done = std::all_of(beams_.begin(), beams_.end(),
                                    [](const BeamState& s) { return s.done; });
  if (all_done) {
    active_ = false;
    return false;
  }
  if (slots_ > 1) model.reorder(parents_);
  return true;
}

void Decoder::search_step(const Tensor& logits) {
  if (config_.method == DecodeMethod::kBeam ||
      config_.method == DecodeMethod::kDiverseBeam) {
    beam_rows(logits);
  } else {
    sample_rows(logits);
  }
}

void Decoder::beam_rows(const Tensor& logits) {
  const size_t groups = beams_.size() / batch_;
  const bool diverse = config_.method == DecodeMethod::kDiverseBeam &&
                       groups > 1 && config_.diversity > 0.0;
  auto bump = [&](int32_t token) {
    if (counts_[static_cast<size_t>(token)]++ == 0) touched_.push_back(token);
  };
  for (size_t b = 0; b < batch_; ++b) {
    for (size_t g = 0; g < groups; ++g) {
      BeamState& s = beams_[b * groups + g];
      const size_t base = b * slots_ + g * group_size_;
      if (!s.done) {
        DiversityPenalty penalty{counts_, touched_, config_.diversity};
        beam_search_step(s, logits.slice_rows(base, group_size_), config_,
                         beam_ws_, diverse && g > 0 ? &penalty : nullptr);
        if (diverse) {
          for (size_t j = 0; j < s.step_live; ++j) bump(s.last_token[j]);
          for (size_t e = 0; e < s.step_eos; ++e) bump(config_.eos_token);
        }
      }
      // Idle slots replay the first live beam so every row stays valid.
      for (size_t j = 0; j < group_size_; ++j) {
        const size_t src = j < s.live ? j : 0;
        const bool has = s.live > 0;
        feed_[base + j] = has ? s.last_token[src] : config_.bos_token;
        parents_[base + j] =
            static_cast<int32_t>(base + (has ? static_cast<size_t>(s.parent[src])
                                             : j));
      }
    }
    for (int32_t t : touched_) counts_[static_cast<size_t>(t)] = 0;
    touched_.clear();
  }
}

void Decoder::sample_rows(const Tensor& logits) {
  for (size_t b = 0; b < batch_; ++b) {
    BeamState& s = beams_[b];
    if (!s.done) {
      std::span<const float> row = logits.row(b);
      Sample pick;
      switch (config_.method) {
        case DecodeMethod::kGreedy: {
          auto [token, prob] = argmax_output(row);
          pick = {token, std::log(prob)};
          break;
        }
        case DecodeMethod::kTopK:
          pick = config_.exhaustive
                     ? sample_top_k_exhaustive(row, config_.sample_k, rng_)
                     : sample_top_k(row, config_.sample_k, rng_, sample_ws_);
          break;
        case DecodeMethod::kTopP:
          pick = config_.exhaustive
                     ? sample_top_p_exhaustive(row, config_.sample_p, rng_)
                     : sample_top_p(row, config_.sample_p, rng_, sample_ws_);
          break;
        default:
          break;
      }
      extend_single(s, pick.token, pick.log_prob, config_);
    }
    feed_[b] = s.live > 0 ? s.last_token[0] : config_.bos_token;
    parents_[b] = static_cast<int32_t>(b);
  }
}

DecodeResult Decoder::finish() const {
  DecodeResult out;
  out.steps = steps_;
  const size_t groups = batch_ == 0 ? 0 : beams_.size() / batch_;
  out.hypotheses.resize(batch_);
  for (size_t b = 0; b < batch_; ++b) {
    std::vector<Hypothesis>& hyps = out.hypotheses[b];
    for (size_t g = 0; g < groups; ++g) {
      const BeamState& s = beams_[b * groups + g];
      for (size_t i = 0; i < s.finished_count; ++i) {
        std::span<const int32_t> t = s.finished(i);
        hyps.push_back({{t.begin(), t.end()},
                        s.finished_score[i],
                        s.finished_log_prob[i]});
      }
      if (!s.done) {
        for (size_t j = 0; j < s.live; ++j) {
          std::span<const int32_t> t = s.prefix(j);
          hyps.push_back({{t.begin(), t.end()}, s.cum_log_prob[j],
                          s.cum_log_prob[j]});
        }
      }
    }
    std::stable_sort(hyps.begin(), hyps.end(),
                     [](const Hypothesis& a, const Hypothesis& b) {
                       return a.score > b.score;
                     });
    if (hyps.size() > slots_) hyps.resize(slots_);
  }
  return out;
}

DecodeResult Decoder::run(StepModel& model) {
  begin(model);
  while (step(model)) {
  }
  return finish();
}

DecodeResult decode(StepModel& model, const DecodeConfig& config) {
  Decoder decoder(config);
  return decoder.run(model);
}

}  // namespace fuseq
