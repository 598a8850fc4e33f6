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

#include "fuseq/model.h"

#include <cmath>

#include "fuseq/errors.h"

namespace fuseq {

void ModelConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConsistencyError(msg); };
  if (num_encoder_layers < 1) fail("num_encoder_layers must be >= 1");
  if (d_model < 1 || num_heads < 1 || d_ff < 1) {
    fail("d_model, d_ff and num_heads must be >= 1");
  }
  if (d_model % num_heads != 0) {
    fail("d_model " + std::to_string(d_model) +
         " is not divisible by num_heads " + std::to_string(num_heads));
  }
  if (vocab_size < 2) fail("vocab_size must be >= 2");
  if (max_batch < 1 || max_seq_len < 1 || max_beam_size < 1) {
    fail("max_batch, max_seq_len and max_beam_size must be >= 1");
  }
  const auto in_vocab = [&](int32_t id) {
    return id >= 0 && static_cast<size_t>(id) < vocab_size;
  };
  if (!in_vocab(pad_id) || !in_vocab(bos_id) || !in_vocab(eos_id)) {
    fail("special token ids must lie inside the vocabulary");
  }
  if (!(layer_norm_eps >= 0.0f)) fail("layer_norm_eps must be >= 0");
}

nlohmann::json ModelConfig::to_json() const {
  return {
      {"num_encoder_layers", num_encoder_layers},
      {"num_decoder_layers", num_decoder_layers},
      {"d_model", d_model},
      {"d_ff", d_ff},
      {"num_heads", num_heads},
      {"vocab_size", vocab_size},
      {"max_batch", max_batch},
      {"max_seq_len", max_seq_len},
      {"max_beam_size", max_beam_size},
      {"num_labels", num_labels},
      {"activation", std::string(activation_name(activation))},
      {"tied_embedding", tied_embedding},
      {"layer_norm_eps", layer_norm_eps},
      {"pad_id", pad_id},
      {"bos_id", bos_id},
      {"eos_id", eos_id},
  };
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig c;
  try {
    c.num_encoder_layers = j.at("num_encoder_layers").get<size_t>();
    c.num_decoder_layers = j.at("num_decoder_layers").get<size_t>();
    c.d_model = j.at("d_model").get<size_t>();
    c.d_ff = j.at("d_ff").get<size_t>();
    c.num_heads = j.at("num_heads").get<size_t>();
    c.vocab_size = j.at("vocab_size").get<size_t>();
    c.max_batch = j.at("max_batch").get<size_t>();
    c.max_seq_len = j.at("max_seq_len").get<size_t>();
    c.max_beam_size = j.at("max_beam_size").get<size_t>();
    c.num_labels = j.value("num_labels", size_t{0});
    c.activation = parse_activation(j.value("activation", std::string("relu")));
    c.tied_embedding = j.value("tied_embedding", true);
    c.layer_norm_eps = j.value("layer_norm_eps", 1e-5f);
    c.pad_id = j.value("pad_id", 0);
    c.bos_id = j.value("bos_id", 1);
    c.eos_id = j.value("eos_id", 2);
  } catch (const nlohmann::json::exception& e) {
    throw ConsistencyError(std::string("malformed model config: ") + e.what());
  } catch (const ParameterError& e) {
    throw ConsistencyError(std::string("malformed model config: ") + e.what());
  }
  c.validate();
  return c;
}

ModelConfig ModelConfig::tiny() {
  ModelConfig c;
  c.num_encoder_layers = 2;
  c.num_decoder_layers = 2;
  c.d_model = 32;
  c.d_ff = 64;
  c.num_heads = 4;
  c.vocab_size = 64;
  c.max_batch = 4;
  c.max_seq_len = 16;
  c.max_beam_size = 4;
  return c;
}

ModelConfig ModelConfig::base() {
  ModelConfig c;
  c.num_encoder_layers = 6;
  c.num_decoder_layers = 6;
  c.d_model = 512;
  c.d_ff = 2048;
  c.num_heads = 8;
  c.vocab_size = 32000;
  c.max_batch = 8;
  c.max_seq_len = 64;
  c.max_beam_size = 4;
  return c;
}

namespace {

void visit_linear(const TensorVisitor& visit, const std::string& prefix,
                  LinearWeights& w, size_t in, size_t out) {
  visit(prefix + ".weight", {in, out}, w.weight);
  visit(prefix + ".bias", {out}, w.bias);
}

void visit_norm(const TensorVisitor& visit, const std::string& prefix,
                NormWeights& w, size_t d) {
  visit(prefix + ".gamma", {d}, w.gamma);
  visit(prefix + ".beta", {d}, w.beta);
}

}  // namespace

void for_each_weight(const ModelConfig& c, ModelWeights& w,
                     const TensorVisitor& visit) {
  const size_t d = c.d_model;
  visit("token_embedding", {c.vocab_size, d}, w.token_embedding);
  if (!c.tied_embedding) {
    visit("output_projection", {c.vocab_size, d}, w.output_projection);
  }
  for (size_t l = 0; l < c.num_encoder_layers; ++l) {
    auto& e = w.encoder.at(l);
    const std::string p = "encoder." + std::to_string(l);
    visit_linear(visit, p + ".qkv", e.qkv, d, 3 * d);
    visit_linear(visit, p + ".attn_out", e.attn_out, d, d);
    visit_norm(visit, p + ".attn_norm", e.attn_norm, d);
    visit_linear(visit, p + ".ffn_in", e.ffn_in, d, c.d_ff);
    visit_linear(visit, p + ".ffn_out", e.ffn_out, c.d_ff, d);
    visit_norm(visit, p + ".ffn_norm", e.ffn_norm, d);
  }
  for (size_t l = 0; l < c.num_decoder_layers; ++l) {
    auto& e = w.decoder.at(l);
    const std::string p = "decoder." + std::to_string(l);
    visit_linear(visit, p + ".self_qkv", e.self_qkv, d, 3 * d);
    visit_linear(visit, p + ".self_out", e.self_out, d, d);
    visit_norm(visit, p + ".self_norm", e.self_norm, d);
    visit_linear(visit, p + ".cross_q", e.cross_q, d, d);
    visit_linear(visit, p + ".cross_kv", e.cross_kv, d, 2 * d);
    visit_linear(visit, p + ".cross_out", e.cross_out, d, d);
    visit_norm(visit, p + ".cross_norm", e.cross_norm, d);
    visit_linear(visit, p + ".ffn_in", e.ffn_in, d, c.d_ff);
    visit_linear(visit, p + ".ffn_out", e.ffn_out, c.d_ff, d);
    visit_norm(visit, p + ".ffn_norm", e.ffn_norm, d);
  }
  if (c.num_labels > 0) {
    visit_linear(visit, "classifier", w.classifier, d, c.num_labels);
  }
}

ModelWeights allocate_weights(const ModelConfig& config) {
  ModelWeights w;
  w.encoder.resize(config.num_encoder_layers);
  w.decoder.resize(config.num_decoder_layers);
  for_each_weight(config, w,
                  [](const std::string&, const std::vector<size_t>& shape,
                     std::vector<float>& values) {
                    size_t n = 1;
                    for (size_t s : shape) n *= s;
                    values.assign(n, 0.0f);
                  });
  return w;
}

std::vector<float> sinusoidal_table(size_t positions, size_t d_model) {
  std::vector<float> table(positions * d_model);
  for (size_t pos = 0; pos < positions; ++pos) {
    for (size_t i = 0; i < d_model; i += 2) {
      const double freq =
          std::pow(10000.0, -static_cast<double>(i) / static_cast<double>(d_model));
      const double angle = static_cast<double>(pos) * freq;
      table[pos * d_model + i] = static_cast<float>(std::sin(angle));
      if (i + 1 < d_model) {
        table[pos * d_model + i + 1] = static_cast<float>(std::cos(angle));
      }
    }
  }
  return table;
}

void Model::finalize() {
  config.validate();
  if (weights.encoder.size() != config.num_encoder_layers ||
      weights.decoder.size() != config.num_decoder_layers) {
    throw ConsistencyError("layer count does not match config");
  }
  for_each_weight(config, weights,
                  [](const std::string& name, const std::vector<size_t>& shape,
                     std::vector<float>& values) {
                    size_t n = 1;
                    for (size_t s : shape) n *= s;
                    if (values.size() != n) {
                      throw ConsistencyError(
                          "tensor '" + name + "' has " +
                          std::to_string(values.size()) +
                          " values, config implies " + std::to_string(n));
                    }
                    for (float v : values) {
                      if (!std::isfinite(v)) {
                        throw ConsistencyError("tensor '" + name +
                                               "' holds a non-finite value");
                      }
                    }
                  });
  positional = sinusoidal_table(config.max_seq_len, config.d_model);
}

namespace {

/// splitmix64; 24 high bits give an exactly representable float in [0, 1).
class WeightRng {
 public:
  explicit WeightRng(uint64_t seed) : state_(seed) {}
  float uniform(float lo, float hi) {
    state_ += 0x9e3779b97f4a7c15ull;
    uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    z ^= z >> 31;
    const float u = static_cast<float>(z >> 40) * 0x1.0p-24f;
    return lo + (hi - lo) * u;
  }

 private:
  uint64_t state_;
};

}  // namespace

Model Model::random(const ModelConfig& config, uint64_t seed) {
  config.validate();
  Model m;
  m.config = config;
  m.weights = allocate_weights(config);
  WeightRng rng(seed);
  const float embed_range = std::sqrt(3.0f / static_cast<float>(config.d_model));
  for_each_weight(
      config, m.weights,
      [&](const std::string& name, const std::vector<size_t>& shape,
          std::vector<float>& values) {
        auto ends_with = [&](std::string_view suffix) {
          return name.size() >= suffix.size() &&
                 name.compare(name.size() - suffix.size(), suffix.size(),
                              suffix) == 0;
        };
        float lo = -0.1f, hi = 0.1f;
        if (name == "token_embedding" || name == "output_projection") {
          lo = -embed_range;
          hi = embed_range;
        } else if (ends_with(".weight")) {
          const float a = std::sqrt(6.0f / static_cast<float>(shape[0] + shape[1]));
          lo = -a;
          hi = a;
        } else if (ends_with(".gamma")) {
          lo = 0.9f;
          hi = 1.1f;
        }
        for (float& v : values) v = rng.uniform(lo, hi);
      });
  m.finalize();
  return m;
}

}  // namespace fuseq
