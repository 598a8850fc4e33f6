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

#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include "fuseq/counters.h"
#include "fuseq/errors.h"
#include "fuseq/ops.h"
#include "oracles.h"

using namespace fuseq;

namespace {

constexpr float kNegInf = -std::numeric_limits<float>::infinity();

struct Counted {
  Counters counters;
  ScopedCounters bind{counters};
  OpCounters get() const { return counters.snapshot(); }
};

}  // namespace

TEST_SUITE("ops") {

TEST_CASE("layer norm of [1, 2, 3] with eps 0") {
  std::vector<float> x{1, 2, 3}, g{1, 1, 1}, b{0, 0, 0}, out(3);
  fused_layer_norm(Tensor(x, {1, 3}), Tensor(g, {3}), Tensor(b, {3}), 0.0f,
                   Tensor(out, {1, 3}));
  CHECK(out[0] == doctest::Approx(-1.224745).epsilon(1e-6));
  CHECK(out[1] == doctest::Approx(0.0).epsilon(1e-6));
  CHECK(out[2] == doctest::Approx(1.224745).epsilon(1e-6));
  std::vector<float> naive(3);
  naive_layer_norm(Tensor(x, {1, 3}), Tensor(g, {3}), Tensor(b, {3}), 0.0f,
                   Tensor(naive, {1, 3}));
  CHECK(naive == out);
}

TEST_CASE("layer norm rejects negative eps and bad shapes") {
  std::vector<float> x{1, 2, 3}, g{1, 1, 1}, b{0, 0, 0}, out(3);
  CHECK_THROWS_AS(fused_layer_norm(Tensor(x, {1, 3}), Tensor(g, {3}),
                                   Tensor(b, {3}), -1e-5f, Tensor(out, {1, 3})),
                  ParameterError);
  CHECK_THROWS_AS(fused_layer_norm(Tensor(x, {1, 3}), Tensor(g, {2}),
                                   Tensor(b, {3}), 1e-5f, Tensor(out, {1, 3})),
                  DimensionError);
  CHECK_THROWS_AS(fused_layer_norm(Tensor(x, {1, 3}), Tensor(g, {3}),
                                   Tensor(b, {3}), 1e-5f, Tensor(out, {3, 1})),
                  DimensionError);
}

TEST_CASE("softmax of [0, ln 3] is [0.25, 0.75]") {
  std::vector<float> s{0.0f, std::log(3.0f)}, out(2);
  fused_attention_softmax(Tensor(s, {1, 1, 1, 2}), {}, Tensor(out, {1, 1, 1, 2}));
  CHECK(out[0] == doctest::Approx(0.25).epsilon(1e-6));
  CHECK(out[1] == doctest::Approx(0.75).epsilon(1e-6));
}

TEST_CASE("masked keys get zero probability, full masks fail") {
  std::vector<float> s{1, 2, 3, 4}, mask{0, kNegInf, 0, 0}, out(4);
  SoftmaxOptions opts;
  Tensor m(mask, {1, 1, 1, 4});
  opts.mask = &m;
  fused_attention_softmax(Tensor(s, {1, 1, 1, 4}), opts, Tensor(out, {1, 1, 1, 4}));
  CHECK(out[1] == 0.0f);
  CHECK(out[0] + out[2] + out[3] == doctest::Approx(1.0));

  std::vector<float> all{kNegInf, kNegInf, kNegInf, kNegInf};
  Tensor full(all, {1, 1, 1, 4});
  opts.mask = &full;
  CHECK_THROWS_AS(fused_attention_softmax(Tensor(s, {1, 1, 1, 4}), opts,
                                          Tensor(out, {1, 1, 1, 4})),
                  FullMaskError);
  CHECK_THROWS_AS(naive_attention_softmax(Tensor(s, {1, 1, 1, 4}), opts,
                                          Tensor(out, {1, 1, 1, 4})),
                  FullMaskError);

  std::vector<float> bad{0, 1, 0, 0};
  Tensor bad_mask(bad, {1, 1, 1, 4});
  opts.mask = &bad_mask;
  CHECK_THROWS_AS(fused_attention_softmax(Tensor(s, {1, 1, 1, 4}), opts,
                                          Tensor(out, {1, 1, 1, 4})),
                  ParameterError);
}

TEST_CASE("causal softmax matches the oracle") {
  std::mt19937_64 rng(5);
  const size_t heads = 2, q = 3, k = 5;
  auto s = oracle::random_floats(rng, heads * q * k, -3, 3);
  std::vector<float> out(s.size());
  SoftmaxOptions opts;
  opts.causal = true;
  opts.scale = 0.5f;
  fused_attention_softmax(Tensor(s, {1, heads, q, k}), opts,
                          Tensor(out, {1, heads, q, k}));
  const auto want = oracle::softmax_rows(
      s, heads * q, k, 0.5, [&](size_t r, size_t j) { return j <= r % q + (k - q); });
  CHECK(oracle::max_rel_error(out, want) <= 1e-6);
}

TEST_CASE("gelu is the exact erf form") {
  CHECK(gelu(1.0f) == doctest::Approx(0.841345).epsilon(1e-6));
  CHECK(gelu(0.0f) == 0.0f);
  for (float x = -6.0f; x <= 6.0f; x += 0.125f) {
    CHECK(std::abs(gelu(x) - oracle::gelu(x)) <= 1e-6);
  }
  // The tanh approximation gives 0.841192 at 1; the erf form differs.
  CHECK(std::abs(gelu(1.0f) - 0.841192f) > 1e-4);
}

TEST_CASE("activations") {
  CHECK(parse_activation("relu") == Activation::kRelu);
  CHECK(activation_name(Activation::kGelu) == "gelu");
  CHECK_THROWS_AS(parse_activation("swish"), ParameterError);
}

TEST_CASE("fused kernels count one pass of their kind") {
  std::mt19937_64 rng(1);
  const size_t n = 4, d = 8;
  auto x = oracle::random_floats(rng, n * d);
  auto r = oracle::random_floats(rng, n * d);
  auto bias = oracle::random_floats(rng, d);
  std::vector<float> g(d, 1.0f), b(d, 0.0f), out(n * d);
  Counted c;
  fused_layer_norm(Tensor(x, {n, d}), Tensor(g, {d}), Tensor(b, {d}), 1e-5f,
                   Tensor(out, {n, d}));
  Tensor res(r, {n, d});
  fused_bias_residual_activation(Tensor(x, {n, d}), Tensor(bias, {d}), &res,
                                 Activation::kNone, Tensor(out, {n, d}),
                                 FusedPassKind::kAttnOutputBiasResidual);
  fused_bias_residual_layer_norm(Tensor(x, {n, d}), Tensor(bias, {d}), res,
                                 Tensor(g, {d}), Tensor(b, {d}), 1e-5f,
                                 Tensor(out, {n, d}));
  const OpCounters got = c.get();
  CHECK(got.fused_passes == 3);
  CHECK(got.naive_passes == 0);
  CHECK(got.materialized_intermediates == 0);
  CHECK(got.fused_by_kind[size_t(FusedPassKind::kLayerNorm)] == 1);
  CHECK(got.fused_by_kind[size_t(FusedPassKind::kAttnOutputBiasResidual)] == 1);
  CHECK(got.fused_by_kind[size_t(FusedPassKind::kFfnBiasResidual)] == 1);
}

TEST_CASE("naive layer norm materializes 2 intermediates in 3 passes") {
  std::vector<float> x{1, 2, 3, 4, 5, 6}, g{1, 1, 1}, b{0, 0, 0}, out(6);
  Counted c;
  naive_layer_norm(Tensor(x, {2, 3}), Tensor(g, {3}), Tensor(b, {3}), 0.0f,
                   Tensor(out, {2, 3}));
  CHECK(c.get().naive_passes == 3);
  CHECK(c.get().materialized_intermediates == 2);
  CHECK(c.get().fused_passes == 0);
}

TEST_CASE("naive pass decomposition") {
  std::mt19937_64 rng(2);
  const size_t n = 4, d = 12;
  auto x = oracle::random_floats(rng, n * d);
  auto r = oracle::random_floats(rng, n * d);
  auto bias = oracle::random_floats(rng, d);
  std::vector<float> g(d, 1.0f), b(d, 0.0f), out(n * d);
  Tensor res(r, {n, d});
  {
    Counted c;
    naive_bias_residual_activation(Tensor(x, {n, d}), Tensor(bias, {d}), &res,
                                   Activation::kRelu, Tensor(out, {n, d}));
    CHECK(c.get().naive_passes == 3);
  }
  {
    Counted c;
    naive_bias_residual_activation(Tensor(x, {n, d}), Tensor(bias, {d}), nullptr,
                                   Activation::kRelu, Tensor(out, {n, d}));
    CHECK(c.get().naive_passes == 2);
  }
  {
    Counted c;
    naive_bias_residual_layer_norm(Tensor(x, {n, d}), Tensor(bias, {d}), res,
                                   Tensor(g, {d}), Tensor(b, {d}), 1e-5f,
                                   Tensor(out, {n, d}));
    CHECK(c.get().naive_passes == 5);
  }
  {
    std::vector<float> s(2 * 3 * 4), mask(2 * 4, 0.0f), p(s.size());
    Tensor m(mask, {2, 1, 1, 4});
    SoftmaxOptions opts;
    opts.mask = &m;
    Counted c;
    naive_attention_softmax(Tensor(s, {2, 1, 3, 4}), opts, Tensor(p, {2, 1, 3, 4}));
    CHECK(c.get().naive_passes == 7);
    CHECK(c.get().materialized_intermediates == 6);
  }
  {
    // [B*S, 3 * H * hd] with B = 2, S = 2, H = 2, hd = 2.
    auto qkv = oracle::random_floats(rng, 4 * 12);
    std::vector<float> qs(16), ks(16), vs(16);
    const std::vector<Tensor> dsts{Tensor(qs, {2, 2, 2, 2}), Tensor(ks, {2, 2, 2, 2}),
                                   Tensor(vs, {2, 2, 2, 2})};
    Counted c;
    naive_bias_split_heads(Tensor(qkv, {4, 12}), Tensor(bias, {12}), 2, dsts);
    CHECK(c.get().naive_passes == 5);
  }
}

TEST_CASE("split heads places every element and honors positions") {
  std::mt19937_64 rng(4);
  const size_t batch = 2, seq = 3, heads = 2, hd = 3, d = heads * hd;
  auto x = oracle::random_floats(rng, batch * seq * 2 * d);
  auto bias = oracle::random_floats(rng, 2 * d);
  const size_t len = 5;
  for (bool fused : {true, false}) {
    std::vector<float> k(batch * heads * len * hd, 0.0f), v(k.size(), 0.0f);
    const std::vector<Tensor> dsts{Tensor(k, {batch, heads, len, hd}),
                                   Tensor(v, {batch, heads, len, hd})};
    const std::vector<size_t> pos{1, 2};
    if (fused) {
      fused_bias_split_heads(Tensor(x, {batch * seq, 2 * d}), Tensor(bias, {2 * d}),
                             seq, dsts, pos);
    } else {
      naive_bias_split_heads(Tensor(x, {batch * seq, 2 * d}), Tensor(bias, {2 * d}),
                             seq, dsts, pos);
    }
    for (size_t c = 0; c < 2; ++c) {
      const std::vector<float>& dst = c == 0 ? k : v;
      for (size_t b = 0; b < batch; ++b) {
        for (size_t s = 0; s < seq; ++s) {
          for (size_t h = 0; h < heads; ++h) {
            for (size_t e = 0; e < hd; ++e) {
              const size_t col = c * d + h * hd + e;
              const float want = x[(b * seq + s) * 2 * d + col] + bias[col];
              CHECK(dst[((b * heads + h) * len + pos[c] + s) * hd + e] == want);
            }
          }
        }
      }
    }
    // Position 0 of the key cache was never written.
    CHECK(k[0] == 0.0f);
  }
  std::vector<float> small(batch * heads * 2 * hd);
  const std::vector<Tensor> bad{Tensor(small, {batch, heads, 2, hd}),
                                Tensor(small, {batch, heads, 2, hd})};
  CHECK_THROWS_AS(fused_bias_split_heads(Tensor(x, {batch * seq, 2 * d}),
                                         Tensor(bias, {2 * d}), seq, bad),
                  DimensionError);
}

TEST_CASE("merge heads inverts the head-major layout") {
  std::vector<float> heads(2 * 3 * 4 * 5);
  for (size_t i = 0; i < heads.size(); ++i) heads[i] = float(i);
  std::vector<float> out(heads.size());
  naive_merge_heads(Tensor(heads, {2, 3, 4, 5}), Tensor(out, {8, 15}));
  for (size_t b = 0; b < 2; ++b)
    for (size_t h = 0; h < 3; ++h)
      for (size_t s = 0; s < 4; ++s)
        for (size_t e = 0; e < 5; ++e)
          CHECK(out[(b * 4 + s) * 15 + h * 5 + e] ==
                heads[((b * 3 + h) * 4 + s) * 5 + e]);
  CHECK_THROWS_AS(naive_merge_heads(Tensor(heads, {2, 3, 4, 5}), Tensor(out, {8, 14})),
                  DimensionError);
}

TEST_CASE("fused and naive kernels agree with the oracles on random shapes") {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 60; ++trial) {
    const size_t n = 1 + rng() % 17, d = 1 + rng() % 40;
    auto x = oracle::random_floats(rng, n * d, -4, 4);
    auto r = oracle::random_floats(rng, n * d);
    auto bias = oracle::random_floats(rng, d);
    auto g = oracle::random_floats(rng, d, 0.5f, 1.5f);
    auto be = oracle::random_floats(rng, d);
    const float eps = 1e-5f;
    std::vector<float> fused(n * d), naive(n * d);

    fused_layer_norm(Tensor(x, {n, d}), Tensor(g, {d}), Tensor(be, {d}), eps,
                     Tensor(fused, {n, d}));
    naive_layer_norm(Tensor(x, {n, d}), Tensor(g, {d}), Tensor(be, {d}), eps,
                     Tensor(naive, {n, d}));
    CHECK(fused == naive);
    CHECK(oracle::max_rel_error(fused, oracle::layer_norm(x, n, d, g, be, eps)) <=
          1e-5);

    Tensor res(r, {n, d});
    for (Activation act : {Activation::kNone, Activation::kRelu, Activation::kGelu}) {
      fused_bias_residual_activation(Tensor(x, {n, d}), Tensor(bias, {d}), &res, act,
                                     Tensor(fused, {n, d}));
      naive_bias_residual_activation(Tensor(x, {n, d}), Tensor(bias, {d}), &res, act,
                                     Tensor(naive, {n, d}));
      CHECK(fused == naive);
      oracle::Vec want(n * d);
      for (size_t i = 0; i < n * d; ++i) {
        want[i] = oracle::activate(double(x[i]) + bias[i % d], act) + r[i];
      }
      CHECK(oracle::max_rel_error(fused, want) <= 1e-5);
    }

    fused_bias_residual_layer_norm(Tensor(x, {n, d}), Tensor(bias, {d}), res,
                                   Tensor(g, {d}), Tensor(be, {d}), eps,
                                   Tensor(fused, {n, d}));
    naive_bias_residual_layer_norm(Tensor(x, {n, d}), Tensor(bias, {d}), res,
                                   Tensor(g, {d}), Tensor(be, {d}), eps,
                                   Tensor(naive, {n, d}));
    CHECK(fused == naive);
    oracle::Vec summed(n * d);
    for (size_t i = 0; i < n * d; ++i) summed[i] = double(x[i]) + bias[i % d] + r[i];
    CHECK(oracle::max_rel_error(fused, oracle::layer_norm(summed, n, d, g, be, eps)) <=
          1e-5);

    const size_t b = 1 + rng() % 3, h = 1 + rng() % 3, q = 1 + rng() % 6,
                 k = q + rng() % 6;
    auto s = oracle::random_floats(rng, b * h * q * k, -5, 5);
    std::vector<float> mask(b * k, 0.0f);
    for (size_t i = 0; i < b; ++i) {
      for (size_t j = 1; j < k; ++j) {
        if (rng() % 3 == 0) mask[i * k + j] = kNegInf;
      }
    }
    Tensor m(mask, {b, 1, 1, k});
    SoftmaxOptions opts;
    opts.mask = &m;
    opts.scale = 0.25f;
    std::vector<float> pf(s.size()), pn(s.size());
    fused_attention_softmax(Tensor(s, {b, h, q, k}), opts, Tensor(pf, {b, h, q, k}));
    naive_attention_softmax(Tensor(s, {b, h, q, k}), opts, Tensor(pn, {b, h, q, k}));
    CHECK(oracle::max_rel_error(pf, pn) <= 1e-6);
    const auto want = oracle::softmax_rows(s, b * h * q, k, 0.25, [&](size_t row, size_t j) {
      return mask[(row / (h * q)) * k + j] == 0.0f;
    });
    CHECK(oracle::max_rel_error(pf, want) <= 1e-5);
  }
}

TEST_CASE("in-place fused ops are allowed") {
  std::vector<float> x{1, 2, 3, 4}, bias{1, 1};
  fused_bias_residual_activation(Tensor(x, {2, 2}), Tensor(bias, {2}), nullptr,
                                 Activation::kNone, Tensor(x, {2, 2}));
  CHECK(x == std::vector<float>{2, 3, 4, 5});
}

}  // TEST_SUITE
