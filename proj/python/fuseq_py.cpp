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

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <memory>
#include <string>
#include <vector>

#include "fuseq/bench.h"
#include "fuseq/decode.h"
#include "fuseq/errors.h"
#include "fuseq/graph.h"
#include "fuseq/memory_plan.h"
#include "fuseq/model.h"
#include "fuseq/session.h"

namespace py = pybind11;
using namespace fuseq;

namespace {

using IntArray = py::array_t<int32_t, py::array::c_style | py::array::forcecast>;
using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

py::object to_python(const nlohmann::json& j) {
  return py::module_::import("json").attr("loads")(j.dump());
}

TokenMatrix token_matrix(const IntArray& ids) {
  if (ids.ndim() != 2) throw DimensionError("token ids must be a 2-D array");
  return {std::span<const int32_t>(ids.data(), static_cast<size_t>(ids.size())),
          static_cast<size_t>(ids.shape(0)), static_cast<size_t>(ids.shape(1))};
}

py::array_t<float> to_numpy(const Tensor& t) {
  std::vector<py::ssize_t> shape;
  for (size_t i = 0; i < t.rank(); ++i) shape.push_back(static_cast<py::ssize_t>(t.dim(i)));
  py::array_t<float> out(shape);
  std::copy_n(t.data(), t.numel(), out.mutable_data());
  return out;
}

std::span<const float> row_span(const FloatArray& row) {
  if (row.ndim() != 1) throw DimensionError("expected a 1-D logits row");
  return {row.data(), static_cast<size_t>(row.size())};
}

/// Owns the model alongside the session so Python keeps both alive.
struct PySession {
  std::shared_ptr<const Model> model;
  std::unique_ptr<InferenceSession> session;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Fused seq2seq transformer inference engine";

  auto base = py::register_exception<Error>(m, "FuseqError", PyExc_RuntimeError);
  py::register_exception<DimensionError>(m, "DimensionError", base.ptr());
  py::register_exception<AliasingError>(m, "AliasingError", base.ptr());
  py::register_exception<PlanError>(m, "PlanError", base.ptr());
  py::register_exception<CapacityError>(m, "CapacityError", base.ptr());
  py::register_exception<FullMaskError>(m, "FullMaskError", base.ptr());
  py::register_exception<InputError>(m, "InputError", base.ptr());
  py::register_exception<FormatError>(m, "FormatError", base.ptr());
  py::register_exception<ConsistencyError>(m, "ConsistencyError", base.ptr());
  py::register_exception<ParameterError>(m, "ParameterError", base.ptr());

  py::class_<ModelConfig>(m, "ModelConfig")
      .def(py::init<>())
      .def_static("tiny", &ModelConfig::tiny)
      .def_static("base", &ModelConfig::base)
      .def_readwrite("num_encoder_layers", &ModelConfig::num_encoder_layers)
      .def_readwrite("num_decoder_layers", &ModelConfig::num_decoder_layers)
      .def_readwrite("d_model", &ModelConfig::d_model)
      .def_readwrite("d_ff", &ModelConfig::d_ff)
      .def_readwrite("num_heads", &ModelConfig::num_heads)
      .def_readwrite("vocab_size", &ModelConfig::vocab_size)
      .def_readwrite("max_batch", &ModelConfig::max_batch)
      .def_readwrite("max_seq_len", &ModelConfig::max_seq_len)
      .def_readwrite("max_beam_size", &ModelConfig::max_beam_size)
      .def_readwrite("num_labels", &ModelConfig::num_labels)
      .def_readwrite("tied_embedding", &ModelConfig::tied_embedding)
      .def_readwrite("layer_norm_eps", &ModelConfig::layer_norm_eps)
      .def_readwrite("pad_id", &ModelConfig::pad_id)
      .def_readwrite("bos_id", &ModelConfig::bos_id)
      .def_readwrite("eos_id", &ModelConfig::eos_id)
      .def_property(
          "activation",
          [](const ModelConfig& c) { return std::string(activation_name(c.activation)); },
          [](ModelConfig& c, const std::string& a) { c.activation = parse_activation(a); })
      .def("validate", &ModelConfig::validate)
      .def("to_dict", [](const ModelConfig& c) { return to_python(c.to_json()); });

  py::class_<Model, std::shared_ptr<Model>>(m, "Model")
      .def_static(
          "random",
          [](const ModelConfig& c, uint64_t seed) {
            return std::make_shared<Model>(Model::random(c, seed));
          },
          py::arg("config"), py::arg("seed") = 0)
      .def_static(
          "load", [](const std::string& path) {
            return std::make_shared<Model>(load_weights(path));
          })
      .def(
          "save",
          [](const Model& model, const std::string& path, bool fp16) {
            save_weights(model, path, fp16 ? StorageType::kFloat16 : StorageType::kFloat32);
          },
          py::arg("path"), py::arg("fp16") = false)
      .def_readonly("config", &Model::config);

  py::class_<DecodeConfig>(m, "DecodeConfig")
      .def(py::init<>())
      .def_property(
          "method",
          [](const DecodeConfig& c) { return std::string(decode_method_name(c.method)); },
          [](DecodeConfig& c, const std::string& s) { c.method = parse_decode_method(s); })
      .def_readwrite("beam_size", &DecodeConfig::beam_size)
      .def_readwrite("groups", &DecodeConfig::groups)
      .def_readwrite("diversity", &DecodeConfig::diversity)
      .def_readwrite("sample_k", &DecodeConfig::sample_k)
      .def_readwrite("sample_p", &DecodeConfig::sample_p)
      .def_readwrite("length_penalty", &DecodeConfig::length_penalty)
      .def_readwrite("max_steps", &DecodeConfig::max_steps)
      .def_readwrite("eos_token", &DecodeConfig::eos_token)
      .def_readwrite("bos_token", &DecodeConfig::bos_token)
      .def_readwrite("seed", &DecodeConfig::seed)
      .def_readwrite("exhaustive", &DecodeConfig::exhaustive);

  py::class_<Hypothesis>(m, "Hypothesis")
      .def_readonly("tokens", &Hypothesis::tokens)
      .def_readonly("score", &Hypothesis::score)
      .def_readonly("log_prob", &Hypothesis::log_prob);

  py::class_<PySession>(m, "Session")
      .def(py::init([](std::shared_ptr<Model> model, const std::string& engine,
                       bool share_memory) {
             auto s = std::make_unique<PySession>();
             s->model = model;
             s->session = std::make_unique<InferenceSession>(
                 model, SessionOptions{parse_engine(engine), share_memory
                                                                 ? PlanPolicy::kShared
                                                                 : PlanPolicy::kUnshared});
             return s;
           }),
           py::arg("model"), py::arg("engine") = "fused", py::arg("share_memory") = true)
      .def("encode",
           [](PySession& s, const IntArray& ids) {
             const TokenMatrix src = token_matrix(ids);
             return to_numpy(s.session->encode(src))
                 .reshape({static_cast<py::ssize_t>(src.rows),
                           static_cast<py::ssize_t>(src.cols),
                           static_cast<py::ssize_t>(s.model->config.d_model)});
           })
      .def("classify",
           [](PySession& s, const IntArray& ids) {
             return to_numpy(s.session->classify(token_matrix(ids)));
           })
      .def("decode",
           [](PySession& s, const IntArray& ids, const DecodeConfig& config) {
             ScopedCounters bind(s.session->counters());
             s.session->encode(token_matrix(ids));
             return decode(*s.session, config).hypotheses;
           })
      .def("counters",
           [](PySession& s) { return to_python(counters_to_json(s.session->counters().snapshot())); })
      .def("reset_counters", [](PySession& s) { s.session->counters().reset(); })
      .def("memory_plan", [](PySession& s) { return to_python(s.session->plan().report()); });

  m.def(
      "retrieve",
      [](const FloatArray& row, size_t k) {
        const std::span<const float> x = row_span(row);
        const RetrieveResult r = retrieve(const_view(x, {1, x.size()}), k);
        std::vector<std::pair<int32_t, float>> out;
        for (const Candidate& c : r.candidates(0)) out.emplace_back(c.token, c.logit);
        return py::make_tuple(out, r.threshold(0), r.logsumexp_full(0));
      },
      py::arg("logits"), py::arg("k"),
      "Candidates (token, logit), threshold R and log-sum-exp of one row.");
  m.def("logsumexp", [](const FloatArray& row) { return logsumexp(row_span(row)); });
  m.def("argmax_output", [](const FloatArray& row) { return argmax_output(row_span(row)); });
  m.def("perplexity", [](const FloatArray& logits, const IntArray& targets) {
    if (logits.ndim() != 2 || targets.ndim() != 1) {
      throw DimensionError("perplexity expects [T x vocab] logits and [T] targets");
    }
    return perplexity(
        const_view({logits.data(), static_cast<size_t>(logits.size())},
                   {static_cast<size_t>(logits.shape(0)), static_cast<size_t>(logits.shape(1))}),
        {targets.data(), static_cast<size_t>(targets.size())});
  });
  m.def(
      "sample_top_k",
      [](const FloatArray& row, size_t k, uint64_t seed) {
        std::mt19937_64 rng(seed);
        SampleWorkspace ws;
        const Sample s = sample_top_k(row_span(row), k, rng, ws);
        return py::make_tuple(s.token, s.log_prob);
      },
      py::arg("logits"), py::arg("k"), py::arg("seed") = 0);
  m.def(
      "sample_top_p",
      [](const FloatArray& row, double p, uint64_t seed) {
        std::mt19937_64 rng(seed);
        SampleWorkspace ws;
        const Sample s = sample_top_p(row_span(row), p, rng, ws);
        return py::make_tuple(s.token, s.log_prob);
      },
      py::arg("logits"), py::arg("p"), py::arg("seed") = 0);

  m.def(
      "bench",
      [](std::shared_ptr<Model> model, const std::string& engine, const std::string& task,
         const DecodeConfig& decode, size_t batch, size_t seq_len, size_t reps,
         size_t warmup, uint64_t seed) {
        BenchOptions o;
        o.engine = parse_engine(engine);
        o.task = parse_task(task);
        o.decode = decode;
        o.batch = batch;
        o.seq_len = seq_len;
        o.reps = reps;
        o.warmup = warmup;
        o.seed = seed;
        ProfileReport r;
        {
          py::gil_scoped_release release;
          r = run_bench(model, o);
        }
        return to_python(r.to_json());
      },
      py::arg("model"), py::arg("engine") = "fused", py::arg("task") = "translate",
      py::arg("decode") = DecodeConfig{}, py::arg("batch") = 1, py::arg("seq_len") = 16,
      py::arg("reps") = 5, py::arg("warmup") = 1, py::arg("seed") = 0,
      "Runs the benchmark and returns the profile report as a dict.");

  m.def("execution_plan", [](const ModelConfig& config, bool share_memory) {
    const ExecutionGraph g = build_execution_graph(config);
    const MemoryPlan plan = share_memory ? build_plan(g.specs) : build_unshared_plan(g.specs);
    return to_python(plan.report());
  }, py::arg("config"), py::arg("share_memory") = true);
}
