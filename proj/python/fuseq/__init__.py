# Copyright (c) 2026, The fuseq Authors.  All rights reserved.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""Python bindings for the fuseq inference engine."""

from ._core import (
    AliasingError,
    CapacityError,
    ConsistencyError,
    DecodeConfig,
    DimensionError,
    FormatError,
    FullMaskError,
    FuseqError,
    Hypothesis,
    InputError,
    Model,
    ModelConfig,
    ParameterError,
    PlanError,
    Session,
    argmax_output,
    bench,
    execution_plan,
    logsumexp,
    perplexity,
    retrieve,
    sample_top_k,
    sample_top_p,
)

__all__ = [
    "AliasingError",
    "CapacityError",
    "ConsistencyError",
    "DecodeConfig",
    "DimensionError",
    "FormatError",
    "FullMaskError",
    "FuseqError",
    "Hypothesis",
    "InputError",
    "Model",
    "ModelConfig",
    "ParameterError",
    "PlanError",
    "Session",
    "argmax_output",
    "bench",
    "execution_plan",
    "logsumexp",
    "perplexity",
    "retrieve",
    "sample_top_k",
    "sample_top_p",
]
