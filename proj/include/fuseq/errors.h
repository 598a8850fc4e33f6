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

#include <stdexcept>
#include <string>
#include <string_view>

namespace fuseq {

enum class ErrorKind {
  kDimension,
  kAliasing,
  kPlan,
  kCapacity,
  kFullMask,
  kInput,
  kFormat,
  kConsistency,
  kParameter,
};

std::string_view error_kind_name(ErrorKind kind);

/// Base of every exception thrown by the library. The kind lets callers
/// (the CLI in particular) map failures to exit codes without RTTI chains.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what);
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

#define FUSEQ_DEFINE_ERROR(Name, Kind)                                   \
  class Name : public Error {                                            \
   public:                                                               \
    explicit Name(const std::string& what) : Error(ErrorKind::Kind, what) {} \
  };

FUSEQ_DEFINE_ERROR(DimensionError, kDimension)
FUSEQ_DEFINE_ERROR(AliasingError, kAliasing)
FUSEQ_DEFINE_ERROR(PlanError, kPlan)
FUSEQ_DEFINE_ERROR(CapacityError, kCapacity)
FUSEQ_DEFINE_ERROR(FullMaskError, kFullMask)
FUSEQ_DEFINE_ERROR(InputError, kInput)
FUSEQ_DEFINE_ERROR(FormatError, kFormat)
FUSEQ_DEFINE_ERROR(ConsistencyError, kConsistency)
FUSEQ_DEFINE_ERROR(ParameterError, kParameter)

#undef FUSEQ_DEFINE_ERROR

}  // namespace fuseq
