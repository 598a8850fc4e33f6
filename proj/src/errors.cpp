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

#include "fuseq/errors.h"

namespace fuseq {

std::string_view error_kind_name(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kDimension: return "dimension";
    case ErrorKind::kAliasing: return "aliasing";
    case ErrorKind::kPlan: return "plan";
    case ErrorKind::kCapacity: return "capacity";
    case ErrorKind::kFullMask: return "full_mask";
    case ErrorKind::kInput: return "input";
    case ErrorKind::kFormat: return "format";
    case ErrorKind::kConsistency: return "consistency";
    case ErrorKind::kParameter: return "parameter";
  }
  return "unknown";
}

Error::Error(ErrorKind kind, const std::string& what)
    : std::runtime_error(what), kind_(kind) {}

}  // namespace fuseq
