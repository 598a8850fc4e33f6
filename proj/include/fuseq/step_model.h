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
#include <span>

#include "fuseq/tensor.h"

namespace fuseq {

/// Incremental next-token scorer driven by the search loop. Rows are laid out
/// request-major: row = request * slots + slot.
class StepModel {
 public:
  virtual ~StepModel() = default;

  virtual size_t vocab_size() const = 0;
  /// Requests in the current batch.
  virtual size_t batch_size() const = 0;
  /// Longest sequence a decode may reach.
  virtual size_t max_length() const = 0;

  /// Resets incremental state for a new decode with `slots` rows per request.
  virtual void start(size_t slots) = 0;
  /// Consumes one token per row and returns logits [rows x vocab]. The view
  /// stays valid until the next call.
  virtual Tensor step(std::span<const int32_t> tokens) = 0;
  /// Row r of the incremental state becomes a copy of row parent_rows[r].
  virtual void reorder(std::span<const int32_t> parent_rows) = 0;
};

}  // namespace fuseq
