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

#include <array>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>

namespace fuseq {

inline constexpr size_t kMaxRank = 4;

/// Fixed-capacity dimension list. Building one never touches the heap, which
/// keeps tensor views usable on the zero-allocation decode path.
class Shape {
 public:
  Shape() = default;
  Shape(std::initializer_list<size_t> dims);

  size_t rank() const { return rank_; }
  size_t operator[](size_t i) const { return dims_[i]; }
  size_t numel() const;
  size_t back() const { return dims_[rank_ - 1]; }
  std::string str() const;

  bool operator==(const Shape& other) const;

 private:
  std::array<size_t, kMaxRank> dims_{};
  size_t rank_ = 0;
};

/// Row-major float32 view over storage owned elsewhere (an arena, a Buffer or
/// weight vectors). Copying a Tensor copies the view, never the data.
class Tensor {
 public:
  Tensor() = default;
  /// Throws CapacityError when the shape needs more elements than `storage`.
  Tensor(std::span<float> storage, Shape shape);

  const Shape& shape() const { return shape_; }
  size_t rank() const { return shape_.rank(); }
  size_t dim(size_t i) const { return shape_[i]; }
  size_t stride(size_t i) const { return strides_[i]; }
  size_t numel() const { return shape_.numel(); }
  size_t capacity() const { return storage_.size(); }
  bool empty() const { return storage_.empty(); }

  /// Product of all dimensions but the last.
  size_t rows() const;
  size_t cols() const { return shape_.rank() == 0 ? 0 : shape_.back(); }

  float* data() const { return storage_.data(); }
  std::span<float> values() const { return storage_.first(numel()); }
  std::span<float> row(size_t i) const;

  Tensor reshape(Shape shape) const;
  /// Leading rows [begin, begin + count) of a tensor viewed as rows x cols.
  Tensor slice_rows(size_t begin, size_t count) const;
  /// Sub-view of `shape` starting `offset` elements into the storage.
  Tensor view_at(size_t offset, Shape shape) const;

 private:
  std::span<float> storage_;
  Shape shape_;
  std::array<size_t, kMaxRank> strides_{};
};

/// Read-only view used for weights.
inline Tensor const_view(std::span<const float> data, Shape shape) {
  return Tensor(std::span<float>(const_cast<float*>(data.data()), data.size()),
                shape);
}

/// Returns true when the two byte ranges overlap.
bool overlaps(std::span<const float> a, std::span<const float> b);

/// Counts every storage allocation routed through Buffer. The fused engine
/// allocates only its arena at session construction, so this stays flat for
/// the lifetime of a warmed-up session.
class AllocationCounter {
 public:
  static uint64_t allocations();
  static uint64_t bytes();
  static void record(size_t bytes);
};

/// 64-byte aligned, uninitialized float storage.
class Buffer {
 public:
  Buffer() = default;
  explicit Buffer(size_t elements);

  size_t size() const { return size_; }
  float* data() const { return data_.get(); }
  std::span<float> span() const { return {data_.get(), size_}; }
  Tensor view(Shape shape) const { return Tensor(span(), shape); }

 private:
  struct Free {
    void operator()(float* p) const;
  };
  std::unique_ptr<float[], Free> data_;
  size_t size_ = 0;
};

}  // namespace fuseq
