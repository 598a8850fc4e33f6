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

#include "fuseq/tensor.h"

#include <atomic>
#include <cstdlib>
#include <functional>
#include <new>
#include <numeric>

#include "fuseq/errors.h"

namespace fuseq {

Shape::Shape(std::initializer_list<size_t> dims) {
  if (dims.size() > kMaxRank) {
    throw DimensionError("rank " + std::to_string(dims.size()) +
                         " exceeds maximum rank 4");
  }
  for (size_t d : dims) dims_[rank_++] = d;
}

size_t Shape::numel() const {
  if (rank_ == 0) return 0;
  size_t n = 1;
  for (size_t i = 0; i < rank_; ++i) n *= dims_[i];
  return n;
}

std::string Shape::str() const {
  std::string s = "[";
  for (size_t i = 0; i < rank_; ++i) {
    if (i) s += "x";
    s += std::to_string(dims_[i]);
  }
  return s + "]";
}

bool Shape::operator==(const Shape& other) const {
  if (rank_ != other.rank_) return false;
  for (size_t i = 0; i < rank_; ++i) {
    if (dims_[i] != other.dims_[i]) return false;
  }
  return true;
}

Tensor::Tensor(std::span<float> storage, Shape shape)
    : storage_(storage), shape_(shape) {
  if (shape_.numel() > storage_.size()) {
    throw CapacityError("tensor of shape " + shape_.str() + " needs " +
                        std::to_string(shape_.numel()) +
                        " elements, storage holds " +
                        std::to_string(storage_.size()));
  }
  size_t stride = 1;
  for (size_t i = shape_.rank(); i-- > 0;) {
    strides_[i] = stride;
    stride *= shape_[i];
  }
}

size_t Tensor::rows() const {
  if (shape_.rank() == 0) return 0;
  size_t n = 1;
  for (size_t i = 0; i + 1 < shape_.rank(); ++i) n *= shape_[i];
  return n;
}

std::span<float> Tensor::row(size_t i) const {
  return storage_.subspan(i * cols(), cols());
}

Tensor Tensor::reshape(Shape shape) const {
  if (shape.numel() != numel()) {
    throw DimensionError("cannot reshape " + shape_.str() + " to " +
                         shape.str());
  }
  return Tensor(storage_, shape);
}

Tensor Tensor::slice_rows(size_t begin, size_t count) const {
  if (begin + count > rows()) {
    throw DimensionError("row slice out of range for " + shape_.str());
  }
  return Tensor(storage_.subspan(begin * cols(), count * cols()),
                Shape{count, cols()});
}

Tensor Tensor::view_at(size_t offset, Shape shape) const {
  if (offset > storage_.size()) {
    throw CapacityError("view offset " + std::to_string(offset) +
                        " beyond storage of " + std::to_string(storage_.size()));
  }
  return Tensor(storage_.subspan(offset), shape);
}

bool overlaps(std::span<const float> a, std::span<const float> b) {
  if (a.empty() || b.empty()) return false;
  std::less<const float*> lt;
  return lt(a.data(), b.data() + b.size()) && lt(b.data(), a.data() + a.size());
}

namespace {
std::atomic<uint64_t> g_allocations{0};
std::atomic<uint64_t> g_bytes{0};
}  // namespace

uint64_t AllocationCounter::allocations() {
  return g_allocations.load(std::memory_order_relaxed);
}
uint64_t AllocationCounter::bytes() {
  return g_bytes.load(std::memory_order_relaxed);
}
void AllocationCounter::record(size_t bytes) {
  g_allocations.fetch_add(1, std::memory_order_relaxed);
  g_bytes.fetch_add(bytes, std::memory_order_relaxed);
}

Buffer::Buffer(size_t elements) : size_(elements) {
  if (elements == 0) return;
  size_t bytes = (elements * sizeof(float) + 63) / 64 * 64;
  void* p = std::aligned_alloc(64, bytes);
  if (!p) throw std::bad_alloc();
  AllocationCounter::record(bytes);
  data_.reset(static_cast<float*>(p));
}

void Buffer::Free::operator()(float* p) const { std::free(p); }

}  // namespace fuseq
