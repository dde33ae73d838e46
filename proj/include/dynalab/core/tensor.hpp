// Copyright 2026 The dynalab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "dynalab/core/matrix.hpp"

namespace dynalab {

/// Storage dtype. The numeric codes are part of the container format.
enum class DType : std::uint32_t { kF32 = 0, kF64 = 1, kU32 = 2 };

std::size_t dtype_size(DType dtype);
std::string_view dtype_name(DType dtype);

using Shape = std::vector<std::size_t>;

std::size_t shape_elements(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Dense row-major n-dimensional array. Arithmetic never happens on a Tensor
/// directly; callers convert to Matrix (f64) for that.
class Tensor {
 public:
  Tensor() = default;

  static Tensor f32(Shape shape, std::vector<float> values);
  static Tensor f64(Shape shape, std::vector<double> values);
  static Tensor u32(Shape shape, std::vector<std::uint32_t> values);
  static Tensor zeros(DType dtype, Shape shape);

  /// Stores `m` as f64 under `shape` (same element count as m).
  static Tensor from_matrix(const Matrix& m, Shape shape);
  static Tensor from_matrix(const Matrix& m);

  DType dtype() const noexcept { return dtype_; }
  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t elements() const noexcept { return shape_elements(shape_); }
  std::size_t nbytes() const noexcept { return elements() * dtype_size(dtype_); }

  template <typename T>
  std::span<const T> values() const {
    return std::get<std::vector<T>>(data_);
  }
  template <typename T>
  std::span<T> values() {
    return std::get<std::vector<T>>(data_);
  }

  /// Raw little-endian bytes (the host is required to be little-endian).
  std::span<const std::byte> bytes() const;
  std::span<std::byte> mutable_bytes();

  /// Every element widened to f64.
  std::vector<double> to_f64() const;

  /// Flattens to (first dim × rest). Rank-1 tensors become a column.
  Matrix as_matrix() const;
  /// Flattens to (product of leading dims × last dim).
  Matrix as_feature_matrix() const;

  bool bitwise_equal(const Tensor& other) const;

 private:
  Tensor(DType dtype, Shape shape);

  DType dtype_ = DType::kF64;
  Shape shape_;
  std::variant<std::vector<float>, std::vector<double>, std::vector<std::uint32_t>> data_;
};

/// Named tensors in sorted-name order, the unit every container file holds.
using TensorMap = std::map<std::string, Tensor>;

}  // namespace dynalab
