// Copyright 2026 The dynalab Authors
// SPDX-License-Identifier: Apache-2.0

#include "dynalab/core/tensor.hpp"

#include <bit>
#include <cstring>

#include "dynalab/core/error.hpp"

static_assert(std::endian::native == std::endian::little,
              "tensor payloads are serialized as host memory; big-endian hosts are unsupported");

namespace dynalab {

std::size_t dtype_size(DType dtype) {
  switch (dtype) {
    case DType::kF32: return 4;
    case DType::kF64: return 8;
    case DType::kU32: return 4;
  }
  throw ValidationError("unknown dtype code " + std::to_string(static_cast<std::uint32_t>(dtype)));
}

std::string_view dtype_name(DType dtype) {
  switch (dtype) {
    case DType::kF32: return "f32";
    case DType::kF64: return "f64";
    case DType::kU32: return "u32";
  }
  return "?";
}

std::size_t shape_elements(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return shape.empty() ? 0 : n;
}

std::string shape_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

namespace {

void check_shape(const Shape& shape, std::size_t count) {
  if (shape.empty()) throw DimensionError("tensor shape must have rank >= 1");
  for (auto d : shape) {
    if (d == 0) throw DimensionError("tensor dimensions must be positive, got " + shape_string(shape));
  }
  if (shape_elements(shape) != count) {
    throw DimensionError("tensor shape " + shape_string(shape) + " does not match " +
                         std::to_string(count) + " elements");
  }
}

}  // namespace

Tensor::Tensor(DType dtype, Shape shape) : dtype_(dtype), shape_(std::move(shape)) {}

Tensor Tensor::f32(Shape shape, std::vector<float> values) {
  check_shape(shape, values.size());
  Tensor t(DType::kF32, std::move(shape));
  t.data_ = std::move(values);
  return t;
}

Tensor Tensor::f64(Shape shape, std::vector<double> values) {
  check_shape(shape, values.size());
  Tensor t(DType::kF64, std::move(shape));
  t.data_ = std::move(values);
  return t;
}

Tensor Tensor::u32(Shape shape, std::vector<std::uint32_t> values) {
  check_shape(shape, values.size());
  Tensor t(DType::kU32, std::move(shape));
  t.data_ = std::move(values);
  return t;
}

Tensor Tensor::zeros(DType dtype, Shape shape) {
  const std::size_t n = shape_elements(shape);
  switch (dtype) {
    case DType::kF32: return f32(std::move(shape), std::vector<float>(n, 0.0f));
    case DType::kF64: return f64(std::move(shape), std::vector<double>(n, 0.0));
    case DType::kU32: return u32(std::move(shape), std::vector<std::uint32_t>(n, 0));
  }
  throw ValidationError("unknown dtype");
}

Tensor Tensor::from_matrix(const Matrix& m, Shape shape) {
  return f64(std::move(shape), std::vector<double>(m.values().begin(), m.values().end()));
}

Tensor Tensor::from_matrix(const Matrix& m) { return from_matrix(m, Shape{m.rows(), m.cols()}); }

std::span<const std::byte> Tensor::bytes() const {
  return std::visit([](const auto& v) { return std::as_bytes(std::span(v)); }, data_);
}

std::span<std::byte> Tensor::mutable_bytes() {
  return std::visit([](auto& v) { return std::as_writable_bytes(std::span(v)); }, data_);
}

std::vector<double> Tensor::to_f64() const {
  return std::visit(
      [](const auto& v) { return std::vector<double>(v.begin(), v.end()); }, data_);
}

Matrix Tensor::as_matrix() const {
  if (shape_.empty()) return {};
  const std::size_t rows = shape_[0];
  const std::size_t cols = elements() / rows;
  return Matrix(rows, cols, to_f64());
}

Matrix Tensor::as_feature_matrix() const {
  if (shape_.empty()) return {};
  const std::size_t cols = shape_.back();
  return Matrix(elements() / cols, cols, to_f64());
}

bool Tensor::bitwise_equal(const Tensor& other) const {
  if (dtype_ != other.dtype_ || shape_ != other.shape_) return false;
  auto a = bytes();
  auto b = other.bytes();
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size()) == 0;
}

}  // namespace dynalab
