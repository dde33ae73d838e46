// Copyright 2026 The dynalab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "dynalab/core/tensor.hpp"

namespace dynalab {

/// A rows × cols block of token ids. Training batches are (batch, seq_len + 1).
struct TokenBatch {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::uint32_t> ids;

  TokenBatch() = default;
  TokenBatch(std::size_t r, std::size_t c, std::vector<std::uint32_t> v);

  std::uint32_t operator()(std::size_t r, std::size_t c) const { return ids[r * cols + c]; }
  std::uint32_t& operator()(std::size_t r, std::size_t c) { return ids[r * cols + c]; }
  std::span<const std::uint32_t> row(std::size_t r) const { return {ids.data() + r * cols, cols}; }

  Tensor to_tensor() const;
  static TokenBatch from_tensor(const Tensor& t);

  bool operator==(const TokenBatch&) const = default;
};

/// Row-wise concatenation of batches with equal width.
TokenBatch concat_rows(std::span<const TokenBatch> parts);

}  // namespace dynalab
