// Copyright 2026 The dynalab Authors
// SPDX-License-Identifier: Apache-2.0

#include "dynalab/core/tokens.hpp"

#include "dynalab/core/error.hpp"

namespace dynalab {

TokenBatch::TokenBatch(std::size_t r, std::size_t c, std::vector<std::uint32_t> v)
    : rows(r), cols(c), ids(std::move(v)) {
  if (ids.size() != rows * cols) throw DimensionError("TokenBatch: size does not match shape");
}

Tensor TokenBatch::to_tensor() const { return Tensor::u32({rows, cols}, ids); }

TokenBatch TokenBatch::from_tensor(const Tensor& t) {
  if (t.dtype() != DType::kU32 || t.rank() != 2) {
    throw DataError("token tensor must be rank-2 u32, got " + std::string(dtype_name(t.dtype())) +
                    " " + shape_string(t.shape()));
  }
  auto v = t.values<std::uint32_t>();
  return TokenBatch(t.shape()[0], t.shape()[1], std::vector<std::uint32_t>(v.begin(), v.end()));
}

TokenBatch concat_rows(std::span<const TokenBatch> parts) {
  TokenBatch out;
  for (const auto& p : parts) {
    if (out.cols == 0) out.cols = p.cols;
    if (p.cols != out.cols) throw DimensionError("concat_rows: width mismatch");
    out.rows += p.rows;
    out.ids.insert(out.ids.end(), p.ids.begin(), p.ids.end());
  }
  return out;
}

}  // namespace dynalab
