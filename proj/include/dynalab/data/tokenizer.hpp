// Copyright 2026 The dynalab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace dynalab::data {

inline constexpr std::string_view kByteTokenizerId = "byte-level-v1";
inline constexpr std::string_view kPretokenizedId = "pretokenized";
inline constexpr std::uint32_t kEndOfText = 256;
inline constexpr std::uint32_t kPad = 257;
/// Smallest vocabulary that can hold every byte-level id.
inline constexpr std::size_t kByteVocabSize = 258;

struct TokenStream {
  std::vector<std::uint32_t> ids;
  std::string tokenizer_id{kByteTokenizerId};

  std::size_t size() const noexcept { return ids.size(); }
  /// Throws DataError naming the first id >= vocab_size.
  void check_vocab(std::size_t vocab_size) const;
};

TokenStream tokenize(std::span<const std::byte> bytes);
TokenStream tokenize(std::string_view text);

/// Joins documents with kEndOfText between consecutive ones.
TokenStream tokenize_documents(std::span<const std::string> documents);

/// Inverse of tokenize; special ids are dropped, other ids >= 256 throw DataError.
std::string detokenize(std::span<const std::uint32_t> ids);

}  // namespace dynalab::data
