// Copyright 2026 The dynalab Authors
// SPDX-License-Identifier: Apache-2.0

#include "dynalab/data/tokenizer.hpp"

#include "dynalab/core/error.hpp"

namespace dynalab::data {

void TokenStream::check_vocab(std::size_t vocab_size) const {
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] >= vocab_size) {
      throw DataError("token id " + std::to_string(ids[i]) + " at position " + std::to_string(i) +
                      " is outside vocab_size " + std::to_string(vocab_size));
    }
  }
}

TokenStream tokenize(std::span<const std::byte> bytes) {
  TokenStream out;
  out.ids.reserve(bytes.size());
  for (std::byte b : bytes) out.ids.push_back(static_cast<std::uint32_t>(b));
  return out;
}

TokenStream tokenize(std::string_view text) {
  return tokenize(std::as_bytes(std::span<const char>(text.data(), text.size())));
}

TokenStream tokenize_documents(std::span<const std::string> documents) {
  TokenStream out;
  for (std::size_t d = 0; d < documents.size(); ++d) {
    if (d > 0) out.ids.push_back(kEndOfText);
    for (unsigned char c : documents[d]) out.ids.push_back(c);
  }
  return out;
}

std::string detokenize(std::span<const std::uint32_t> ids) {
  std::string out;
  out.reserve(ids.size());
  for (std::uint32_t id : ids) {
    if (id < 256) {
      out.push_back(static_cast<char>(static_cast<unsigned char>(id)));
    } else if (id != kEndOfText && id != kPad) {
      throw DataError("id " + std::to_string(id) + " has no byte-level meaning");
    }
  }
  return out;
}

}  // namespace dynalab::data
