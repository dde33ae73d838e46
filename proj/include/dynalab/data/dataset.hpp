// Copyright 2026 The dynalab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "dynalab/core/tokens.hpp"
#include "dynalab/data/tokenizer.hpp"

namespace dynalab::data {

struct ChunkResult {
  TokenBatch sequences;  // rows × (seq_len + 1)
  std::size_t dropped_tokens = 0;
};

/// Non-overlapping windows of seq_len + 1 tokens in stream order; the
/// remainder is dropped.
ChunkResult chunk(std::span<const std::uint32_t> ids, std::size_t seq_len);

struct Shard {
  std::size_t index = 0;
  TokenBatch sequences;
  std::string digest;  // SHA-256 of the encoded shard file

  /// Container bytes holding a single u32 entry "tokens".
  std::vector<std::byte> encode() const;
  static Shard decode(std::size_t index, std::span<const std::byte> bytes);
};

std::string shard_digest(const TokenBatch& sequences);

/// Seeded Fisher-Yates over rows, then a contiguous split: shard i holds rows
/// [floor(i·N/K), floor((i+1)·N/K)).
std::vector<Shard> shuffle_and_shard(const TokenBatch& sequences, std::size_t n_shards, std::uint64_t seed);

/// Fisher-Yates permutation of [0, n) driven by Rng(seed).
std::vector<std::size_t> permutation(std::size_t n, std::uint64_t seed);

std::string shard_file_name(std::size_t index);

struct ShardRecord {
  std::string file;
  std::size_t rows = 0;
  std::string sha256;
};

struct DatasetManifest {
  std::uint32_t format_version = 1;
  std::string tokenizer_id;
  std::size_t seq_len = 0;
  std::uint64_t seed = 0;
  std::size_t total_tokens = 0;
  std::size_t dropped_tokens = 0;
  std::size_t total_sequences = 0;
  std::uint32_t max_token_id = 0;
  std::vector<ShardRecord> shards;
};

inline constexpr const char* kDatasetManifestFile = "dataset_manifest.json";

struct Dataset {
  DatasetManifest manifest;
  std::vector<Shard> shards;
};

/// Writes shard files and then dataset_manifest.json; refuses a non-empty `dir`
/// that already holds a manifest.
DatasetManifest write_dataset(const std::filesystem::path& dir, const std::vector<Shard>& shards,
                              const DatasetManifest& base);

/// Loads and verifies every shard against the manifest digests.
Dataset load_dataset(const std::filesystem::path& dir);

struct PreprocessOptions {
  std::filesystem::path input;
  std::filesystem::path out;
  std::size_t seq_len = 128;
  std::size_t n_shards = 10;
  std::uint64_t seed = 42;
};

/// Input is a file of raw bytes, a directory (regular files in name order,
/// joined by end-of-text), or a `.tensors` container with a 1-D u32 entry
/// "tokens" for pre-tokenized data.
TokenStream load_corpus(const std::filesystem::path& input);

DatasetManifest preprocess(const PreprocessOptions& options);

}  // namespace dynalab::data
