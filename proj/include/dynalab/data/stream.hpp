// Copyright 2026 The dynalab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <vector>

#include <nlohmann/json.hpp>

#include "dynalab/core/tokens.hpp"
#include "dynalab/data/dataset.hpp"

namespace dynalab::data {

/// Position of the next sequence to read.
struct StreamCursor {
  std::size_t shard = 0;
  std::size_t row = 0;
  std::uint64_t epoch = 0;
  std::uint64_t seed = 0;

  bool operator==(const StreamCursor&) const = default;
};

nlohmann::json cursor_to_json(const StreamCursor& c);
StreamCursor cursor_from_json(const nlohmann::json& j);

/// Batches of `batch_size` sequences read across shards in shard order. A batch
/// may straddle two shards; the epoch's tail that cannot fill a batch is
/// dropped. Epoch 0 reads rows as stored. Epoch e >= 1 reads shard s through the
/// permutation seeded by derive(derive(seed, e), s).
class BatchStream {
 public:
  BatchStream(std::vector<Shard> shards, std::size_t batch_size, std::uint64_t seed);

  std::size_t batch_size() const noexcept { return batch_size_; }
  std::size_t batches_per_epoch() const noexcept { return total_rows_ / batch_size_; }
  std::size_t total_rows() const noexcept { return total_rows_; }
  std::uint64_t seed() const noexcept { return seed_; }
  const std::vector<Shard>& shards() const noexcept { return shards_; }

  StreamCursor start() const { return cursor_at(0); }
  /// Cursor after `batch_index` batches from the start of epoch 0.
  StreamCursor cursor_at(std::uint64_t batch_index) const;

  /// Reads one batch at `cursor` and advances it. Throws DataError when the
  /// cursor does not belong to this shard set.
  TokenBatch next(StreamCursor& cursor) const;

  void validate(const StreamCursor& cursor) const;

 private:
  std::size_t row_index(std::uint64_t epoch, std::size_t shard, std::size_t row) const;
  std::size_t global_position(const StreamCursor& c) const;
  StreamCursor from_position(std::uint64_t epoch, std::size_t position) const;

  std::vector<Shard> shards_;
  std::vector<std::size_t> starts_;  // global row where each shard begins
  std::size_t batch_size_;
  std::size_t total_rows_ = 0;
  std::uint64_t seed_;
  mutable std::map<std::pair<std::uint64_t, std::size_t>, std::vector<std::size_t>> perms_;
};

}  // namespace dynalab::data
