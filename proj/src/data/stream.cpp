// Copyright 2026 The dynalab Authors
// SPDX-License-Identifier: Apache-2.0

#include "dynalab/data/stream.hpp"

#include <algorithm>

#include "dynalab/core/error.hpp"
#include "dynalab/core/rng.hpp"

namespace dynalab::data {

nlohmann::json cursor_to_json(const StreamCursor& c) {
  return {{"shard", c.shard}, {"row", c.row}, {"epoch", c.epoch}, {"seed", c.seed}};
}

StreamCursor cursor_from_json(const nlohmann::json& j) {
  StreamCursor c;
  try {
    c.shard = j.at("shard").get<std::size_t>();
    c.row = j.at("row").get<std::size_t>();
    c.epoch = j.at("epoch").get<std::uint64_t>();
    c.seed = j.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed stream cursor: ") + e.what());
  }
  return c;
}

BatchStream::BatchStream(std::vector<Shard> shards, std::size_t batch_size, std::uint64_t seed)
    : shards_(std::move(shards)), batch_size_(batch_size), seed_(seed) {
  if (batch_size_ == 0) throw ValidationError("batch_size must be >= 1");
  if (shards_.empty()) throw DataError("stream needs at least one shard");
  for (const auto& s : shards_) {
    if (s.sequences.cols != shards_.front().sequences.cols) throw DataError("shards disagree on sequence length");
    starts_.push_back(total_rows_);
    total_rows_ += s.sequences.rows;
  }
  if (total_rows_ < batch_size_) {
    throw DataError("dataset has " + std::to_string(total_rows_) + " sequences, fewer than batch_size " +
                    std::to_string(batch_size_));
  }
}

std::size_t BatchStream::row_index(std::uint64_t epoch, std::size_t shard, std::size_t row) const {
  if (epoch == 0) return row;
  auto key = std::make_pair(epoch, shard);
  auto it = perms_.find(key);
  if (it == perms_.end()) {
    // Keep only the current epoch's permutations around.
    std::erase_if(perms_, [&](const auto& kv) { return kv.first.first != epoch; });
    it = perms_.emplace(key, permutation(shards_[shard].sequences.rows,
                                         Rng::derive(Rng::derive(seed_, epoch), shard)))
             .first;
  }
  return it->second[row];
}

std::size_t BatchStream::global_position(const StreamCursor& c) const { return starts_[c.shard] + c.row; }

StreamCursor BatchStream::from_position(std::uint64_t epoch, std::size_t position) const {
  StreamCursor c;
  c.seed = seed_;
  c.epoch = epoch;
  const auto it = std::upper_bound(starts_.begin(), starts_.end(), position);
  c.shard = static_cast<std::size_t>(it - starts_.begin()) - 1;
  c.row = position - starts_[c.shard];
  return c;
}

StreamCursor BatchStream::cursor_at(std::uint64_t batch_index) const {
  const std::uint64_t per_epoch = batches_per_epoch();
  return from_position(batch_index / per_epoch, (batch_index % per_epoch) * batch_size_);
}

void BatchStream::validate(const StreamCursor& c) const {
  if (c.seed != seed_) throw DataError("cursor seed does not match stream seed");
  if (c.shard >= shards_.size()) throw DataError("cursor shard " + std::to_string(c.shard) + " out of range");
  if (c.row >= shards_[c.shard].sequences.rows) {
    throw DataError("cursor row " + std::to_string(c.row) + " out of range for shard " + std::to_string(c.shard));
  }
}

TokenBatch BatchStream::next(StreamCursor& c) const {
  validate(c);
  std::size_t pos = global_position(c);
  std::uint64_t epoch = c.epoch;
  if (pos + batch_size_ > total_rows_) {
    pos = 0;
    ++epoch;
  }
  const std::size_t cols = shards_.front().sequences.cols;
  TokenBatch out(batch_size_, cols, std::vector<std::uint32_t>(batch_size_ * cols));
  StreamCursor at = from_position(epoch, pos);
  for (std::size_t r = 0; r < batch_size_; ++r) {
    const auto& shard = shards_[at.shard];
    auto src = shard.sequences.row(row_index(epoch, at.shard, at.row));
    std::copy(src.begin(), src.end(), out.ids.begin() + r * cols);
    if (++at.row == shard.sequences.rows) {
      at.row = 0;
      ++at.shard;
    }
  }
  pos += batch_size_;
  if (pos + batch_size_ > total_rows_) {
    pos = 0;
    ++epoch;
  }
  c = from_position(epoch, pos);
  return out;
}

}  // namespace dynalab::data
