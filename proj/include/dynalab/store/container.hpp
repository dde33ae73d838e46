// Copyright 2026 The dynalab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "dynalab/core/tensor.hpp"

namespace dynalab::store {

// Tensor container ("PICT") byte layout, all integers little-endian:
//
//   magic        4 bytes  "PICT"
//   version      u32      kContainerVersion
//   entry_count  u64
//   entry table, entry_count times:
//     name_len   u32
//     name       name_len bytes, UTF-8, unique within the file
//     dtype      u32      0 = f32, 1 = f64, 2 = u32
//     rank       u32      >= 1
//     dims       rank × u64, each >= 1
//     offset     u64      absolute payload offset, multiple of 64
//   payloads in entry order, each starting at its offset; gaps are zero bytes.
//
// Offsets are strictly increasing and the file ends at the last payload byte.

inline constexpr char kContainerMagic[4] = {'P', 'I', 'C', 'T'};
inline constexpr std::uint32_t kContainerVersion = 1;
inline constexpr std::size_t kPayloadAlignment = 64;

struct ContainerEntry {
  std::string name;
  DType dtype;
  Shape shape;
  std::uint64_t offset;
  std::uint64_t nbytes;
};

std::vector<std::byte> encode_container(const TensorMap& tensors);
TensorMap decode_container(std::span<const std::byte> bytes);

/// Parses and validates the header and entry table only.
std::vector<ContainerEntry> inspect_container(std::span<const std::byte> bytes);

std::vector<std::byte> read_file_bytes(const std::filesystem::path& path);
/// Writes and fsyncs.
void write_file_bytes(const std::filesystem::path& path, std::span<const std::byte> bytes);

void write_container(const std::filesystem::path& path, const TensorMap& tensors);
TensorMap read_container(const std::filesystem::path& path);

}  // namespace dynalab::store
