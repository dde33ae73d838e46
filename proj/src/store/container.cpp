// Copyright 2026 The dynalab Authors
// SPDX-License-Identifier: Apache-2.0

#include "dynalab/store/container.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <fstream>
#include <set>

#include "dynalab/core/error.hpp"

namespace dynalab::store {

namespace {

constexpr std::uint32_t kMaxRank = 16;

class Writer {
 public:
  void u32(std::uint32_t v) { raw(&v, 4); }
  void u64(std::uint64_t v) { raw(&v, 8); }
  void raw(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::byte*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  void pad_to(std::size_t offset) { out_.resize(offset, std::byte{0}); }
  std::size_t size() const { return out_.size(); }
  std::vector<std::byte> take() { return std::move(out_); }

 private:
  std::vector<std::byte> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::byte> bytes) : bytes_(bytes) {}
  std::uint32_t u32() {
    std::uint32_t v;
    raw(&v, 4);
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v;
    raw(&v, 8);
    return v;
  }
  void raw(void* p, std::size_t n) {
    if (n > bytes_.size() - pos_) throw IntegrityError("container: truncated header");
    std::memcpy(p, bytes_.data() + pos_, n);
    pos_ += n;
  }
  std::size_t pos() const { return pos_; }

 private:
  std::span<const std::byte> bytes_;
  std::size_t pos_ = 0;
};

std::size_t align_up(std::size_t x) {
  return (x + kPayloadAlignment - 1) / kPayloadAlignment * kPayloadAlignment;
}

std::size_t table_bytes(const TensorMap& tensors) {
  std::size_t n = 16;
  for (const auto& [name, t] : tensors) n += 4 + name.size() + 4 + 4 + 8 * t.rank() + 8;
  return n;
}

}  // namespace

std::vector<std::byte> encode_container(const TensorMap& tensors) {
  std::vector<std::uint64_t> offsets;
  std::size_t cursor = align_up(table_bytes(tensors));
  for (const auto& [name, t] : tensors) {
    if (name.empty()) throw ValidationError("container: empty tensor name");
    if (t.rank() == 0) throw ValidationError("container: tensor '" + name + "' has rank 0");
    offsets.push_back(cursor);
    cursor = align_up(cursor + t.nbytes());
  }

  Writer w;
  w.raw(kContainerMagic, 4);
  w.u32(kContainerVersion);
  w.u64(tensors.size());
  std::size_t i = 0;
  for (const auto& [name, t] : tensors) {
    w.u32(static_cast<std::uint32_t>(name.size()));
    w.raw(name.data(), name.size());
    w.u32(static_cast<std::uint32_t>(t.dtype()));
    w.u32(static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) w.u64(d);
    w.u64(offsets[i++]);
  }
  i = 0;
  for (const auto& [name, t] : tensors) {
    w.pad_to(offsets[i++]);
    auto b = t.bytes();
    w.raw(b.data(), b.size());
  }
  return w.take();
}

std::vector<ContainerEntry> inspect_container(std::span<const std::byte> bytes) {
  Reader r(bytes);
  char magic[4];
  r.raw(magic, 4);
  if (std::memcmp(magic, kContainerMagic, 4) != 0) throw IntegrityError("container: bad magic");
  const std::uint32_t version = r.u32();
  if (version != kContainerVersion) {
    throw IntegrityError("container: unsupported format version " + std::to_string(version));
  }
  const std::uint64_t count = r.u64();
  // Each entry needs at least 28 header bytes; reject absurd counts early.
  if (count > bytes.size() / 28) throw IntegrityError("container: entry count exceeds file size");

  std::vector<ContainerEntry> entries;
  std::set<std::string> names;
  for (std::uint64_t e = 0; e < count; ++e) {
    ContainerEntry entry;
    const std::uint32_t name_len = r.u32();
    if (name_len == 0 || name_len > bytes.size()) throw IntegrityError("container: bad name length");
    entry.name.resize(name_len);
    r.raw(entry.name.data(), name_len);
    if (!names.insert(entry.name).second) {
      throw IntegrityError("container: duplicate tensor name '" + entry.name + "'");
    }
    const std::uint32_t code = r.u32();
    if (code > 2) throw IntegrityError("container: unknown dtype code " + std::to_string(code));
    entry.dtype = static_cast<DType>(code);
    const std::uint32_t rank = r.u32();
    if (rank == 0 || rank > kMaxRank) throw IntegrityError("container: bad rank " + std::to_string(rank));
    std::uint64_t elements = 1;
    for (std::uint32_t k = 0; k < rank; ++k) {
      const std::uint64_t d = r.u64();
      if (d == 0 || d > bytes.size()) throw IntegrityError("container: bad dimension in '" + entry.name + "'");
      elements *= d;
      if (elements > bytes.size()) throw IntegrityError("container: tensor '" + entry.name + "' exceeds file");
      entry.shape.push_back(static_cast<std::size_t>(d));
    }
    entry.offset = r.u64();
    entry.nbytes = elements * dtype_size(entry.dtype);
    entries.push_back(std::move(entry));
  }

  std::uint64_t prev_end = r.pos();
  for (std::size_t k = 0; k < entries.size(); ++k) {
    const auto& e = entries[k];
    if (e.offset % kPayloadAlignment != 0) throw IntegrityError("container: misaligned payload '" + e.name + "'");
    if (e.offset < prev_end || (k > 0 && e.offset <= entries[k - 1].offset)) {
      throw IntegrityError("container: payload offsets not strictly increasing at '" + e.name + "'");
    }
    if (e.offset > bytes.size() || e.nbytes > bytes.size() - e.offset) {
      throw IntegrityError("container: payload '" + e.name + "' runs past end of file");
    }
    for (std::uint64_t z = prev_end; z < e.offset; ++z) {
      if (bytes[z] != std::byte{0}) throw IntegrityError("container: non-zero padding before '" + e.name + "'");
    }
    prev_end = e.offset + e.nbytes;
  }
  if (prev_end != bytes.size()) throw IntegrityError("container: trailing bytes after last payload");
  return entries;
}

TensorMap decode_container(std::span<const std::byte> bytes) {
  TensorMap out;
  for (const auto& e : inspect_container(bytes)) {
    Tensor t = Tensor::zeros(e.dtype, e.shape);
    std::memcpy(t.mutable_bytes().data(), bytes.data() + e.offset, e.nbytes);
    out.emplace(e.name, std::move(t));
  }
  return out;
}

std::vector<std::byte> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw NotFoundError("cannot open " + path.string());
  const auto size = static_cast<std::size_t>(in.tellg());
  std::vector<std::byte> bytes(size);
  in.seekg(0);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(size));
  if (!in) throw IntegrityError("short read on " + path.string());
  return bytes;
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::byte> bytes) {
  const int fd = ::open(path.c_str(), O_WRONLY | O_CREAT | O_TRUNC | O_CLOEXEC, 0644);
  if (fd < 0) throw Error("cannot create " + path.string() + ": " + std::strerror(errno));
  std::size_t done = 0;
  while (done < bytes.size()) {
    const ssize_t n = ::write(fd, bytes.data() + done, bytes.size() - done);
    if (n < 0) {
      if (errno == EINTR) continue;
      const int err = errno;
      ::close(fd);
      throw Error("write failed on " + path.string() + ": " + std::strerror(err));
    }
    done += static_cast<std::size_t>(n);
  }
  if (::fsync(fd) != 0 || ::close(fd) != 0) {
    throw Error("fsync/close failed on " + path.string() + ": " + std::strerror(errno));
  }
}

void write_container(const std::filesystem::path& path, const TensorMap& tensors) {
  write_file_bytes(path, encode_container(tensors));
}

TensorMap read_container(const std::filesystem::path& path) {
  return decode_container(read_file_bytes(path));
}

}  // namespace dynalab::store
