// Copyright 2026 The dynalab Authors
// SPDX-License-Identifier: Apache-2.0

#include "dynalab/data/dataset.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "dynalab/core/digest.hpp"
#include "dynalab/core/error.hpp"
#include "dynalab/core/rng.hpp"
#include "dynalab/store/container.hpp"

namespace dynalab::data {

namespace fs = std::filesystem;
using nlohmann::json;

ChunkResult chunk(std::span<const std::uint32_t> ids, std::size_t seq_len) {
  if (seq_len < 1) throw ValidationError("seq_len must be >= 1");
  const std::size_t width = seq_len + 1;
  const std::size_t rows = ids.size() / width;
  ChunkResult out;
  out.sequences = TokenBatch(rows, width, std::vector<std::uint32_t>(ids.begin(), ids.begin() + rows * width));
  out.dropped_tokens = ids.size() - rows * width;
  return out;
}

std::vector<std::byte> Shard::encode() const {
  return store::encode_container({{"tokens", sequences.to_tensor()}});
}

Shard Shard::decode(std::size_t index, std::span<const std::byte> bytes) {
  const TensorMap m = store::decode_container(bytes);
  auto it = m.find("tokens");
  if (it == m.end() || m.size() != 1) throw DataError("shard must hold exactly one entry 'tokens'");
  Shard s;
  s.index = index;
  s.sequences = TokenBatch::from_tensor(it->second);
  s.digest = sha256_hex(bytes);
  return s;
}

std::string shard_digest(const TokenBatch& sequences) {
  Shard s;
  s.sequences = sequences;
  return sha256_hex(s.encode());
}

std::vector<std::size_t> permutation(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> p(n);
  for (std::size_t i = 0; i < n; ++i) p[i] = i;
  Rng rng(seed);
  for (std::size_t i = n; i > 1; --i) std::swap(p[i - 1], p[rng.below(i)]);
  return p;
}

std::vector<Shard> shuffle_and_shard(const TokenBatch& sequences, std::size_t n_shards, std::uint64_t seed) {
  if (n_shards < 1) throw ValidationError("n_shards must be >= 1");
  const std::size_t n = sequences.rows;
  if (n < n_shards) {
    throw DataError("cannot split " + std::to_string(n) + " sequences into " + std::to_string(n_shards) + " shards");
  }
  const auto perm = permutation(n, seed);
  std::vector<Shard> shards;
  for (std::size_t k = 0; k < n_shards; ++k) {
    const std::size_t begin = k * n / n_shards;
    const std::size_t end = (k + 1) * n / n_shards;
    Shard s;
    s.index = k;
    s.sequences = TokenBatch(end - begin, sequences.cols, std::vector<std::uint32_t>((end - begin) * sequences.cols));
    for (std::size_t r = begin; r < end; ++r) {
      auto src = sequences.row(perm[r]);
      std::copy(src.begin(), src.end(), s.sequences.ids.begin() + (r - begin) * sequences.cols);
    }
    s.digest = sha256_hex(s.encode());
    shards.push_back(std::move(s));
  }
  return shards;
}

std::string shard_file_name(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "shard_%05zu.pt-tensors", index);
  return buf;
}

namespace {

json manifest_json(const DatasetManifest& m) {
  json shards = json::array();
  for (const auto& s : m.shards) shards.push_back({{"file", s.file}, {"rows", s.rows}, {"sha256", s.sha256}});
  return json{{"format_version", m.format_version}, {"tokenizer_id", m.tokenizer_id},
              {"seq_len", m.seq_len},               {"seed", m.seed},
              {"total_tokens", m.total_tokens},     {"dropped_tokens", m.dropped_tokens},
              {"total_sequences", m.total_sequences}, {"max_token_id", m.max_token_id},
              {"shards", shards}};
}

DatasetManifest manifest_from(const json& j) {
  DatasetManifest m;
  try {
    m.format_version = j.at("format_version").get<std::uint32_t>();
    if (m.format_version != 1) throw DataError("unsupported dataset manifest version");
    m.tokenizer_id = j.at("tokenizer_id").get<std::string>();
    m.seq_len = j.at("seq_len").get<std::size_t>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.total_tokens = j.at("total_tokens").get<std::size_t>();
    m.dropped_tokens = j.at("dropped_tokens").get<std::size_t>();
    m.total_sequences = j.at("total_sequences").get<std::size_t>();
    m.max_token_id = j.at("max_token_id").get<std::uint32_t>();
    for (const auto& s : j.at("shards")) {
      m.shards.push_back({s.at("file").get<std::string>(), s.at("rows").get<std::size_t>(),
                          s.at("sha256").get<std::string>()});
    }
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed dataset manifest: ") + e.what());
  }
  return m;
}

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw NotFoundError("cannot open " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

DatasetManifest write_dataset(const fs::path& dir, const std::vector<Shard>& shards, const DatasetManifest& base) {
  if (fs::exists(dir / kDatasetManifestFile)) {
    throw ValidationError("dataset already exists at " + dir.string());
  }
  fs::create_directories(dir);
  DatasetManifest m = base;
  m.shards.clear();
  m.total_sequences = 0;
  for (const auto& s : shards) {
    const auto bytes = s.encode();
    const std::string name = shard_file_name(s.index);
    store::write_file_bytes(dir / name, bytes);
    m.shards.push_back({name, s.sequences.rows, sha256_hex(bytes)});
    m.total_sequences += s.sequences.rows;
  }
  const std::string text = manifest_json(m).dump(2) + "\n";
  const fs::path tmp = dir / (std::string(kDatasetManifestFile) + ".tmp");
  store::write_file_bytes(tmp, std::as_bytes(std::span<const char>(text.data(), text.size())));
  fs::rename(tmp, dir / kDatasetManifestFile);
  return m;
}

Dataset load_dataset(const fs::path& dir) {
  const fs::path mpath = dir / kDatasetManifestFile;
  if (!fs::exists(mpath)) throw NotFoundError("no dataset manifest in " + dir.string());
  json j;
  try {
    j = json::parse(read_text(mpath));
  } catch (const json::exception& e) {
    throw DataError("dataset manifest does not parse: " + std::string(e.what()));
  }
  Dataset d;
  d.manifest = manifest_from(j);
  if (d.manifest.shards.empty()) throw DataError("dataset has no shards");
  for (std::size_t i = 0; i < d.manifest.shards.size(); ++i) {
    const auto& rec = d.manifest.shards[i];
    const auto bytes = store::read_file_bytes(dir / rec.file);
    if (sha256_hex(bytes) != rec.sha256) throw IntegrityError("shard digest mismatch: " + rec.file);
    Shard s = Shard::decode(i, bytes);
    if (s.sequences.rows != rec.rows || s.sequences.cols != d.manifest.seq_len + 1) {
      throw DataError("shard " + rec.file + " shape disagrees with manifest");
    }
    d.shards.push_back(std::move(s));
  }
  return d;
}

TokenStream load_corpus(const fs::path& input) {
  if (fs::is_directory(input)) {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(input)) {
      if (e.is_regular_file()) files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    std::vector<std::string> docs;
    for (const auto& f : files) docs.push_back(read_text(f));
    return tokenize_documents(docs);
  }
  if (!fs::exists(input)) throw NotFoundError("corpus not found: " + input.string());
  if (input.extension() == ".tensors") {
    const TensorMap m = store::read_container(input);
    auto it = m.find("tokens");
    if (it == m.end() || it->second.dtype() != DType::kU32 || it->second.rank() != 1) {
      throw DataError("pre-tokenized input needs a 1-D u32 entry 'tokens'");
    }
    TokenStream s;
    s.tokenizer_id = std::string(kPretokenizedId);
    auto v = it->second.values<std::uint32_t>();
    s.ids.assign(v.begin(), v.end());
    return s;
  }
  const std::string text = read_text(input);
  return tokenize(text);
}

DatasetManifest preprocess(const PreprocessOptions& o) {
  const TokenStream stream = load_corpus(o.input);
  const ChunkResult c = chunk(stream.ids, o.seq_len);
  const auto shards = shuffle_and_shard(c.sequences, o.n_shards, o.seed);
  DatasetManifest m;
  m.tokenizer_id = stream.tokenizer_id;
  m.seq_len = o.seq_len;
  m.seed = o.seed;
  m.total_tokens = stream.size();
  m.dropped_tokens = c.dropped_tokens;
  for (auto id : c.sequences.ids) m.max_token_id = std::max(m.max_token_id, id);
  return write_dataset(o.out, shards, m);
}

}  // namespace dynalab::data
