// Copyright 2026 The dynalab Authors
// SPDX-License-Identifier: Apache-2.0

#include "dynalab/store/checkpoint.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <charconv>

#include "dynalab/core/digest.hpp"
#include "dynalab/core/error.hpp"
#include "dynalab/store/container.hpp"

namespace dynalab::store {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kManifestFile = "manifest.json";
constexpr const char* kDigestKey = "manifest_sha256";

const char* kDynamicsFiles[] = {
    "learning_dynamics/train_activations.tensors", "learning_dynamics/train_gradients.tensors",
    "learning_dynamics/eval_activations.tensors",  "learning_dynamics/eval_gradients.tensors",
    "learning_dynamics/train_batch.tensors",
};

std::span<const std::byte> as_bytes(const std::string& s) {
  return {reinterpret_cast<const std::byte*>(s.data()), s.size()};
}

std::string render(const json& j) { return j.dump(2) + "\n"; }

std::string render_manifest(const CheckpointManifest& m) {
  json j = manifest_to_json(m);
  j[kDigestKey] = sha256_hex(render(j));
  return render(j);
}

void fsync_dir(const fs::path& dir) {
  const int fd = ::open(dir.c_str(), O_RDONLY | O_DIRECTORY | O_CLOEXEC);
  if (fd >= 0) {
    ::fsync(fd);
    ::close(fd);
  }
}

std::optional<std::int64_t> parse_step_name(const std::string& name) {
  constexpr std::string_view prefix = "step_";
  if (!name.starts_with(prefix) || name.size() == prefix.size()) return std::nullopt;
  std::int64_t step = 0;
  const char* first = name.data() + prefix.size();
  const char* last = name.data() + name.size();
  auto [ptr, ec] = std::from_chars(first, last, step);
  if (ec != std::errc() || ptr != last || step < 0) return std::nullopt;
  if (name != "step_" + std::to_string(step)) return std::nullopt;  // reject leading zeros
  return step;
}

json eval_to_json(const EvalResult& e) {
  return json{{"step", e.step}, {"perplexity", e.perplexity}, {"token_count", e.token_count}};
}

EvalResult eval_from_json(const json& j) {
  EvalResult e;
  e.step = j.at("step").get<std::int64_t>();
  e.perplexity = j.at("perplexity").get<double>();
  e.token_count = j.at("token_count").get<std::uint64_t>();
  return e;
}

std::vector<std::byte> verified_bytes(const fs::path& dir, const CheckpointManifest& m,
                                      const std::string& file) {
  const FileRecord* rec = m.find_file(file);
  if (rec == nullptr) {
    throw NotFoundError("checkpoint " + m.run_id + "/step_" + std::to_string(m.step) +
                        " has no file '" + file + "'");
  }
  auto bytes = read_file_bytes(dir / file);
  if (bytes.size() != rec->bytes || sha256_hex(bytes) != rec->sha256) {
    throw IntegrityError("digest mismatch for " + (dir / file).string());
  }
  return bytes;
}

}  // namespace

const FileRecord* CheckpointManifest::find_file(std::string_view path) const {
  for (const auto& f : files) {
    if (f.path == path) return &f;
  }
  return nullptr;
}

json manifest_to_json(const CheckpointManifest& m) {
  json files = json::array();
  for (const auto& f : m.files) files.push_back({{"path", f.path}, {"sha256", f.sha256}, {"bytes", f.bytes}});
  return json{{"format_version", m.format_version},
              {"run_id", m.run_id},
              {"step", m.step},
              {"config_digest", m.config_digest},
              {"capture_list", m.capture_list},
              {"created_unix", m.created_unix},
              {"files", files},
              {"has_learning_dynamics", m.has_learning_dynamics},
              {"eval_batch_id", m.eval_batch_id},
              {"config", m.config},
              {"resume", m.resume}};
}

CheckpointManifest manifest_from_json(const json& j) {
  CheckpointManifest m;
  try {
    m.format_version = j.at("format_version").get<std::uint32_t>();
    if (m.format_version != kManifestVersion) {
      throw IntegrityError("unsupported manifest format version " + std::to_string(m.format_version));
    }
    m.run_id = j.at("run_id").get<std::string>();
    m.step = j.at("step").get<std::int64_t>();
    m.config_digest = j.at("config_digest").get<std::string>();
    m.capture_list = j.at("capture_list").get<std::vector<std::string>>();
    m.created_unix = j.at("created_unix").get<std::int64_t>();
    for (const auto& f : j.at("files")) {
      m.files.push_back({f.at("path").get<std::string>(), f.at("sha256").get<std::string>(),
                         f.at("bytes").get<std::uint64_t>()});
    }
    m.has_learning_dynamics = j.at("has_learning_dynamics").get<bool>();
    m.eval_batch_id = j.at("eval_batch_id").get<std::string>();
    m.config = j.at("config");
    m.resume = j.at("resume");
  } catch (const json::exception& e) {
    throw IntegrityError(std::string("malformed manifest: ") + e.what());
  }
  return m;
}

void validate_run_id(const std::string& run) {
  if (run.empty() || run == "." || run == "..") throw ValidationError("invalid run id '" + run + "'");
  for (char c : run) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
                    c == '-' || c == '_' || c == '.';
    if (!ok) throw ValidationError("invalid character in run id '" + run + "'");
  }
  if (run.front() == '.') throw ValidationError("run id may not start with '.': '" + run + "'");
}

CheckpointManifest read_manifest_at(const fs::path& dir, bool verify_files) {
  const fs::path path = dir / kManifestFile;
  if (!fs::exists(path)) throw NotFoundError("no checkpoint at " + dir.string());
  const auto raw = read_file_bytes(path);
  const std::string text(reinterpret_cast<const char*>(raw.data()), raw.size());
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw IntegrityError("manifest at " + dir.string() + " does not parse: " + e.what());
  }
  if (!j.is_object() || !j.contains(kDigestKey) || !j[kDigestKey].is_string()) {
    throw IntegrityError("manifest at " + dir.string() + " lacks its digest");
  }
  // Byte-level canonical form: any edit, even whitespace, is a mismatch.
  if (render(j) != text) throw IntegrityError("manifest at " + dir.string() + " is not canonical");
  const std::string claimed = j[kDigestKey].get<std::string>();
  j.erase(kDigestKey);
  if (sha256_hex(render(j)) != claimed) {
    throw IntegrityError("manifest digest mismatch at " + dir.string());
  }
  CheckpointManifest m = manifest_from_json(j);
  if (verify_files) {
    for (const auto& f : m.files) verified_bytes(dir, m, f.path);
  }
  return m;
}

CheckpointStore::CheckpointStore(fs::path root) : root_(std::move(root)) {}

fs::path CheckpointStore::run_dir(const std::string& run) const {
  validate_run_id(run);
  return root_ / run;
}

fs::path CheckpointStore::step_dir(const std::string& run, std::int64_t step) const {
  return run_dir(run) / ("step_" + std::to_string(step));
}

CheckpointManifest CheckpointStore::write_checkpoint(const CheckpointPayload& p) {
  if (p.step < 0) throw ValidationError("negative checkpoint step");
  const fs::path final_dir = step_dir(p.run_id, p.step);
  if (fs::exists(final_dir)) {
    throw ValidationError("checkpoint " + p.run_id + "/step_" + std::to_string(p.step) + " already exists");
  }
  fs::create_directories(run_dir(p.run_id));

  static std::atomic<std::uint64_t> counter{0};
  const fs::path tmp = run_dir(p.run_id) / (".tmp-step_" + std::to_string(p.step) + "-" +
                                            std::to_string(::getpid()) + "-" + std::to_string(counter++));
  auto hook = [&](const std::string& stage) {
    if (fault_hook_) fault_hook_(stage);
  };

  CheckpointManifest m;
  m.run_id = p.run_id;
  m.step = p.step;
  m.config_digest = p.config_digest;
  m.capture_list = p.capture_list;
  m.created_unix = p.created_unix.value_or(
      std::chrono::duration_cast<std::chrono::seconds>(std::chrono::system_clock::now().time_since_epoch())
          .count());
  m.has_learning_dynamics = p.dynamics.has_value();
  m.eval_batch_id = p.dynamics ? p.dynamics->eval_batch_id : "";
  m.config = p.config;
  m.resume = p.resume;

  try {
    fs::create_directory(tmp);
    auto put = [&](const std::string& rel, std::span<const std::byte> bytes) {
      const fs::path path = tmp / rel;
      if (path.parent_path() != tmp) fs::create_directories(path.parent_path());
      write_file_bytes(path, bytes);
      m.files.push_back({rel, sha256_hex(bytes), bytes.size()});
      hook(rel);
    };
    put("model.tensors", encode_container(p.model));
    put("optimizer.tensors", encode_container(p.optimizer));
    if (p.dynamics) {
      const auto& d = *p.dynamics;
      const TensorMap* maps[] = {&d.train_activations, &d.train_gradients, &d.eval_activations,
                                 &d.eval_gradients};
      for (int i = 0; i < 4; ++i) put(kDynamicsFiles[i], encode_container(*maps[i]));
      put(kDynamicsFiles[4], encode_container(TensorMap{{"tokens", d.train_batch.to_tensor()}}));
      fsync_dir(tmp / "learning_dynamics");
    }
    if (p.eval) put("eval_results.json", as_bytes(render(eval_to_json(*p.eval))));
    std::sort(m.files.begin(), m.files.end(),
              [](const FileRecord& a, const FileRecord& b) { return a.path < b.path; });
    put(kManifestFile, as_bytes(render_manifest(m)));
    m.files.pop_back();
    fsync_dir(tmp);
    hook("rename");
    if (fs::exists(final_dir)) {
      throw ValidationError("checkpoint " + p.run_id + "/step_" + std::to_string(p.step) + " already exists");
    }
    fs::rename(tmp, final_dir);
    fsync_dir(run_dir(p.run_id));
  } catch (...) {
    std::error_code ec;
    fs::remove_all(tmp, ec);
    throw;
  }
  return m;
}

CheckpointManifest CheckpointStore::read_manifest(const std::string& run, std::int64_t step,
                                                  bool verify_files) const {
  CheckpointManifest m = read_manifest_at(step_dir(run, step), verify_files);
  if (m.run_id != run || m.step != step) {
    throw IntegrityError("manifest at " + step_dir(run, step).string() + " names " + m.run_id + "/step_" +
                         std::to_string(m.step));
  }
  return m;
}

TensorMap CheckpointStore::read_tensors(const std::string& run, std::int64_t step,
                                        const std::string& file) const {
  const CheckpointManifest m = read_manifest(run, step);
  return decode_container(verified_bytes(step_dir(run, step), m, file));
}

Checkpoint CheckpointStore::read_checkpoint(const std::string& run, std::int64_t step) const {
  const fs::path dir = step_dir(run, step);
  Checkpoint c;
  c.manifest = read_manifest(run, step);
  for (const auto& f : c.manifest.files) verified_bytes(dir, c.manifest, f.path);
  auto load = [&](const std::string& file) { return decode_container(verified_bytes(dir, c.manifest, file)); };
  c.model = load("model.tensors");
  c.optimizer = load("optimizer.tensors");
  if (c.manifest.has_learning_dynamics) {
    LearningDynamicsBundle d;
    d.train_activations = load(kDynamicsFiles[0]);
    d.train_gradients = load(kDynamicsFiles[1]);
    d.eval_activations = load(kDynamicsFiles[2]);
    d.eval_gradients = load(kDynamicsFiles[3]);
    const TensorMap batch = load(kDynamicsFiles[4]);
    auto it = batch.find("tokens");
    if (it == batch.end()) throw IntegrityError("train_batch.tensors lacks 'tokens'");
    d.train_batch = TokenBatch::from_tensor(it->second);
    d.eval_batch_id = c.manifest.eval_batch_id;
    c.dynamics = std::move(d);
  }
  if (c.manifest.find_file("eval_results.json") != nullptr) {
    const auto bytes = verified_bytes(dir, c.manifest, "eval_results.json");
    try {
      c.eval = eval_from_json(json::parse(std::string(reinterpret_cast<const char*>(bytes.data()), bytes.size())));
    } catch (const json::exception& e) {
      throw IntegrityError(std::string("malformed eval_results.json: ") + e.what());
    }
  }
  return c;
}

std::vector<std::int64_t> CheckpointStore::list_steps(const std::string& run) const {
  std::vector<std::int64_t> steps;
  const fs::path dir = run_dir(run);
  if (!fs::is_directory(dir)) return steps;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_directory()) continue;
    auto step = parse_step_name(entry.path().filename().string());
    if (step && fs::exists(entry.path() / kManifestFile)) steps.push_back(*step);
  }
  std::sort(steps.begin(), steps.end());
  return steps;
}

std::vector<std::string> CheckpointStore::list_runs() const {
  std::vector<std::string> runs;
  if (!fs::is_directory(root_)) return runs;
  for (const auto& entry : fs::directory_iterator(root_)) {
    const std::string name = entry.path().filename().string();
    if (entry.is_directory() && !name.starts_with(".")) runs.push_back(name);
  }
  std::sort(runs.begin(), runs.end());
  return runs;
}

std::optional<std::int64_t> CheckpointStore::latest_step(const std::string& run) const {
  const auto steps = list_steps(run);
  if (steps.empty()) return std::nullopt;
  return steps.back();
}

bool CheckpointStore::has_step(const std::string& run, std::int64_t step) const {
  return fs::exists(step_dir(run, step) / kManifestFile);
}

}  // namespace dynalab::store
