// Copyright 2026 The dynalab Authors
// SPDX-License-Identifier: Apache-2.0

#include "dynalab/config/experiment.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>

#include <toml.hpp>

#include "dynalab/core/digest.hpp"
#include "dynalab/core/error.hpp"
#include "dynalab/store/checkpoint.hpp"

namespace dynalab::config {

using nlohmann::json;

namespace {

struct Field {
  std::string key;  // "section.name"
  bool trajectory;
  const char* type;  // for messages
  std::function<json(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, const json&)> set;
};

[[noreturn]] void type_error(const std::string& key, const char* type, const json& v) {
  throw ValidationError("config key '" + key + "' expects " + type + ", got " + v.dump());
}

template <typename T>
Field make(std::string key, bool trajectory, T& (*ref)(ExperimentConfig&)) {
  Field f;
  f.key = std::move(key);
  f.trajectory = trajectory;
  if constexpr (std::is_same_v<T, bool>) {
    f.type = "a boolean";
  } else if constexpr (std::is_same_v<T, std::string>) {
    f.type = "a string";
  } else if constexpr (std::is_same_v<T, double>) {
    f.type = "a number";
  } else if constexpr (std::is_same_v<T, std::vector<std::string>>) {
    f.type = "a list of strings";
  } else if constexpr (std::is_unsigned_v<T>) {
    f.type = "a non-negative integer";
  } else {
    f.type = "an integer";
  }
  f.get = [ref](const ExperimentConfig& c) { return json(ref(const_cast<ExperimentConfig&>(c))); };
  const std::string k = f.key;
  const char* type = f.type;
  f.set = [ref, k, type](ExperimentConfig& c, const json& v) {
    T& dst = ref(c);
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) type_error(k, type, v);
      dst = v.get<bool>();
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) type_error(k, type, v);
      dst = v.get<std::string>();
    } else if constexpr (std::is_same_v<T, double>) {
      if (!v.is_number()) type_error(k, type, v);
      dst = v.get<double>();
    } else if constexpr (std::is_same_v<T, std::vector<std::string>>) {
      if (!v.is_array()) type_error(k, type, v);
      std::vector<std::string> out;
      for (const auto& e : v) {
        if (!e.is_string()) type_error(k, type, v);
        out.push_back(e.get<std::string>());
      }
      dst = std::move(out);
    } else if constexpr (std::is_unsigned_v<T>) {
      if (!v.is_number_integer() || (!v.is_number_unsigned() && v.get<std::int64_t>() < 0)) {
        type_error(k, type, v);
      }
      dst = v.get<T>();
    } else {
      if (!v.is_number_integer()) type_error(k, type, v);
      dst = v.get<T>();
    }
  };
  return f;
}

#define DYNALAB_FIELD(key, trajectory, member) \
  make(key, trajectory, +[](ExperimentConfig& c) -> auto& { return c.member; })

const std::vector<Field>& schema() {
  static const std::vector<Field> fields = {
      DYNALAB_FIELD("model.model_type", true, model_type),
      DYNALAB_FIELD("model.d_model", true, model.d_model),
      DYNALAB_FIELD("model.n_layers", true, model.n_layers),
      DYNALAB_FIELD("model.vocab_size", true, model.vocab_size),
      DYNALAB_FIELD("model.seq_len", true, model.seq_len),
      DYNALAB_FIELD("model.n_heads", true, model.n_heads),
      DYNALAB_FIELD("model.n_kv_heads", true, model.n_kv_heads),
      DYNALAB_FIELD("model.d_ff", true, model.d_ff),
      DYNALAB_FIELD("model.norm_eps", true, model.norm_eps),
      DYNALAB_FIELD("model.rope_theta", true, model.rope_theta),

      DYNALAB_FIELD("training.optimizer", true, training.optimizer),
      DYNALAB_FIELD("training.lr_peak", true, training.lr_peak),
      DYNALAB_FIELD("training.lr_scheduler", true, training.lr_scheduler),
      DYNALAB_FIELD("training.warmup_steps", true, training.warmup_steps),
      DYNALAB_FIELD("training.grad_accum_steps", true, training.grad_accum_steps),
      DYNALAB_FIELD("training.max_steps", true, training.max_steps),
      DYNALAB_FIELD("training.precision", true, training.precision),
      DYNALAB_FIELD("training.beta1", true, training.beta1),
      DYNALAB_FIELD("training.beta2", true, training.beta2),
      DYNALAB_FIELD("training.adam_eps", true, training.adam_eps),
      DYNALAB_FIELD("training.weight_decay", true, training.weight_decay),
      DYNALAB_FIELD("training.grad_clip", true, training.grad_clip),
      DYNALAB_FIELD("training.init_std", true, training.init_std),
      DYNALAB_FIELD("training.seed", true, training.seed),
      DYNALAB_FIELD("training.stop_at_step", false, training.stop_at_step),

      DYNALAB_FIELD("data.dataset_path", false, data.dataset_path),
      DYNALAB_FIELD("data.batch_size", true, data.batch_size),
      DYNALAB_FIELD("data.tokenizer", true, data.tokenizer),
      DYNALAB_FIELD("data.holdout_shards", true, data.holdout_shards),
      DYNALAB_FIELD("data.max_epochs", true, data.max_epochs),

      DYNALAB_FIELD("checkpointing.run_name", false, checkpointing.run_name),
      DYNALAB_FIELD("checkpointing.auto_resume", false, checkpointing.auto_resume),
      DYNALAB_FIELD("checkpointing.checkpoint_every", true, checkpointing.checkpoint_every),
      DYNALAB_FIELD("checkpointing.capture_list", true, checkpointing.capture_list),
      DYNALAB_FIELD("checkpointing.capture_eval", true, checkpointing.capture_eval),
      DYNALAB_FIELD("checkpointing.save_final", true, checkpointing.save_final),
      DYNALAB_FIELD("checkpointing.reproducible_timestamps", false, checkpointing.reproducible_timestamps),
      DYNALAB_FIELD("checkpointing.runs_dir", false, checkpointing.runs_dir),

      DYNALAB_FIELD("evaluation.metrics", true, evaluation.metrics),
      DYNALAB_FIELD("evaluation.eval_batch_size", true, evaluation.eval_batch_size),
      DYNALAB_FIELD("evaluation.max_eval_batches", true, evaluation.max_eval_batches),
      DYNALAB_FIELD("evaluation.eval_every", false, evaluation.eval_every),

      DYNALAB_FIELD("monitoring.logging_level", false, monitoring.logging_level),
      DYNALAB_FIELD("monitoring.log_every", false, monitoring.log_every),
  };
  return fields;
}

#undef DYNALAB_FIELD

const Field& lookup(std::string_view key) {
  for (const auto& f : schema()) {
    if (f.key == key) return f;
  }
  std::string msg = "unknown config key '" + std::string(key) + "'";
  const std::string guess = nearest(key, known_keys());
  if (!guess.empty()) msg += "; did you mean '" + guess + "'?";
  throw ValidationError(msg);
}

json toml_to_json(const toml::node& node, const std::string& where) {
  if (auto v = node.as_integer()) return json(v->get());
  if (auto v = node.as_floating_point()) return json(v->get());
  if (auto v = node.as_boolean()) return json(v->get());
  if (auto v = node.as_string()) return json(v->get());
  if (auto arr = node.as_array()) {
    json out = json::array();
    for (const auto& e : *arr) out.push_back(toml_to_json(e, where));
    return out;
  }
  if (auto table = node.as_table()) {
    json out = json::object();
    for (const auto& [key, value] : *table) {
      out[std::string(key.str())] = toml_to_json(value, where + "." + std::string(key.str()));
    }
    return out;
  }
  throw ValidationError("unsupported TOML value at '" + where + "'");
}

void require(bool ok, const std::string& msg) {
  if (!ok) throw ValidationError(msg);
}

template <typename T>
bool one_of(const T& v, std::initializer_list<T> options) {
  return std::find(options.begin(), options.end(), v) != options.end();
}

}  // namespace

std::vector<std::string> known_keys() {
  std::vector<std::string> keys;
  for (const auto& f : schema()) keys.push_back(f.key);
  return keys;
}

std::size_t edit_distance(std::string_view a, std::string_view b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a[i - 1] == b[j - 1] ? 0u : 1u)});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

std::string nearest(std::string_view word, const std::vector<std::string>& candidates) {
  std::string best;
  std::size_t best_d = std::string::npos;
  for (const auto& c : candidates) {
    const std::size_t d = edit_distance(word, c);
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  // Accept up to a third of the word's length in edits.
  if (best_d == std::string::npos || best_d > std::max<std::size_t>(2, word.size() / 3)) return "";
  return best;
}

void ExperimentConfig::validate() const {
  require(model_type == "pico_decoder", "model.model_type must be \"pico_decoder\"");
  model.validate();
  const auto& t = training;
  require(t.optimizer == "adamw", "training.optimizer must be \"adamw\"");
  require(one_of<std::string>(t.lr_scheduler, {"linear_with_warmup", "constant_after_warmup"}),
          "training.lr_scheduler must be \"linear_with_warmup\" or \"constant_after_warmup\"");
  require(t.precision == "f64", "training.precision: only \"f64\" is supported (got \"" + t.precision + "\")");
  require(t.lr_peak > 0.0, "training.lr_peak must be > 0");
  require(t.max_steps >= 1, "training.max_steps must be >= 1");
  require(t.warmup_steps >= 0 && t.warmup_steps < t.max_steps, "training.warmup_steps must be in [0, max_steps)");
  require(t.grad_accum_steps >= 1, "training.grad_accum_steps must be >= 1");
  require(t.beta1 >= 0.0 && t.beta1 < 1.0 && t.beta2 >= 0.0 && t.beta2 < 1.0, "training.beta1/beta2 must be in [0, 1)");
  require(t.adam_eps > 0.0, "training.adam_eps must be > 0");
  require(t.weight_decay >= 0.0, "training.weight_decay must be >= 0");
  require(t.grad_clip >= 0.0, "training.grad_clip must be >= 0");
  require(t.init_std > 0.0, "training.init_std must be > 0");
  require(t.stop_at_step >= 0 && t.stop_at_step <= t.max_steps, "training.stop_at_step must be in [0, max_steps]");

  require(data.batch_size >= 1, "data.batch_size must be >= 1");
  require(data.batch_size % t.grad_accum_steps == 0,
          "data.batch_size (" + std::to_string(data.batch_size) + ") must be divisible by training.grad_accum_steps (" +
              std::to_string(t.grad_accum_steps) + ")");
  require(one_of<std::string>(data.tokenizer, {"byte-level", "pretokenized"}),
          "data.tokenizer must be \"byte-level\" or \"pretokenized\"");
  if (data.tokenizer == "byte-level") {
    require(model.vocab_size >= 258, "model.vocab_size must be >= 258 for the byte-level tokenizer");
  }
  require(data.holdout_shards >= 0, "data.holdout_shards must be >= 0");
  require(data.max_epochs >= 0, "data.max_epochs must be >= 0");

  require(checkpointing.checkpoint_every >= 1, "checkpointing.checkpoint_every must be >= 1");
  model::validate_capture_list(checkpointing.capture_list);
  store::validate_run_id(checkpointing.run_name);

  for (const auto& m : evaluation.metrics) require(m == "perplexity", "evaluation.metrics supports only \"perplexity\"");
  require(evaluation.eval_batch_size >= 1, "evaluation.eval_batch_size must be >= 1");
  require(evaluation.max_eval_batches >= 0, "evaluation.max_eval_batches must be >= 0");
  require(evaluation.eval_every >= 1, "evaluation.eval_every must be >= 1");

  require(one_of<std::string>(monitoring.logging_level, {"DEBUG", "INFO", "WARNING", "ERROR"}),
          "monitoring.logging_level must be DEBUG, INFO, WARNING or ERROR");
  require(monitoring.log_every >= 1, "monitoring.log_every must be >= 1");
}

json ExperimentConfig::to_json() const {
  json out = json::object();
  for (const auto& f : schema()) {
    const auto dot = f.key.find('.');
    out[f.key.substr(0, dot)][f.key.substr(dot + 1)] = f.get(*this);
  }
  return out;
}

json ExperimentConfig::trajectory_json() const {
  json out = json::object();
  for (const auto& f : schema()) {
    if (!f.trajectory) continue;
    const auto dot = f.key.find('.');
    out[f.key.substr(0, dot)][f.key.substr(dot + 1)] = f.get(*this);
  }
  return out;
}

std::string ExperimentConfig::digest() const { return sha256_hex(trajectory_json().dump()); }

ExperimentConfig ExperimentConfig::from_json(const json& j) {
  ExperimentConfig c;
  if (!j.is_object()) throw ValidationError("config must be an object of sections");
  for (const auto& [section, body] : j.items()) {
    if (!body.is_object()) {
      const std::string guess = nearest(section, {"model", "training", "data", "checkpointing", "evaluation", "monitoring"});
      throw ValidationError("config entry '" + section + "' is not a section" +
                            (guess.empty() ? "" : "; did you mean '[" + guess + "]'?"));
    }
    for (const auto& [key, value] : body.items()) lookup(section + "." + key).set(c, value);
  }
  return c;
}

json parse_toml_document(std::string_view text, const std::string& source) {
  toml::table table;
  try {
    table = toml::parse(text, source);
  } catch (const toml::parse_error& e) {
    std::ostringstream msg;
    msg << source << ": " << e.description() << " (line " << e.source().begin.line << ")";
    throw ValidationError(msg.str());
  }
  json j = json::object();
  for (const auto& [key, node] : table) j[std::string(key.str())] = toml_to_json(node, std::string(key.str()));
  return j;
}

ExperimentConfig parse_toml(std::string_view text, const std::string& source) {
  return ExperimentConfig::from_json(parse_toml_document(text, source));
}

ExperimentConfig load_toml(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot read config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_toml(ss.str(), path.string());
}

void apply_override(ExperimentConfig& config, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos || eq == 0) {
    throw ValidationError("override '" + std::string(assignment) + "' must look like section.key=value");
  }
  const std::string key(assignment.substr(0, eq));
  const std::string raw(assignment.substr(eq + 1));
  const Field& field = lookup(key);

  json value;
  bool parsed = false;
  try {
    const toml::table t = toml::parse("v = " + raw);
    value = toml_to_json(*t.get("v"), key);
    parsed = true;
  } catch (const toml::parse_error&) {
  }
  const std::string type = field.type;
  if (type == "a string" && (!parsed || !value.is_string())) {
    value = raw;
  } else if (type == "a list of strings" && (!parsed || !value.is_array())) {
    value = json::array();
    std::stringstream ss(raw);
    for (std::string item; std::getline(ss, item, ',');) {
      if (!item.empty()) value.push_back(item);
    }
  } else if (!parsed) {
    throw ValidationError("override '" + key + "': cannot parse '" + raw + "' as " + type);
  }
  field.set(config, value);
}

std::filesystem::path resolve_runs_dir(const ExperimentConfig& config) {
  if (!config.checkpointing.runs_dir.empty()) return config.checkpointing.runs_dir;
  if (const char* env = std::getenv("DYNALAB_RUNS_DIR"); env != nullptr && *env != '\0') return env;
  return "runs";
}

}  // namespace dynalab::config
