// Copyright 2026 The noderf Authors
// SPDX-License-Identifier: Apache-2.0
#include "noderf/config.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "noderf/common.hpp"

namespace noderf::cfg {
namespace {

using nlohmann::json;

const char* json_kind(const json& v) {
  switch (v.type()) {
    case json::value_t::number_float: return "number";
    case json::value_t::number_integer:
    case json::value_t::number_unsigned: return "integer";
    case json::value_t::boolean: return "boolean";
    case json::value_t::string: return "string";
    case json::value_t::array: return "array";
    case json::value_t::object: return "object";
    case json::value_t::null: return "null";
    default: return "value";
  }
}

// The registered default's type is the key's type.
const char* expected_kind(const json& def) {
  if (def.is_number_float()) return "number";
  if (def.is_number_integer() || def.is_number_unsigned()) return "integer";
  if (def.is_boolean()) return "boolean";
  return "string";
}

bool parse_full_double(const std::string& text, double* out) {
  if (text.empty()) return false;
  char* end = nullptr;
  const double v = std::strtod(text.c_str(), &end);
  if (end != text.c_str() + text.size()) return false;
  *out = v;
  return true;
}

bool parse_full_int(const std::string& text, int64_t* out) {
  if (text.empty()) return false;
  char* end = nullptr;
  const long long v = std::strtoll(text.c_str(), &end, 10);
  if (end != text.c_str() + text.size()) return false;
  *out = int64_t(v);
  return true;
}

}  // namespace

void Config::define(const std::string& key, double def, const std::string& desc) {
  require(entries_.emplace(key, Entry{json(def), json(def), desc}).second,
          "config: duplicate key definition \"", key, "\"");
}

void Config::define(const std::string& key, int64_t def, const std::string& desc) {
  require(entries_.emplace(key, Entry{json(def), json(def), desc}).second,
          "config: duplicate key definition \"", key, "\"");
}

void Config::define(const std::string& key, bool def, const std::string& desc) {
  require(entries_.emplace(key, Entry{json(def), json(def), desc}).second,
          "config: duplicate key definition \"", key, "\"");
}

void Config::define(const std::string& key, const std::string& def,
                    const std::string& desc) {
  require(entries_.emplace(key, Entry{json(def), json(def), desc}).second,
          "config: duplicate key definition \"", key, "\"");
}

const Config::Entry& Config::at(const std::string& key) const {
  auto it = entries_.find(key);
  require(it != entries_.end(), "config: unknown key \"", key, "\"");
  return it->second;
}

void Config::set_value(const std::string& key, const json& value,
                       const std::string& source) {
  auto it = entries_.find(key);
  require(it != entries_.end(), source, ": unknown config key \"", key, "\"");
  Entry& e = it->second;
  if (e.def.is_number_float()) {
    require(value.is_number(), source, ": key \"", key, "\": expected number, got ",
            json_kind(value));
    e.value = value.get<double>();
  } else if (e.def.is_number_integer() || e.def.is_number_unsigned()) {
    require(value.is_number_integer() || value.is_number_unsigned(), source,
            ": key \"", key, "\": expected integer, got ", json_kind(value));
    e.value = value.get<int64_t>();
  } else if (e.def.is_boolean()) {
    require(value.is_boolean(), source, ": key \"", key,
            "\": expected boolean, got ", json_kind(value));
    e.value = value.get<bool>();
  } else {
    require(value.is_string(), source, ": key \"", key, "\": expected string, got ",
            json_kind(value));
    e.value = value.get<std::string>();
  }
}

void Config::load_file(const std::string& path) {
  std::ifstream is(path);
  require(is.good(), "config: cannot open ", path);
  json doc;
  try {
    doc = json::parse(is);
  } catch (const json::parse_error& err) {
    fail("config: ", path, ": ", err.what());
  }
  require(doc.is_object(), "config: ", path, ": expected a JSON object of ",
          "flat dotted keys, got ", json_kind(doc));
  for (const auto& [key, value] : doc.items()) {
    require(value.is_primitive() && !value.is_null(), "config: ", path,
            ": key \"", key, "\": expected a scalar value, got ", json_kind(value));
    set_value(key, value, path);
  }
}

void Config::set_override(const std::string& keyval, const std::string& source) {
  const size_t eq = keyval.find('=');
  require(eq != std::string::npos && eq > 0, source, ": expected key=value, got \"",
          keyval, "\"");
  const std::string key = keyval.substr(0, eq);
  const std::string raw = keyval.substr(eq + 1);
  auto it = entries_.find(key);
  require(it != entries_.end(), source, ": unknown config key \"", key, "\"");
  const Entry& e = it->second;
  if (e.def.is_number_float()) {
    double v = 0.0;
    require(parse_full_double(raw, &v), source, ": key \"", key,
            "\": cannot parse \"", raw, "\" as a number");
    set_value(key, json(v), source);
  } else if (e.def.is_number_integer() || e.def.is_number_unsigned()) {
    int64_t v = 0;
    require(parse_full_int(raw, &v), source, ": key \"", key,
            "\": cannot parse \"", raw, "\" as an integer");
    set_value(key, json(v), source);
  } else if (e.def.is_boolean()) {
    bool v = false;
    if (raw == "true" || raw == "1") {
      v = true;
    } else if (raw == "false" || raw == "0") {
      v = false;
    } else {
      fail(source, ": key \"", key, "\": cannot parse \"", raw,
           "\" as a boolean (use true/false)");
    }
    set_value(key, json(v), source);
  } else {
    set_value(key, json(raw), source);
  }
}

bool Config::has_key(const std::string& key) const {
  return entries_.count(key) != 0;
}

double Config::get_double(const std::string& key) const {
  const Entry& e = at(key);
  require(e.def.is_number_float(), "config: key \"", key, "\" is ",
          expected_kind(e.def), ", not number");
  return e.value.get<double>();
}

int64_t Config::get_int(const std::string& key) const {
  const Entry& e = at(key);
  require(e.def.is_number_integer() || e.def.is_number_unsigned(), "config: key \"",
          key, "\" is ", expected_kind(e.def), ", not integer");
  return e.value.get<int64_t>();
}

bool Config::get_bool(const std::string& key) const {
  const Entry& e = at(key);
  require(e.def.is_boolean(), "config: key \"", key, "\" is ", expected_kind(e.def),
          ", not boolean");
  return e.value.get<bool>();
}

const std::string& Config::get_string(const std::string& key) const {
  const Entry& e = at(key);
  require(e.def.is_string(), "config: key \"", key, "\" is ", expected_kind(e.def),
          ", not string");
  return e.value.get_ref<const std::string&>();
}

std::vector<std::string> Config::keys() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& [key, entry] : entries_) out.push_back(key);
  return out;
}

const std::string& Config::description(const std::string& key) const {
  return at(key).desc;
}

nlohmann::ordered_json Config::to_json() const {
  nlohmann::ordered_json out = nlohmann::ordered_json::object();
  for (const auto& [key, entry] : entries_) out[key] = entry.value;
  return out;
}

void Config::write_file(const std::string& path) const {
  std::ofstream os(path);
  require(os.good(), "config: cannot write ", path);
  os << to_json().dump(2) << '\n';
  require(os.good(), "config: write failed for ", path);
}

std::string Config::help_text() const {
  size_t key_w = 0, def_w = 0;
  for (const auto& [key, entry] : entries_) {
    key_w = std::max(key_w, key.size());
    def_w = std::max(def_w, entry.def.dump().size());
  }
  std::ostringstream os;
  for (const auto& [key, entry] : entries_) {
    os << "  " << key << std::string(key_w - key.size() + 2, ' ')
       << entry.def.dump() << std::string(def_w - entry.def.dump().size() + 2, ' ')
       << entry.desc << '\n';
  }
  return os.str();
}

Config default_config() {
  Config c;
  c.define("seed", int64_t{2026}, "master RNG seed; NODERF_SEED env var wins");
  c.define("threads", int64_t{1},
           "worker threads; results are bit-identical for any value");

  c.define("data.scene", "pendulum",
           "pendulum | oscillating-ball | bifurcating-hill");
  c.define("data.train_sequences", int64_t{8}, "training initial conditions");
  c.define("data.eval_sequences", int64_t{1}, "held-out initial conditions");
  c.define("data.frames", int64_t{0}, "frames per sequence; 0 = scene preset");
  c.define("data.duration", 0.0, "sequence length in seconds; 0 = scene preset");
  c.define("data.image_size", int64_t{0}, "square frame size; 0 = scene preset");
  c.define("data.camera_grid", false, "render a 3x3 camera rig instead of one");

  c.define("solver.kind", "dopri5", "euler | dopri5");
  c.define("solver.step", 0.05, "euler step size (normalized time)");
  c.define("solver.atol", 1e-3, "dopri5 absolute tolerance");
  c.define("solver.rtol", 1e-4, "dopri5 relative tolerance");
  c.define("solver.max_steps", int64_t{100000}, "adaptive step budget");

  c.define("render.n_coarse", int64_t{32}, "coarse samples per ray");
  c.define("render.n_fine", int64_t{32}, "importance samples per ray; 0 = off");
  c.define("render.ray_batch", int64_t{512}, "rays per full-image render chunk");

  c.define("field.pe_position", int64_t{6}, "position encoding octaves");
  c.define("field.pe_direction", int64_t{4}, "view-direction encoding octaves");
  c.define("field.latent_dim", int64_t{16}, "radiance-field conditioning width");
  c.define("field.hidden", "64,64", "radiance MLP hidden widths");

  c.define("model.dynamic_dim", int64_t{64}, "dynamic latent width (single mode)");
  c.define("model.rnn_hidden", int64_t{64}, "recognition GRU hidden width");
  c.define("model.f_hidden", "64,64", "latent dynamics MLP hidden widths");
  c.define("model.decoder_hidden", "64",
           "dynamic-to-radiance decoder hidden widths (single mode)");
  c.define("model.use_static_latent", false,
           "add a trained static latent to decoded latents (single mode)");
  c.define("model.canonical_dim", int64_t{16}, "canonical latent width (multi)");
  c.define("model.pose_dim", int64_t{3},
           "pose coordinates consumed from the dataset (leading components)");
  c.define("model.pe_pose", int64_t{4}, "pose encoding octaves (multi)");
  c.define("model.encoder_hidden", "256,256,256,256,256,256,256",
           "initial-pose encoder hidden widths (multi)");
  c.define("model.encoder_out", int64_t{16}, "initial-pose embedding width (multi)");
  c.define("model.multi_decoder_hidden", "256,256",
           "latent/pose/velocity decoder hidden widths (multi)");

  c.define("train.mode", "single", "single | multi");
  c.define("train.iterations", int64_t{20000}, "total optimization iterations");
  c.define("train.warmup_iters", int64_t{5000}, "initial warm-up length");
  c.define("train.warmup_period", int64_t{4000}, "recurring warm-up period");
  c.define("train.warmup_len", int64_t{200}, "recurring warm-up length");
  c.define("train.recurring_warmup", true, "re-anchor latents periodically");
  c.define("train.ray_batch", int64_t{128}, "rays sampled per iteration");
  c.define("train.lr", 5e-4, "Adam learning rate");
  c.define("train.kl_weight", 0.0,
           "weight of the recognition KL penalty (single mode)");
  c.define("train.checkpoint_interval", int64_t{5000},
           "iterations between checkpoint files; 0 = final only");
  c.define("train.probe_interval", int64_t{100},
           "iterations between probe-frame PSNR measurements");
  c.define("train.probe_frame", int64_t{0}, "training-frame index to probe");
  c.define("train.frame_window", int64_t{0},
           "train on frames [0, window); 0 = all frames");
  c.define("train.frame_stride", int64_t{1},
           "keep every k-th frame of the window for training");
  c.define("train.loss_nerf", 1.0, "reconstruction loss weight");
  c.define("train.loss_pose", 1e-2, "pose supervision weight (multi)");
  c.define("train.loss_vel", 1e-2, "velocity supervision weight (multi)");
  c.define("train.loss_lip", 1e-22, "Lipschitz bound product weight (multi)");
  c.define("train.raw_pose_supervision", false,
           "supervise raw poses instead of encoded poses");

  c.define("eval.flow_alpha", 0.5, "flow-magnitude mask threshold");
  c.define("eval.iou_pooled", false, "pool mask overlaps instead of averaging");
  c.define("eval.pose_tol", 0.25, "color-match tolerance for ball detection");

  c.define("analysis.grid", int64_t{64}, "divergence heatmap resolution");
  c.define("analysis.horizon", 4.0,
           "integration horizon in training-window units");
  c.define("analysis.initial_count", int64_t{32},
           "initial conditions sampled for sink detection");
  c.define("analysis.cluster_tau", 0.05,
           "cluster linkage threshold as a fraction of terminal diameter");

  c.define("run.data_dir", "", "dataset directory");
  c.define("run.out_dir", "out", "output directory");
  c.define("run.checkpoint", "", "input checkpoint path");
  c.define("run.sequence", "", "sequence id; empty = first held-out sequence");
  c.define("run.camera", int64_t{0}, "camera index");
  c.define("run.time", 1.5, "render time in training-window units");
  c.define("run.from", 0.0, "extrapolation range start (window units)");
  c.define("run.to", 4.0, "extrapolation range end (window units)");
  c.define("run.count", int64_t{20}, "extrapolation frame count");
  return c;
}

bool apply_env_seed(Config& config) {
  const char* raw = std::getenv("NODERF_SEED");
  if (raw == nullptr) return false;
  int64_t v = 0;
  require(parse_full_int(raw, &v) && v >= 0,
          "NODERF_SEED: cannot parse \"", raw, "\" as a non-negative integer");
  config.set_value("seed", nlohmann::json(v), "NODERF_SEED");
  return true;
}

std::vector<int64_t> parse_int_list(const std::string& text) {
  std::vector<int64_t> out;
  if (text.empty()) return out;
  size_t start = 0;
  while (true) {
    const size_t comma = text.find(',', start);
    const std::string item = text.substr(
        start, comma == std::string::npos ? std::string::npos : comma - start);
    int64_t v = 0;
    require(parse_full_int(item, &v) && v > 0, "config: cannot parse \"", text,
            "\" as a comma-separated positive integer list");
    out.push_back(v);
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

}  // namespace noderf::cfg
