// Copyright 2026 The noderf Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"

namespace noderf::cfg {

// Flat dotted-key configuration ("solver.kind", "train.lr", ...). The key set
// and each key's type are fixed by the registered defaults; overlays (a JSON
// config file, --set flags, the NODERF_SEED environment variable) may only
// rebind known keys and must match the registered type, so typos and type
// mixups fail loudly with the offending source named. Dumps are sorted by key
// and contain every key, which makes resolved run configs diff-able and makes
// a dump reloadable as a config file that reproduces the run.
class Config {
 public:
  void define(const std::string& key, double def, const std::string& desc);
  void define(const std::string& key, int64_t def, const std::string& desc);
  void define(const std::string& key, bool def, const std::string& desc);
  void define(const std::string& key, const std::string& def, const std::string& desc);
  void define(const std::string& key, const char* def, const std::string& desc) {
    define(key, std::string(def), desc);
  }

  // Overlays, in increasing precedence: load_file, then set_override per
  // flag, then (for the seed) the environment. Later calls win.
  void load_file(const std::string& path);
  // One "key=value" assignment; `source` names the origin for error messages.
  void set_override(const std::string& keyval, const std::string& source = "--set");
  // Rebinds a known key from a parsed JSON scalar.
  void set_value(const std::string& key, const nlohmann::json& value,
                 const std::string& source);

  bool has_key(const std::string& key) const;
  double get_double(const std::string& key) const;
  int64_t get_int(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  const std::string& get_string(const std::string& key) const;

  std::vector<std::string> keys() const;
  const std::string& description(const std::string& key) const;

  // Fully-resolved dump, keys sorted; `write_file` emits it as pretty JSON.
  nlohmann::ordered_json to_json() const;
  void write_file(const std::string& path) const;
  // Aligned "key  default  description" table for usage text.
  std::string help_text() const;

 private:
  struct Entry {
    nlohmann::json value;
    nlohmann::json def;
    std::string desc;
  };
  const Entry& at(const std::string& key) const;
  std::map<std::string, Entry> entries_;
};

// The artifact's full key registry with defaults.
Config default_config();

// Applies the NODERF_SEED environment variable to `seed` if set; returns
// whether an override happened. A set-but-unparsable value is an error.
bool apply_env_seed(Config& config);

// Parses a comma-separated positive integer list ("64,64"); empty input is
// an empty list. Used for layer-width config values.
std::vector<int64_t> parse_int_list(const std::string& text);

}  // namespace noderf::cfg
