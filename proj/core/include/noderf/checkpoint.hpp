// Copyright 2026 The noderf Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "noderf/nn.hpp"
#include "noderf/tensor.hpp"

namespace noderf::ckpt {

// Checkpoint container, format version 1. Layout:
//
//   line 1: "NODERF-CKPT 1\n"                      (magic + format version)
//   line 2: one-line JSON header + "\n":
//           {"iteration":I,"seed":S,"meta":{...},
//            "arrays":[{"name":"...","shape":[...]}, ...]}
//   then:   the arrays' float64 payloads, little-endian, back to back in
//           directory order, with no padding and nothing after the last one.
//
// `meta` is caller-owned JSON (model/run config echo, loss weights). Writing
// the same checkpoint twice produces byte-identical files.
inline constexpr char kMagic[] = "NODERF-CKPT";
inline constexpr int kFormatVersion = 1;

struct ArrayEntry {
  std::string name;
  grad::Shape shape;
  std::vector<double> data;
};

class Checkpoint {
 public:
  int64_t iteration = 0;
  uint64_t seed = 0;
  nlohmann::ordered_json meta = nlohmann::ordered_json::object();

  void add(const std::string& name, const grad::Tensor& value);
  void add(const std::string& name, grad::Shape shape, std::vector<double> data);
  bool has(const std::string& name) const;
  const ArrayEntry& entry(const std::string& name) const;
  grad::Tensor tensor(const std::string& name) const;
  const std::vector<ArrayEntry>& arrays() const { return arrays_; }

  // Snapshot of every param's current value, in list order.
  static Checkpoint capture(const std::vector<nn::Param*>& params);
  // Copies stored arrays back into params, matching by name. The param list
  // and the stored arrays must correspond exactly (no missing params, no
  // unused arrays) with equal shapes.
  void restore(const std::vector<nn::Param*>& params) const;

 private:
  const ArrayEntry* find(const std::string& name) const;
  std::vector<ArrayEntry> arrays_;
};

// Atomic write: the bytes go to "<path>.tmp" and are renamed over `path`, so
// a crash mid-write never leaves a torn checkpoint behind.
void write_checkpoint(const std::string& path, const Checkpoint& checkpoint);
Checkpoint read_checkpoint(const std::string& path);

}  // namespace noderf::ckpt
