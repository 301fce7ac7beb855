// Copyright 2026 The noderf Authors
// SPDX-License-Identifier: Apache-2.0
#include "noderf/checkpoint.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "noderf/common.hpp"

namespace noderf::ckpt {
namespace {

using nlohmann::ordered_json;

void put_f64_le(std::string* out, double v) {
  uint64_t bits = 0;
  std::memcpy(&bits, &v, sizeof bits);
  for (int i = 0; i < 8; ++i) out->push_back(char(uint8_t(bits >> (8 * i))));
}

double get_f64_le(const char* p) {
  uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= uint64_t(uint8_t(p[i])) << (8 * i);
  double v = 0.0;
  std::memcpy(&v, &bits, sizeof v);
  return v;
}

std::string serialize(const Checkpoint& c) {
  ordered_json header = ordered_json::object();
  header["iteration"] = c.iteration;
  header["seed"] = c.seed;
  header["meta"] = c.meta;
  ordered_json dir = ordered_json::array();
  for (const ArrayEntry& a : c.arrays()) {
    ordered_json e = ordered_json::object();
    e["name"] = a.name;
    e["shape"] = a.shape;
    dir.push_back(std::move(e));
  }
  header["arrays"] = std::move(dir);

  std::string out = strcat_msg(kMagic, ' ', kFormatVersion, '\n');
  out += header.dump();
  out += '\n';
  for (const ArrayEntry& a : c.arrays()) {
    out.reserve(out.size() + a.data.size() * 8);
    for (double v : a.data) put_f64_le(&out, v);
  }
  return out;
}

}  // namespace

void Checkpoint::add(const std::string& name, const grad::Tensor& value) {
  require(value.defined(), "checkpoint: array \"", name, "\" is undefined");
  add(name, value.shape(), value.data());
}

void Checkpoint::add(const std::string& name, grad::Shape shape,
                     std::vector<double> data) {
  require(!name.empty(), "checkpoint: array name must not be empty");
  require(find(name) == nullptr, "checkpoint: duplicate array \"", name, "\"");
  require(grad::numel(shape) == int64_t(data.size()), "checkpoint: array \"", name,
          "\" has ", data.size(), " values for shape ", grad::shape_str(shape));
  arrays_.push_back(ArrayEntry{name, std::move(shape), std::move(data)});
}

const ArrayEntry* Checkpoint::find(const std::string& name) const {
  for (const ArrayEntry& a : arrays_) {
    if (a.name == name) return &a;
  }
  return nullptr;
}

bool Checkpoint::has(const std::string& name) const { return find(name) != nullptr; }

const ArrayEntry& Checkpoint::entry(const std::string& name) const {
  const ArrayEntry* a = find(name);
  require(a != nullptr, "checkpoint: no array named \"", name, "\"");
  return *a;
}

grad::Tensor Checkpoint::tensor(const std::string& name) const {
  const ArrayEntry& a = entry(name);
  return grad::Tensor(a.shape, a.data);
}

Checkpoint Checkpoint::capture(const std::vector<nn::Param*>& params) {
  Checkpoint c;
  for (nn::Param* p : params) c.add(p->name(), p->value());
  return c;
}

void Checkpoint::restore(const std::vector<nn::Param*>& params) const {
  require(params.size() == arrays_.size(), "checkpoint: holds ", arrays_.size(),
          " arrays but the model has ", params.size(), " parameters");
  for (nn::Param* p : params) {
    const ArrayEntry* a = find(p->name());
    require(a != nullptr, "checkpoint: missing array for parameter \"", p->name(),
            "\"");
    require(a->shape == p->value().shape(), "checkpoint: parameter \"", p->name(),
            "\" has shape ", grad::shape_str(p->value().shape()),
            " but the stored array is ", grad::shape_str(a->shape));
    p->assign(grad::Tensor(a->shape, a->data));
  }
}

void write_checkpoint(const std::string& path, const Checkpoint& checkpoint) {
  const std::string blob = serialize(checkpoint);
  const std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    require(os.good(), "checkpoint: cannot open ", tmp, " for writing");
    os.write(blob.data(), std::streamsize(blob.size()));
    os.flush();
    require(os.good(), "checkpoint: write failed for ", tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    std::remove(tmp.c_str());
    fail("checkpoint: cannot rename ", tmp, " to ", path);
  }
}

Checkpoint read_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  require(is.good(), "checkpoint: cannot open ", path);
  std::ostringstream buf;
  buf << is.rdbuf();
  const std::string blob = buf.str();

  const size_t magic_end = blob.find('\n');
  require(magic_end != std::string::npos, "checkpoint: ", path, ": truncated header");
  const std::string magic_line = blob.substr(0, magic_end);
  const std::string expected_prefix = std::string(kMagic) + ' ';
  require(magic_line.rfind(expected_prefix, 0) == 0, "checkpoint: ", path,
          ": not a checkpoint file (bad magic)");
  const std::string version = magic_line.substr(expected_prefix.size());
  require(version == std::to_string(kFormatVersion), "checkpoint: ", path,
          ": unsupported format version ", version, " (supported: ",
          kFormatVersion, ")");

  const size_t header_end = blob.find('\n', magic_end + 1);
  require(header_end != std::string::npos, "checkpoint: ", path,
          ": truncated header");
  ordered_json header;
  try {
    header = ordered_json::parse(blob.substr(magic_end + 1, header_end - magic_end - 1));
  } catch (const nlohmann::json::parse_error& err) {
    fail("checkpoint: ", path, ": malformed header: ", err.what());
  }
  require(header.is_object() && header.contains("iteration") &&
              header.contains("seed") && header.contains("arrays") &&
              header["arrays"].is_array(),
          "checkpoint: ", path, ": malformed header");

  Checkpoint c;
  c.iteration = header["iteration"].get<int64_t>();
  c.seed = header["seed"].get<uint64_t>();
  if (header.contains("meta")) c.meta = header["meta"];

  size_t offset = header_end + 1;
  for (const auto& e : header["arrays"]) {
    require(e.is_object() && e.contains("name") && e.contains("shape"),
            "checkpoint: ", path, ": malformed array directory");
    const std::string name = e["name"].get<std::string>();
    const grad::Shape shape = e["shape"].get<grad::Shape>();
    require(!shape.empty(), "checkpoint: ", path, ": array \"", name,
            "\" has an empty shape");
    // Overflow-safe payload bound: reject any extent the remaining bytes
    // cannot possibly cover before multiplying it in.
    const int64_t max_n = int64_t((blob.size() - offset) / 8);
    int64_t n = 1;
    for (int64_t d : shape) {
      require(d > 0, "checkpoint: ", path, ": array \"", name,
              "\" has invalid shape ", grad::shape_str(shape));
      require(d <= max_n && n <= max_n / d, "checkpoint: ", path,
              ": truncated payload for array \"", name, "\"");
      n *= d;
    }
    std::vector<double> data(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) {
      data[size_t(i)] = get_f64_le(blob.data() + offset + size_t(i) * 8);
    }
    offset += size_t(n) * 8;
    c.add(name, shape, std::move(data));
  }
  require(offset == blob.size(), "checkpoint: ", path, ": ", blob.size() - offset,
          " unexpected trailing bytes");
  return c;
}

}  // namespace noderf::ckpt
