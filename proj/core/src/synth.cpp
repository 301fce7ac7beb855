// Copyright 2026 The noderf Authors
// SPDX-License-Identifier: Apache-2.0

#include "noderf/synth.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "noderf/common.hpp"
#include "noderf/rng.hpp"

namespace noderf::synth {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

using Vec2 = std::array<double, 2>;

constexpr int kFormatVersion = 1;
constexpr double kCameraDistance = 2.2;
constexpr double kGridOffset = 0.5;        // 3x3 rig spacing, world units
constexpr double kHillProfileScale = 0.3;  // world height per potential unit
constexpr double kHillProfileLift = 0.1;

Vec2 add2(const Vec2& a, const Vec2& b) { return {a[0] + b[0], a[1] + b[1]}; }
Vec2 mul2(double s, const Vec2& a) { return {s * a[0], s * a[1]}; }

struct State {
  Vec2 q;
  Vec2 qd;
};

void validate_spec(const SceneSpec& spec) {
  require(spec.frames >= 2, "SceneSpec: needs at least 2 frames, got ",
          spec.frames);
  require(spec.duration > 0.0, "SceneSpec: duration must be positive");
  require(spec.substeps >= 1, "SceneSpec: substeps must be positive");
  require(spec.damping >= 0.0, "SceneSpec: damping must be non-negative");
  require(spec.gravity > 0.0 && spec.arm_length > 0.0,
          "SceneSpec: pendulum parameters must be positive");
  require(spec.bowl_k > 0.0, "SceneSpec: bowl stiffness must be positive");
  require(spec.hill_a > 0.0 && spec.hill_b > 0.0,
          "SceneSpec: double-well coefficients must be positive");
  require(spec.image_size >= 8, "SceneSpec: image_size must be at least 8");
  require(spec.ball_radius > 0.0, "SceneSpec: ball_radius must be positive");
}

void validate_initial(const SceneSpec& spec, const Vec2& q0, const Vec2& qd0) {
  switch (spec.kind) {
    case SceneKind::kPendulum:
      require(q0[1] == 0.0 && qd0[1] == 0.0,
              "simulate_scene: the pendulum is 1-D; q[1] and qd[1] must be 0");
      require(std::abs(q0[0]) <= 3.0,
              "simulate_scene: pendulum angle out of bounds: ", q0[0]);
      require(std::abs(qd0[0]) <= 10.0,
              "simulate_scene: pendulum angular rate out of bounds: ", qd0[0]);
      break;
    case SceneKind::kOscillatingBall:
      require(std::hypot(q0[0], q0[1]) <= 0.7,
              "simulate_scene: ball start position out of bounds");
      require(std::hypot(qd0[0], qd0[1]) <= 5.0,
              "simulate_scene: ball start velocity out of bounds");
      break;
    case SceneKind::kBifurcatingHill:
      require(q0[1] == 0.0 && qd0[1] == 0.0,
              "simulate_scene: the hill is 1-D; q[1] and qd[1] must be 0");
      require(std::abs(q0[0]) <= 0.66,
              "simulate_scene: hill start position out of bounds: ", q0[0]);
      require(std::abs(qd0[0]) <= 3.0,
              "simulate_scene: hill start velocity out of bounds: ", qd0[0]);
      break;
  }
}

Vec2 accel(const SceneSpec& spec, const Vec2& q, const Vec2& qd) {
  switch (spec.kind) {
    case SceneKind::kPendulum:
      return {-(spec.gravity / spec.arm_length) * std::sin(q[0]) -
                  spec.damping * qd[0],
              0.0};
    case SceneKind::kOscillatingBall:
      return {-2.0 * spec.bowl_k * q[0] - spec.damping * qd[0],
              -2.0 * spec.bowl_k * q[1] - spec.damping * qd[1]};
    case SceneKind::kBifurcatingHill: {
      const double x = q[0];
      const double slope = 4.0 * spec.hill_a * (x * x) * x - 2.0 * spec.hill_b * x;
      return {-slope - spec.damping * qd[0], 0.0};
    }
  }
  fail("accel: unknown scene kind");
}

State deriv(const SceneSpec& spec, const State& s) {
  return {s.qd, accel(spec, s.q, s.qd)};
}

State rk4_step(const SceneSpec& spec, const State& s, double h) {
  const State k1 = deriv(spec, s);
  const State k2 = deriv(
      spec, {add2(s.q, mul2(0.5 * h, k1.q)), add2(s.qd, mul2(0.5 * h, k1.qd))});
  const State k3 = deriv(
      spec, {add2(s.q, mul2(0.5 * h, k2.q)), add2(s.qd, mul2(0.5 * h, k2.qd))});
  const State k4 =
      deriv(spec, {add2(s.q, mul2(h, k3.q)), add2(s.qd, mul2(h, k3.qd))});
  const double w = h / 6.0;
  State out;
  for (int i = 0; i < 2; ++i) {
    out.q[i] = s.q[i] + w * (k1.q[i] + 2.0 * k2.q[i] + 2.0 * k3.q[i] + k4.q[i]);
    out.qd[i] =
        s.qd[i] + w * (k1.qd[i] + 2.0 * k2.qd[i] + 2.0 * k3.qd[i] + k4.qd[i]);
  }
  return out;
}

std::array<double, 3> cross3(const std::array<double, 3>& a,
                             const std::array<double, 3>& b) {
  return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2],
          a[0] * b[1] - a[1] * b[0]};
}

std::array<double, 3> normalized3(const std::array<double, 3>& v) {
  const double n = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
  require(n > 0.0, "look_at: degenerate direction");
  return {v[0] / n, v[1] / n, v[2] / n};
}

// World-from-camera pose looking from `eye` toward `target`, with world +y
// appearing upward in the image (pixel v grows along camera +y, i.e. down).
rad::Camera look_at(const std::array<double, 3>& eye,
                    const std::array<double, 3>& target, int size) {
  const std::array<double, 3> fwd = normalized3(
      {target[0] - eye[0], target[1] - eye[1], target[2] - eye[2]});
  const std::array<double, 3> right =
      normalized3(cross3(fwd, {0.0, 1.0, 0.0}));
  const std::array<double, 3> down = cross3(fwd, right);
  rad::Camera cam;
  cam.pose = {right[0], down[0], fwd[0], eye[0],   //
              right[1], down[1], fwd[1], eye[1],   //
              right[2], down[2], fwd[2], eye[2]};
  cam.focal = 1.375 * size;
  cam.width = size;
  cam.height = size;
  cam.near = 1.0;
  cam.far = 3.5;
  cam.validate();
  return cam;
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(bool(in), "cannot open ", path);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_file_bytes(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(bool(out), "cannot write ", path);
  out.write(bytes.data(), std::streamsize(bytes.size()));
  require(bool(out), "short write to ", path);
}

std::string checksum_hex(const std::string& bytes) {
  char buf[24];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a(bytes.data(), bytes.size())));
  return buf;
}

std::string frame_file_name(int camera_id, int t) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "cam%d_t%03d.ppm", camera_id, t);
  return buf;
}

std::string pose_csv_text(const SequenceRecord& seq) {
  std::ostringstream os;
  os << "t,px,py,pz,vx,vy,vz\n";
  const size_t n = seq.times.size();
  for (size_t i = 0; i < n; ++i) {
    const std::array<double, 3>& p = seq.positions[i];
    const std::array<double, 3> v =
        i + 1 < n ? seq.velocities[i] : std::array<double, 3>{0.0, 0.0, 0.0};
    os << format_double(seq.times[i]) << ',' << format_double(p[0]) << ','
       << format_double(p[1]) << ',' << format_double(p[2]) << ','
       << format_double(v[0]) << ',' << format_double(v[1]) << ','
       << format_double(v[2]) << '\n';
  }
  return os.str();
}

std::vector<double> parse_csv_row(const std::string& line,
                                  const std::string& path) {
  std::vector<double> out;
  size_t start = 0;
  while (true) {
    const size_t comma = line.find(',', start);
    const std::string cell = line.substr(
        start, comma == std::string::npos ? std::string::npos : comma - start);
    char* end = nullptr;
    const double v = std::strtod(cell.c_str(), &end);
    require(end != cell.c_str() && *end == '\0', "malformed number '", cell,
            "' in ", path);
    out.push_back(v);
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

void parse_pose_csv(const std::string& text, const std::string& path,
                    SequenceRecord& seq) {
  std::istringstream in(text);
  std::string line;
  require(bool(std::getline(in, line)), "empty pose file ", path);
  require(line == "t,px,py,pz,vx,vy,vz", "unexpected pose header in ", path);
  std::vector<std::array<double, 3>> p;
  std::vector<std::array<double, 3>> v;
  std::vector<double> times;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const std::vector<double> row = parse_csv_row(line, path);
    require(row.size() == 7, "expected 7 columns in ", path);
    times.push_back(row[0]);
    p.push_back({row[1], row[2], row[3]});
    v.push_back({row[4], row[5], row[6]});
  }
  require(p.size() >= 2, "pose file ", path, " needs at least 2 rows");
  v.pop_back();  // the final row has no forward difference; it stores zeros
  seq.times = std::move(times);
  seq.positions = std::move(p);
  seq.velocities = std::move(v);
}

json spec_to_json(const SceneSpec& spec) {
  json j;
  j["kind"] = scene_kind_name(spec.kind);
  j["damping"] = spec.damping;
  j["gravity"] = spec.gravity;
  j["arm_length"] = spec.arm_length;
  j["bowl_k"] = spec.bowl_k;
  j["hill_a"] = spec.hill_a;
  j["hill_b"] = spec.hill_b;
  j["frames"] = spec.frames;
  j["duration"] = spec.duration;
  j["substeps"] = spec.substeps;
  j["image_size"] = spec.image_size;
  j["camera_grid"] = spec.camera_grid;
  j["ball_radius"] = spec.ball_radius;
  j["ball_color"] = spec.ball_color;
  j["background"] = spec.background;
  return j;
}

SceneSpec spec_from_json(const json& j) {
  SceneSpec spec;
  spec.kind = scene_kind_from_name(j.at("kind").get<std::string>());
  spec.damping = j.at("damping").get<double>();
  spec.gravity = j.at("gravity").get<double>();
  spec.arm_length = j.at("arm_length").get<double>();
  spec.bowl_k = j.at("bowl_k").get<double>();
  spec.hill_a = j.at("hill_a").get<double>();
  spec.hill_b = j.at("hill_b").get<double>();
  spec.frames = j.at("frames").get<int>();
  spec.duration = j.at("duration").get<double>();
  spec.substeps = j.at("substeps").get<int>();
  spec.image_size = j.at("image_size").get<int>();
  spec.camera_grid = j.at("camera_grid").get<bool>();
  spec.ball_radius = j.at("ball_radius").get<double>();
  spec.ball_color = j.at("ball_color").get<std::array<double, 3>>();
  spec.background = j.at("background").get<std::array<double, 3>>();
  return spec;
}

json camera_to_json(int id, const rad::Camera& cam) {
  json j;
  j["id"] = id;
  j["pose"] = cam.pose;
  j["focal"] = cam.focal;
  j["width"] = cam.width;
  j["height"] = cam.height;
  j["near"] = cam.near;
  j["far"] = cam.far;
  return j;
}

rad::Camera camera_from_json(const json& j) {
  rad::Camera cam;
  cam.pose = j.at("pose").get<std::array<double, 12>>();
  cam.focal = j.at("focal").get<double>();
  cam.width = j.at("width").get<int>();
  cam.height = j.at("height").get<int>();
  cam.near = j.at("near").get<double>();
  cam.far = j.at("far").get<double>();
  cam.validate();
  return cam;
}

json parse_json_file(const std::string& path) {
  const std::string text = read_file_bytes(path);
  json j = json::parse(text, nullptr, false);
  require(!j.is_discarded(), "malformed JSON in ", path);
  return j;
}

}  // namespace

std::string scene_kind_name(SceneKind kind) {
  switch (kind) {
    case SceneKind::kPendulum:
      return "pendulum";
    case SceneKind::kOscillatingBall:
      return "oscillating-ball";
    case SceneKind::kBifurcatingHill:
      return "bifurcating-hill";
  }
  fail("scene_kind_name: unknown kind");
}

SceneKind scene_kind_from_name(const std::string& name) {
  if (name == "pendulum") return SceneKind::kPendulum;
  if (name == "oscillating-ball") return SceneKind::kOscillatingBall;
  if (name == "bifurcating-hill") return SceneKind::kBifurcatingHill;
  fail("unknown scene kind '", name, "'");
}

SceneSpec SceneSpec::pendulum() {
  SceneSpec spec;
  spec.kind = SceneKind::kPendulum;
  spec.damping = 0.75;
  spec.frames = 100;
  spec.duration = 8.0;
  return spec;
}

SceneSpec SceneSpec::oscillating_ball() {
  SceneSpec spec;
  spec.kind = SceneKind::kOscillatingBall;
  spec.damping = 0.8;
  spec.frames = 90;
  spec.duration = 3.3;
  return spec;
}

SceneSpec SceneSpec::bifurcating_hill() {
  SceneSpec spec;
  spec.kind = SceneKind::kBifurcatingHill;
  spec.damping = 3.0;
  spec.frames = 90;
  spec.duration = 9.0;
  return spec;
}

std::array<double, 3> world_position(const SceneSpec& spec, const Vec2& q) {
  switch (spec.kind) {
    case SceneKind::kPendulum:
      return {spec.arm_length * std::sin(q[0]),
              0.45 - spec.arm_length * std::cos(q[0]), 0.0};
    case SceneKind::kOscillatingBall:
      return {q[0], q[1], 0.0};
    case SceneKind::kBifurcatingHill: {
      const double x = q[0];
      const double x2 = x * x;
      const double profile = spec.hill_a * x2 * x2 - spec.hill_b * x2;
      return {x, kHillProfileScale * profile + kHillProfileLift, 0.0};
    }
  }
  fail("world_position: unknown scene kind");
}

double scene_energy(const SceneSpec& spec, const Vec2& q, const Vec2& qd) {
  switch (spec.kind) {
    case SceneKind::kPendulum: {
      const double l = spec.arm_length;
      return 0.5 * l * l * qd[0] * qd[0] +
             spec.gravity * l * (1.0 - std::cos(q[0]));
    }
    case SceneKind::kOscillatingBall:
      return 0.5 * (qd[0] * qd[0] + qd[1] * qd[1]) +
             spec.bowl_k * (q[0] * q[0] + q[1] * q[1]);
    case SceneKind::kBifurcatingHill: {
      const double x2 = q[0] * q[0];
      return 0.5 * qd[0] * qd[0] + spec.hill_a * x2 * x2 - spec.hill_b * x2;
    }
  }
  fail("scene_energy: unknown scene kind");
}

PoseTrajectory simulate_scene(const SceneSpec& spec, const Vec2& q0,
                              const Vec2& qd0) {
  validate_spec(spec);
  validate_initial(spec, q0, qd0);
  const double frame_dt = spec.duration / double(spec.frames - 1);
  const double h = frame_dt / double(spec.substeps);
  PoseTrajectory out;
  out.times.reserve(size_t(spec.frames));
  State s{q0, qd0};
  for (int i = 0; i < spec.frames; ++i) {
    out.times.push_back(frame_dt * double(i));
    out.q.push_back(s.q);
    out.qd.push_back(s.qd);
    out.position.push_back(world_position(spec, s.q));
    out.energy.push_back(scene_energy(spec, s.q, s.qd));
    if (i + 1 < spec.frames) {
      for (int k = 0; k < spec.substeps; ++k) s = rk4_step(spec, s, h);
    }
  }
  return out;
}

std::vector<rad::Camera> scene_cameras(const SceneSpec& spec) {
  validate_spec(spec);
  std::vector<rad::Camera> cams;
  if (!spec.camera_grid) {
    cams.push_back(
        look_at({0.0, 0.0, -kCameraDistance}, {0.0, 0.0, 0.0}, spec.image_size));
    return cams;
  }
  for (int gy = -1; gy <= 1; ++gy) {
    for (int gx = -1; gx <= 1; ++gx) {
      cams.push_back(look_at(
          {kGridOffset * gx, kGridOffset * gy, -kCameraDistance},
          {0.0, 0.0, 0.0}, spec.image_size));
    }
  }
  return cams;
}

img::Image render_frame(const SceneSpec& spec, const rad::Camera& camera,
                        const std::array<double, 3>& ball_center) {
  camera.validate();
  img::Image image(camera.width, camera.height);
  const double cx = 0.5 * camera.width;
  const double cy = 0.5 * camera.height;
  const std::array<double, 3> origin = camera.origin();
  const std::array<double, 3> oc = {ball_center[0] - origin[0],
                                    ball_center[1] - origin[1],
                                    ball_center[2] - origin[2]};
  const double oc2 = oc[0] * oc[0] + oc[1] * oc[1] + oc[2] * oc[2];
  const double r2 = spec.ball_radius * spec.ball_radius;
  constexpr std::array<double, 2> kSub = {0.25, 0.75};
  for (int y = 0; y < camera.height; ++y) {
    for (int x = 0; x < camera.width; ++x) {
      double rgb[3] = {0.0, 0.0, 0.0};
      for (double sy : kSub) {
        for (double sx : kSub) {
          const std::array<double, 3> dir = normalized3(camera.rotate(
              {(x + sx - cx) / camera.focal, (y + sy - cy) / camera.focal,
               1.0}));
          const double tca =
              oc[0] * dir[0] + oc[1] * dir[1] + oc[2] * dir[2];
          const bool hit = tca > 0.0 && oc2 - tca * tca <= r2;
          const std::array<double, 3>& c =
              hit ? spec.ball_color : spec.background;
          rgb[0] += c[0];
          rgb[1] += c[1];
          rgb[2] += c[2];
        }
      }
      for (int c = 0; c < 3; ++c) image.at(x, y, c) = 0.25 * rgb[c];
    }
  }
  return image;
}

SequenceRecord make_sequence(const SceneSpec& spec, const std::string& id,
                             const Vec2& q0, const Vec2& qd0) {
  const PoseTrajectory traj = simulate_scene(spec, q0, qd0);
  const std::vector<rad::Camera> cams = scene_cameras(spec);
  SequenceRecord seq;
  seq.id = id;
  seq.times = traj.times;
  seq.positions = traj.position;
  const size_t n = traj.position.size();
  seq.velocities.reserve(n - 1);
  for (size_t i = 0; i + 1 < n; ++i) {
    seq.velocities.push_back({traj.position[i + 1][0] - traj.position[i][0],
                              traj.position[i + 1][1] - traj.position[i][1],
                              traj.position[i + 1][2] - traj.position[i][2]});
  }
  seq.initial_position = seq.positions.front();
  seq.initial_velocity = seq.velocities.front();
  seq.frames.reserve(cams.size() * n);
  for (size_t c = 0; c < cams.size(); ++c) {
    seq.camera_ids.push_back(int(c));
    for (size_t t = 0; t < n; ++t) {
      seq.frames.push_back(render_frame(spec, cams[c], traj.position[t]));
    }
  }
  // The background plate is the scene with no ball: a constant fill.
  seq.background = img::Image(spec.image_size, spec.image_size);
  for (int64_t p = 0; p < seq.background.pixel_count(); ++p) {
    for (int c = 0; c < 3; ++c) {
      seq.background.data()[size_t(p * 3 + c)] = spec.background[size_t(c)];
    }
  }
  return seq;
}

std::vector<SequenceRecord> make_subsequences(const SequenceRecord& seq,
                                              int k) {
  const int frames = int(seq.times.size());
  require(k >= 1, "make_subsequences: k must be positive, got ", k);
  require(k <= frames - 1, "make_subsequences: k = ", k,
          " needs at least k + 1 = ", k + 1, " frames, got ", frames);
  require(seq.velocities.size() + 1 == seq.times.size(),
          "make_subsequences: malformed sequence record");
  const int cams = int(seq.camera_ids.size());
  std::vector<SequenceRecord> out;
  out.reserve(size_t(k));
  for (int j = 0; j < k; ++j) {
    SequenceRecord sub;
    sub.id = seq.id + "_s" + std::to_string(j);
    sub.camera_ids = seq.camera_ids;
    sub.times.assign(seq.times.begin() + j, seq.times.end());
    sub.positions.assign(seq.positions.begin() + j, seq.positions.end());
    sub.velocities.assign(seq.velocities.begin() + j, seq.velocities.end());
    sub.initial_position = sub.positions.front();
    sub.initial_velocity = sub.velocities.front();
    sub.frames.reserve(size_t(cams) * sub.times.size());
    for (int c = 0; c < cams; ++c) {
      for (int t = j; t < frames; ++t) {
        sub.frames.push_back(seq.frames[size_t(c * frames + t)]);
      }
    }
    sub.background = seq.background;
    out.push_back(std::move(sub));
  }
  return out;
}

DatasetManifest generate_dataset(const SceneSpec& spec, int train_count,
                                 int eval_count, uint64_t seed) {
  validate_spec(spec);
  require(train_count >= 1 && eval_count >= 0,
          "generate_dataset: needs at least one training sequence");
  DatasetManifest manifest;
  manifest.scene = spec;
  manifest.cameras = scene_cameras(spec);
  Rng rng(seed);
  const int total = train_count + eval_count;
  for (int i = 0; i < total; ++i) {
    Vec2 q0{0.0, 0.0};
    Vec2 qd0{0.0, 0.0};
    switch (spec.kind) {
      case SceneKind::kPendulum: {
        const double sign = rng.uniform01() < 0.5 ? -1.0 : 1.0;
        q0[0] = sign * rng.uniform(0.5, 1.1);
        break;
      }
      case SceneKind::kOscillatingBall: {
        const double angle = rng.uniform(0.0, 2.0 * M_PI);
        const double radius = rng.uniform(0.3, 0.55);
        q0 = {radius * std::cos(angle), radius * std::sin(angle)};
        break;
      }
      case SceneKind::kBifurcatingHill: {
        const double sign = rng.uniform01() < 0.5 ? -1.0 : 1.0;
        q0[0] = sign * rng.uniform(0.08, 0.4);
        break;
      }
    }
    char id[16];
    std::snprintf(id, sizeof(id), "seq%03d", i);
    manifest.sequences.push_back(make_sequence(spec, id, q0, qd0));
    if (i < train_count) {
      manifest.train_ids.push_back(id);
    } else {
      manifest.eval_ids.push_back(id);
    }
  }
  return manifest;
}

uint64_t fnv1a(const void* data, size_t size) {
  const unsigned char* bytes = static_cast<const unsigned char*>(data);
  uint64_t hash = 0xcbf29ce484222325ull;
  for (size_t i = 0; i < size; ++i) {
    hash ^= bytes[i];
    hash *= 0x100000001b3ull;
  }
  return hash;
}

void write_dataset(const DatasetManifest& manifest, const std::string& dir) {
  require(!manifest.sequences.empty(), "write_dataset: no sequences");
  require(!manifest.cameras.empty(), "write_dataset: no cameras");
  fs::create_directories(dir);

  json cams = json::array();
  for (size_t i = 0; i < manifest.cameras.size(); ++i) {
    cams.push_back(camera_to_json(int(i), manifest.cameras[i]));
  }
  json cameras_doc;
  cameras_doc["cameras"] = cams;
  write_file_bytes(dir + "/cameras.json", cameras_doc.dump(2) + "\n");

  img::write_ppm(manifest.sequences.front().background,
                 dir + "/background.ppm");

  json seq_entries = json::array();
  for (const SequenceRecord& seq : manifest.sequences) {
    require(seq.velocities.size() + 1 == seq.times.size(),
            "write_dataset: sequence ", seq.id, " has mismatched velocities");
    require(seq.frames.size() == seq.camera_ids.size() * seq.times.size(),
            "write_dataset: sequence ", seq.id, " has mismatched frames");
    const std::string seq_dir = dir + "/seq_" + seq.id;
    fs::create_directories(seq_dir);
    const std::string csv = pose_csv_text(seq);
    const std::string pose_rel = "seq_" + seq.id + "/pose.csv";
    write_file_bytes(seq_dir + "/pose.csv", csv);

    json entry;
    entry["id"] = seq.id;
    entry["camera_ids"] = seq.camera_ids;
    entry["initial_position"] = seq.initial_position;
    entry["initial_velocity"] = seq.initial_velocity;
    entry["pose_file"] = pose_rel;
    entry["pose_checksum"] = checksum_hex(csv);
    json frame_files = json::array();
    const int frames = int(seq.times.size());
    for (size_t c = 0; c < seq.camera_ids.size(); ++c) {
      for (int t = 0; t < frames; ++t) {
        const std::string name = frame_file_name(seq.camera_ids[c], t);
        img::write_ppm(seq.frames[c * size_t(frames) + size_t(t)],
                       seq_dir + "/" + name);
        frame_files.push_back("seq_" + seq.id + "/" + name);
      }
    }
    entry["frame_files"] = frame_files;
    seq_entries.push_back(entry);
  }

  json doc;
  doc["format_version"] = kFormatVersion;
  doc["scene"] = spec_to_json(manifest.scene);
  doc["background_file"] = "background.ppm";
  doc["split"] = {{"train", manifest.train_ids}, {"eval", manifest.eval_ids}};
  doc["sequences"] = seq_entries;
  write_file_bytes(dir + "/manifest.json", doc.dump(2) + "\n");
}

DatasetManifest read_dataset(const std::string& dir) {
  const std::string manifest_path = dir + "/manifest.json";
  const json doc = parse_json_file(manifest_path);
  require(doc.contains("format_version") &&
              doc.at("format_version").get<int>() == kFormatVersion,
          "unsupported dataset format in ", manifest_path);
  DatasetManifest manifest;
  manifest.scene = spec_from_json(doc.at("scene"));
  validate_spec(manifest.scene);

  const json cameras_doc = parse_json_file(dir + "/cameras.json");
  for (const json& j : cameras_doc.at("cameras")) {
    manifest.cameras.push_back(camera_from_json(j));
  }
  require(!manifest.cameras.empty(), "dataset has no cameras: ", dir);

  const img::Image background =
      img::read_ppm(dir + "/" + doc.at("background_file").get<std::string>());

  for (const json& entry : doc.at("sequences")) {
    SequenceRecord seq;
    seq.id = entry.at("id").get<std::string>();
    seq.camera_ids = entry.at("camera_ids").get<std::vector<int>>();
    seq.initial_position =
        entry.at("initial_position").get<std::array<double, 3>>();
    seq.initial_velocity =
        entry.at("initial_velocity").get<std::array<double, 3>>();

    const std::string pose_rel = entry.at("pose_file").get<std::string>();
    const std::string pose_path = dir + "/" + pose_rel;
    const std::string csv = read_file_bytes(pose_path);
    const std::string expect = entry.at("pose_checksum").get<std::string>();
    require(checksum_hex(csv) == expect, "checksum mismatch for ", pose_path,
            ": expected ", expect, ", got ", checksum_hex(csv));
    parse_pose_csv(csv, pose_path, seq);

    const std::vector<std::string> frame_files =
        entry.at("frame_files").get<std::vector<std::string>>();
    require(frame_files.size() == seq.camera_ids.size() * seq.times.size(),
            "sequence ", seq.id, " lists ", frame_files.size(),
            " frame files, expected ",
            seq.camera_ids.size() * seq.times.size());
    seq.frames.reserve(frame_files.size());
    for (const std::string& rel : frame_files) {
      seq.frames.push_back(img::read_ppm(dir + "/" + rel));
    }
    seq.background = background;
    manifest.sequences.push_back(std::move(seq));
  }

  auto has_sequence = [&](const std::string& id) {
    for (const SequenceRecord& s : manifest.sequences) {
      if (s.id == id) return true;
    }
    return false;
  };
  manifest.train_ids =
      doc.at("split").at("train").get<std::vector<std::string>>();
  manifest.eval_ids = doc.at("split").at("eval").get<std::vector<std::string>>();
  for (const std::string& id : manifest.train_ids) {
    require(has_sequence(id), "train split references unknown sequence ", id);
    for (const std::string& e : manifest.eval_ids) {
      require(e != id, "sequence ", id, " appears in both splits");
    }
  }
  for (const std::string& id : manifest.eval_ids) {
    require(has_sequence(id), "eval split references unknown sequence ", id);
  }
  return manifest;
}

}  // namespace noderf::synth
