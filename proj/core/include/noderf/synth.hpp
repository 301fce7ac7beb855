// Copyright 2026 The noderf Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef NODERF_SYNTH_HPP_
#define NODERF_SYNTH_HPP_

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "noderf/image.hpp"
#include "noderf/radiance.hpp"

namespace noderf::synth {

enum class SceneKind { kPendulum, kOscillatingBall, kBifurcatingHill };

std::string scene_kind_name(SceneKind kind);
SceneKind scene_kind_from_name(const std::string& name);

// Procedural scene description. Generalized coordinates q are 2-vectors:
// the pendulum uses q[0] as the arm angle, the oscillating ball moves in the
// full (q[0], q[1]) plane, and the bifurcating hill uses q[0] as the
// horizontal position along the double-well profile.
struct SceneSpec {
  SceneKind kind = SceneKind::kPendulum;
  double damping = 0.75;

  // Pendulum: angle dynamics theta'' = -(gravity/arm_length) sin(theta)
  // - damping * theta'.
  double gravity = 9.81;
  double arm_length = 0.55;

  // Oscillating ball: bowl potential U(x) = bowl_k * |x|^2.
  double bowl_k = 8.8;

  // Bifurcating hill: double well U(x) = hill_a x^4 - hill_b x^2 with
  // minima at +-sqrt(hill_b / (2 hill_a)).
  double hill_a = 8.0;
  double hill_b = 4.0;

  int frames = 100;
  double duration = 8.0;  // seconds, frames span [0, duration]
  int substeps = 10;      // RK4 sub-steps per frame interval

  int image_size = 64;
  bool camera_grid = false;  // false: single camera; true: 3x3 rig
  double ball_radius = 0.12;
  // High luma contrast keeps dense-flow magnitudes well above the mask
  // thresholds used by the dynamics metric.
  std::array<double, 3> ball_color{1.0, 0.85, 0.3};
  std::array<double, 3> background{0.05, 0.06, 0.08};

  static SceneSpec pendulum();
  static SceneSpec oscillating_ball();
  static SceneSpec bifurcating_hill();
};

// Frame-rate ground truth from RK4 integration at `substeps` times the
// frame rate.
struct PoseTrajectory {
  std::vector<double> times;                    // frame times
  std::vector<std::array<double, 2>> q;         // generalized coordinates
  std::vector<std::array<double, 2>> qd;        // generalized velocities
  std::vector<std::array<double, 3>> position;  // world ball centers
  std::vector<double> energy;                   // kinetic + potential
};

// Integrates the scene dynamics from (q0, qd0). Throws if the initial
// condition is outside the scene's bounds.
PoseTrajectory simulate_scene(const SceneSpec& spec,
                              const std::array<double, 2>& q0,
                              const std::array<double, 2>& qd0);

// World-space ball center for generalized coordinates q.
std::array<double, 3> world_position(const SceneSpec& spec,
                                     const std::array<double, 2>& q);

// Mechanical energy of a state (mass 1).
double scene_energy(const SceneSpec& spec, const std::array<double, 2>& q,
                    const std::array<double, 2>& qd);

// The scene's camera rig: one camera facing the scene plane, or a 3x3 grid.
std::vector<rad::Camera> scene_cameras(const SceneSpec& spec);

// Flat-shaded sphere over the constant background, anti-aliased by 2x2
// supersampling; silhouettes come from exact ray-sphere tests.
img::Image render_frame(const SceneSpec& spec, const rad::Camera& camera,
                        const std::array<double, 3>& ball_center);

struct SequenceRecord {
  std::string id;
  std::vector<int> camera_ids;
  std::vector<double> times;
  std::vector<std::array<double, 3>> positions;   // p_t, one per frame
  std::vector<std::array<double, 3>> velocities;  // v_t = p_{t+1} - p_t
  std::array<double, 3> initial_position{};
  std::array<double, 3> initial_velocity{};
  // Frames are camera-major: frames[c * times.size() + t].
  std::vector<img::Image> frames;
  img::Image background;
};

// Simulates and renders one sequence from all rig cameras.
SequenceRecord make_sequence(const SceneSpec& spec, const std::string& id,
                             const std::array<double, 2>& q0,
                             const std::array<double, 2>& qd0);

// Sub-sequence j of k starts at frame j and inherits all remaining frames,
// with (p0, v0) = (p_j, p_{j+1} - p_j). Requires k <= frames - 1.
std::vector<SequenceRecord> make_subsequences(const SequenceRecord& seq, int k);

struct DatasetManifest {
  SceneSpec scene;
  std::vector<rad::Camera> cameras;
  std::vector<SequenceRecord> sequences;
  std::vector<std::string> train_ids;
  std::vector<std::string> eval_ids;
};

// Samples per-scene initial conditions and builds `train_count` training
// sequences plus `eval_count` held-out ones; deterministic in `seed`.
DatasetManifest generate_dataset(const SceneSpec& spec, int train_count,
                                 int eval_count, uint64_t seed);

// Directory layout: manifest.json (format-version, scene, splits, file list
// with pose checksums), cameras.json, background.ppm, and per sequence
// seq_<id>/pose.csv plus seq_<id>/cam<c>_t<ttt>.ppm frames. Round trips are
// bit-exact; readers verify pose checksums and fail naming the bad file.
void write_dataset(const DatasetManifest& manifest, const std::string& dir);
DatasetManifest read_dataset(const std::string& dir);

// FNV-1a 64-bit hash (pose-file checksums).
uint64_t fnv1a(const void* data, size_t size);

}  // namespace noderf::synth

#endif  // NODERF_SYNTH_HPP_
