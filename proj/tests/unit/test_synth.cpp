// Copyright 2026 The noderf Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "noderf/common.hpp"
#include "noderf/synth.hpp"

using noderf::Error;
using namespace noderf::synth;
namespace fs = std::filesystem;

namespace {

std::string fresh_dir(const char* name) {
  const std::string dir = std::string("/tmp/noderf_synth_") + name;
  fs::remove_all(dir);
  return dir;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(bool(in));
  return std::string(std::istreambuf_iterator<char>(in), {});
}

// A small, cheap-to-render scene used wherever the physics parameters do
// not matter.
SceneSpec tiny_spec() {
  SceneSpec spec = SceneSpec::pendulum();
  spec.frames = 8;
  spec.duration = 0.6;
  spec.image_size = 16;
  return spec;
}

double rel_energy_drift(const PoseTrajectory& traj) {
  double worst = 0.0;
  const double e0 = traj.energy.front();
  for (double e : traj.energy) {
    worst = std::max(worst, std::abs(e - e0) / std::max(1.0, std::abs(e0)));
  }
  return worst;
}

int sign_changes_x(const PoseTrajectory& traj) {
  int count = 0;
  for (size_t i = 0; i + 1 < traj.position.size(); ++i) {
    const double a = traj.position[i][0];
    const double b = traj.position[i + 1][0];
    if ((a < 0.0 && b > 0.0) || (a > 0.0 && b < 0.0)) ++count;
  }
  return count;
}

}  // namespace

TEST_SUITE_BEGIN("synth");

TEST_CASE("pendulum at rest stays at the bottom, with zero energy") {
  const SceneSpec spec = SceneSpec::pendulum();
  const PoseTrajectory traj = simulate_scene(spec, {0.0, 0.0}, {0.0, 0.0});
  REQUIRE(traj.position.size() == 100);
  REQUIRE(traj.times.size() == 100);
  const std::array<double, 3> bottom = {0.0, 0.45 - spec.arm_length, 0.0};
  for (size_t i = 0; i < traj.position.size(); ++i) {
    CHECK(traj.position[i] == bottom);
    CHECK(traj.energy[i] == 0.0);
  }
  CHECK(traj.times.front() == 0.0);
  CHECK(traj.times.back() == doctest::Approx(spec.duration).epsilon(1e-12));
}

TEST_CASE("zero damping conserves energy to 1e-6 over the full horizon") {
  SceneSpec pend = SceneSpec::pendulum();
  pend.damping = 0.0;
  pend.substeps = 40;
  const PoseTrajectory swing = simulate_scene(pend, {0.9, 0.0}, {0.0, 0.0});
  CHECK(swing.energy.front() > 0.1);
  CHECK(rel_energy_drift(swing) < 1e-6);

  SceneSpec ball = SceneSpec::oscillating_ball();
  ball.damping = 0.0;
  ball.substeps = 40;
  const PoseTrajectory orbit = simulate_scene(ball, {0.5, 0.1}, {0.0, 0.0});
  CHECK(orbit.energy.front() > 1.0);
  CHECK(rel_energy_drift(orbit) < 1e-6);

  SceneSpec hill = SceneSpec::bifurcating_hill();
  hill.damping = 0.0;
  hill.substeps = 40;
  const PoseTrajectory roll = simulate_scene(hill, {0.6, 0.0}, {0.0, 0.0});
  CHECK(rel_energy_drift(roll) < 1e-6);
}

TEST_CASE("positive damping gives non-increasing energy across frames") {
  const std::array<SceneSpec, 3> specs = {SceneSpec::pendulum(),
                                          SceneSpec::oscillating_ball(),
                                          SceneSpec::bifurcating_hill()};
  const std::array<std::array<double, 2>, 3> starts = {
      std::array<double, 2>{0.9, 0.0}, std::array<double, 2>{0.5, 0.1},
      std::array<double, 2>{0.3, 0.0}};
  for (size_t s = 0; s < specs.size(); ++s) {
    const PoseTrajectory traj =
        simulate_scene(specs[s], starts[s], {0.0, 0.0});
    for (size_t i = 0; i + 1 < traj.energy.size(); ++i) {
      CHECK(traj.energy[i + 1] <=
            traj.energy[i] + 1e-12 * std::max(1.0, std::abs(traj.energy[i])));
    }
    // Damping must actually bite: the horizon sheds most of the energy.
    CHECK(traj.energy.back() < 0.5 * traj.energy.front() + 1e-12);
  }
}

TEST_CASE("hill crest is an unstable equilibrium: exact stay, epsilon decides") {
  const SceneSpec spec = SceneSpec::bifurcating_hill();
  const double well = std::sqrt(spec.hill_b / (2.0 * spec.hill_a));
  REQUIRE(well == doctest::Approx(0.5).epsilon(1e-12));

  const PoseTrajectory at_crest = simulate_scene(spec, {0.0, 0.0}, {0.0, 0.0});
  for (const std::array<double, 3>& p : at_crest.position) CHECK(p[0] == 0.0);

  const PoseTrajectory right = simulate_scene(spec, {0.01, 0.0}, {0.0, 0.0});
  CHECK(std::abs(right.position.back()[0] - well) < 1e-3);

  const PoseTrajectory left = simulate_scene(spec, {-0.01, 0.0}, {0.0, 0.0});
  CHECK(std::abs(left.position.back()[0] + well) < 1e-3);
}

TEST_CASE("hill dynamics are mirror symmetric to 1e-12") {
  const SceneSpec spec = SceneSpec::bifurcating_hill();
  const PoseTrajectory plus = simulate_scene(spec, {0.3, 0.0}, {0.4, 0.0});
  const PoseTrajectory minus = simulate_scene(spec, {-0.3, 0.0}, {-0.4, 0.0});
  REQUIRE(plus.position.size() == minus.position.size());
  for (size_t i = 0; i < plus.position.size(); ++i) {
    CHECK(std::abs(plus.position[i][0] + minus.position[i][0]) < 1e-12);
    CHECK(std::abs(plus.position[i][1] - minus.position[i][1]) < 1e-12);
    CHECK(plus.position[i][2] == 0.0);
    CHECK(minus.position[i][2] == 0.0);
  }
}

TEST_CASE("oscillating ball crosses the bowl center exactly four times") {
  const SceneSpec spec = SceneSpec::oscillating_ball();
  const PoseTrajectory traj = simulate_scene(spec, {0.5, 0.12}, {0.0, 0.0});
  CHECK(sign_changes_x(traj) == 4);
}

TEST_CASE("world positions stay in view and in the z = 0 plane") {
  const std::array<SceneSpec, 3> specs = {SceneSpec::pendulum(),
                                          SceneSpec::oscillating_ball(),
                                          SceneSpec::bifurcating_hill()};
  const std::array<std::array<double, 2>, 3> starts = {
      std::array<double, 2>{1.1, 0.0}, std::array<double, 2>{0.5, 0.3},
      std::array<double, 2>{0.6, 0.0}};
  for (size_t s = 0; s < specs.size(); ++s) {
    const PoseTrajectory traj =
        simulate_scene(specs[s], starts[s], {0.0, 0.0});
    for (const std::array<double, 3>& p : traj.position) {
      CHECK(p[2] == 0.0);
      CHECK(std::abs(p[0]) < 0.85);
      CHECK(std::abs(p[1]) < 0.85);
    }
  }
}

TEST_CASE("finer substeps do not move the trajectory (RK4 is converged)") {
  SceneSpec spec = SceneSpec::pendulum();
  const PoseTrajectory coarse = simulate_scene(spec, {0.9, 0.0}, {0.0, 0.0});
  spec.substeps = 80;
  const PoseTrajectory fine = simulate_scene(spec, {0.9, 0.0}, {0.0, 0.0});
  double worst = 0.0;
  for (size_t i = 0; i < coarse.position.size(); ++i) {
    worst = std::max(worst,
                     std::abs(coarse.position[i][0] - fine.position[i][0]));
  }
  CHECK(worst < 1e-7);
}

TEST_CASE("simulate_scene rejects bad specs and out-of-bounds starts") {
  SceneSpec spec = SceneSpec::pendulum();
  spec.frames = 1;
  CHECK_THROWS_AS(simulate_scene(spec, {0.0, 0.0}, {0.0, 0.0}), Error);
  spec = SceneSpec::pendulum();
  spec.duration = 0.0;
  CHECK_THROWS_AS(simulate_scene(spec, {0.0, 0.0}, {0.0, 0.0}), Error);
  spec = SceneSpec::pendulum();
  spec.substeps = 0;
  CHECK_THROWS_AS(simulate_scene(spec, {0.0, 0.0}, {0.0, 0.0}), Error);

  CHECK_THROWS_AS(
      simulate_scene(SceneSpec::pendulum(), {3.5, 0.0}, {0.0, 0.0}), Error);
  CHECK_THROWS_AS(
      simulate_scene(SceneSpec::pendulum(), {0.5, 0.1}, {0.0, 0.0}), Error);
  CHECK_THROWS_AS(
      simulate_scene(SceneSpec::oscillating_ball(), {0.6, 0.6}, {0.0, 0.0}),
      Error);
  CHECK_THROWS_AS(
      simulate_scene(SceneSpec::bifurcating_hill(), {0.8, 0.0}, {0.0, 0.0}),
      Error);
}

TEST_CASE("camera rig: one validated camera, or nine aimed at the origin") {
  SceneSpec spec = SceneSpec::pendulum();
  const std::vector<noderf::rad::Camera> single = scene_cameras(spec);
  REQUIRE(single.size() == 1);
  const std::array<double, 3> fwd = single[0].forward_axis();
  CHECK(fwd[2] == doctest::Approx(1.0).epsilon(1e-12));

  spec.camera_grid = true;
  const std::vector<noderf::rad::Camera> grid = scene_cameras(spec);
  REQUIRE(grid.size() == 9);
  for (const noderf::rad::Camera& cam : grid) {
    cam.validate();
    const std::array<double, 3> eye = cam.origin();
    const std::array<double, 3> f = cam.forward_axis();
    const double n =
        std::sqrt(eye[0] * eye[0] + eye[1] * eye[1] + eye[2] * eye[2]);
    // forward must point from the eye toward the origin
    const double align =
        (-eye[0] * f[0] - eye[1] * f[1] - eye[2] * f[2]) / n;
    CHECK(align > 0.999);
  }
  for (size_t a = 0; a < grid.size(); ++a) {
    for (size_t b = a + 1; b < grid.size(); ++b) {
      CHECK(grid[a].origin() != grid[b].origin());
    }
  }
}

TEST_CASE("rendered ball centroid matches the projected center to 0.5 px") {
  SceneSpec spec = SceneSpec::pendulum();
  const noderf::rad::Camera cam = scene_cameras(spec)[0];
  const std::array<double, 3> center = {0.2, -0.1, 0.0};
  const noderf::img::Image frame = render_frame(spec, cam, center);

  // Project the center by hand: camera coordinates are R^T (X - t).
  const std::array<double, 3> t = cam.origin();
  const std::array<double, 3> d = {center[0] - t[0], center[1] - t[1],
                                   center[2] - t[2]};
  double xc = 0.0, yc = 0.0, zc = 0.0;
  for (int i = 0; i < 3; ++i) {
    xc += cam.pose[size_t(i * 4 + 0)] * d[size_t(i)];
    yc += cam.pose[size_t(i * 4 + 1)] * d[size_t(i)];
    zc += cam.pose[size_t(i * 4 + 2)] * d[size_t(i)];
  }
  REQUIRE(zc > 0.0);
  const double u = cam.focal * xc / zc + 0.5 * cam.width;
  const double v = cam.focal * yc / zc + 0.5 * cam.height;

  double wsum = 0.0, usum = 0.0, vsum = 0.0;
  for (int y = 0; y < frame.height(); ++y) {
    for (int x = 0; x < frame.width(); ++x) {
      double diff = 0.0;
      for (int c = 0; c < 3; ++c) {
        diff += std::abs(frame.at(x, y, c) - spec.background[size_t(c)]);
      }
      wsum += diff;
      usum += diff * (x + 0.5);
      vsum += diff * (y + 0.5);
    }
  }
  REQUIRE(wsum > 0.0);
  CHECK(std::abs(usum / wsum - u) < 0.5);
  CHECK(std::abs(vsum / wsum - v) < 0.5);
}

TEST_CASE("render_frame: interior is pure ball color, exterior pure background") {
  SceneSpec spec = SceneSpec::pendulum();
  const noderf::rad::Camera cam = scene_cameras(spec)[0];
  const noderf::img::Image frame = render_frame(spec, cam, {0.0, 0.0, 0.0});
  const int mid = spec.image_size / 2;
  for (int c = 0; c < 3; ++c) {
    CHECK(frame.at(mid, mid, c) == spec.ball_color[size_t(c)]);
    CHECK(frame.at(0, 0, c) == spec.background[size_t(c)]);
    CHECK(frame.at(spec.image_size - 1, spec.image_size - 1, c) ==
          spec.background[size_t(c)]);
  }
  // Anti-aliasing: some pixel mixes the two colors at a quarter fraction.
  bool partial = false;
  for (int y = 0; y < frame.height() && !partial; ++y) {
    for (int x = 0; x < frame.width() && !partial; ++x) {
      const double v = frame.at(x, y, 0);
      if (v > spec.background[0] + 1e-9 && v < spec.ball_color[0] - 1e-9) {
        partial = true;
      }
    }
  }
  CHECK(partial);
}

TEST_CASE("make_sequence: forward differences hold exactly, frames line up") {
  const SceneSpec spec = tiny_spec();
  const SequenceRecord seq = make_sequence(spec, "demo", {0.8, 0.0}, {0.0, 0.0});
  CHECK(seq.id == "demo");
  REQUIRE(seq.times.size() == 8);
  REQUIRE(seq.velocities.size() == 7);
  REQUIRE(seq.camera_ids.size() == 1);
  REQUIRE(seq.frames.size() == 8);
  for (size_t i = 0; i + 1 < seq.positions.size(); ++i) {
    for (int c = 0; c < 3; ++c) {
      CHECK(seq.velocities[i][size_t(c)] ==
            seq.positions[i + 1][size_t(c)] - seq.positions[i][size_t(c)]);
    }
  }
  CHECK(seq.initial_position == seq.positions.front());
  CHECK(seq.initial_velocity == seq.velocities.front());
  CHECK(seq.background.width() == spec.image_size);
  for (const noderf::img::Image& f : seq.frames) {
    CHECK(f.width() == spec.image_size);
    CHECK(f.height() == spec.image_size);
  }
  // The ball moves, so consecutive frames differ.
  CHECK(noderf::img::mean_abs_diff(seq.frames[0], seq.frames[7]) > 1e-5);
}

TEST_CASE("make_subsequences shifts the start and rebases (p0, v0)") {
  SceneSpec spec = tiny_spec();
  spec.frames = 12;
  const SequenceRecord seq = make_sequence(spec, "par", {0.9, 0.0}, {0.0, 0.0});
  const std::vector<SequenceRecord> subs = make_subsequences(seq, 5);
  REQUIRE(subs.size() == 5);
  for (int j = 0; j < 5; ++j) {
    const SequenceRecord& sub = subs[size_t(j)];
    CHECK(sub.id == "par_s" + std::to_string(j));
    REQUIRE(sub.times.size() == size_t(12 - j));
    REQUIRE(sub.velocities.size() == sub.times.size() - 1);
    CHECK(sub.times.front() == seq.times[size_t(j)]);
    CHECK(sub.positions.front() == seq.positions[size_t(j)]);
    CHECK(sub.initial_position == seq.positions[size_t(j)]);
    for (int c = 0; c < 3; ++c) {
      CHECK(sub.initial_velocity[size_t(c)] ==
            seq.positions[size_t(j + 1)][size_t(c)] -
                seq.positions[size_t(j)][size_t(c)]);
    }
    REQUIRE(sub.frames.size() == sub.times.size());
    CHECK(sub.frames[0].data() == seq.frames[size_t(j)].data());
    CHECK(sub.frames.back().data() == seq.frames.back().data());
  }
  CHECK_THROWS_AS(make_subsequences(seq, 12), Error);
  CHECK_THROWS_AS(make_subsequences(seq, 0), Error);
}

TEST_CASE("fnv1a matches the published reference values") {
  CHECK(fnv1a("", 0) == 0xcbf29ce484222325ull);
  CHECK(fnv1a("a", 1) == 0xaf63dc4c8601ec8cull);
  CHECK(fnv1a("foobar", 6) == 0x85944171f73967e8ull);
}

TEST_CASE("generate_dataset is deterministic in the seed") {
  SceneSpec spec = tiny_spec();
  const DatasetManifest a = generate_dataset(spec, 2, 1, 42);
  const DatasetManifest b = generate_dataset(spec, 2, 1, 42);
  const DatasetManifest c = generate_dataset(spec, 2, 1, 43);
  REQUIRE(a.sequences.size() == 3);
  CHECK(a.train_ids == std::vector<std::string>{"seq000", "seq001"});
  CHECK(a.eval_ids == std::vector<std::string>{"seq002"});
  for (size_t i = 0; i < a.sequences.size(); ++i) {
    CHECK(a.sequences[i].positions == b.sequences[i].positions);
  }
  CHECK(a.sequences[0].positions != c.sequences[0].positions);
  // Distinct sequences start from distinct states.
  CHECK(a.sequences[0].initial_position != a.sequences[1].initial_position);
}

TEST_CASE("dataset round trip: bit-exact records and byte-identical rewrite") {
  const SceneSpec spec = tiny_spec();
  const DatasetManifest out = generate_dataset(spec, 2, 1, 7);
  const std::string dir1 = fresh_dir("rt1");
  const std::string dir2 = fresh_dir("rt2");
  write_dataset(out, dir1);

  const DatasetManifest in = read_dataset(dir1);
  CHECK(in.scene.kind == spec.kind);
  CHECK(in.scene.frames == spec.frames);
  CHECK(in.scene.duration == spec.duration);
  CHECK(in.scene.damping == spec.damping);
  CHECK(in.train_ids == out.train_ids);
  CHECK(in.eval_ids == out.eval_ids);
  REQUIRE(in.cameras.size() == out.cameras.size());
  CHECK(in.cameras[0].pose == out.cameras[0].pose);
  CHECK(in.cameras[0].focal == out.cameras[0].focal);
  REQUIRE(in.sequences.size() == out.sequences.size());
  for (size_t s = 0; s < in.sequences.size(); ++s) {
    const SequenceRecord& r = in.sequences[s];
    const SequenceRecord& w = out.sequences[s];
    CHECK(r.id == w.id);
    CHECK(r.times == w.times);
    CHECK(r.positions == w.positions);
    CHECK(r.velocities == w.velocities);
    CHECK(r.initial_position == w.initial_position);
    CHECK(r.initial_velocity == w.initial_velocity);
    // The forward-difference invariant survives the round trip bitwise.
    for (size_t i = 0; i + 1 < r.positions.size(); ++i) {
      for (int c = 0; c < 3; ++c) {
        CHECK(r.velocities[i][size_t(c)] ==
              r.positions[i + 1][size_t(c)] - r.positions[i][size_t(c)]);
      }
    }
    REQUIRE(r.frames.size() == w.frames.size());
  }

  // Writing what was read reproduces every file byte for byte.
  write_dataset(in, dir2);
  size_t compared = 0;
  for (const fs::directory_entry& e : fs::recursive_directory_iterator(dir1)) {
    if (!e.is_regular_file()) continue;
    const std::string rel = fs::relative(e.path(), dir1).string();
    CHECK(slurp(dir1 + "/" + rel) == slurp(dir2 + "/" + rel));
    ++compared;
  }
  // manifest + cameras + background + per-seq csv and 8 frames each
  CHECK(compared == size_t(3 + 3 * (1 + 8)));
}

TEST_CASE("a tampered pose file fails the checksum and names the file") {
  const SceneSpec spec = tiny_spec();
  const DatasetManifest out = generate_dataset(spec, 1, 0, 11);
  const std::string dir = fresh_dir("tamper");
  write_dataset(out, dir);

  const std::string pose_path = dir + "/seq_seq000/pose.csv";
  std::string text = slurp(pose_path);
  const size_t digit = text.find('.');
  REQUIRE(digit != std::string::npos);
  text[digit + 1] = text[digit + 1] == '9' ? '8' : '9';
  {
    std::ofstream outf(pose_path, std::ios::binary | std::ios::trunc);
    outf << text;
  }
  CHECK_THROWS_WITH_AS(read_dataset(dir),
                       doctest::Contains(pose_path.c_str()), Error);
}

TEST_CASE("a missing frame file fails naming the file") {
  const SceneSpec spec = tiny_spec();
  const DatasetManifest out = generate_dataset(spec, 1, 0, 12);
  const std::string dir = fresh_dir("missing");
  write_dataset(out, dir);
  const std::string victim = dir + "/seq_seq000/cam0_t003.ppm";
  fs::remove(victim);
  CHECK_THROWS_WITH_AS(read_dataset(dir), doctest::Contains(victim.c_str()),
                       Error);
}

TEST_CASE("read_dataset rejects unknown formats and malformed manifests") {
  const std::string dir = fresh_dir("badfmt");
  fs::create_directories(dir);
  {
    std::ofstream out(dir + "/manifest.json");
    out << "{\"format_version\": 999}\n";
  }
  CHECK_THROWS_WITH_AS(read_dataset(dir), doctest::Contains("format"), Error);
  {
    std::ofstream out(dir + "/manifest.json");
    out << "this is not json\n";
  }
  CHECK_THROWS_WITH_AS(read_dataset(dir), doctest::Contains("JSON"), Error);
  CHECK_THROWS_AS(read_dataset(fresh_dir("absent")), Error);
}

TEST_CASE("scene kind names round trip and reject unknowns") {
  for (SceneKind k : {SceneKind::kPendulum, SceneKind::kOscillatingBall,
                      SceneKind::kBifurcatingHill}) {
    CHECK(scene_kind_from_name(scene_kind_name(k)) == k);
  }
  CHECK_THROWS_AS(scene_kind_from_name("volcano"), Error);
}

TEST_SUITE_END();
