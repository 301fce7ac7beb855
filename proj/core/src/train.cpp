// Copyright 2026 The noderf Authors
// SPDX-License-Identifier: Apache-2.0
#include "noderf/train.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "noderf/common.hpp"
#include "noderf/eval.hpp"
#include "noderf/nn.hpp"
#include "noderf/rng.hpp"
#include "noderf/tensor.hpp"

namespace noderf::pipe {
namespace {

using grad::Tape;
using grad::Tensor;
using nn::Param;

// Salts the training seed for probe renders so the probe's sampling stream
// is fixed across iterations (probe values stay comparable) and disjoint
// from the optimization stream.
constexpr uint64_t kProbeSalt = 0x9E3779B97F4A7C15ull;

std::string fmt_g(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

std::string part_cell(const Tensor& t) {
  return t.defined() ? fmt_g(t.item()) : std::string();
}

const synth::SequenceRecord& find_sequence(const synth::DatasetManifest& data,
                                           const std::string& id) {
  for (const auto& seq : data.sequences) {
    if (seq.id == id) return seq;
  }
  fail("dataset has no sequence with id '", id, "'");
}

std::vector<int64_t> sample_pixels(Rng& rng, int64_t count, int64_t total) {
  std::vector<int64_t> out;
  out.reserve(static_cast<size_t>(count));
  for (int64_t i = 0; i < count; ++i) out.push_back(rng.index(total));
  return out;
}

Tensor gather_gt(const img::Image& im, const std::vector<int64_t>& pixels) {
  std::vector<double> v;
  v.reserve(pixels.size() * 3);
  for (int64_t p : pixels) {
    const int x = int(p % im.width());
    const int y = int(p / im.width());
    for (int c = 0; c < 3; ++c) v.push_back(im.at(x, y, c));
  }
  return Tensor({int64_t(pixels.size()), 3}, std::move(v));
}

// Leading `dims` components of world rows at the given frame indices.
Tensor pose_rows(const std::vector<std::array<double, 3>>& rows,
                 const std::vector<int64_t>& frames, int64_t dims) {
  std::vector<double> v;
  v.reserve(frames.size() * static_cast<size_t>(dims));
  for (int64_t f : frames) {
    const auto& r = rows.at(static_cast<size_t>(f));
    for (int64_t d = 0; d < dims; ++d) v.push_back(r[size_t(d)]);
  }
  return Tensor({int64_t(frames.size()), dims}, std::move(v));
}

bool in_warm_phase(int64_t iter, const TrainOptions& o) {
  if (iter < o.warmup_iters) return true;
  if (!o.recurring_warmup || o.warmup_period <= 0 || o.warmup_len <= 0)
    return false;
  const int64_t k = iter - o.warmup_iters;
  return k >= o.warmup_period && (k % o.warmup_period) < o.warmup_len;
}

void apply_freeze(const std::vector<Param*>& all,
                  const std::vector<Param*>& keep, bool warm) {
  if (!warm) {
    for (Param* p : all) p->set_frozen(false);
    return;
  }
  std::unordered_set<const Param*> keepset(keep.begin(), keep.end());
  for (Param* p : all) p->set_frozen(keepset.count(p) == 0);
}

struct MetricsLog {
  std::string text = "iter,loss,l_nerf,l_p,l_v,l_lip,probe_psnr\n";
  std::ofstream file;
  bool to_file = false;

  void open(const std::string& path) {
    file.open(path, std::ios::binary | std::ios::trunc);
    require(file.good(), "train: cannot open metrics log at ", path);
    to_file = true;
    file << text;
  }
  void row(int64_t iter, double loss, const LossParts& parts, double probe) {
    std::string line = std::to_string(iter);
    line += ',';
    line += fmt_g(loss);
    line += ',';
    line += part_cell(parts.nerf);
    line += ',';
    line += part_cell(parts.pose);
    line += ',';
    line += part_cell(parts.vel);
    line += ',';
    line += part_cell(parts.lip);
    line += ',';
    if (!std::isnan(probe)) line += fmt_g(probe);
    line += '\n';
    text += line;
    if (to_file) file << line;
  }
  void finish() {
    if (!to_file) return;
    file.flush();
    require(file.good(), "train: metrics log write failed");
  }
};

ckpt::Checkpoint snapshot(const std::vector<Param*>& params,
                          const RunSetup& setup, int64_t iter,
                          const TrainOptions& opts) {
  ckpt::Checkpoint c = ckpt::Checkpoint::capture(params);
  c.iteration = iter;
  c.seed = opts.seed;
  c.meta = setup.to_json();
  c.meta["config"] = opts.extra_meta;
  return c;
}

std::string checkpoint_name(int64_t iter) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "ckpt_%07lld.ckpt",
                static_cast<long long>(iter));
  return buf;
}

std::vector<Tensor> level_colors(const std::vector<rad::LevelRender>& levels) {
  std::vector<Tensor> colors;
  colors.reserve(levels.size());
  for (const auto& lv : levels) colors.push_back(lv.out.color);
  return colors;
}

void validate_options(const TrainOptions& o) {
  require(o.iterations >= 1, "train: iterations must be >= 1, got ",
          o.iterations);
  require(o.ray_batch >= 1, "train: ray batch must be >= 1, got ", o.ray_batch);
  require(o.warmup_iters >= 0 && o.warmup_iters <= o.iterations,
          "train: warm-up length ", o.warmup_iters,
          " outside [0, iterations]");
  require(o.n_coarse >= 1, "train: need at least one coarse sample");
  require(o.lr > 0.0, "train: learning rate must be positive, got ", o.lr);
}

// Shared per-dataset geometry checks; returns the per-slot camera list for
// one sequence (slot c of the frame table uses cameras[camera_ids[c]]).
std::vector<const rad::Camera*> slot_cameras(
    const synth::DatasetManifest& data, const synth::SequenceRecord& seq) {
  require(!data.cameras.empty(), "train: dataset has no cameras");
  require(!seq.camera_ids.empty(), "train: sequence '", seq.id,
          "' lists no cameras");
  require(seq.frames.size() == seq.camera_ids.size() * seq.times.size(),
          "train: sequence '", seq.id,
          "' frame table is not camera-major complete");
  std::vector<const rad::Camera*> out;
  out.reserve(seq.camera_ids.size());
  for (int id : seq.camera_ids) {
    require(id >= 0 && size_t(id) < data.cameras.size(), "train: sequence '",
            seq.id, "' references unknown camera ", id);
    out.push_back(&data.cameras[size_t(id)]);
  }
  return out;
}

}  // namespace

FrameProtocol make_protocol(int64_t total_frames, int64_t window,
                            int64_t stride) {
  require(total_frames >= 1, "make_protocol: sequence has no frames");
  if (window == 0) window = total_frames;
  require(window >= 1 && window <= total_frames,
          "make_protocol: frame window ", window, " out of range for ",
          total_frames, " frames");
  require(stride >= 1, "make_protocol: stride must be >= 1, got ", stride);
  FrameProtocol p;
  for (int64_t f = 0; f < window; f += stride) p.train_frames.push_back(f);
  require(p.train_frames.size() >= 2,
          "make_protocol: need at least two training frames, window ", window,
          " with stride ", stride, " keeps ", p.train_frames.size());
  p.denom = double(p.train_frames.back());
  p.train_times.reserve(p.train_frames.size());
  for (int64_t f : p.train_frames) p.train_times.push_back(double(f) / p.denom);
  return p;
}

const char* solver_kind_name(ode::SolverKind kind) {
  return kind == ode::SolverKind::kEuler ? "euler" : "dopri5";
}

ode::SolverKind solver_kind_from_name(const std::string& name) {
  if (name == "euler") return ode::SolverKind::kEuler;
  if (name == "dopri5") return ode::SolverKind::kDopri5;
  fail("unknown solver kind '", name, "' (expected euler or dopri5)");
}

nlohmann::ordered_json RunSetup::to_json() const {
  nlohmann::ordered_json j;
  j["mode"] = mode;
  nlohmann::ordered_json s;
  s["kind"] = solver_kind_name(solver.kind);
  s["step"] = solver.step;
  s["atol"] = solver.atol;
  s["rtol"] = solver.rtol;
  s["max_steps"] = solver.max_steps;
  j["solver"] = s;
  nlohmann::ordered_json r;
  r["n_coarse"] = render.n_coarse;
  r["n_fine"] = render.n_fine;
  r["background"] = render.background;
  r["ray_batch"] = render.ray_batch;
  j["render"] = r;
  nlohmann::ordered_json c;
  c["pose"] = camera.pose;
  c["focal"] = camera.focal;
  c["width"] = camera.width;
  c["height"] = camera.height;
  c["near"] = camera.near;
  c["far"] = camera.far;
  j["camera"] = c;
  j["time_denom"] = time_denom;
  j["encode_dt"] = encode_dt;
  j["initial_positions"] = initial_positions;
  j["initial_velocities"] = initial_velocities;
  j["model"] = model;
  return j;
}

RunSetup RunSetup::from_meta(const nlohmann::ordered_json& meta) {
  RunSetup r;
  try {
    r.mode = meta.at("mode").get<std::string>();
    const auto& s = meta.at("solver");
    r.solver.kind = solver_kind_from_name(s.at("kind").get<std::string>());
    r.solver.step = s.at("step").get<double>();
    r.solver.atol = s.at("atol").get<double>();
    r.solver.rtol = s.at("rtol").get<double>();
    r.solver.max_steps = s.at("max_steps").get<int64_t>();
    const auto& rd = meta.at("render");
    r.render.n_coarse = rd.at("n_coarse").get<int>();
    r.render.n_fine = rd.at("n_fine").get<int>();
    auto bg = rd.at("background").get<std::vector<double>>();
    require(bg.size() == 3, "run setup: background needs 3 channels");
    for (int i = 0; i < 3; ++i) r.render.background[size_t(i)] = bg[size_t(i)];
    r.render.ray_batch = rd.at("ray_batch").get<int>();
    const auto& c = meta.at("camera");
    auto pose = c.at("pose").get<std::vector<double>>();
    require(pose.size() == 12, "run setup: camera pose needs 12 entries");
    for (int i = 0; i < 12; ++i) r.camera.pose[size_t(i)] = pose[size_t(i)];
    r.camera.focal = c.at("focal").get<double>();
    r.camera.width = c.at("width").get<int>();
    r.camera.height = c.at("height").get<int>();
    r.camera.near = c.at("near").get<double>();
    r.camera.far = c.at("far").get<double>();
    r.time_denom = meta.at("time_denom").get<double>();
    r.encode_dt = meta.at("encode_dt").get<double>();
    r.initial_positions =
        meta.at("initial_positions").get<std::vector<std::vector<double>>>();
    r.initial_velocities =
        meta.at("initial_velocities").get<std::vector<std::vector<double>>>();
    r.model = meta.at("model");
  } catch (const nlohmann::json::exception& e) {
    fail("checkpoint meta lacks run-setup fields: ", e.what());
  }
  require(r.mode == "single" || r.mode == "multi",
          "run setup: unknown mode '", r.mode, "'");
  require(r.time_denom > 0.0, "run setup: time denominator must be positive");
  return r;
}

LossParts single_parts(Tape* tape, SingleSeqModel& model,
                       const SingleBatch& batch, const RenderContext& ctx,
                       const ode::SolverConfig& solver, double kl_weight) {
  require(batch.t >= 0.0, "single_parts: negative render time ", batch.t);
  auto enc = model.encode_initial(tape, batch.encode_dt, batch.eps, solver);
  std::vector<double> times{0.0};
  if (batch.t > 0.0) times.push_back(batch.t);
  auto roll = model.rollout(tape, enc.z0, times, solver);
  Tensor z = row(roll.latents, int64_t(times.size()) - 1);
  Rng render_rng(batch.render_seed);
  auto levels = rad::render_rays(tape, model.field(), z, batch.rays, ctx.near,
                                 ctx.far, ctx.config, render_rng);
  LossParts parts;
  parts.nerf = rad::nerf_loss(level_colors(levels), batch.gt);
  if (kl_weight != 0.0) parts.kl = kl_penalty(enc.mu, enc.s);
  return parts;
}

LossParts multi_parts(Tape* tape, MultiSeqModel& model, const MultiBatch& batch,
                      const RenderContext& ctx,
                      const ode::SolverConfig& solver) {
  require(batch.render_index >= 0 &&
              size_t(batch.render_index) < batch.times.size(),
          "multi_parts: render index ", batch.render_index,
          " outside the time grid");
  Tensor z0 = model.initial_latent(tape, batch.p0, batch.v0);
  auto roll = model.rollout(tape, z0, batch.times, solver);
  Tensor z = row(roll.latents, batch.render_index);
  Rng render_rng(batch.render_seed);
  auto levels = rad::render_rays(tape, model.field(), z, batch.rays, ctx.near,
                                 ctx.far, ctx.config, render_rng);
  LossParts parts;
  parts.nerf = rad::nerf_loss(level_colors(levels), batch.gt);
  auto aux = auxiliary_losses(roll.poses, roll.vels, batch.pose_gt,
                              batch.vel_gt);
  parts.pose = aux.first;
  parts.vel = aux.second;
  parts.lip = model.lipschitz_bound_product(tape);
  return parts;
}

img::Image render_frame_single(SingleSeqModel& model, const RunSetup& setup,
                               double t, uint64_t sample_seed) {
  require(t >= 0.0, "render_frame_single: negative time ", t);
  Tensor eps = Tensor::zeros({1, model.config().dynamic_dim});
  auto enc = model.encode_initial(nullptr, setup.encode_dt, eps, setup.solver);
  std::vector<double> times{0.0};
  if (t > 0.0) times.push_back(t);
  auto roll = model.rollout(nullptr, enc.z0, times, setup.solver);
  Tensor z = row(roll.latents, int64_t(times.size()) - 1);
  Rng rng(sample_seed);
  return rad::render_image(model.field(), z, setup.camera, setup.render, rng);
}

img::Image render_frame_multi(MultiSeqModel& model, const RunSetup& setup,
                              const grad::Tensor& p0, const grad::Tensor& v0,
                              double t, uint64_t sample_seed) {
  require(t >= 0.0, "render_frame_multi: negative time ", t);
  Tensor z0 = model.initial_latent(nullptr, p0, v0);
  std::vector<double> times{0.0};
  if (t > 0.0) times.push_back(t);
  auto roll = model.rollout(nullptr, z0, times, setup.solver);
  Tensor z = row(roll.latents, int64_t(times.size()) - 1);
  Rng rng(sample_seed);
  return rad::render_image(model.field(), z, setup.camera, setup.render, rng);
}

TrainReport train_single(SingleSeqModel& model,
                         const synth::DatasetManifest& data,
                         const TrainOptions& opts) {
  validate_options(opts);
  require(!data.train_ids.empty(), "train_single: dataset has no training split");
  const auto& seq = find_sequence(data, data.train_ids[0]);
  const auto cams = slot_cameras(data, seq);
  const int64_t ncams = int64_t(cams.size());
  const int64_t total_frames = int64_t(seq.times.size());

  FrameProtocol proto =
      make_protocol(total_frames, opts.frame_window, opts.frame_stride);
  const int64_t count = int64_t(proto.train_frames.size());
  require(opts.probe_frame >= 0 && opts.probe_frame < count,
          "train_single: probe frame index ", opts.probe_frame,
          " outside the training list of ", count);

  RunSetup setup;
  setup.mode = "single";
  setup.solver = opts.solver;
  setup.render.n_coarse = int(opts.n_coarse);
  setup.render.n_fine = int(opts.n_fine);
  setup.render.background = data.scene.background;
  setup.camera = *cams[0];
  setup.time_denom = proto.denom;
  setup.encode_dt = proto.train_times[1] - proto.train_times[0];
  setup.model = model.config().to_json();

  const int w = setup.camera.width;
  const int h = setup.camera.height;
  const RenderContext ctx{setup.render, setup.camera.near, setup.camera.far};
  const int64_t dyn = model.config().dynamic_dim;

  MetricsLog log;
  std::string metrics_path;
  if (!opts.out_dir.empty()) {
    std::filesystem::create_directories(opts.out_dir);
    metrics_path = opts.out_dir + "/metrics.csv";
    log.open(metrics_path);
  }

  Rng rng(opts.seed);
  nn::AdamConfig acfg;
  acfg.lr = opts.lr;
  nn::Adam adam(acfg);
  const auto params = model.params();
  const auto warm_set = model.warmup_params();
  int phase = -1;
  double final_loss = 0.0;
  double last_probe = -1.0;

  for (int64_t iter = 0; iter < opts.iterations; ++iter) {
    const bool warm = in_warm_phase(iter, opts);
    if (int(warm) != phase) {
      apply_freeze(params, warm_set, warm);
      phase = int(warm);
    }
    Tape tape;
    LossParts parts;
    if (warm) {
      const int which = int(rng.index(2));
      const int64_t ci = rng.index(ncams);
      const auto pixels = sample_pixels(rng, opts.ray_batch, int64_t(w) * h);
      const uint64_t rseed = rng.next_u64();
      Tensor z = model.warmup_latent(&tape, which);
      const auto rays = rad::generate_rays(*cams[size_t(ci)], pixels);
      const img::Image& im =
          seq.frames[size_t(ci * total_frames + proto.train_frames[which])];
      Rng rrng(rseed);
      auto levels = rad::render_rays(&tape, model.field(), z, rays, ctx.near,
                                     ctx.far, ctx.config, rrng);
      parts.nerf = rad::nerf_loss(level_colors(levels), gather_gt(im, pixels));
    } else {
      const int64_t fi = rng.index(count);
      const int64_t ci = rng.index(ncams);
      SingleBatch b;
      const auto pixels = sample_pixels(rng, opts.ray_batch, int64_t(w) * h);
      b.eps = Tensor({1, dyn}, rng.normal_vec(dyn));
      b.render_seed = rng.next_u64();
      b.encode_dt = setup.encode_dt;
      b.t = proto.train_times[size_t(fi)];
      b.rays = rad::generate_rays(*cams[size_t(ci)], pixels);
      b.gt = gather_gt(
          seq.frames[size_t(ci * total_frames + proto.train_frames[size_t(fi)])],
          pixels);
      parts = single_parts(&tape, model, b, ctx, opts.solver, opts.weights.kl);
    }
    Tensor loss = total_loss(parts, opts.weights);
    auto grads = tape.backward(loss);
    adam.step(params, grads);
    final_loss = loss.item();

    const int64_t iter_row = iter + 1;
    double probe = std::nan("");
    if (opts.probe_interval > 0 && (iter_row % opts.probe_interval == 0 ||
                                    iter_row == opts.iterations)) {
      img::Image ours =
          render_frame_single(model, setup, proto.train_times[size_t(opts.probe_frame)],
                              opts.seed ^ kProbeSalt);
      probe = eval::psnr(
          ours, seq.frames[size_t(proto.train_frames[size_t(opts.probe_frame)])]);
      last_probe = probe;
    }
    log.row(iter_row, final_loss, parts, probe);
    if (!opts.out_dir.empty() && opts.checkpoint_interval > 0 &&
        iter_row % opts.checkpoint_interval == 0 &&
        iter_row != opts.iterations) {
      ckpt::write_checkpoint(opts.out_dir + "/" + checkpoint_name(iter_row),
                       snapshot(params, setup, iter_row, opts));
    }
  }
  apply_freeze(params, warm_set, false);
  log.finish();

  TrainReport report;
  report.iterations = opts.iterations;
  report.final_loss = final_loss;
  report.final_probe_psnr = last_probe;
  report.metrics_csv = std::move(log.text);
  report.metrics_path = metrics_path;
  report.protocol = std::move(proto);
  report.setup = std::move(setup);
  if (!opts.out_dir.empty()) {
    report.checkpoint_path = opts.out_dir + "/ckpt_final.ckpt";
    ckpt::write_checkpoint(report.checkpoint_path,
                     snapshot(params, report.setup, opts.iterations, opts));
  }
  return report;
}

TrainReport train_multi(MultiSeqModel& model,
                        const synth::DatasetManifest& data,
                        const TrainOptions& opts) {
  validate_options(opts);
  require(!data.train_ids.empty(), "train_multi: dataset has no training split");
  std::vector<const synth::SequenceRecord*> trains;
  trains.reserve(data.train_ids.size());
  for (const auto& id : data.train_ids)
    trains.push_back(&find_sequence(data, id));
  const auto cams = slot_cameras(data, *trains[0]);
  const int64_t ncams = int64_t(cams.size());
  const int64_t total_frames = int64_t(trains[0]->times.size());
  for (const auto* s : trains) {
    require(int64_t(s->times.size()) == total_frames,
            "train_multi: sequence '", s->id,
            "' length differs from the first training sequence");
    require(s->velocities.size() + 1 == s->times.size(),
            "train_multi: sequence '", s->id, "' has a malformed velocity table");
    require(s->camera_ids == trains[0]->camera_ids, "train_multi: sequence '",
            s->id, "' uses a different camera rig");
  }

  FrameProtocol proto =
      make_protocol(total_frames, opts.frame_window, opts.frame_stride);
  const int64_t count = int64_t(proto.train_frames.size());
  require(opts.probe_frame >= 0 && opts.probe_frame < count,
          "train_multi: probe frame index ", opts.probe_frame,
          " outside the training list of ", count);

  const int64_t pd = model.config().pose_dim;
  RunSetup setup;
  setup.mode = "multi";
  setup.solver = opts.solver;
  setup.render.n_coarse = int(opts.n_coarse);
  setup.render.n_fine = int(opts.n_fine);
  setup.render.background = data.scene.background;
  setup.camera = *cams[0];
  setup.time_denom = proto.denom;
  setup.model = model.config().to_json();

  // Per-sequence training inputs: initial conditions plus full-grid pose and
  // velocity supervision targets (velocities are one-frame displacements at
  // each grid time; the last grid entry has no velocity row).
  std::vector<Tensor> p0s, v0s, pose_gts, vel_gts;
  std::vector<int64_t> vel_frames(proto.train_frames.begin(),
                                  proto.train_frames.end() - 1);
  for (const auto* s : trains) {
    std::vector<double> p(static_cast<size_t>(pd), 0.0);
    std::vector<double> v(static_cast<size_t>(pd), 0.0);
    for (int64_t d = 0; d < pd; ++d) {
      p[size_t(d)] = s->initial_position[size_t(d)];
      v[size_t(d)] = s->initial_velocity[size_t(d)];
    }
    p0s.push_back(Tensor({1, pd}, p));
    v0s.push_back(Tensor({1, pd}, v));
    pose_gts.push_back(
        model.pose_targets(pose_rows(s->positions, proto.train_frames, pd)));
    vel_gts.push_back(
        model.pose_targets(pose_rows(s->velocities, vel_frames, pd)));
    setup.initial_positions.push_back(p);
    setup.initial_velocities.push_back(v);
  }

  const int w = setup.camera.width;
  const int h = setup.camera.height;
  const RenderContext ctx{setup.render, setup.camera.near, setup.camera.far};
  const img::Image& bg_image = trains[0]->background;
  require(bg_image.width() == w && bg_image.height() == h,
          "train_multi: background plate does not match the camera");

  MetricsLog log;
  std::string metrics_path;
  if (!opts.out_dir.empty()) {
    std::filesystem::create_directories(opts.out_dir);
    metrics_path = opts.out_dir + "/metrics.csv";
    log.open(metrics_path);
  }

  Rng rng(opts.seed);
  nn::AdamConfig acfg;
  acfg.lr = opts.lr;
  nn::Adam adam(acfg);
  const auto params = model.params();
  const auto warm_set = model.warmup_params();
  int phase = -1;
  double final_loss = 0.0;
  double last_probe = -1.0;

  for (int64_t iter = 0; iter < opts.iterations; ++iter) {
    const bool warm = in_warm_phase(iter, opts);
    if (int(warm) != phase) {
      apply_freeze(params, warm_set, warm);
      phase = int(warm);
    }
    Tape tape;
    LossParts parts;
    if (warm) {
      // The static warm-up reconstructs the empty backdrop through the
      // static latent; the plate is a camera-0 view, so no camera draw.
      const auto pixels = sample_pixels(rng, opts.ray_batch, int64_t(w) * h);
      const uint64_t rseed = rng.next_u64();
      Tensor z = model.static_latent(&tape);
      const auto rays = rad::generate_rays(*cams[0], pixels);
      Rng rrng(rseed);
      auto levels = rad::render_rays(&tape, model.field(), z, rays, ctx.near,
                                     ctx.far, ctx.config, rrng);
      parts.nerf =
          rad::nerf_loss(level_colors(levels), gather_gt(bg_image, pixels));
      parts.lip = model.lipschitz_bound_product(&tape);
    } else {
      const int64_t si = rng.index(int64_t(trains.size()));
      const int64_t ci = rng.index(ncams);
      const int64_t fi = rng.index(count);
      MultiBatch b;
      const auto pixels = sample_pixels(rng, opts.ray_batch, int64_t(w) * h);
      b.render_seed = rng.next_u64();
      b.p0 = p0s[size_t(si)];
      b.v0 = v0s[size_t(si)];
      b.times = proto.train_times;
      b.render_index = fi;
      b.rays = rad::generate_rays(*cams[size_t(ci)], pixels);
      b.gt = gather_gt(
          trains[size_t(si)]
              ->frames[size_t(ci * total_frames + proto.train_frames[size_t(fi)])],
          pixels);
      b.pose_gt = pose_gts[size_t(si)];
      b.vel_gt = vel_gts[size_t(si)];
      parts = multi_parts(&tape, model, b, ctx, opts.solver);
    }
    Tensor loss = total_loss(parts, opts.weights);
    auto grads = tape.backward(loss);
    adam.step(params, grads);
    final_loss = loss.item();

    const int64_t iter_row = iter + 1;
    double probe = std::nan("");
    if (opts.probe_interval > 0 && (iter_row % opts.probe_interval == 0 ||
                                    iter_row == opts.iterations)) {
      img::Image ours = render_frame_multi(
          model, setup, p0s[0], v0s[0],
          proto.train_times[size_t(opts.probe_frame)], opts.seed ^ kProbeSalt);
      probe = eval::psnr(
          ours,
          trains[0]->frames[size_t(proto.train_frames[size_t(opts.probe_frame)])]);
      last_probe = probe;
    }
    log.row(iter_row, final_loss, parts, probe);
    if (!opts.out_dir.empty() && opts.checkpoint_interval > 0 &&
        iter_row % opts.checkpoint_interval == 0 &&
        iter_row != opts.iterations) {
      ckpt::write_checkpoint(opts.out_dir + "/" + checkpoint_name(iter_row),
                       snapshot(params, setup, iter_row, opts));
    }
  }
  apply_freeze(params, warm_set, false);
  log.finish();

  TrainReport report;
  report.iterations = opts.iterations;
  report.final_loss = final_loss;
  report.final_probe_psnr = last_probe;
  report.metrics_csv = std::move(log.text);
  report.metrics_path = metrics_path;
  report.protocol = std::move(proto);
  report.setup = std::move(setup);
  if (!opts.out_dir.empty()) {
    report.checkpoint_path = opts.out_dir + "/ckpt_final.ckpt";
    ckpt::write_checkpoint(report.checkpoint_path,
                     snapshot(params, report.setup, opts.iterations, opts));
  }
  return report;
}

namespace {
rad::FieldConfig field_config_from(const cfg::Config& config) {
  rad::FieldConfig f;
  f.pe_position = int(config.get_int("field.pe_position"));
  f.pe_direction = int(config.get_int("field.pe_direction"));
  f.latent_dim = config.get_int("field.latent_dim");
  f.hidden.clear();
  for (int64_t w : cfg::parse_int_list(config.get_string("field.hidden")))
    f.hidden.push_back(int(w));
  return f;
}
}  // namespace

SingleSeqConfig single_config_from(const cfg::Config& config) {
  SingleSeqConfig c;
  c.dynamic_dim = config.get_int("model.dynamic_dim");
  c.rnn_hidden = config.get_int("model.rnn_hidden");
  c.f_hidden = cfg::parse_int_list(config.get_string("model.f_hidden"));
  c.decoder_hidden =
      cfg::parse_int_list(config.get_string("model.decoder_hidden"));
  c.use_static_latent = config.get_bool("model.use_static_latent");
  c.field = field_config_from(config);
  return c;
}

MultiSeqConfig multi_config_from(const cfg::Config& config) {
  MultiSeqConfig c;
  c.canonical_dim = config.get_int("model.canonical_dim");
  c.pose_dim = config.get_int("model.pose_dim");
  c.pe_pose = int(config.get_int("model.pe_pose"));
  c.encoder_hidden =
      cfg::parse_int_list(config.get_string("model.encoder_hidden"));
  c.encoder_out = config.get_int("model.encoder_out");
  c.decoder_hidden =
      cfg::parse_int_list(config.get_string("model.multi_decoder_hidden"));
  c.f_hidden = cfg::parse_int_list(config.get_string("model.f_hidden"));
  c.raw_pose_targets = config.get_bool("train.raw_pose_supervision");
  c.field = field_config_from(config);
  return c;
}

ode::SolverConfig solver_from(const cfg::Config& config) {
  ode::SolverConfig s;
  s.kind = solver_kind_from_name(config.get_string("solver.kind"));
  s.step = config.get_double("solver.step");
  s.atol = config.get_double("solver.atol");
  s.rtol = config.get_double("solver.rtol");
  s.max_steps = config.get_int("solver.max_steps");
  return s;
}

TrainOptions train_options_from(const cfg::Config& config) {
  TrainOptions o;
  o.iterations = config.get_int("train.iterations");
  o.warmup_iters = config.get_int("train.warmup_iters");
  o.warmup_period = config.get_int("train.warmup_period");
  o.warmup_len = config.get_int("train.warmup_len");
  o.recurring_warmup = config.get_bool("train.recurring_warmup");
  o.ray_batch = config.get_int("train.ray_batch");
  o.lr = config.get_double("train.lr");
  o.weights.nerf = config.get_double("train.loss_nerf");
  o.weights.pose = config.get_double("train.loss_pose");
  o.weights.vel = config.get_double("train.loss_vel");
  o.weights.lip = config.get_double("train.loss_lip");
  o.weights.kl = config.get_double("train.kl_weight");
  o.checkpoint_interval = config.get_int("train.checkpoint_interval");
  o.probe_interval = config.get_int("train.probe_interval");
  o.probe_frame = config.get_int("train.probe_frame");
  o.frame_window = config.get_int("train.frame_window");
  o.frame_stride = config.get_int("train.frame_stride");
  o.solver = solver_from(config);
  o.n_coarse = config.get_int("render.n_coarse");
  o.n_fine = config.get_int("render.n_fine");
  o.seed = uint64_t(config.get_int("seed"));
  o.out_dir = config.get_string("run.out_dir");
  return o;
}

LoadedSingle load_single(const std::string& checkpoint_path) {
  ckpt::Checkpoint c = ckpt::read_checkpoint(checkpoint_path);
  RunSetup setup = RunSetup::from_meta(c.meta);
  require(setup.mode == "single", "load_single: checkpoint at ",
          checkpoint_path, " was trained in '", setup.mode, "' mode");
  SingleSeqConfig mc = SingleSeqConfig::from_json(setup.model);
  Rng rng(c.seed);
  LoadedSingle out{SingleSeqModel(mc, rng), std::move(setup), std::move(c)};
  out.checkpoint.restore(out.model.params());
  return out;
}

LoadedMulti load_multi(const std::string& checkpoint_path) {
  ckpt::Checkpoint c = ckpt::read_checkpoint(checkpoint_path);
  RunSetup setup = RunSetup::from_meta(c.meta);
  require(setup.mode == "multi", "load_multi: checkpoint at ", checkpoint_path,
          " was trained in '", setup.mode, "' mode");
  MultiSeqConfig mc = MultiSeqConfig::from_json(setup.model);
  Rng rng(c.seed);
  LoadedMulti out{MultiSeqModel(mc, rng), std::move(setup), std::move(c)};
  out.checkpoint.restore(out.model.params());
  return out;
}

std::string checkpoint_mode(const std::string& checkpoint_path) {
  ckpt::Checkpoint c = ckpt::read_checkpoint(checkpoint_path);
  require(c.meta.contains("mode") && c.meta["mode"].is_string(),
          "checkpoint at ", checkpoint_path, " does not record a mode");
  return c.meta["mode"].get<std::string>();
}

}  // namespace noderf::pipe
