// Copyright 2026 The noderf Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "noderf/checkpoint.hpp"
#include "noderf/config.hpp"
#include "noderf/image.hpp"
#include "noderf/ode.hpp"
#include "noderf/pipelines.hpp"
#include "noderf/radiance.hpp"
#include "noderf/synth.hpp"

namespace noderf::pipe {

// Frame-index protocol: which frames train, and how frame indices map to
// normalized time. Frame k renders at t = k / denom with denom the last
// training frame's index, so the training window spans [0, 1] and times
// beyond the window extrapolate with t > 1.
struct FrameProtocol {
  std::vector<int64_t> train_frames;  // ascending
  std::vector<double> train_times;    // train_frames[i] / denom
  double denom = 1.0;
};
// window == 0 selects all frames; stride keeps every stride-th frame of
// [0, window). At least two frames must survive.
FrameProtocol make_protocol(int64_t total_frames, int64_t window, int64_t stride);

const char* solver_kind_name(ode::SolverKind kind);
ode::SolverKind solver_kind_from_name(const std::string& name);

// Everything needed to drive a trained model without its dataset: solver and
// render settings, the training camera, the time normalization, the encoder
// observation gap (single mode), per-sequence initial conditions (multi
// mode), and the model architecture. Stored in every checkpoint's meta, so
// checkpoints are self-describing.
struct RunSetup {
  std::string mode;  // "single" | "multi"
  ode::SolverConfig solver;
  rad::RenderConfig render;
  rad::Camera camera;
  double time_denom = 1.0;
  double encode_dt = 0.0;
  std::vector<std::vector<double>> initial_positions;
  std::vector<std::vector<double>> initial_velocities;
  nlohmann::ordered_json model = nlohmann::ordered_json::object();

  nlohmann::ordered_json to_json() const;
  static RunSetup from_meta(const nlohmann::ordered_json& meta);
};

struct TrainOptions {
  int64_t iterations = 2000;
  int64_t warmup_iters = 500;
  int64_t warmup_period = 4000;
  int64_t warmup_len = 200;
  bool recurring_warmup = true;
  int64_t ray_batch = 128;
  double lr = 5e-4;
  LossWeights weights;
  int64_t checkpoint_interval = 0;  // 0 = final checkpoint only
  int64_t probe_interval = 100;     // 0 = never probe
  int64_t probe_frame = 0;          // index into the training frame list
  int64_t frame_window = 0;
  int64_t frame_stride = 1;
  ode::SolverConfig solver;
  int64_t n_coarse = 32;
  int64_t n_fine = 32;
  uint64_t seed = 2026;
  std::string out_dir;  // empty: keep everything in memory, write no files
  // Embedded verbatim as meta["config"] in every emitted checkpoint.
  nlohmann::ordered_json extra_meta = nlohmann::ordered_json::object();
};

struct TrainReport {
  int64_t iterations = 0;
  double final_loss = 0.0;
  double final_probe_psnr = -1.0;  // last probe measurement; -1 = none
  std::string metrics_csv;         // the full metrics log
  std::string metrics_path;        // "" when out_dir is empty
  std::string checkpoint_path;     // final checkpoint; "" when out_dir empty
  FrameProtocol protocol;
  RunSetup setup;
};

// One iteration's sampled inputs, separated from the loop so gradient checks
// and the trainer share one loss path.
struct SingleBatch {
  double encode_dt = 0.0;
  double t = 0.0;  // normalized render time
  std::vector<rad::Ray> rays;
  grad::Tensor gt;   // [R, 3]
  grad::Tensor eps;  // [1, dynamic_dim]
  uint64_t render_seed = 0;
};
struct MultiBatch {
  grad::Tensor p0, v0;        // [1, pose_dim]
  std::vector<double> times;  // full training grid, ascending from 0
  int64_t render_index = 0;   // which grid entry the rays observe
  std::vector<rad::Ray> rays;
  grad::Tensor gt;
  grad::Tensor pose_gt;  // [T, target]
  grad::Tensor vel_gt;   // [T-1, target]
  uint64_t render_seed = 0;
};
struct RenderContext {
  rad::RenderConfig config;
  double near = 0.0;
  double far = 0.0;
};

LossParts single_parts(grad::Tape* tape, SingleSeqModel& model,
                       const SingleBatch& batch, const RenderContext& ctx,
                       const ode::SolverConfig& solver, double kl_weight);
LossParts multi_parts(grad::Tape* tape, MultiSeqModel& model,
                      const MultiBatch& batch, const RenderContext& ctx,
                      const ode::SolverConfig& solver);

// Full training loops: warm-up phases (initial, then recurring with the
// dynamics frozen), joint optimization, per-iteration metrics CSV
// "iter,loss,l_nerf,l_p,l_v,l_lip,probe_psnr", periodic + final checkpoints.
TrainReport train_single(SingleSeqModel& model, const synth::DatasetManifest& data,
                         const TrainOptions& opts);
TrainReport train_multi(MultiSeqModel& model, const synth::DatasetManifest& data,
                        const TrainOptions& opts);

// Value-mode full-frame renders of a trained model at normalized time t.
// Deterministic in `sample_seed` (which feeds only the in-render sampling).
img::Image render_frame_single(SingleSeqModel& model, const RunSetup& setup,
                               double t, uint64_t sample_seed);
img::Image render_frame_multi(MultiSeqModel& model, const RunSetup& setup,
                              const grad::Tensor& p0, const grad::Tensor& v0,
                              double t, uint64_t sample_seed);

// Config-registry adapters (see cfg::default_config for the key set).
SingleSeqConfig single_config_from(const cfg::Config& config);
MultiSeqConfig multi_config_from(const cfg::Config& config);
TrainOptions train_options_from(const cfg::Config& config);
ode::SolverConfig solver_from(const cfg::Config& config);

// Rebuilds a trained model from a checkpoint (architecture from the stored
// setup, parameters restored bitwise).
struct LoadedSingle {
  SingleSeqModel model;
  RunSetup setup;
  ckpt::Checkpoint checkpoint;
};
struct LoadedMulti {
  MultiSeqModel model;
  RunSetup setup;
  ckpt::Checkpoint checkpoint;
};
LoadedSingle load_single(const std::string& checkpoint_path);
LoadedMulti load_multi(const std::string& checkpoint_path);
// The stored mode string without loading the model.
std::string checkpoint_mode(const std::string& checkpoint_path);

}  // namespace noderf::pipe
