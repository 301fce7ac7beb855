// Copyright 2026 The noderf Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "json.hpp"
#include "noderf/nn.hpp"
#include "noderf/ode.hpp"
#include "noderf/radiance.hpp"
#include "noderf/rng.hpp"
#include "noderf/tensor.hpp"

namespace noderf::pipe {

using grad::Tape;
using grad::Tensor;
using nn::Param;

// Stacks [1, d] rows into an [n, d] matrix (differentiable).
Tensor row_stack(const std::vector<Tensor>& rows);
// Extracts row r of an [n, d] matrix as [1, d] (differentiable).
Tensor row(const Tensor& m, int64_t r);

// Weighted-sum objective. The reconstruction term is mandatory; the others
// are optional and contribute weight * part when present.
struct LossWeights {
  double nerf = 1.0;
  double pose = 1e-2;
  double vel = 1e-2;
  double lip = 1e-22;
  double kl = 0.0;
};

// Scalar [1] tensors; an undefined member means "absent" and contributes 0.
struct LossParts {
  Tensor nerf, pose, vel, lip, kl;
};

// Weighted sum of the present parts. A non-finite part signals a training
// blow-up and aborts with every part's value in the message.
Tensor total_loss(const LossParts& parts, const LossWeights& weights);

// Mean absolute errors for pose and velocity supervision: pose_hat [T, d]
// against pose_gt, vel_hat [T-1, d] against vel_gt. Row counts must line up.
std::pair<Tensor, Tensor> auxiliary_losses(const Tensor& pose_hat,
                                           const Tensor& vel_hat,
                                           const Tensor& pose_gt,
                                           const Tensor& vel_gt);

// KL divergence of N(mu, diag(s^2)) from N(0, I); mu, s are [1, d], s > 0.
Tensor kl_penalty(const Tensor& mu, const Tensor& s);

// -------------------------------------------------------------------------
// Single-sequence model: two warm-up latents anchor the first two training
// frames; a reverse-time GRU/ODE recognition pass turns them into the
// distribution of the initial dynamic latent; an ODE rollout plus a decoder
// yields the radiance-field conditioning latent at any queried time.

struct SingleSeqConfig {
  int64_t dynamic_dim = 64;               // z^dyn width
  int64_t rnn_hidden = 64;                // recognition GRU width
  std::vector<int64_t> f_hidden = {64, 64};        // latent dynamics MLP
  std::vector<int64_t> decoder_hidden = {64};      // z^dyn -> field latent
  rad::FieldConfig field;
  bool use_static_latent = false;         // add a trained static latent

  nlohmann::ordered_json to_json() const;
  static SingleSeqConfig from_json(const nlohmann::json& doc);
};

class SingleSeqModel {
 public:
  SingleSeqModel(const SingleSeqConfig& config, Rng& rng);

  struct Encoded {
    Tensor z0;  // mu + s (.) eps, [1, dynamic_dim]
    Tensor mu;
    Tensor s;   // softplus head, > 0
  };
  // Reverse-time recognition over the warm-up latents: GRU update on z_t1,
  // hidden-state ODE evolution across the observation gap `dt` (> 0), GRU
  // update on z_t0, then a linear head yields (mu, s). `eps` is the
  // reparameterization draw, [1, dynamic_dim]; pin it to zero for the mean.
  Encoded encode_initial(Tape* tape, double dt, const Tensor& eps,
                         const ode::SolverConfig& solver);

  struct Rollout {
    Tensor dyn;      // [T, dynamic_dim] integrated dynamic latents
    Tensor latents;  // [T, field latent] decoded (+ static) conditioning
  };
  // Integrates z^dyn from times[0] through every requested time, then
  // decodes each state. Times must be ascending, starting at the rollout
  // origin (normalized 0 for training).
  Rollout rollout(Tape* tape, const Tensor& z0_dyn,
                  const std::vector<double>& times,
                  const ode::SolverConfig& solver);

  // The warm-up latent for training frame 0 or 1, bound to the tape.
  Tensor warmup_latent(Tape* tape, int which);

  rad::NerfField& field() { return field_; }
  nn::Mlp& dynamics() { return f_; }
  const SingleSeqConfig& config() const { return cfg_; }
  Param& z_t0() { return z_t0_; }
  Param& z_t1() { return z_t1_; }

  // All trainable parameters, fixed order, unique names.
  std::vector<Param*> params();
  // The warm-up set: z_t0, z_t1, and the radiance field.
  std::vector<Param*> warmup_params();

 private:
  SingleSeqConfig cfg_;
  Param z_t0_, z_t1_, z_static_;
  nn::GruCell gru_;
  nn::Mlp g_;     // hidden-state dynamics between observations
  nn::Mlp head_;  // hidden -> (mu, raw s)
  nn::Mlp f_;     // dynamic latent dynamics
  nn::Mlp dec_;   // dynamic latent -> field latent
  rad::NerfField field_;
};

// -------------------------------------------------------------------------
// Multi-sequence model: a shared canonical latent plus an encoded initial
// pose and the raw initial velocity form the initial dynamic latent of a
// sequence; decoders split the integrated latent into the radiance
// conditioning (added to a trained static latent), pose, and velocity
// predictions. The radiance field's layers are Lipschitz-normalized.

struct MultiSeqConfig {
  int64_t canonical_dim = 16;
  int64_t pose_dim = 3;      // leading pose coordinates consumed
  int64_t pe_pose = 4;       // pose encoding octaves
  std::vector<int64_t> encoder_hidden = {256, 256, 256, 256, 256, 256, 256};
  int64_t encoder_out = 16;
  std::vector<int64_t> decoder_hidden = {256, 256};  // D_n, D_p, D_v
  std::vector<int64_t> f_hidden = {64, 64};
  rad::FieldConfig field;    // lipschitz is forced on by the model
  bool raw_pose_targets = false;  // supervise raw poses instead of encoded

  int64_t dynamic_dim() const { return canonical_dim + encoder_out + pose_dim; }
  int64_t pose_target_dim() const {
    return raw_pose_targets ? pose_dim : 2 * pe_pose * pose_dim;
  }
  nlohmann::ordered_json to_json() const;
  static MultiSeqConfig from_json(const nlohmann::json& doc);
};

class MultiSeqModel {
 public:
  MultiSeqModel(const MultiSeqConfig& config, Rng& rng);

  // concat(z_can, E(encode(p0)), v0): p0 and v0 are plain [1, pose_dim].
  Tensor initial_latent(Tape* tape, const Tensor& p0, const Tensor& v0);

  struct Rollout {
    Tensor dyn;      // [T, dynamic_dim]
    Tensor latents;  // [T, field latent], D_n output + static latent
    Tensor poses;    // [T, pose target dim]
    Tensor vels;     // [T-1, pose target dim]; undefined when T == 1
  };
  Rollout rollout(Tape* tape, const Tensor& z0_dyn,
                  const std::vector<double>& times,
                  const ode::SolverConfig& solver);

  // Pose supervision targets in model space: encoded unless raw targets are
  // configured. `rows` is [n, pose_dim] plain data.
  Tensor pose_targets(const Tensor& rows) const;

  // Product of the field layers' trainable bounds (both levels).
  Tensor lipschitz_bound_product(Tape* tape);
  // z_static bound to the tape, [1, field latent].
  Tensor static_latent(Tape* tape);

  rad::NerfField& field() { return field_; }
  nn::Mlp& dynamics() { return f_; }
  const MultiSeqConfig& config() const { return cfg_; }
  Param& z_can() { return z_can_; }

  std::vector<Param*> params();
  // The warm-up set: z_static and the radiance field.
  std::vector<Param*> warmup_params();

 private:
  MultiSeqConfig cfg_;
  Param z_static_, z_can_;
  nn::Mlp encoder_;  // E
  nn::Mlp f_;
  nn::Mlp dec_n_, dec_p_, dec_v_;
  rad::NerfField field_;
};

}  // namespace noderf::pipe
