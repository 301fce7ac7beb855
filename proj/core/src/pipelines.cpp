// Copyright 2026 The noderf Authors
// SPDX-License-Identifier: Apache-2.0
#include "noderf/pipelines.hpp"

#include <cmath>
#include <string>

#include "noderf/common.hpp"

namespace noderf::pipe {
namespace {

using nlohmann::json;
using nlohmann::ordered_json;

using grad::abs;
using grad::add;
using grad::concat;
using grad::log;
using grad::mean;
using grad::mul;
using grad::reshape;
using grad::scale;
using grad::slice_last;
using grad::square;
using grad::sub;
using grad::sum;

Tensor bind(Tape* tape, Param& p) { return tape ? p.on(*tape) : p.value(); }

Tensor init_latent(const char* name, int64_t width, double std, Rng& rng) {
  require(width >= 1, name, ": latent width must be positive, got ", width);
  return Tensor({1, width}, rng.normal_vec(width, 0.0, std));
}

std::vector<int64_t> mlp_widths(int64_t in, const std::vector<int64_t>& hidden,
                                int64_t out) {
  std::vector<int64_t> w;
  w.reserve(hidden.size() + 2);
  w.push_back(in);
  for (int64_t h : hidden) w.push_back(h);
  w.push_back(out);
  return w;
}

nn::MlpConfig plain_mlp(std::vector<int64_t> widths) {
  nn::MlpConfig cfg;
  cfg.widths = std::move(widths);
  return cfg;
}

ordered_json field_to_json(const rad::FieldConfig& f) {
  ordered_json doc = ordered_json::object();
  doc["pe_position"] = f.pe_position;
  doc["pe_direction"] = f.pe_direction;
  doc["latent_dim"] = f.latent_dim;
  doc["hidden"] = f.hidden;
  doc["lipschitz"] = f.lipschitz;
  return doc;
}

rad::FieldConfig field_from_json(const json& doc) {
  rad::FieldConfig f;
  f.pe_position = doc.value("pe_position", f.pe_position);
  f.pe_direction = doc.value("pe_direction", f.pe_direction);
  f.latent_dim = doc.value("latent_dim", f.latent_dim);
  f.hidden = doc.value("hidden", f.hidden);
  f.lipschitz = doc.value("lipschitz", f.lipschitz);
  return f;
}

// Slices the first `n` rows of an [m, d] matrix (differentiable).
Tensor head_rows(const Tensor& m, int64_t n) {
  const int64_t d = m.dim(1);
  return reshape(slice_last(reshape(m, {m.dim(0) * d}), 0, n * d), {n, d});
}

double part_value(const Tensor& t) { return t.defined() ? t.item() : 0.0; }

}  // namespace

Tensor row_stack(const std::vector<Tensor>& rows) {
  require(!rows.empty(), "row_stack: needs at least one row");
  const int64_t n = int64_t(rows.size());
  for (const Tensor& r : rows) {
    require(r.defined() && r.rank() == 2 && r.dim(0) == 1 &&
                r.dim(1) == rows.front().dim(1),
            "row_stack: rows must all be [1, d]");
  }
  return reshape(concat(rows), {n, rows.front().dim(1)});
}

Tensor row(const Tensor& m, int64_t r) {
  require(m.defined() && m.rank() == 2, "row: input must be rank 2");
  require(r >= 0 && r < m.dim(0), "row: index ", r, " out of range for ",
          grad::shape_str(m.shape()));
  const int64_t d = m.dim(1);
  return reshape(slice_last(reshape(m, {m.dim(0) * d}), r * d, d), {1, d});
}

Tensor total_loss(const LossParts& parts, const LossWeights& weights) {
  require(parts.nerf.defined(), "total_loss: the reconstruction part is required");
  const LossParts& p = parts;
  for (const Tensor* t : {&p.nerf, &p.pose, &p.vel, &p.lip, &p.kl}) {
    if (!t->defined()) continue;
    require(t->size() == 1, "total_loss: parts must be scalars");
    require(std::isfinite(t->item()),
            "total_loss: training diverged; parts: nerf=", part_value(p.nerf),
            " pose=", part_value(p.pose), " vel=", part_value(p.vel),
            " lip=", part_value(p.lip), " kl=", part_value(p.kl));
  }
  Tensor loss = scale(p.nerf, weights.nerf);
  if (p.pose.defined() && weights.pose != 0.0)
    loss = add(loss, scale(p.pose, weights.pose));
  if (p.vel.defined() && weights.vel != 0.0)
    loss = add(loss, scale(p.vel, weights.vel));
  if (p.lip.defined() && weights.lip != 0.0)
    loss = add(loss, scale(p.lip, weights.lip));
  if (p.kl.defined() && weights.kl != 0.0)
    loss = add(loss, scale(p.kl, weights.kl));
  return loss;
}

std::pair<Tensor, Tensor> auxiliary_losses(const Tensor& pose_hat,
                                           const Tensor& vel_hat,
                                           const Tensor& pose_gt,
                                           const Tensor& vel_gt) {
  require(pose_hat.defined() && pose_gt.defined() && pose_hat.rank() == 2 &&
              pose_hat.shape() == pose_gt.shape(),
          "auxiliary_losses: pose prediction and target shapes must match");
  require(vel_hat.defined() && vel_gt.defined() && vel_hat.rank() == 2 &&
              vel_hat.shape() == vel_gt.shape(),
          "auxiliary_losses: velocity prediction and target shapes must match");
  require(vel_hat.dim(0) == pose_hat.dim(0) - 1,
          "auxiliary_losses: expected ", pose_hat.dim(0) - 1,
          " velocity rows for ", pose_hat.dim(0), " pose rows, got ",
          vel_hat.dim(0));
  return {mean(abs(sub(pose_hat, pose_gt))), mean(abs(sub(vel_hat, vel_gt)))};
}

Tensor kl_penalty(const Tensor& mu, const Tensor& s) {
  require(mu.defined() && s.defined() && mu.rank() == 2 && mu.dim(0) == 1 &&
              mu.shape() == s.shape(),
          "kl_penalty: mu and s must both be [1, d]");
  const double d = double(mu.dim(1));
  Tensor quad = scale(sum(add(square(mu), square(s))), 0.5);
  return sub(sub(quad, sum(log(s))), Tensor::scalar(0.5 * d));
}

// ---------------------------------------------------------------------------
// SingleSeqModel

ordered_json SingleSeqConfig::to_json() const {
  ordered_json doc = ordered_json::object();
  doc["dynamic_dim"] = dynamic_dim;
  doc["rnn_hidden"] = rnn_hidden;
  doc["f_hidden"] = f_hidden;
  doc["decoder_hidden"] = decoder_hidden;
  doc["field"] = field_to_json(field);
  doc["use_static_latent"] = use_static_latent;
  return doc;
}

SingleSeqConfig SingleSeqConfig::from_json(const json& doc) {
  SingleSeqConfig c;
  c.dynamic_dim = doc.value("dynamic_dim", c.dynamic_dim);
  c.rnn_hidden = doc.value("rnn_hidden", c.rnn_hidden);
  c.f_hidden = doc.value("f_hidden", c.f_hidden);
  c.decoder_hidden = doc.value("decoder_hidden", c.decoder_hidden);
  if (doc.contains("field")) c.field = field_from_json(doc.at("field"));
  c.use_static_latent = doc.value("use_static_latent", c.use_static_latent);
  return c;
}

namespace {
const SingleSeqConfig& check_single(const SingleSeqConfig& c) {
  require(c.dynamic_dim >= 1 && c.rnn_hidden >= 1,
          "SingleSeqModel: widths must be positive");
  return c;
}
// Per-element init scale for directly-trained latent codes. The reference
// init is stated per code, not per element; we read it as std 0.1 per
// element and keep it a named constant rather than a guess baked into math.
constexpr double kLatentInitStd = 0.1;
}  // namespace

SingleSeqModel::SingleSeqModel(const SingleSeqConfig& config, Rng& rng)
    : cfg_(check_single(config)),
      z_t0_("z_t0", init_latent("z_t0", cfg_.field.latent_dim, kLatentInitStd, rng)),
      z_t1_("z_t1", init_latent("z_t1", cfg_.field.latent_dim, kLatentInitStd, rng)),
      gru_("rnn", cfg_.field.latent_dim, cfg_.rnn_hidden, rng),
      g_("rnn_g",
         plain_mlp(mlp_widths(cfg_.rnn_hidden + 1, {cfg_.rnn_hidden},
                              cfg_.rnn_hidden)),
         rng),
      head_("rnn_head", plain_mlp({cfg_.rnn_hidden, 2 * cfg_.dynamic_dim}), rng),
      f_("f",
         plain_mlp(mlp_widths(cfg_.dynamic_dim + 1, cfg_.f_hidden, cfg_.dynamic_dim)),
         rng),
      dec_("dec",
           plain_mlp(mlp_widths(cfg_.dynamic_dim, cfg_.decoder_hidden,
                                cfg_.field.latent_dim)),
           rng),
      field_(cfg_.field, rng) {
  if (cfg_.use_static_latent) {
    z_static_ = Param("z_static", init_latent("z_static", cfg_.field.latent_dim,
                                              kLatentInitStd, rng));
  }
}

SingleSeqModel::Encoded SingleSeqModel::encode_initial(
    Tape* tape, double dt, const Tensor& eps, const ode::SolverConfig& solver) {
  require(dt > 0.0, "encode_initial: observation gap must be positive, got ", dt);
  require(eps.defined() && eps.shape() == grad::Shape{1, cfg_.dynamic_dim},
          "encode_initial: eps must be [1, ", cfg_.dynamic_dim, "]");
  Tensor h = Tensor::zeros({1, cfg_.rnn_hidden});
  h = gru_.step(tape, h, bind(tape, z_t1_));
  // The hidden state evolves across the observation gap in processing order
  // (latest observation first), covering [0, dt] of reverse time.
  ode::Trajectory traj =
      ode::ode_solve(ode::MlpRhs(&g_), h, {0.0, dt}, solver, tape);
  h = gru_.step(tape, traj.states.back(), bind(tape, z_t0_));
  Tensor out = head_.forward(tape, h);
  Encoded enc;
  enc.mu = slice_last(out, 0, cfg_.dynamic_dim);
  enc.s = softplus(slice_last(out, cfg_.dynamic_dim, cfg_.dynamic_dim));
  enc.z0 = add(enc.mu, mul(enc.s, eps));
  return enc;
}

SingleSeqModel::Rollout SingleSeqModel::rollout(Tape* tape, const Tensor& z0_dyn,
                                                const std::vector<double>& times,
                                                const ode::SolverConfig& solver) {
  ode::Trajectory traj = ode::ode_solve(ode::MlpRhs(&f_), z0_dyn, times, solver, tape);
  Rollout roll;
  roll.dyn = row_stack(traj.states);
  roll.latents = dec_.forward(tape, roll.dyn);
  if (cfg_.use_static_latent) {
    roll.latents = add(roll.latents,
                       reshape(bind(tape, z_static_), {cfg_.field.latent_dim}));
  }
  return roll;
}

Tensor SingleSeqModel::warmup_latent(Tape* tape, int which) {
  require(which == 0 || which == 1, "warmup_latent: index must be 0 or 1, got ",
          which);
  return bind(tape, which == 0 ? z_t0_ : z_t1_);
}

std::vector<Param*> SingleSeqModel::params() {
  std::vector<Param*> out = {&z_t0_, &z_t1_};
  if (cfg_.use_static_latent) out.push_back(&z_static_);
  for (Param* p : gru_.params()) out.push_back(p);
  for (Param* p : g_.params()) out.push_back(p);
  for (Param* p : head_.params()) out.push_back(p);
  for (Param* p : f_.params()) out.push_back(p);
  for (Param* p : dec_.params()) out.push_back(p);
  for (Param* p : field_.params()) out.push_back(p);
  return out;
}

std::vector<Param*> SingleSeqModel::warmup_params() {
  std::vector<Param*> out = {&z_t0_, &z_t1_};
  for (Param* p : field_.params()) out.push_back(p);
  return out;
}

// ---------------------------------------------------------------------------
// MultiSeqModel

ordered_json MultiSeqConfig::to_json() const {
  ordered_json doc = ordered_json::object();
  doc["canonical_dim"] = canonical_dim;
  doc["pose_dim"] = pose_dim;
  doc["pe_pose"] = pe_pose;
  doc["encoder_hidden"] = encoder_hidden;
  doc["encoder_out"] = encoder_out;
  doc["decoder_hidden"] = decoder_hidden;
  doc["f_hidden"] = f_hidden;
  doc["field"] = field_to_json(field);
  doc["raw_pose_targets"] = raw_pose_targets;
  return doc;
}

MultiSeqConfig MultiSeqConfig::from_json(const json& doc) {
  MultiSeqConfig c;
  c.canonical_dim = doc.value("canonical_dim", c.canonical_dim);
  c.pose_dim = doc.value("pose_dim", c.pose_dim);
  c.pe_pose = doc.value("pe_pose", c.pe_pose);
  c.encoder_hidden = doc.value("encoder_hidden", c.encoder_hidden);
  c.encoder_out = doc.value("encoder_out", c.encoder_out);
  c.decoder_hidden = doc.value("decoder_hidden", c.decoder_hidden);
  c.f_hidden = doc.value("f_hidden", c.f_hidden);
  if (doc.contains("field")) c.field = field_from_json(doc.at("field"));
  c.raw_pose_targets = doc.value("raw_pose_targets", c.raw_pose_targets);
  return c;
}

namespace {
MultiSeqConfig check_multi(MultiSeqConfig c) {
  require(c.canonical_dim >= 1 && c.pose_dim >= 1 && c.pe_pose >= 1 &&
              c.encoder_out >= 1,
          "MultiSeqModel: widths must be positive");
  // The generalization task's radiance field is Lipschitz-normalized by
  // construction; the bound-product regularizer depends on it.
  c.field.lipschitz = true;
  return c;
}
}  // namespace

MultiSeqModel::MultiSeqModel(const MultiSeqConfig& config, Rng& rng)
    : cfg_(check_multi(config)),
      z_static_("z_static",
                init_latent("z_static", cfg_.field.latent_dim, kLatentInitStd, rng)),
      z_can_("z_can", init_latent("z_can", cfg_.canonical_dim, kLatentInitStd, rng)),
      encoder_("enc",
               plain_mlp(mlp_widths(2 * cfg_.pe_pose * cfg_.pose_dim,
                                    cfg_.encoder_hidden, cfg_.encoder_out)),
               rng),
      f_("f",
         plain_mlp(mlp_widths(cfg_.dynamic_dim() + 1, cfg_.f_hidden,
                              cfg_.dynamic_dim())),
         rng),
      dec_n_("dec_n",
             plain_mlp(mlp_widths(cfg_.dynamic_dim(), cfg_.decoder_hidden,
                                  cfg_.field.latent_dim)),
             rng),
      dec_p_("dec_p",
             plain_mlp(mlp_widths(cfg_.dynamic_dim(), cfg_.decoder_hidden,
                                  cfg_.pose_target_dim())),
             rng),
      dec_v_("dec_v",
             plain_mlp(mlp_widths(cfg_.dynamic_dim(), cfg_.decoder_hidden,
                                  cfg_.pose_target_dim())),
             rng),
      field_(cfg_.field, rng) {}

Tensor MultiSeqModel::initial_latent(Tape* tape, const Tensor& p0,
                                     const Tensor& v0) {
  const grad::Shape want{1, cfg_.pose_dim};
  require(p0.defined() && !p0.on_tape() && p0.shape() == want,
          "initial_latent: p0 must be plain [1, ", cfg_.pose_dim, "]");
  require(v0.defined() && !v0.on_tape() && v0.shape() == want,
          "initial_latent: v0 must be plain [1, ", cfg_.pose_dim, "]");
  Tensor embedded = encoder_.forward(tape, nn::positional_encode(p0, int(cfg_.pe_pose)));
  return concat({bind(tape, z_can_), embedded, v0});
}

MultiSeqModel::Rollout MultiSeqModel::rollout(Tape* tape, const Tensor& z0_dyn,
                                              const std::vector<double>& times,
                                              const ode::SolverConfig& solver) {
  ode::Trajectory traj = ode::ode_solve(ode::MlpRhs(&f_), z0_dyn, times, solver, tape);
  const int64_t t = int64_t(traj.states.size());
  Rollout roll;
  roll.dyn = row_stack(traj.states);
  roll.latents = add(dec_n_.forward(tape, roll.dyn),
                     reshape(bind(tape, z_static_), {cfg_.field.latent_dim}));
  roll.poses = dec_p_.forward(tape, roll.dyn);
  if (t > 1) roll.vels = dec_v_.forward(tape, head_rows(roll.dyn, t - 1));
  return roll;
}

Tensor MultiSeqModel::pose_targets(const Tensor& rows) const {
  require(rows.defined() && !rows.on_tape() && rows.rank() == 2 &&
              rows.dim(1) == cfg_.pose_dim,
          "pose_targets: rows must be plain [n, ", cfg_.pose_dim, "]");
  if (cfg_.raw_pose_targets) return rows;
  return nn::positional_encode(rows, int(cfg_.pe_pose));
}

Tensor MultiSeqModel::lipschitz_bound_product(Tape* tape) {
  return mul(field_.level_net(rad::Level::kCoarse).bound_product(tape),
             field_.level_net(rad::Level::kFine).bound_product(tape));
}

Tensor MultiSeqModel::static_latent(Tape* tape) { return bind(tape, z_static_); }

std::vector<Param*> MultiSeqModel::params() {
  std::vector<Param*> out = {&z_static_, &z_can_};
  for (Param* p : encoder_.params()) out.push_back(p);
  for (Param* p : f_.params()) out.push_back(p);
  for (Param* p : dec_n_.params()) out.push_back(p);
  for (Param* p : dec_p_.params()) out.push_back(p);
  for (Param* p : dec_v_.params()) out.push_back(p);
  for (Param* p : field_.params()) out.push_back(p);
  return out;
}

std::vector<Param*> MultiSeqModel::warmup_params() {
  std::vector<Param*> out = {&z_static_};
  for (Param* p : field_.params()) out.push_back(p);
  return out;
}

}  // namespace noderf::pipe
