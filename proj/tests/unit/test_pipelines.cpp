// Copyright 2026 The noderf Authors
// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <cstring>
#include <string>
#include <vector>

#include "doctest.h"
#include "noderf/common.hpp"
#include "noderf/nn.hpp"
#include "noderf/ode.hpp"
#include "noderf/pipelines.hpp"
#include "noderf/radiance.hpp"
#include "noderf/rng.hpp"
#include "noderf/tensor.hpp"
#include "support/testers.hpp"

using noderf::Error;
using noderf::Rng;
using noderf::grad::GradMap;
using noderf::grad::Tape;
using noderf::grad::Tensor;
using noderf::nn::Param;
using noderf::testing::bits_equal;
using noderf::testing::module_fd_check;
namespace pipe = noderf::pipe;
namespace rad = noderf::rad;
namespace nn = noderf::nn;
namespace ode = noderf::ode;

namespace {

rad::Camera tiny_camera(int size) {
  rad::Camera c;
  c.pose = {-1, 0, 0, 0, 0, -1, 0, 0, 0, 0, 1, -2.2};
  c.focal = 1.375 * size;
  c.width = size;
  c.height = size;
  c.near = 1.0;
  c.far = 3.5;
  return c;
}

pipe::SingleSeqConfig tiny_single() {
  pipe::SingleSeqConfig c;
  c.dynamic_dim = 6;
  c.rnn_hidden = 5;
  c.f_hidden = {8};
  c.decoder_hidden = {8};
  c.field.pe_position = 2;
  c.field.pe_direction = 1;
  c.field.latent_dim = 4;
  c.field.hidden = {10};
  return c;
}

pipe::MultiSeqConfig tiny_multi() {
  pipe::MultiSeqConfig c;
  c.canonical_dim = 3;
  c.pose_dim = 2;
  c.pe_pose = 2;
  c.encoder_hidden = {8};
  c.encoder_out = 3;
  c.decoder_hidden = {8};
  c.f_hidden = {8};
  c.field.pe_position = 2;
  c.field.pe_direction = 1;
  c.field.latent_dim = 4;
  c.field.hidden = {10};
  return c;
}

ode::SolverConfig euler(double step) {
  ode::SolverConfig s;
  s.kind = ode::SolverKind::kEuler;
  s.step = step;
  return s;
}

std::vector<rad::Ray> frame_rays(const rad::Camera& cam, int n) {
  std::vector<int64_t> pixels;
  for (int i = 0; i < n; ++i) pixels.push_back(i);
  return rad::generate_rays(cam, pixels);
}

Tensor random_matrix(Rng& rng, int64_t r, int64_t c, double lo, double hi) {
  return Tensor({r, c}, rng.uniform_vec(r * c, lo, hi));
}

void zero_params(std::vector<Param*> params) {
  for (Param* p : params) {
    auto& v = p->mutable_value();
    std::fill(v.begin(), v.end(), 0.0);
  }
}

// Pushes every Lipschitz bound into the active (scaling) region so the
// normalization has no row sitting exactly on the min(ratio, 1) corner.
void activate_bounds(std::vector<Param*> params) {
  for (Param* p : params) {
    const auto& name = p->name();
    if (name.size() >= 2 && name.compare(name.size() - 2, 2, ".c") == 0) {
      p->mutable_value()[0] -= 0.2;
    }
  }
}

}  // namespace

TEST_CASE("row_stack and row are exact and differentiable") {
  Rng rng(11);
  std::vector<Tensor> rows;
  for (int i = 0; i < 3; ++i) rows.push_back(random_matrix(rng, 1, 4, -1, 1));
  Tensor m = pipe::row_stack(rows);
  REQUIRE(m.shape() == noderf::grad::Shape{3, 4});
  for (int64_t r = 0; r < 3; ++r) {
    for (int64_t c = 0; c < 4; ++c) CHECK(m[r * 4 + c] == rows[size_t(r)][c]);
    Tensor back = pipe::row(m, r);
    REQUIRE(back.shape() == noderf::grad::Shape{1, 4});
    for (int64_t c = 0; c < 4; ++c) CHECK(back[c] == rows[size_t(r)][c]);
  }
  CHECK_THROWS_AS(pipe::row(m, 3), Error);
  CHECK_THROWS_AS(pipe::row(m, -1), Error);
  CHECK_THROWS_AS(pipe::row_stack({}), Error);

  // Gradient: loss = sum(row(stack(rows), 1) * k) only reaches rows[1].
  Param a("a", rows[0]), b("b", rows[1]), c("c", rows[2]);
  Tape tape;
  Tensor stacked = pipe::row_stack({a.on(tape), b.on(tape), c.on(tape)});
  Tensor picked = pipe::row(stacked, 1);
  Tensor loss = noderf::grad::sum(noderf::grad::mul(
      picked, Tensor({1, 4}, {1.0, 2.0, 3.0, 4.0})));
  GradMap grads = tape.backward(loss);
  CHECK(!a.reached_by(grads) ||
        grads.wrt(a.binding()).data() == std::vector<double>(4, 0.0));
  REQUIRE(b.reached_by(grads));
  Tensor gb = grads.wrt(b.binding());
  for (int64_t i = 0; i < 4; ++i) CHECK(gb[i] == doctest::Approx(double(i + 1)));
}

TEST_CASE("total_loss weights, zero-skip, and linearity") {
  pipe::LossWeights w;  // 1, 1e-2, 1e-2, 1e-22, 0
  pipe::LossParts parts;
  parts.nerf = Tensor::scalar(0.5);
  parts.pose = Tensor::scalar(1.0);
  parts.vel = Tensor::scalar(1.0);
  parts.lip = Tensor::scalar(1.0);
  CHECK(pipe::total_loss(parts, w).item() ==
        doctest::Approx(0.52).epsilon(1e-12));

  pipe::LossWeights only_nerf;
  only_nerf.pose = only_nerf.vel = only_nerf.lip = 0.0;
  CHECK(pipe::total_loss(parts, only_nerf).item() == doctest::Approx(0.5));

  // A part with weight zero may be entirely absent.
  pipe::LossParts nerf_only;
  nerf_only.nerf = Tensor::scalar(0.25);
  CHECK(pipe::total_loss(nerf_only, only_nerf).item() == doctest::Approx(0.25));

  pipe::LossWeights zero;
  zero.nerf = zero.pose = zero.vel = zero.lip = 0.0;
  CHECK(pipe::total_loss(nerf_only, zero).item() == 0.0);

  // Linear in every part.
  Rng rng(5);
  pipe::LossWeights rw;
  rw.nerf = rng.uniform(0.1, 2.0);
  rw.pose = rng.uniform(0.1, 2.0);
  rw.vel = rng.uniform(0.1, 2.0);
  rw.lip = rng.uniform(0.1, 2.0);
  rw.kl = rng.uniform(0.1, 2.0);
  const double pn = rng.uniform(-1, 1), pp = rng.uniform(-1, 1),
               pv = rng.uniform(-1, 1), pl = rng.uniform(-1, 1),
               pk = rng.uniform(-1, 1);
  pipe::LossParts rp;
  rp.nerf = Tensor::scalar(pn);
  rp.pose = Tensor::scalar(pp);
  rp.vel = Tensor::scalar(pv);
  rp.lip = Tensor::scalar(pl);
  rp.kl = Tensor::scalar(pk);
  const double expect =
      rw.nerf * pn + rw.pose * pp + rw.vel * pv + rw.lip * pl + rw.kl * pk;
  CHECK(pipe::total_loss(rp, rw).item() == doctest::Approx(expect).epsilon(1e-12));

  // The scaled parts scale the total.
  pipe::LossParts rp2;
  rp2.nerf = Tensor::scalar(3.0 * pn);
  rp2.pose = Tensor::scalar(3.0 * pp);
  rp2.vel = Tensor::scalar(3.0 * pv);
  rp2.lip = Tensor::scalar(3.0 * pl);
  rp2.kl = Tensor::scalar(3.0 * pk);
  CHECK(pipe::total_loss(rp2, rw).item() ==
        doctest::Approx(3.0 * expect).epsilon(1e-12));
}

TEST_CASE("total_loss rejects missing or non-finite parts") {
  pipe::LossWeights w;
  pipe::LossParts missing;  // no nerf at all
  CHECK_THROWS_AS(pipe::total_loss(missing, w), Error);

  pipe::LossParts bad;
  bad.nerf = Tensor::scalar(std::nan(""));
  CHECK_THROWS_WITH_AS(pipe::total_loss(bad, w),
                       doctest::Contains("diverged"), Error);

  pipe::LossParts inf_pose;
  inf_pose.nerf = Tensor::scalar(0.1);
  inf_pose.pose = Tensor::scalar(HUGE_VAL);
  CHECK_THROWS_AS(pipe::total_loss(inf_pose, w), Error);

  pipe::LossParts vec;
  vec.nerf = Tensor({1, 2}, {0.1, 0.2});
  CHECK_THROWS_AS(pipe::total_loss(vec, w), Error);
}

TEST_CASE("auxiliary_losses: exact zero, constant offset, brute force") {
  Rng rng(17);
  Tensor pose_hat = random_matrix(rng, 4, 3, -1, 1);
  Tensor vel_hat = random_matrix(rng, 3, 3, -1, 1);

  auto zero = pipe::auxiliary_losses(pose_hat, vel_hat, pose_hat, vel_hat);
  CHECK(zero.first.item() == 0.0);
  CHECK(zero.second.item() == 0.0);

  // Uniform +0.2 offset: the mean absolute error is the offset itself.
  std::vector<double> shifted(pose_hat.data());
  for (double& x : shifted) x += 0.2;
  Tensor pose_gt({4, 3}, shifted);
  auto off = pipe::auxiliary_losses(pose_hat, vel_hat, pose_gt, vel_hat);
  CHECK(off.first.item() == doctest::Approx(0.2).epsilon(1e-12));
  CHECK(off.second.item() == 0.0);

  // Brute-force oracle on small random pairs.
  Tensor pg = random_matrix(rng, 4, 3, -1, 1);
  Tensor vg = random_matrix(rng, 3, 3, -1, 1);
  auto got = pipe::auxiliary_losses(pose_hat, vel_hat, pg, vg);
  double lp = 0.0, lv = 0.0;
  for (int64_t i = 0; i < 12; ++i) lp += std::abs(pose_hat[i] - pg[i]);
  for (int64_t i = 0; i < 9; ++i) lv += std::abs(vel_hat[i] - vg[i]);
  CHECK(got.first.item() == doctest::Approx(lp / 12.0).epsilon(1e-12));
  CHECK(got.second.item() == doctest::Approx(lv / 9.0).epsilon(1e-12));

  // Shape discipline: vel must have exactly one row fewer than pose.
  CHECK_THROWS_AS(
      pipe::auxiliary_losses(pose_hat, random_matrix(rng, 4, 3, -1, 1),
                             pose_hat, random_matrix(rng, 4, 3, -1, 1)),
      Error);
  CHECK_THROWS_AS(pipe::auxiliary_losses(pose_hat, vel_hat, pg,
                                         random_matrix(rng, 3, 2, -1, 1)),
                  Error);
}

TEST_CASE("kl_penalty closed forms") {
  // Standard normal posterior: zero divergence.
  Tensor mu0 = Tensor::zeros({1, 5});
  Tensor s1 = Tensor({1, 5}, std::vector<double>(5, 1.0));
  CHECK(pipe::kl_penalty(mu0, s1).item() == doctest::Approx(0.0).epsilon(1e-15));

  Rng rng(23);
  Tensor mu = random_matrix(rng, 1, 5, -1.5, 1.5);
  Tensor s({1, 5}, rng.uniform_vec(5, 0.2, 2.0));
  double expect = 0.0;
  for (int64_t i = 0; i < 5; ++i) {
    expect += 0.5 * (mu[i] * mu[i] + s[i] * s[i]) - std::log(s[i]) - 0.5;
  }
  CHECK(pipe::kl_penalty(mu, s).item() == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("encode_initial: zero eps returns the mean and draws track s^2") {
  Rng rng(31);
  pipe::SingleSeqModel model(tiny_single(), rng);
  const int64_t dyn = model.config().dynamic_dim;
  auto solver = euler(0.1);

  Tensor eps0 = Tensor::zeros({1, dyn});
  auto enc = model.encode_initial(nullptr, 0.2, eps0, solver);
  REQUIRE(enc.z0.shape() == noderf::grad::Shape{1, dyn});
  REQUIRE(enc.mu.shape() == noderf::grad::Shape{1, dyn});
  REQUIRE(enc.s.shape() == noderf::grad::Shape{1, dyn});
  for (int64_t i = 0; i < dyn; ++i) {
    CHECK(enc.z0[i] == enc.mu[i]);
    CHECK(enc.s[i] > 0.0);
  }

  // Reparameterized draws: the sample variance of z0 matches s^2.
  const int kDraws = 10000;
  std::vector<double> sum(size_t(dyn), 0.0), sumsq(size_t(dyn), 0.0);
  Rng draw_rng(77);
  for (int k = 0; k < kDraws; ++k) {
    Tensor eps({1, dyn}, draw_rng.normal_vec(dyn));
    auto e = model.encode_initial(nullptr, 0.2, eps, solver);
    for (int64_t i = 0; i < dyn; ++i) {
      sum[size_t(i)] += e.z0[i];
      sumsq[size_t(i)] += e.z0[i] * e.z0[i];
    }
  }
  for (int64_t i = 0; i < dyn; ++i) {
    const double mean = sum[size_t(i)] / kDraws;
    const double var = sumsq[size_t(i)] / kDraws - mean * mean;
    const double want = enc.s[i] * enc.s[i];
    CHECK(std::abs(var - want) / want < 0.05);
  }

  CHECK_THROWS_AS(model.encode_initial(nullptr, 0.0, eps0, solver), Error);
  CHECK_THROWS_AS(
      model.encode_initial(nullptr, 0.2, Tensor::zeros({1, dyn + 1}), solver),
      Error);
}

TEST_CASE("single rollout: zero dynamics, euler consistency, static latent") {
  Rng rng(41);
  auto cfg = tiny_single();
  pipe::SingleSeqModel model(cfg, rng);
  const auto solver = euler(0.1);
  Tensor z0({1, cfg.dynamic_dim},
            rng.uniform_vec(cfg.dynamic_dim, -0.5, 0.5));

  SUBCASE("zero dynamics keep every decoded row identical") {
    // Zeroing f makes z^dyn constant in time.
    std::vector<Param*> fp;
    for (Param* p : model.params()) {
      if (p->name().rfind("f.", 0) == 0) fp.push_back(p);
    }
    REQUIRE(!fp.empty());
    zero_params(fp);
    auto roll = model.rollout(nullptr, z0, {0.0, 0.3, 0.7}, solver);
    REQUIRE(roll.latents.shape() ==
            noderf::grad::Shape{3, cfg.field.latent_dim});
    for (int64_t r = 1; r < 3; ++r) {
      for (int64_t c = 0; c < cfg.field.latent_dim; ++c) {
        CHECK(roll.latents[r * cfg.field.latent_dim + c] ==
              roll.latents[c]);
      }
      for (int64_t c = 0; c < cfg.dynamic_dim; ++c) {
        CHECK(roll.dyn[r * cfg.dynamic_dim + c] == roll.dyn[c]);
      }
    }
  }

  SUBCASE("euler grid semantics: refining requested times changes nothing") {
    auto coarse = model.rollout(nullptr, z0, {0.0, 0.6}, solver);
    auto fine = model.rollout(nullptr, z0, {0.0, 0.2, 0.4, 0.6}, solver);
    const int64_t L = cfg.field.latent_dim;
    for (int64_t c = 0; c < L; ++c) {
      CHECK(coarse.latents[1 * L + c] == fine.latents[3 * L + c]);
    }
  }

  SUBCASE("a static latent shifts every row uniformly") {
    auto plain = model.rollout(nullptr, z0, {0.0, 0.5}, solver);
    auto cfg2 = cfg;
    cfg2.use_static_latent = true;
    Rng rng_a(41);
    pipe::SingleSeqModel with_static(cfg2, rng_a);
    // Align the shared parameters so only the static latent differs.
    auto src = model.params();
    for (Param* dst : with_static.params()) {
      if (dst->name() == "z_static") continue;
      for (Param* s : src) {
        if (s->name() == dst->name()) dst->assign(s->value());
      }
    }
    auto shifted = with_static.rollout(nullptr, z0, {0.0, 0.5}, solver);
    Param* zstatic = nullptr;
    for (Param* p : with_static.params()) {
      if (p->name() == "z_static") zstatic = p;
    }
    REQUIRE(zstatic != nullptr);
    const int64_t L = cfg.field.latent_dim;
    for (int64_t r = 0; r < 2; ++r) {
      for (int64_t c = 0; c < L; ++c) {
        CHECK(shifted.latents[r * L + c] ==
              doctest::Approx(plain.latents[r * L + c] +
                              zstatic->value()[c]).epsilon(1e-12));
      }
    }
  }

  SUBCASE("times must be ascending from the origin") {
    CHECK_THROWS_AS(model.rollout(nullptr, z0, {0.0, 0.5, 0.4}, solver), Error);
    CHECK_THROWS_AS(model.rollout(nullptr, z0, {}, solver), Error);
  }
}

TEST_CASE("single joint loss: gradient reaches z_t0 and passes FD") {
  Rng rng(51);
  pipe::SingleSeqModel model(tiny_single(), rng);
  const int64_t dyn = model.config().dynamic_dim;
  const auto cam = tiny_camera(4);
  const auto solver = euler(0.1);

  pipe::RenderContext ctx;
  ctx.config.n_coarse = 3;
  ctx.config.n_fine = 3;
  ctx.config.background = {0.05, 0.06, 0.08};
  ctx.near = cam.near;
  ctx.far = cam.far;

  pipe::SingleBatch batch;
  batch.encode_dt = 0.2;
  batch.t = 0.35;
  batch.rays = frame_rays(cam, 4);
  batch.gt = random_matrix(rng, 4, 3, 0.0, 1.0);
  batch.eps = Tensor({1, dyn}, rng.normal_vec(dyn));
  batch.render_seed = 909;

  pipe::LossWeights weights;
  weights.kl = 0.3;

  auto loss_fn = [&](Tape* tape) {
    auto parts = pipe::single_parts(tape, model, batch, ctx, solver,
                                    weights.kl);
    return pipe::total_loss(parts, weights);
  };

  // The initial observation latent must shape the loss through the encoder.
  {
    Tape tape;
    Tensor loss = loss_fn(&tape);
    CHECK(std::isfinite(loss.item()));
    GradMap grads = tape.backward(loss);
    REQUIRE(model.z_t0().reached_by(grads));
    Tensor g = grads.wrt(model.z_t0().binding());
    double norm = 0.0;
    for (int64_t i = 0; i < g.size(); ++i) norm += g[i] * g[i];
    CHECK(norm > 0.0);
  }

  const double rel = module_fd_check(loss_fn, model.params(), 1e-5);
  CHECK(rel < 1e-4);
}

TEST_CASE("reparameterization gradients match finite differences tightly") {
  Rng rng(61);
  pipe::SingleSeqModel model(tiny_single(), rng);
  const int64_t dyn = model.config().dynamic_dim;
  const auto solver = euler(0.1);
  Tensor eps({1, dyn}, rng.normal_vec(dyn));
  Tensor k({1, dyn}, rng.uniform_vec(dyn, 0.5, 1.5));

  auto loss_fn = [&](Tape* tape) {
    auto enc = model.encode_initial(tape, 0.25, eps, solver);
    return noderf::grad::sum(noderf::grad::mul(enc.z0, k));
  };
  const double rel = module_fd_check(loss_fn, model.params(), 1e-6);
  CHECK(rel < 1e-5);
}

TEST_CASE("frozen parameters bind as constants and are skipped by Adam") {
  Rng rng(71);
  pipe::SingleSeqModel model(tiny_single(), rng);
  const auto cam = tiny_camera(4);
  const auto solver = euler(0.1);

  // Freeze everything outside the warm-up set, as the warm-up phase does.
  auto all = model.params();
  auto warm = model.warmup_params();
  for (Param* p : all) p->set_frozen(true);
  for (Param* p : warm) p->set_frozen(false);

  std::vector<std::vector<double>> before;
  for (Param* p : all) before.push_back(p->value().data());

  Tape tape;
  Tensor z = model.warmup_latent(&tape, 0);
  pipe::RenderContext ctx;
  ctx.config.n_coarse = 3;
  ctx.config.n_fine = 0;
  ctx.near = cam.near;
  ctx.far = cam.far;
  Rng rrng(5);
  auto levels = rad::render_rays(&tape, model.field(), z, frame_rays(cam, 4),
                                 ctx.near, ctx.far, ctx.config, rrng);
  Tensor gt = random_matrix(rng, 4, 3, 0.0, 1.0);
  Tensor loss = rad::nerf_loss({levels.back().out.color}, gt);
  GradMap grads = tape.backward(loss);

  nn::Adam adam;
  adam.step(all, grads);

  bool z_t0_changed = false;
  for (size_t i = 0; i < all.size(); ++i) {
    const bool frozen = all[i]->frozen();
    const bool same = all[i]->value().data() == before[i];
    if (frozen) {
      CHECK(same);
      CHECK(!all[i]->reached_by(grads));
    } else if (all[i]->name() == "z_t0") {
      z_t0_changed = !same;
    }
  }
  CHECK(z_t0_changed);
  for (Param* p : all) p->set_frozen(false);
}

TEST_CASE("multi initial latent: layout, verbatim velocity, sensitivity") {
  Rng rng(81);
  auto cfg = tiny_multi();
  pipe::MultiSeqModel model(cfg, rng);
  const int64_t dyn = cfg.dynamic_dim();
  REQUIRE(dyn == cfg.canonical_dim + cfg.encoder_out + cfg.pose_dim);

  Tensor p0({1, 2}, {0.3, -0.1});
  Tensor v0({1, 2}, {0.025, -0.0125});
  Tensor z0 = model.initial_latent(nullptr, p0, v0);
  REQUIRE(z0.shape() == noderf::grad::Shape{1, dyn});

  // Canonical block then embedding then the raw velocity, all verbatim.
  Param& zc = model.z_can();
  for (int64_t i = 0; i < cfg.canonical_dim; ++i) CHECK(z0[i] == zc.value()[i]);
  CHECK(z0[dyn - 2] == 0.025);
  CHECK(z0[dyn - 1] == -0.0125);

  // Same inputs, same latent; moving p0 moves only the embedded block.
  Tensor again = model.initial_latent(nullptr, p0, v0);
  CHECK(bits_equal(z0, again));
  Tensor moved = model.initial_latent(nullptr, Tensor({1, 2}, {-0.2, 0.4}), v0);
  bool embed_differs = false;
  for (int64_t i = cfg.canonical_dim; i < cfg.canonical_dim + cfg.encoder_out;
       ++i) {
    if (moved[i] != z0[i]) embed_differs = true;
  }
  CHECK(embed_differs);
  CHECK(moved[dyn - 2] == 0.025);

  CHECK_THROWS_AS(model.initial_latent(nullptr, Tensor({1, 3}, {0, 0, 0}), v0),
                  Error);
  CHECK_THROWS_AS(model.initial_latent(nullptr, p0, Tensor::zeros({2, 1})),
                  Error);
}

TEST_CASE("multi rollout: zeroed dynamics decoder leaves the static scene") {
  Rng rng(91);
  auto cfg = tiny_multi();
  pipe::MultiSeqModel model(cfg, rng);
  const auto solver = euler(0.1);
  Tensor p0({1, 2}, {0.2, 0.0});
  Tensor v0({1, 2}, {0.01, 0.0});
  Tensor z0 = model.initial_latent(nullptr, p0, v0);

  std::vector<Param*> dn;
  Param* zstatic = nullptr;
  for (Param* p : model.params()) {
    if (p->name().rfind("dec_n.", 0) == 0) dn.push_back(p);
    if (p->name() == "z_static") zstatic = p;
  }
  REQUIRE(!dn.empty());
  REQUIRE(zstatic != nullptr);
  zero_params(dn);

  auto roll = model.rollout(nullptr, z0, {0.0, 0.4, 0.8}, solver);
  const int64_t L = cfg.field.latent_dim;
  REQUIRE(roll.latents.shape() == noderf::grad::Shape{3, L});
  for (int64_t r = 0; r < 3; ++r) {
    for (int64_t c = 0; c < L; ++c) {
      CHECK(roll.latents[r * L + c] == zstatic->value()[c]);
    }
  }
  REQUIRE(roll.poses.shape() == noderf::grad::Shape{3, cfg.pose_target_dim()});
  REQUIRE(roll.vels.shape() == noderf::grad::Shape{2, cfg.pose_target_dim()});

  auto single_time = model.rollout(nullptr, z0, {0.0}, solver);
  CHECK(single_time.latents.shape() == noderf::grad::Shape{1, L});
  CHECK(!single_time.vels.defined());
}

TEST_CASE("multi pose targets: encoded by default, raw behind the flag") {
  Rng rng(101);
  auto cfg = tiny_multi();
  pipe::MultiSeqModel model(cfg, rng);
  Tensor rows({3, 2}, {0.1, -0.2, 0.0, 0.4, -0.3, 0.25});

  Tensor enc = model.pose_targets(rows);
  REQUIRE(enc.shape() == noderf::grad::Shape{3, cfg.pose_target_dim()});
  Tensor direct = nn::positional_encode(rows, int(cfg.pe_pose));
  CHECK(bits_equal(enc, direct));

  auto raw_cfg = cfg;
  raw_cfg.raw_pose_targets = true;
  REQUIRE(raw_cfg.pose_target_dim() == 2);
  Rng rng2(101);
  pipe::MultiSeqModel raw_model(raw_cfg, rng2);
  Tensor raw = raw_model.pose_targets(rows);
  CHECK(bits_equal(raw, rows));

  CHECK_THROWS_AS(model.pose_targets(Tensor({2, 3}, {0, 0, 0, 0, 0, 0})),
                  Error);
}

TEST_CASE("multi model forces a Lipschitz field with a positive bound") {
  Rng rng(111);
  auto cfg = tiny_multi();
  CHECK(!cfg.field.lipschitz);  // caller default; the model turns it on
  pipe::MultiSeqModel model(cfg, rng);
  CHECK(model.config().field.lipschitz);

  Tensor bound = model.lipschitz_bound_product(nullptr);
  REQUIRE(bound.size() == 1);
  CHECK(bound.item() > 0.0);

  // Taped variant participates in gradients.
  Tape tape;
  Tensor taped = pipe::total_loss(
      [&] {
        pipe::LossParts parts;
        parts.nerf = Tensor::scalar(0.0);
        parts.lip = model.lipschitz_bound_product(&tape);
        return parts;
      }(),
      pipe::LossWeights{});
  GradMap grads = tape.backward(taped);
  bool any_bound = false;
  for (Param* p : model.params()) {
    const auto& name = p->name();
    if (name.size() >= 2 && name.compare(name.size() - 2, 2, ".c") == 0) {
      if (p->reached_by(grads)) any_bound = true;
    }
  }
  CHECK(any_bound);
}

TEST_CASE("multi joint loss passes a full FD check") {
  Rng rng(121);
  auto cfg = tiny_multi();
  pipe::MultiSeqModel model(cfg, rng);
  activate_bounds(model.params());
  const auto cam = tiny_camera(4);
  const auto solver = euler(0.1);

  pipe::RenderContext ctx;
  ctx.config.n_coarse = 3;
  ctx.config.n_fine = 3;
  ctx.config.background = {0.05, 0.06, 0.08};
  ctx.near = cam.near;
  ctx.far = cam.far;

  pipe::MultiBatch batch;
  batch.p0 = Tensor({1, 2}, {0.25, -0.05});
  batch.v0 = Tensor({1, 2}, {0.02, 0.01});
  batch.times = {0.0, 0.5, 1.0};
  batch.render_index = 1;
  batch.rays = frame_rays(cam, 4);
  batch.gt = random_matrix(rng, 4, 3, 0.0, 1.0);
  batch.pose_gt = random_matrix(rng, 3, cfg.pose_target_dim(), -1.0, 1.0);
  batch.vel_gt = random_matrix(rng, 2, cfg.pose_target_dim(), -1.0, 1.0);
  batch.render_seed = 707;

  pipe::LossWeights weights;  // defaults: nerf + 1e-2 aux + 1e-22 lip

  auto loss_fn = [&](Tape* tape) {
    auto parts = pipe::multi_parts(tape, model, batch, ctx, solver);
    return pipe::total_loss(parts, weights);
  };
  {
    Tape tape;
    Tensor loss = loss_fn(&tape);
    CHECK(std::isfinite(loss.item()));
  }
  const double rel = module_fd_check(loss_fn, model.params(), 1e-5);
  CHECK(rel < 1e-4);
}

TEST_CASE("model configs round trip through json") {
  auto sc = tiny_single();
  sc.use_static_latent = true;
  auto sj = sc.to_json();
  auto sc2 = pipe::SingleSeqConfig::from_json(sj);
  CHECK(sc2.dynamic_dim == sc.dynamic_dim);
  CHECK(sc2.rnn_hidden == sc.rnn_hidden);
  CHECK(sc2.f_hidden == sc.f_hidden);
  CHECK(sc2.decoder_hidden == sc.decoder_hidden);
  CHECK(sc2.use_static_latent == sc.use_static_latent);
  CHECK(sc2.field.latent_dim == sc.field.latent_dim);
  CHECK(sc2.field.hidden == sc.field.hidden);

  auto mc = tiny_multi();
  mc.raw_pose_targets = true;
  auto mj = mc.to_json();
  auto mc2 = pipe::MultiSeqConfig::from_json(mj);
  CHECK(mc2.canonical_dim == mc.canonical_dim);
  CHECK(mc2.pose_dim == mc.pose_dim);
  CHECK(mc2.pe_pose == mc.pe_pose);
  CHECK(mc2.encoder_hidden == mc.encoder_hidden);
  CHECK(mc2.encoder_out == mc.encoder_out);
  CHECK(mc2.decoder_hidden == mc.decoder_hidden);
  CHECK(mc2.f_hidden == mc.f_hidden);
  CHECK(mc2.raw_pose_targets);
}
