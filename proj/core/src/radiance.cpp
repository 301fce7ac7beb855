// Copyright 2026 The noderf Authors
// SPDX-License-Identifier: Apache-2.0
#include "noderf/radiance.hpp"

#include <algorithm>
#include <cmath>

#include "noderf/common.hpp"

namespace noderf::rad {

using grad::add;
using grad::concat;
using grad::cumsum_exclusive_last;
using grad::exp;
using grad::matmul;
using grad::mean;
using grad::mul;
using grad::reshape;
using grad::scale;
using grad::slice_last;
using grad::square;
using grad::sub;

namespace {

constexpr double kWeightFloor = 1e-5;

std::array<double, 3> normalized(const std::array<double, 3>& v) {
  double n = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
  require(n > 0.0, "generate_rays: zero-length direction");
  return {v[0] / n, v[1] / n, v[2] / n};
}

}  // namespace

void Camera::validate() const {
  require(focal > 0.0, "Camera: focal length must be positive");
  require(width > 0 && height > 0, "Camera: image size must be positive");
  require(near > 0.0 && near < far, "Camera: requires 0 < near < far");
  // Rows of the rotation part.
  const double* r0 = pose.data();
  const double* r1 = pose.data() + 4;
  const double* r2 = pose.data() + 8;
  auto dot3 = [](const double* a, const double* b) {
    return a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
  };
  require(std::abs(dot3(r0, r0) - 1.0) < 1e-9 &&
              std::abs(dot3(r1, r1) - 1.0) < 1e-9 &&
              std::abs(dot3(r2, r2) - 1.0) < 1e-9,
          "Camera: rotation rows must be unit length");
  require(std::abs(dot3(r0, r1)) < 1e-9 && std::abs(dot3(r0, r2)) < 1e-9 &&
              std::abs(dot3(r1, r2)) < 1e-9,
          "Camera: rotation rows must be orthogonal");
  double det = r0[0] * (r1[1] * r2[2] - r1[2] * r2[1]) -
               r0[1] * (r1[0] * r2[2] - r1[2] * r2[0]) +
               r0[2] * (r1[0] * r2[1] - r1[1] * r2[0]);
  require(std::abs(det - 1.0) < 1e-9, "Camera: rotation must have det +1");
}

std::array<double, 3> Camera::rotate(const std::array<double, 3>& v) const {
  std::array<double, 3> out{};
  for (int r = 0; r < 3; ++r) {
    out[r] = pose[r * 4] * v[0] + pose[r * 4 + 1] * v[1] + pose[r * 4 + 2] * v[2];
  }
  return out;
}

std::vector<Ray> generate_rays(const Camera& camera,
                               const std::vector<int64_t>& pixels) {
  camera.validate();
  const double cx = 0.5 * camera.width;
  const double cy = 0.5 * camera.height;
  std::vector<Ray> rays;
  rays.reserve(pixels.size());
  for (int64_t p : pixels) {
    require(p >= 0 && p < int64_t(camera.width) * camera.height,
            "generate_rays: pixel index ", p, " out of bounds for ", camera.width,
            "x", camera.height);
    const int64_t x = p % camera.width;
    const int64_t y = p / camera.width;
    std::array<double, 3> cam_dir = {(double(x) + 0.5 - cx) / camera.focal,
                                     (double(y) + 0.5 - cy) / camera.focal, 1.0};
    Ray ray;
    ray.origin = camera.origin();
    ray.direction = normalized(camera.rotate(cam_dir));
    ray.pixel = p;
    rays.push_back(ray);
  }
  return rays;
}

std::vector<double> stratified_depths(double near, double far, int n,
                                      const std::vector<double>& unit_draws) {
  require(n >= 2, "stratified_depths: needs at least 2 samples, got ", n);
  require(near < far, "stratified_depths: near must precede far");
  require(int64_t(unit_draws.size()) == n,
          "stratified_depths: needs one draw per bin");
  const double width = (far - near) / n;
  std::vector<double> depths(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    const double u = unit_draws[size_t(i)];
    require(u >= 0.0 && u < 1.0, "stratified_depths: draws must lie in [0, 1)");
    depths[size_t(i)] = near + (double(i) + u) * width;
  }
  return depths;
}

std::vector<double> stratified_depths(double near, double far, int n, Rng& rng) {
  std::vector<double> draws(size_t(std::max(n, 0)));
  for (double& u : draws) u = rng.uniform01();
  return stratified_depths(near, far, n, draws);
}

std::vector<double> importance_depths(const std::vector<double>& coarse_depths,
                                      double far,
                                      const std::vector<double>& weights,
                                      const std::vector<double>& unit_draws) {
  const size_t n = coarse_depths.size();
  require(n >= 1, "importance_depths: empty coarse depths");
  require(weights.size() == n, "importance_depths: needs one weight per bin (",
          n, " bins, ", weights.size(), " weights)");
  for (size_t i = 1; i < n; ++i) {
    require(coarse_depths[i] > coarse_depths[i - 1],
            "importance_depths: coarse depths must be ascending");
  }
  require(far > coarse_depths.back(),
          "importance_depths: far must exceed the last coarse depth");
  std::vector<double> cum(n + 1, 0.0);
  for (size_t i = 0; i < n; ++i) {
    require(weights[i] >= 0.0, "importance_depths: negative weight");
    cum[i + 1] = cum[i] + weights[i] + kWeightFloor;
  }
  const double total = cum.back();
  std::vector<double> merged = coarse_depths;
  merged.reserve(n + unit_draws.size());
  for (double u : unit_draws) {
    require(u >= 0.0 && u < 1.0, "importance_depths: draws must lie in [0, 1)");
    const double target = u * total;
    // Last bin whose cumulative start is <= target.
    size_t b = size_t(std::upper_bound(cum.begin(), cum.end(), target) -
                      cum.begin()) - 1;
    b = std::min(b, n - 1);
    const double mass = cum[b + 1] - cum[b];
    const double frac = (target - cum[b]) / mass;
    const double left = coarse_depths[b];
    const double right = (b + 1 < n) ? coarse_depths[b + 1] : far;
    merged.push_back(left + frac * (right - left));
  }
  std::sort(merged.begin(), merged.end());
  return merged;
}

std::vector<double> importance_depths(const std::vector<double>& coarse_depths,
                                      double far,
                                      const std::vector<double>& weights,
                                      int n_fine, Rng& rng) {
  std::vector<double> draws(size_t(std::max(n_fine, 0)));
  for (double& u : draws) u = rng.uniform01();
  return importance_depths(coarse_depths, far, weights, draws);
}

namespace {

nn::MlpConfig field_mlp_config(const FieldConfig& config) {
  require(config.pe_position >= 1 && config.pe_direction >= 1,
          "NerfField: positional encoding needs at least one octave");
  require(config.latent_dim >= 1, "NerfField: latent_dim must be positive");
  nn::MlpConfig mlp;
  mlp.widths.push_back(6 * config.pe_position + 6 * config.pe_direction +
                       config.latent_dim);
  for (int w : config.hidden) mlp.widths.push_back(w);
  mlp.widths.push_back(4);
  mlp.hidden = nn::Act::kRelu;
  mlp.output = nn::Act::kNone;
  mlp.lipschitz = config.lipschitz;
  return mlp;
}

}  // namespace

NerfField::NerfField(const FieldConfig& config, Rng& rng)
    : config_(config),
      coarse_("field_coarse", field_mlp_config(config), rng),
      fine_("field_fine", field_mlp_config(config), rng) {}

FieldOutput NerfField::query(Tape* tape, Level level, const Tensor& x,
                             const Tensor& d, const Tensor& z) const {
  require(x.defined() && x.rank() == 2 && x.dim(1) == 3,
          "field query: positions must be [M, 3]");
  require(d.defined() && d.rank() == 2 && d.dim(1) == 3 && d.dim(0) == x.dim(0),
          "field query: directions must be [M, 3] aligned with positions");
  require(!x.on_tape() && !d.on_tape(),
          "field query: positions and directions must be plain values");
  require(z.defined() && z.rank() == 2 && z.dim(1) == config_.latent_dim,
          "field query: latent dim ", z.defined() ? z.dim(1) : -1,
          " does not match config ", config_.latent_dim);
  const int64_t m = x.dim(0);
  Tensor zz = tape ? z : z.detached();
  Tensor z_rows;
  if (z.dim(0) == m) {
    z_rows = zz;
  } else {
    require(z.dim(0) == 1, "field query: latent rows must be 1 or match M");
    // Broadcasts the single latent row over all samples.
    z_rows = add(Tensor::zeros({m, config_.latent_dim}),
                 reshape(zz, {config_.latent_dim}));
  }
  Tensor input = concat({nn::positional_encode(x, config_.pe_position),
                         nn::positional_encode(d, config_.pe_direction), z_rows});
  nn::Mlp& net = level == Level::kCoarse ? coarse_ : fine_;
  Tensor raw = net.forward(tape, input);
  FieldOutput out;
  out.color = grad::sigmoid(slice_last(raw, 0, 3));
  out.sigma = grad::softplus(slice_last(raw, 3, 1));
  return out;
}

std::vector<nn::Param*> NerfField::params(Level level) {
  return level == Level::kCoarse ? coarse_.params() : fine_.params();
}

std::vector<nn::Param*> NerfField::params() {
  std::vector<nn::Param*> all = coarse_.params();
  for (nn::Param* p : fine_.params()) all.push_back(p);
  return all;
}

RenderOutput volume_render(Tape* tape, const Tensor& depths, double far,
                           const Tensor& sigma, const Tensor& color,
                           const std::array<double, 3>& background) {
  require(depths.defined() && depths.rank() == 2 && !depths.on_tape(),
          "volume_render: depths must be plain [R, N]");
  const int64_t rays = depths.dim(0);
  const int64_t n = depths.dim(1);
  require(n >= 1, "volume_render: needs at least one sample per ray");
  require(sigma.defined() && sigma.rank() == 2 && sigma.dim(0) == rays &&
              sigma.dim(1) == n,
          "volume_render: sigma must be [R, N]");
  require(color.defined() && color.rank() == 2 && color.dim(0) == rays * n &&
              color.dim(1) == 3,
          "volume_render: color must be [R*N, 3]");

  Tensor deltas = Tensor::zeros({rays, n});
  for (int64_t r = 0; r < rays; ++r) {
    for (int64_t i = 0; i < n; ++i) {
      const double s = depths[r * n + i];
      const double next = (i + 1 < n) ? depths[r * n + i + 1] : far;
      require(next > s, "volume_render: non-ascending depths at ray ", r,
              " sample ", i);
      deltas.mutable_data()[size_t(r * n + i)] = next - s;
    }
  }

  // sd_i = sigma_i * delta_i; T_i = exp(-sum_{j<i} sd_j) is the
  // transmittance entering sample i, and w_i = T_i - T_{i+1} telescopes so
  // that sum_i w_i + T_final = 1 exactly.
  Tensor sd = mul(sigma, deltas);
  Tensor cum = cumsum_exclusive_last(sd);
  Tensor trans = exp(scale(cum, -1.0));
  Tensor trans_next = exp(scale(add(cum, sd), -1.0));
  Tensor weights = sub(trans, trans_next);
  Tensor t_final = slice_last(trans_next, n - 1, 1);

  Tensor ones13 = Tensor::full({1, 3}, 1.0);
  Tensor w_col = reshape(weights, {rays * n, 1});
  Tensor weighted = mul(color, matmul(w_col, ones13));
  // Per-ray, per-channel sums via a constant [3N, 3] channel selector.
  Tensor selector = Tensor::zeros({n * 3, 3});
  for (int64_t j = 0; j < n; ++j) {
    for (int64_t c = 0; c < 3; ++c) {
      selector.mutable_data()[size_t((j * 3 + c) * 3 + c)] = 1.0;
    }
  }
  Tensor foreground = matmul(reshape(weighted, {rays, n * 3}), selector);
  Tensor bg_row = Tensor({1, 3}, {background[0], background[1], background[2]});
  RenderOutput out;
  out.color = add(foreground, matmul(t_final, bg_row));
  out.weights = weights;
  out.trans = trans;
  out.t_final = t_final;
  out.opacity = sub(Tensor::full({rays, 1}, 1.0), t_final);
  (void)tape;
  return out;
}

namespace {

// Sample positions o + s*d and per-sample directions for a depth matrix.
void expand_samples(const std::vector<Ray>& rays, const std::vector<double>& depths,
                    int64_t n, Tensor* x, Tensor* d) {
  const int64_t r_count = int64_t(rays.size());
  *x = Tensor::zeros({r_count * n, 3});
  *d = Tensor::zeros({r_count * n, 3});
  for (int64_t r = 0; r < r_count; ++r) {
    const Ray& ray = rays[size_t(r)];
    for (int64_t i = 0; i < n; ++i) {
      const double s = depths[size_t(r * n + i)];
      for (int64_t c = 0; c < 3; ++c) {
        x->mutable_data()[size_t((r * n + i) * 3 + c)] =
            ray.origin[size_t(c)] + s * ray.direction[size_t(c)];
        d->mutable_data()[size_t((r * n + i) * 3 + c)] = ray.direction[size_t(c)];
      }
    }
  }
}

LevelRender render_level(Tape* tape, const NerfField& field, const Tensor& z,
                         const std::vector<Ray>& rays, double far, Level level,
                         const std::vector<double>& depths, int64_t n,
                         const std::array<double, 3>& background) {
  Tensor x, d;
  expand_samples(rays, depths, n, &x, &d);
  FieldOutput fo = field.query(tape, level, x, d, z);
  LevelRender out;
  out.depths = Tensor({int64_t(rays.size()), n}, depths);
  Tensor sigma_rows = reshape(fo.sigma, {int64_t(rays.size()), n});
  out.out = volume_render(tape, out.depths, far, sigma_rows, fo.color, background);
  return out;
}

}  // namespace

std::vector<LevelRender> render_rays(Tape* tape, const NerfField& field,
                                     const Tensor& z,
                                     const std::vector<Ray>& rays,
                                     double near, double far,
                                     const RenderConfig& config, Rng& rng) {
  require(!rays.empty(), "render_rays: empty ray list");
  require(config.n_coarse >= 2, "render_rays: n_coarse must be at least 2");
  require(config.n_fine >= 0, "render_rays: n_fine must be non-negative");
  const int64_t r_count = int64_t(rays.size());
  const int64_t nc = config.n_coarse;

  // All draws are taken per ray up front (the importance draws are plain
  // uniforms; only their inverse-CDF mapping depends on the coarse weights),
  // so rng consumption is a pure function of ray order and results cannot
  // depend on how rays are batched.
  std::vector<double> coarse_depths(size_t(r_count * nc));
  std::vector<double> fine_draws(size_t(r_count * config.n_fine));
  for (int64_t r = 0; r < r_count; ++r) {
    std::vector<double> strat(static_cast<size_t>(nc));
    for (double& u : strat) u = rng.uniform01();
    std::vector<double> row = stratified_depths(near, far, config.n_coarse, strat);
    std::copy(row.begin(), row.end(), coarse_depths.begin() + r * nc);
    for (int64_t j = 0; j < config.n_fine; ++j) {
      fine_draws[size_t(r * config.n_fine + j)] = rng.uniform01();
    }
  }
  std::vector<LevelRender> levels;
  levels.push_back(render_level(tape, field, z, rays, far, Level::kCoarse,
                                coarse_depths, nc, config.background));
  if (config.n_fine == 0) return levels;

  // Fine depths follow the coarse weight values; sample placement itself is
  // not differentiated (the weights are read as plain numbers).
  const Tensor& w = levels[0].out.weights;
  const int64_t nf = nc + config.n_fine;
  std::vector<double> fine_depths(size_t(r_count * nf));
  for (int64_t r = 0; r < r_count; ++r) {
    std::vector<double> row_d(coarse_depths.begin() + r * nc,
                              coarse_depths.begin() + (r + 1) * nc);
    std::vector<double> row_w(static_cast<size_t>(nc));
    for (int64_t i = 0; i < nc; ++i) row_w[size_t(i)] = w[r * nc + i];
    std::vector<double> draws(fine_draws.begin() + r * config.n_fine,
                              fine_draws.begin() + (r + 1) * config.n_fine);
    std::vector<double> merged = importance_depths(row_d, far, row_w, draws);
    std::copy(merged.begin(), merged.end(), fine_depths.begin() + r * nf);
  }
  levels.push_back(render_level(tape, field, z, rays, far, Level::kFine,
                                fine_depths, nf, config.background));
  return levels;
}

Tensor nerf_loss(const std::vector<Tensor>& level_colors, const Tensor& gt) {
  require(!level_colors.empty(), "nerf_loss: no rendered levels");
  require(gt.defined() && gt.rank() == 2 && gt.dim(1) == 3,
          "nerf_loss: ground truth must be [R, 3]");
  Tensor loss;
  for (const Tensor& c : level_colors) {
    require(c.defined() && c.rank() == 2 && c.dim(0) == gt.dim(0) && c.dim(1) == 3,
            "nerf_loss: rendered colors must be [R, 3] aligned with ground truth");
    Tensor term = mean(square(sub(c, gt)));
    loss = loss.defined() ? add(loss, term) : term;
  }
  return loss;
}

img::Image render_image(const NerfField& field, const Tensor& z,
                        const Camera& camera, const RenderConfig& config,
                        Rng& rng) {
  camera.validate();
  require(config.ray_batch >= 1, "render_image: ray_batch must be positive");
  img::Image image(camera.width, camera.height);
  const int64_t total = int64_t(camera.width) * camera.height;
  std::vector<int64_t> pixels;
  for (int64_t start = 0; start < total; start += config.ray_batch) {
    const int64_t count = std::min<int64_t>(config.ray_batch, total - start);
    pixels.resize(size_t(count));
    for (int64_t i = 0; i < count; ++i) pixels[size_t(i)] = start + i;
    std::vector<Ray> rays = generate_rays(camera, pixels);
    std::vector<LevelRender> levels = render_rays(
        nullptr, field, z, rays, camera.near, camera.far, config, rng);
    const Tensor& color = levels.back().out.color;
    for (int64_t i = 0; i < count; ++i) {
      for (int64_t c = 0; c < 3; ++c) {
        image.data()[size_t((start + i) * 3 + c)] = color[i * 3 + c];
      }
    }
  }
  return image;
}

}  // namespace noderf::rad
