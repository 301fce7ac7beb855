// Copyright 2026 The noderf Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef NODERF_RADIANCE_HPP_
#define NODERF_RADIANCE_HPP_

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "noderf/image.hpp"
#include "noderf/nn.hpp"
#include "noderf/rng.hpp"
#include "noderf/tensor.hpp"

namespace noderf::rad {

using grad::Tape;
using grad::Tensor;

// Pinhole camera. `pose` is the 3x4 world-from-camera transform [R | t],
// row-major; the camera looks along R * (0, 0, 1) from origin t. The
// principal point sits at the image center (width/2, height/2).
struct Camera {
  std::array<double, 12> pose{1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0};
  double focal = 0.0;  // pixels
  int width = 0;
  int height = 0;
  double near = 0.0;  // world units
  double far = 0.0;

  // Throws unless the rotation part is orthonormal with det +1 (within
  // 1e-9) and 0 < near < far.
  void validate() const;

  std::array<double, 3> origin() const { return {pose[3], pose[7], pose[11]}; }
  std::array<double, 3> rotate(const std::array<double, 3>& v) const;
  std::array<double, 3> forward_axis() const { return rotate({0.0, 0.0, 1.0}); }
};

struct Ray {
  std::array<double, 3> origin{};
  std::array<double, 3> direction{};  // unit norm
  int64_t pixel = 0;                  // y * width + x
};

enum class Level { kCoarse, kFine };

struct RenderConfig {
  int n_coarse = 32;
  int n_fine = 32;
  std::array<double, 3> background{0.0, 0.0, 0.0};
  int ray_batch = 512;
};

// One ray per pixel index (y * width + x), cast through the pixel center;
// directions are unit norm. Throws on out-of-bounds pixels.
std::vector<Ray> generate_rays(const Camera& camera,
                               const std::vector<int64_t>& pixels);

// Splits [near, far] into n equal bins and places one sample per bin at the
// bin's `unit_draws[i]` fraction (each in [0, 1)); strictly increasing.
std::vector<double> stratified_depths(double near, double far, int n,
                                      const std::vector<double>& unit_draws);
std::vector<double> stratified_depths(double near, double far, int n, Rng& rng);

// Inverse-CDF samples of the piecewise-constant distribution proportional to
// weights (plus a 1e-5 floor) over the bins [d_i, d_{i+1}) with d_n = far,
// one sample per entry of `unit_draws`; the result is the fine samples merged
// and sorted with the coarse depths. Requires one weight per bin.
std::vector<double> importance_depths(const std::vector<double>& coarse_depths,
                                      double far,
                                      const std::vector<double>& weights,
                                      const std::vector<double>& unit_draws);
std::vector<double> importance_depths(const std::vector<double>& coarse_depths,
                                      double far,
                                      const std::vector<double>& weights,
                                      int n_fine, Rng& rng);

struct FieldConfig {
  int pe_position = 6;  // frequency octaves for sample positions
  int pe_direction = 4;
  int latent_dim = 8;
  std::vector<int> hidden = {64, 64};
  // Lipschitz-normalize every layer of both level MLPs; each layer then
  // carries a trainable bound scalar (see nn::lipschitz_normalize).
  bool lipschitz = false;
};

struct FieldOutput {
  Tensor color;  // [M, 3], sigmoid head
  Tensor sigma;  // [M, 1], softplus head
};

// Latent-conditioned radiance field: an MLP per level over
// (positional_encode(x), positional_encode(d), z).
class NerfField {
 public:
  NerfField(const FieldConfig& config, Rng& rng);

  // x, d: [M, 3] plain sample positions/directions; z: [1, latent_dim] or
  // [M, latent_dim], may be taped.
  FieldOutput query(Tape* tape, Level level, const Tensor& x, const Tensor& d,
                    const Tensor& z) const;

  std::vector<nn::Param*> params(Level level);
  std::vector<nn::Param*> params();
  const FieldConfig& config() const { return config_; }
  nn::Mlp& level_net(Level level) { return level == Level::kCoarse ? coarse_ : fine_; }

 private:
  FieldConfig config_;
  mutable nn::Mlp coarse_;
  mutable nn::Mlp fine_;
};

struct RenderOutput {
  Tensor color;    // [R, 3] composited pixel colors
  Tensor weights;  // [R, N] per-sample weights w_i = T_i * alpha_i
  Tensor trans;    // [R, N] transmittance T_i entering each sample
  Tensor t_final;  // [R, 1] residual transmittance past the last sample
  Tensor opacity;  // [R, 1] accumulated opacity 1 - T_final
};

// Alpha-compositing quadrature: delta_i = s_{i+1} - s_i (last delta =
// far - s_N), alpha_i = 1 - exp(-sigma_i delta_i), T_i = prod_{j<i}
// (1 - alpha_j), w_i = T_i alpha_i, C = sum w_i c_i + T_final * background.
// depths: [R, N] plain ascending rows; sigma: [R, N]; color: [R*N, 3].
RenderOutput volume_render(Tape* tape, const Tensor& depths, double far,
                           const Tensor& sigma, const Tensor& color,
                           const std::array<double, 3>& background);

struct LevelRender {
  Tensor depths;  // [R, N] plain
  RenderOutput out;
};

// Full hierarchical pass: stratified coarse samples, coarse render,
// importance-sampled fine depths from the coarse weights (merged with the
// coarse depths), fine render. With n_fine == 0 only the coarse level runs.
// The final image color is the last level's. The rng is consumed in ray
// order, so results do not depend on ray_batch.
std::vector<LevelRender> render_rays(Tape* tape, const NerfField& field,
                                     const Tensor& z,
                                     const std::vector<Ray>& rays,
                                     double near, double far,
                                     const RenderConfig& config, Rng& rng);

// Sum over levels of the mean squared RGB error against gt ([R, 3]).
Tensor nerf_loss(const std::vector<Tensor>& level_colors, const Tensor& gt);

// Renders every pixel of the camera in ray_batch chunks (value mode).
img::Image render_image(const NerfField& field, const Tensor& z,
                        const Camera& camera, const RenderConfig& config,
                        Rng& rng);

}  // namespace noderf::rad

#endif  // NODERF_RADIANCE_HPP_
