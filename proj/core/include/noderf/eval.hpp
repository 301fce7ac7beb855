// Copyright 2026 The noderf Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef NODERF_EVAL_HPP_
#define NODERF_EVAL_HPP_

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "noderf/image.hpp"

namespace noderf::eval {

// Dense per-pixel displacement between two consecutive frames, stored
// row-major; (u, v) is the apparent motion in pixels along +x and +y.
struct FlowField {
  int width = 0;
  int height = 0;
  std::vector<double> u;
  std::vector<double> v;

  double magnitude(int x, int y) const;
};

struct EvalConfig {
  double flow_alpha = 0.5;  // flow-magnitude mask threshold, pixels

  int ssim_window = 11;
  double ssim_sigma = 1.5;
  double ssim_k1 = 0.01;
  double ssim_k2 = 0.03;

  double psnr_peak = 1.0;
  double psnr_cap = 99.0;  // returned when MSE < 1e-12

  double hs_smoothness = 0.5;  // Horn-Schunck regularizer weight
  int hs_iterations = 100;

  double pose_color_tol = 0.25;  // Euclidean rgb distance for ball pixels

  // The per-pair IoU mean is the default; pooled mode sums intersections
  // and unions over all pairs before dividing.
  bool iou_pooled = false;
};

// Sentinel for "no ball detected" pose errors and for skipped (both-empty)
// IoU pairs in per-frame listings.
constexpr double kNotFound = -1.0;

// 10 log10(peak^2 / MSE) over all pixels and channels, capped at
// config-level 99 dB when MSE < 1e-12. Symmetric in its image arguments.
double psnr(const img::Image& image, const img::Image& reference,
            double peak = 1.0, double cap = 99.0);

// Mean local SSIM on luma with a Gaussian window (default 11, sigma 1.5,
// K1 = 0.01, K2 = 0.03, peak 1), averaged over valid window positions.
double ssim(const img::Image& image, const img::Image& reference,
            const EvalConfig& config = EvalConfig());

// Horn-Schunck dense flow on luma: central-difference gradients, Jacobi
// relaxation with the configured smoothness weight and iteration count.
// Deterministic; identical frames give exactly zero flow.
FlowField estimate_flow(const img::Image& frame_a, const img::Image& frame_b,
                        const EvalConfig& config = EvalConfig());

// Binary mask of pixels whose flow magnitude exceeds alpha, row-major 0/1.
std::vector<uint8_t> flow_magnitude_mask(const FlowField& flow, double alpha);

// |A intersect B| / |A union B|; returns kNotFound when both masks are empty.
double mask_iou(const std::vector<uint8_t>& a, const std::vector<uint8_t>& b);

struct IouResult {
  std::vector<double> per_pair;  // kNotFound marks skipped both-empty pairs
  double mean = 0.0;             // over counted pairs (or pooled ratio)
  int counted = 0;               // pairs contributing to the mean
};

// Flow-mask overlap between two videos: masks are (|flow| > alpha) per
// consecutive frame pair; pairs where both masks are empty are skipped.
IouResult flow_mask_iou(const std::vector<img::Image>& video_pred,
                        const std::vector<img::Image>& video_gt, double alpha,
                        const EvalConfig& config = EvalConfig());

// Centroid of pixels within color tolerance of `ball_color`, or kNotFound
// coordinates when no pixel qualifies. Returned as (x, y) in continuous
// pixel coordinates (pixel centers at integer + 0.5).
std::array<double, 2> locate_ball(const img::Image& frame,
                                  const std::array<double, 3>& ball_color,
                                  double tolerance);

// Euclidean pixel distance between predicted and ground-truth ball
// centroids per frame; kNotFound where either frame lacks a detection.
std::vector<double> pose_error(const std::vector<img::Image>& frames_pred,
                               const std::vector<img::Image>& frames_gt,
                               const std::array<double, 3>& ball_color,
                               const EvalConfig& config = EvalConfig());

struct FrameMetrics {
  int frame = 0;
  double psnr = 0.0;
  double ssim = 0.0;
  double iou = kNotFound;       // pair (frame, frame + 1); last frame skipped
  double pose_err = kNotFound;  // kNotFound when the ball is undetected
};

struct MetricsReport {
  std::vector<FrameMetrics> rows;
  double mean_psnr = 0.0;
  double mean_ssim = 0.0;
  double mean_iou = 0.0;
  double mean_pose_err = 0.0;
  int iou_counted = 0;
  int pose_found = 0;
  EvalConfig config;
};

// Full per-frame metric sweep of a predicted video against ground truth.
MetricsReport evaluate_video(const std::vector<img::Image>& pred,
                             const std::vector<img::Image>& gt,
                             const std::array<double, 3>& ball_color,
                             const EvalConfig& config = EvalConfig());

// CSV rows `frame,psnr,ssim,iou,pose_err` (kNotFound written as empty
// cells) and a JSON summary with means, counts, and the config echoed.
void write_metrics_csv(const MetricsReport& report, const std::string& path);
void write_metrics_json(const MetricsReport& report, const std::string& path);

}  // namespace noderf::eval

#endif  // NODERF_EVAL_HPP_
