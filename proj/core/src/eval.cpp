// Copyright 2026 The noderf Authors
// SPDX-License-Identifier: Apache-2.0

#include "noderf/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "json.hpp"
#include "noderf/common.hpp"
#include "noderf/parallel.hpp"

namespace noderf::eval {
namespace {

using json = nlohmann::ordered_json;

void require_same_shape(const img::Image& a, const img::Image& b,
                        const char* op) {
  require(a.width() == b.width() && a.height() == b.height(), op,
          ": image shapes differ (", a.width(), "x", a.height(), " vs ",
          b.width(), "x", b.height(), ")");
  require(!a.empty(), op, ": empty images");
}

// Border-replicating sample of a row-major [h * w] field.
double at_clamped(const std::vector<double>& f, int w, int h, int x, int y) {
  x = std::clamp(x, 0, w - 1);
  y = std::clamp(y, 0, h - 1);
  return f[size_t(y) * size_t(w) + size_t(x)];
}

std::string format_cell(double v) {
  if (v == kNotFound) return "";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

json config_to_json(const EvalConfig& c) {
  json j;
  j["flow_alpha"] = c.flow_alpha;
  j["ssim_window"] = c.ssim_window;
  j["ssim_sigma"] = c.ssim_sigma;
  j["ssim_k1"] = c.ssim_k1;
  j["ssim_k2"] = c.ssim_k2;
  j["psnr_peak"] = c.psnr_peak;
  j["psnr_cap"] = c.psnr_cap;
  j["hs_smoothness"] = c.hs_smoothness;
  j["hs_iterations"] = c.hs_iterations;
  j["pose_color_tol"] = c.pose_color_tol;
  j["iou_pooled"] = c.iou_pooled;
  return j;
}

}  // namespace

double FlowField::magnitude(int x, int y) const {
  const size_t i = size_t(y) * size_t(width) + size_t(x);
  return std::hypot(u[i], v[i]);
}

double psnr(const img::Image& image, const img::Image& reference, double peak,
            double cap) {
  require_same_shape(image, reference, "psnr");
  require(peak > 0.0, "psnr: peak must be positive");
  const std::vector<double>& a = image.data();
  const std::vector<double>& b = reference.data();
  double sum = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    sum += d * d;
  }
  const double mse = sum / double(a.size());
  if (mse < 1e-12) return cap;
  return 10.0 * std::log10(peak * peak / mse);
}

double ssim(const img::Image& image, const img::Image& reference,
            const EvalConfig& config) {
  require_same_shape(image, reference, "ssim");
  const int w = image.width();
  const int h = image.height();
  const int win = config.ssim_window;
  require(win >= 3 && win % 2 == 1, "ssim: window must be odd and >= 3");
  require(w >= win && h >= win, "ssim: image ", w, "x", h,
          " is smaller than the ", win, "-pixel window");

  std::vector<double> kernel(static_cast<size_t>(win));
  const int half = win / 2;
  double ksum = 0.0;
  for (int i = 0; i < win; ++i) {
    const double d = double(i - half);
    kernel[size_t(i)] = std::exp(-d * d / (2.0 * config.ssim_sigma *
                                           config.ssim_sigma));
    ksum += kernel[size_t(i)];
  }
  for (double& k : kernel) k /= ksum;

  const std::vector<double> la = img::to_luma(image);
  const std::vector<double> lb = img::to_luma(reference);
  const double c1 = config.ssim_k1 * config.ssim_k1;  // peak 1
  const double c2 = config.ssim_k2 * config.ssim_k2;

  double total = 0.0;
  int64_t count = 0;
  for (int y = half; y < h - half; ++y) {
    for (int x = half; x < w - half; ++x) {
      double ma = 0.0, mb = 0.0, maa = 0.0, mbb = 0.0, mab = 0.0;
      for (int dy = -half; dy <= half; ++dy) {
        for (int dx = -half; dx <= half; ++dx) {
          const double wgt =
              kernel[size_t(dy + half)] * kernel[size_t(dx + half)];
          const double va = la[size_t(y + dy) * size_t(w) + size_t(x + dx)];
          const double vb = lb[size_t(y + dy) * size_t(w) + size_t(x + dx)];
          ma += wgt * va;
          mb += wgt * vb;
          maa += wgt * va * va;
          mbb += wgt * vb * vb;
          mab += wgt * va * vb;
        }
      }
      const double var_a = maa - ma * ma;
      const double var_b = mbb - mb * mb;
      const double cov = mab - ma * mb;
      total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) /
               ((ma * ma + mb * mb + c1) * (var_a + var_b + c2));
      ++count;
    }
  }
  return total / double(count);
}

FlowField estimate_flow(const img::Image& frame_a, const img::Image& frame_b,
                        const EvalConfig& config) {
  require_same_shape(frame_a, frame_b, "estimate_flow");
  require(config.hs_iterations >= 1 && config.hs_smoothness > 0.0,
          "estimate_flow: needs positive smoothness and iterations");
  const int w = frame_a.width();
  const int h = frame_a.height();
  const std::vector<double> la = img::to_luma(frame_a);
  const std::vector<double> lb = img::to_luma(frame_b);
  const size_t n = la.size();

  // Central-difference spatial gradients averaged over both frames; the
  // temporal derivative is the plain frame difference.
  std::vector<double> ix(n), iy(n), it(n);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const size_t i = size_t(y) * size_t(w) + size_t(x);
      ix[i] = 0.25 * (at_clamped(la, w, h, x + 1, y) -
                      at_clamped(la, w, h, x - 1, y) +
                      at_clamped(lb, w, h, x + 1, y) -
                      at_clamped(lb, w, h, x - 1, y));
      iy[i] = 0.25 * (at_clamped(la, w, h, x, y + 1) -
                      at_clamped(la, w, h, x, y - 1) +
                      at_clamped(lb, w, h, x, y + 1) -
                      at_clamped(lb, w, h, x, y - 1));
      it[i] = lb[i] - la[i];
    }
  }

  FlowField flow;
  flow.width = w;
  flow.height = h;
  flow.u.assign(n, 0.0);
  flow.v.assign(n, 0.0);
  std::vector<double> nu(n), nv(n);
  for (int iter = 0; iter < config.hs_iterations; ++iter) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const size_t i = size_t(y) * size_t(w) + size_t(x);
        const double ubar = 0.25 * (at_clamped(flow.u, w, h, x - 1, y) +
                                    at_clamped(flow.u, w, h, x + 1, y) +
                                    at_clamped(flow.u, w, h, x, y - 1) +
                                    at_clamped(flow.u, w, h, x, y + 1));
        const double vbar = 0.25 * (at_clamped(flow.v, w, h, x - 1, y) +
                                    at_clamped(flow.v, w, h, x + 1, y) +
                                    at_clamped(flow.v, w, h, x, y - 1) +
                                    at_clamped(flow.v, w, h, x, y + 1));
        const double num = ix[i] * ubar + iy[i] * vbar + it[i];
        const double den = config.hs_smoothness + ix[i] * ix[i] + iy[i] * iy[i];
        nu[i] = ubar - ix[i] * num / den;
        nv[i] = vbar - iy[i] * num / den;
      }
    }
    flow.u.swap(nu);
    flow.v.swap(nv);
  }
  return flow;
}

std::vector<uint8_t> flow_magnitude_mask(const FlowField& flow, double alpha) {
  require(alpha > 0.0, "flow_magnitude_mask: alpha must be positive");
  std::vector<uint8_t> mask(flow.u.size());
  for (size_t i = 0; i < flow.u.size(); ++i) {
    mask[i] = std::hypot(flow.u[i], flow.v[i]) > alpha ? 1 : 0;
  }
  return mask;
}

double mask_iou(const std::vector<uint8_t>& a, const std::vector<uint8_t>& b) {
  require(a.size() == b.size(), "mask_iou: mask sizes differ");
  int64_t inter = 0, uni = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    const bool ia = a[i] != 0;
    const bool ib = b[i] != 0;
    inter += (ia && ib) ? 1 : 0;
    uni += (ia || ib) ? 1 : 0;
  }
  if (uni == 0) return kNotFound;
  return double(inter) / double(uni);
}

IouResult flow_mask_iou(const std::vector<img::Image>& video_pred,
                        const std::vector<img::Image>& video_gt, double alpha,
                        const EvalConfig& config) {
  require(video_pred.size() == video_gt.size(),
          "flow_mask_iou: video lengths differ (", video_pred.size(), " vs ",
          video_gt.size(), ")");
  require(video_pred.size() >= 2, "flow_mask_iou: needs at least 2 frames");
  const int64_t pairs = int64_t(video_pred.size()) - 1;
  std::vector<int64_t> inter(static_cast<size_t>(pairs));
  std::vector<int64_t> uni(static_cast<size_t>(pairs));
  parallel_for(pairs, 1, [&](int64_t lo, int64_t hi) {
    for (int64_t p = lo; p < hi; ++p) {
      const std::vector<uint8_t> mp = flow_magnitude_mask(
          estimate_flow(video_pred[size_t(p)], video_pred[size_t(p) + 1],
                        config),
          alpha);
      const std::vector<uint8_t> mg = flow_magnitude_mask(
          estimate_flow(video_gt[size_t(p)], video_gt[size_t(p) + 1], config),
          alpha);
      require(mp.size() == mg.size(), "flow_mask_iou: frame shapes differ");
      int64_t in = 0, un = 0;
      for (size_t i = 0; i < mp.size(); ++i) {
        in += (mp[i] && mg[i]) ? 1 : 0;
        un += (mp[i] || mg[i]) ? 1 : 0;
      }
      inter[size_t(p)] = in;
      uni[size_t(p)] = un;
    }
  });
  IouResult result;
  result.per_pair.resize(size_t(pairs), kNotFound);
  double sum = 0.0;
  int64_t pooled_inter = 0, pooled_uni = 0;
  for (int64_t p = 0; p < pairs; ++p) {
    pooled_inter += inter[size_t(p)];
    pooled_uni += uni[size_t(p)];
    if (uni[size_t(p)] > 0) {
      result.per_pair[size_t(p)] =
          double(inter[size_t(p)]) / double(uni[size_t(p)]);
      sum += result.per_pair[size_t(p)];
      ++result.counted;
    }
  }
  if (config.iou_pooled) {
    result.mean = pooled_uni > 0 ? double(pooled_inter) / double(pooled_uni)
                                 : 0.0;
  } else {
    result.mean = result.counted > 0 ? sum / double(result.counted) : 0.0;
  }
  return result;
}

std::array<double, 2> locate_ball(const img::Image& frame,
                                  const std::array<double, 3>& ball_color,
                                  double tolerance) {
  require(tolerance > 0.0, "locate_ball: tolerance must be positive");
  const double tol2 = tolerance * tolerance;
  double wsum = 0.0, xsum = 0.0, ysum = 0.0;
  for (int y = 0; y < frame.height(); ++y) {
    for (int x = 0; x < frame.width(); ++x) {
      double d2 = 0.0;
      for (int c = 0; c < 3; ++c) {
        const double d = frame.at(x, y, c) - ball_color[size_t(c)];
        d2 += d * d;
      }
      if (d2 < tol2) {
        wsum += 1.0;
        xsum += x + 0.5;
        ysum += y + 0.5;
      }
    }
  }
  if (wsum == 0.0) return {kNotFound, kNotFound};
  return {xsum / wsum, ysum / wsum};
}

std::vector<double> pose_error(const std::vector<img::Image>& frames_pred,
                               const std::vector<img::Image>& frames_gt,
                               const std::array<double, 3>& ball_color,
                               const EvalConfig& config) {
  require(frames_pred.size() == frames_gt.size(),
          "pose_error: video lengths differ");
  std::vector<double> out(frames_pred.size(), kNotFound);
  for (size_t i = 0; i < frames_pred.size(); ++i) {
    const std::array<double, 2> p =
        locate_ball(frames_pred[i], ball_color, config.pose_color_tol);
    const std::array<double, 2> g =
        locate_ball(frames_gt[i], ball_color, config.pose_color_tol);
    if (p[0] == kNotFound || g[0] == kNotFound) continue;
    out[i] = std::hypot(p[0] - g[0], p[1] - g[1]);
  }
  return out;
}

MetricsReport evaluate_video(const std::vector<img::Image>& pred,
                             const std::vector<img::Image>& gt,
                             const std::array<double, 3>& ball_color,
                             const EvalConfig& config) {
  require(!pred.empty() && pred.size() == gt.size(),
          "evaluate_video: videos must be non-empty and equal length");
  const int64_t n = int64_t(pred.size());
  MetricsReport report;
  report.config = config;
  report.rows.resize(size_t(n));
  parallel_for(n, 1, [&](int64_t lo, int64_t hi) {
    for (int64_t i = lo; i < hi; ++i) {
      FrameMetrics& row = report.rows[size_t(i)];
      row.frame = int(i);
      row.psnr = psnr(pred[size_t(i)], gt[size_t(i)], config.psnr_peak,
                      config.psnr_cap);
      row.ssim = ssim(pred[size_t(i)], gt[size_t(i)], config);
    }
  });
  const std::vector<double> perr = pose_error(pred, gt, ball_color, config);
  for (int64_t i = 0; i < n; ++i) report.rows[size_t(i)].pose_err = perr[size_t(i)];

  double psnr_sum = 0.0, ssim_sum = 0.0, pose_sum = 0.0;
  for (const FrameMetrics& row : report.rows) {
    psnr_sum += row.psnr;
    ssim_sum += row.ssim;
    if (row.pose_err != kNotFound) {
      pose_sum += row.pose_err;
      ++report.pose_found;
    }
  }
  report.mean_psnr = psnr_sum / double(n);
  report.mean_ssim = ssim_sum / double(n);
  report.mean_pose_err =
      report.pose_found > 0 ? pose_sum / double(report.pose_found) : kNotFound;

  if (n >= 2) {
    const IouResult iou = flow_mask_iou(pred, gt, config.flow_alpha, config);
    for (size_t p = 0; p < iou.per_pair.size(); ++p) {
      report.rows[p].iou = iou.per_pair[p];
    }
    report.mean_iou = iou.mean;
    report.iou_counted = iou.counted;
  }
  return report;
}

void write_metrics_csv(const MetricsReport& report, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(bool(out), "write_metrics_csv: cannot open ", path);
  out << "frame,psnr,ssim,iou,pose_err\n";
  for (const FrameMetrics& row : report.rows) {
    out << row.frame << ',' << format_cell(row.psnr) << ','
        << format_cell(row.ssim) << ',' << format_cell(row.iou) << ','
        << format_cell(row.pose_err) << '\n';
  }
  require(bool(out), "write_metrics_csv: write failed for ", path);
}

void write_metrics_json(const MetricsReport& report, const std::string& path) {
  json doc;
  doc["means"] = {{"psnr", report.mean_psnr},
                  {"ssim", report.mean_ssim},
                  {"iou", report.mean_iou},
                  {"pose_err", report.mean_pose_err}};
  doc["counts"] = {{"frames", report.rows.size()},
                   {"iou_pairs", report.iou_counted},
                   {"pose_found", report.pose_found}};
  doc["config"] = config_to_json(report.config);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(bool(out), "write_metrics_json: cannot open ", path);
  out << doc.dump(2) << "\n";
  require(bool(out), "write_metrics_json: write failed for ", path);
}

}  // namespace noderf::eval
