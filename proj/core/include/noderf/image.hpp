// Copyright 2026 The noderf Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef NODERF_IMAGE_HPP_
#define NODERF_IMAGE_HPP_

#include <cstdint>
#include <string>
#include <vector>

namespace noderf::img {

// Row-major RGB image with channel values in [0, 1].
class Image {
 public:
  Image() = default;
  Image(int width, int height, double fill = 0.0);

  int width() const { return width_; }
  int height() const { return height_; }
  bool empty() const { return width_ == 0 || height_ == 0; }
  int64_t pixel_count() const { return int64_t(width_) * height_; }

  double& at(int x, int y, int c);
  double at(int x, int y, int c) const;

  const std::vector<double>& data() const { return data_; }
  std::vector<double>& data() { return data_; }

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<double> data_;  // width*height*3, rgb interleaved
};

// Quantizes to the nearest 8-bit level after clamping to [0, 1].
uint8_t quantize_channel(double v);

// Binary PPM (P6, maxval 255). Quantization makes write(read(p)) an exact
// byte-level round trip for any file this module wrote.
void write_ppm(const Image& image, const std::string& path);
Image read_ppm(const std::string& path);

// Mean over pixels and channels of |a - b|; shapes must match.
double mean_abs_diff(const Image& a, const Image& b);

// Rec. 601 luma (0.299, 0.587, 0.114), row-major [height * width].
std::vector<double> to_luma(const Image& image);

}  // namespace noderf::img

#endif  // NODERF_IMAGE_HPP_
