// Copyright 2026 The noderf Authors
// SPDX-License-Identifier: Apache-2.0

#include "noderf/image.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "noderf/common.hpp"

namespace noderf::img {

namespace {

// Skips PPM whitespace and '#' comments between header tokens.
void skip_separators(std::istream& in) {
  for (;;) {
    int ch = in.peek();
    if (ch == '#') {
      std::string line;
      std::getline(in, line);
    } else if (ch == ' ' || ch == '\t' || ch == '\r' || ch == '\n') {
      in.get();
    } else {
      return;
    }
  }
}

long read_header_int(std::istream& in, const std::string& path, const char* what) {
  skip_separators(in);
  long value = 0;
  if (!(in >> value)) fail("read_ppm: " + path + ": malformed " + what);
  return value;
}

}  // namespace

Image::Image(int width, int height, double fill)
    : width_(width), height_(height) {
  if (width < 0 || height < 0) fail("Image: negative dimensions");
  data_.assign(size_t(pixel_count()) * 3, fill);
}

double& Image::at(int x, int y, int c) {
  return data_[(size_t(y) * width_ + x) * 3 + c];
}

double Image::at(int x, int y, int c) const {
  return data_[(size_t(y) * width_ + x) * 3 + c];
}

uint8_t quantize_channel(double v) {
  double clamped = std::min(1.0, std::max(0.0, v));
  return uint8_t(std::lround(clamped * 255.0));
}

void write_ppm(const Image& image, const std::string& path) {
  if (image.empty()) fail("write_ppm: " + path + ": empty image");
  std::ofstream out(path, std::ios::binary);
  if (!out) fail("write_ppm: " + path + ": cannot open for writing");
  out << "P6\n" << image.width() << " " << image.height() << "\n255\n";
  std::vector<uint8_t> bytes;
  bytes.reserve(image.data().size());
  for (double v : image.data()) bytes.push_back(quantize_channel(v));
  out.write(reinterpret_cast<const char*>(bytes.data()),
            std::streamsize(bytes.size()));
  if (!out) fail("write_ppm: " + path + ": write failed");
}

Image read_ppm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail("read_ppm: " + path + ": cannot open");
  char m0 = 0, m1 = 0;
  in.get(m0);
  in.get(m1);
  if (m0 != 'P' || m1 != '6') fail("read_ppm: " + path + ": not a P6 file");
  long width = read_header_int(in, path, "width");
  long height = read_header_int(in, path, "height");
  long maxval = read_header_int(in, path, "maxval");
  if (width <= 0 || height <= 0) fail("read_ppm: " + path + ": bad dimensions");
  if (maxval != 255) fail("read_ppm: " + path + ": unsupported maxval");
  int ws = in.get();
  if (ws != ' ' && ws != '\t' && ws != '\r' && ws != '\n') {
    fail("read_ppm: " + path + ": missing separator before pixel data");
  }
  std::vector<uint8_t> bytes(size_t(width) * height * 3);
  in.read(reinterpret_cast<char*>(bytes.data()), std::streamsize(bytes.size()));
  if (size_t(in.gcount()) != bytes.size()) {
    fail("read_ppm: " + path + ": truncated pixel data");
  }
  Image image(static_cast<int>(width), static_cast<int>(height));
  for (size_t i = 0; i < bytes.size(); ++i) {
    image.data()[i] = double(bytes[i]) / 255.0;
  }
  return image;
}

double mean_abs_diff(const Image& a, const Image& b) {
  if (a.width() != b.width() || a.height() != b.height()) {
    fail("mean_abs_diff: image shapes differ");
  }
  if (a.empty()) fail("mean_abs_diff: empty images");
  double acc = 0.0;
  for (size_t i = 0; i < a.data().size(); ++i) {
    acc += std::abs(a.data()[i] - b.data()[i]);
  }
  return acc / double(a.data().size());
}

std::vector<double> to_luma(const Image& image) {
  std::vector<double> luma(size_t(image.pixel_count()));
  const std::vector<double>& d = image.data();
  for (size_t p = 0; p < luma.size(); ++p) {
    luma[p] = 0.299 * d[p * 3] + 0.587 * d[p * 3 + 1] + 0.114 * d[p * 3 + 2];
  }
  return luma;
}

}  // namespace noderf::img
