#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pgvad/types.hpp"

namespace pgvad::img {

/// 8-bit RGB image, row-major, 3 bytes per pixel.
struct Image8 {
  int width = 0, height = 0;
  std::vector<std::uint8_t> rgb;

  Image8() = default;
  Image8(int w, int h) : width(w), height(h), rgb(std::size_t(w) * h * 3, 0) {}

  std::uint8_t* px(int x, int y) { return rgb.data() + (std::size_t(y) * width + x) * 3; }
  const std::uint8_t* px(int x, int y) const {
    return rgb.data() + (std::size_t(y) * width + x) * 3;
  }
};

// PNG codec. Grayscale and alpha inputs are converted to plain RGB on read.
Image8 read_png(const std::string& path);
// Writes via a temp file + rename so readers never observe partial output.
void write_png(const std::string& path, const Image8& image);

// Separable triangle-filter resampling; widens the kernel when shrinking so
// downscales are antialiased. Identity when the size already matches.
Image8 resize_bilinear(const Image8& in, int out_w, int out_h);

/// Frame tensor: (h*w) x 3 matrix with intensities mapped to [-1, 1].
Eigen::MatrixXf image_to_frame(const Image8& image);
Image8 frame_to_image(const Eigen::MatrixXf& frame, int h, int w);

}  // namespace pgvad::img
