#include "pgvad/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace pgvad::img {

Image8 read_png(const std::string& path) {
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&png, path.c_str()))
    throw std::runtime_error("cannot read PNG: " + path + " (" + png.message + ")");
  png.format = PNG_FORMAT_RGB;
  Image8 out(int(png.width), int(png.height));
  if (!png_image_finish_read(&png, nullptr, out.rgb.data(), 0, nullptr)) {
    png_image_free(&png);
    throw std::runtime_error("cannot decode PNG: " + path + " (" + png.message + ")");
  }
  return out;
}

void write_png(const std::string& path, const Image8& image) {
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  png.width = png_uint_32(image.width);
  png.height = png_uint_32(image.height);
  png.format = PNG_FORMAT_RGB;
  const std::string tmp = path + ".tmp";
  if (!png_image_write_to_file(&png, tmp.c_str(), 0, image.rgb.data(), 0, nullptr))
    throw std::runtime_error("cannot write PNG: " + path + " (" + png.message + ")");
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw std::runtime_error("cannot move temp PNG into place: " + path);
}

namespace {

struct Tap {
  int first = 0;
  std::vector<double> weights;
};

// Triangle filter taps per output coordinate; kernel radius grows with the
// shrink factor so downscaling averages instead of skipping pixels.
std::vector<Tap> filter_taps(int in_size, int out_size) {
  const double scale = double(in_size) / double(out_size);
  const double radius = std::max(1.0, scale);
  std::vector<Tap> taps(out_size);
  for (int o = 0; o < out_size; ++o) {
    const double center = (o + 0.5) * scale - 0.5;
    const int lo = std::max(0, int(std::ceil(center - radius)));
    const int hi = std::min(in_size - 1, int(std::floor(center + radius)));
    Tap tap;
    tap.first = lo;
    double total = 0.0;
    for (int i = lo; i <= hi; ++i) {
      const double w = 1.0 - std::abs(i - center) / radius;
      tap.weights.push_back(std::max(0.0, w));
      total += tap.weights.back();
    }
    if (total <= 0.0) {  // clamp fallback at the borders
      tap.first = std::clamp(int(std::lround(center)), 0, in_size - 1);
      tap.weights.assign(1, 1.0);
      total = 1.0;
    }
    for (double& w : tap.weights) w /= total;
    taps[o] = std::move(tap);
  }
  return taps;
}

}  // namespace

Image8 resize_bilinear(const Image8& in, int out_w, int out_h) {
  if (in.width == out_w && in.height == out_h) return in;
  if (out_w < 1 || out_h < 1) throw std::invalid_argument("resize target must be positive");

  const auto xtaps = filter_taps(in.width, out_w);
  const auto ytaps = filter_taps(in.height, out_h);

  // horizontal pass
  std::vector<double> mid(std::size_t(out_w) * in.height * 3, 0.0);
  for (int y = 0; y < in.height; ++y)
    for (int x = 0; x < out_w; ++x) {
      const Tap& t = xtaps[x];
      double acc[3] = {0, 0, 0};
      for (std::size_t k = 0; k < t.weights.size(); ++k) {
        const std::uint8_t* p = in.px(t.first + int(k), y);
        for (int c = 0; c < 3; ++c) acc[c] += t.weights[k] * p[c];
      }
      double* q = mid.data() + (std::size_t(y) * out_w + x) * 3;
      for (int c = 0; c < 3; ++c) q[c] = acc[c];
    }

  // vertical pass
  Image8 out(out_w, out_h);
  for (int y = 0; y < out_h; ++y)
    for (int x = 0; x < out_w; ++x) {
      const Tap& t = ytaps[y];
      double acc[3] = {0, 0, 0};
      for (std::size_t k = 0; k < t.weights.size(); ++k) {
        const double* p = mid.data() + (std::size_t(t.first + int(k)) * out_w + x) * 3;
        for (int c = 0; c < 3; ++c) acc[c] += t.weights[k] * p[c];
      }
      std::uint8_t* q = out.px(x, y);
      for (int c = 0; c < 3; ++c)
        q[c] = std::uint8_t(std::clamp(std::lround(acc[c]), 0L, 255L));
    }
  return out;
}

Eigen::MatrixXf image_to_frame(const Image8& image) {
  Eigen::MatrixXf frame(Eigen::Index(image.width) * image.height, 3);
  for (Eigen::Index p = 0; p < frame.rows(); ++p)
    for (int c = 0; c < 3; ++c)
      frame(p, c) = float(image.rgb[std::size_t(p) * 3 + c]) / 127.5f - 1.0f;
  return frame;
}

Image8 frame_to_image(const Eigen::MatrixXf& frame, int h, int w) {
  if (frame.rows() != Eigen::Index(h) * w || frame.cols() != 3)
    throw std::invalid_argument("frame shape does not match image size");
  Image8 out(w, h);
  for (Eigen::Index p = 0; p < frame.rows(); ++p)
    for (int c = 0; c < 3; ++c) {
      const float v = std::clamp(frame(p, c), -1.0f, 1.0f);
      out.rgb[std::size_t(p) * 3 + c] =
          std::uint8_t(std::clamp(std::lround((v + 1.0f) * 127.5f), 0L, 255L));
    }
  return out;
}

}  // namespace pgvad::img
